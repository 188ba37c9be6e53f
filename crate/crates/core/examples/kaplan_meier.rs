//! Product-limit survival curve.
//!
//! cargo run --example kaplan_meier

use geosurv::estimators::kaplan_meier;

fn main() -> geosurv::Result<()> {
    let time = [3.0, 5.0, 5.0, 8.0, 10.0, 12.0, 15.0];
    let event = [true, true, false, true, false, true, false];
    let km = kaplan_meier(&time, &event)?;
    println!("{:>6} {:>8} {:>7} {:>9}", "time", "at risk", "events", "S(t)");
    for i in 0..km.event_times.len() {
        println!(
            "{:>6} {:>8} {:>7} {:>9.4}",
            km.event_times[i], km.at_risk[i], km.events_at[i], km.survival[i]
        );
    }
    println!("S(9) = {:.4}", km.survival_at(9.0));
    Ok(())
}
