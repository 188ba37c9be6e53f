//! Harrell's C-index and the comparable pairs behind it.
//!
//! cargo run --example concordance

use geosurv::metrics::{comparable_pairs, concordance_index, concordance_index_with, TiePolicy};

fn main() -> geosurv::Result<()> {
    // subjects 2 and 4 are censored
    let time = [1.0, 2.0, 3.0, 4.0];
    let event = [true, false, true, false];
    let pairs = comparable_pairs(&time, &event)?;
    println!("comparable pairs (0-based): {:?}", pairs.pairs);

    let risk = [0.9, 0.4, 0.1, 0.1];
    let c = concordance_index(&time, &event, &risk)?;
    println!(
        "C = {:.3} ({} concordant, {} tied, {} discordant)",
        c.c, c.concordant, c.tied_score, c.discordant
    );
    let strict = concordance_index_with(&time, &event, &risk, TiePolicy::Strict)?;
    println!("ties scored zero: C = {:.3}", strict.c);
    Ok(())
}
