//! Acceptance suite: one test per criterion, named `criterion_NN_*`, so the
//! harness prints one pass/fail line for each. Every test also prints a
//! detail line (visible with `--nocapture`).

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use geosurv::cli::{cmd_experiment, SeedOverrides};
use geosurv::data::{encode_covariates, DesignMatrix, EncodingSpec};
use geosurv::estimators::{
    cox_fit, cox_partial_loglik, kaplan_meier, weibull_ph_fit, CoxFitOptions, TieRule,
    WeibullFitOptions,
};
use geosurv::experiment::{run_subset_ttest, subset_partition, ExperimentConfig};
use geosurv::geo::{
    attach_state_esr, county_weights, AttachPolicy, ExpectedSurvivalTable, PopulationTable,
    Profile,
};
use geosurv::metrics::{comparable_pairs, concordance_index};
use geosurv::stats::{bootstrap_ci, paired_t_test, t_sf};
use geosurv::synth::{generate_cohort, generate_tables, SynthConfig};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};

use common::{brute_force_c, random_survival, rng};

fn report(n: u32, pass: bool, detail: String) {
    // direct handle so the line survives libtest output capture
    let line = format!("criterion {n:2}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    match std::fs::OpenOptions::new().write(true).open("/dev/stderr") {
        Ok(mut f) => {
            let _ = std::io::Write::write_all(&mut f, line.as_bytes());
        }
        Err(_) => eprint!("{line}"),
    }
    assert!(pass, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_01_c_index_matches_brute_force() {
    let start = Instant::now();
    let mut r = rng(1);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..200 {
        let n = r.random_range(2..=50);
        let (time, event, risk) = random_survival(&mut r, n);
        let oracle = brute_force_c(&time, &event, &risk);
        let fast = concordance_index(&time, &event, &risk).ok().map(|c| c.c);
        checked += 1;
        if oracle != fast {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        mismatches == 0 && secs < 5.0,
        format!("{checked} fixtures, {mismatches} mismatches, {secs:.3}s"),
    );
}

#[test]
fn criterion_02_comparable_pair_semantics() {
    // subjects 1..4 with y1 < y2 < y3 < y4; 2 and 4 censored
    let censored = comparable_pairs(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, false]).unwrap();
    let one_based: Vec<(usize, usize)> = censored.pairs.iter().map(|&(i, j)| (i + 1, j + 1)).collect();
    let uncensored = comparable_pairs(&[1.0, 2.0, 3.0, 4.0], &[true; 4]).unwrap();
    report(
        2,
        one_based == vec![(1, 2), (1, 3), (1, 4), (3, 4)] && uncensored.num() == 6,
        format!("censored layout {one_based:?}, uncensored {} pairs", uncensored.num()),
    );
}

fn random_matrix(r: &mut rand_chacha::ChaCha8Rng, n: usize, p: usize, ties: bool) -> DesignMatrix {
    let values: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(r)).collect();
    let time: Vec<f64> = (0..n)
        .map(|_| {
            let t: f64 = r.random_range(0.5..10.0);
            if ties {
                t.round()
            } else {
                t
            }
        })
        .collect();
    let mut event: Vec<bool> = (0..n).map(|_| r.random_bool(0.7)).collect();
    event[0] = true;
    let columns = (0..p).map(|j| format!("x{j}")).collect();
    DesignMatrix::new(columns, values, time, event).unwrap()
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

#[test]
fn criterion_03_cox_derivatives_match_finite_differences() {
    let mut r = rng(3);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for fixture in 0..20 {
        let m = random_matrix(&mut r, 40, 3, fixture % 2 == 0);
        for ties in [TieRule::Efron, TieRule::Breslow] {
            for _ in 0..10 {
                let beta: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
                let pen = if fixture % 4 == 1 { 0.5 } else { 0.0 };
                let at = cox_partial_loglik(&beta, &m, ties, pen).unwrap();
                for j in 0..3 {
                    let mut up = beta.clone();
                    let mut dn = beta.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let fu = cox_partial_loglik(&up, &m, ties, pen).unwrap();
                    let fd = cox_partial_loglik(&dn, &m, ties, pen).unwrap();
                    worst = worst.max(rel_err(at.gradient[j], (fu.value - fd.value) / (2.0 * h)));
                    for l in 0..3 {
                        let num = (fu.gradient[l] - fd.gradient[l]) / (2.0 * h);
                        worst = worst.max(rel_err(at.hessian[(j, l)], num));
                    }
                }
                points += 1;
            }
        }
    }
    report(
        3,
        worst < 1e-6,
        format!("{points} beta points over 20 fixtures x 2 tie rules, worst relative error {worst:.2e}"),
    );
}

fn two_group_data(hr: f64, seed: u64) -> DesignMatrix {
    let mut r = rng(seed);
    let n = 5_000;
    let base = 0.1;
    let cens_rate = 0.035;
    let mut x = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for i in 0..n {
        let g = (i % 2) as f64;
        let e: f64 = Exp1.sample(&mut r);
        let c: f64 = Exp1.sample(&mut r);
        let t = e / (base * hr.powf(g));
        let c = c / cens_rate;
        x.push(g);
        time.push(t.min(c));
        event.push(t <= c);
    }
    DesignMatrix::new(vec!["group".into()], x, time, event).unwrap()
}

#[test]
fn criterion_04_cox_recovers_hazard_ratio() {
    let start = Instant::now();
    let m = two_group_data(2.0, 4);
    let censored = 1.0 - m.n_events() as f64 / m.nrows() as f64;
    let planted = cox_fit(&m, &CoxFitOptions::default()).unwrap().beta[0];
    let null = cox_fit(&two_group_data(1.0, 44), &CoxFitOptions::default()).unwrap().beta[0];
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        (planted - 2f64.ln()).abs() < 0.1 && null.abs() < 0.05 && secs < 30.0,
        format!("beta {planted:.4} (ln 2 = 0.6931), null beta {null:.4}, censored {censored:.3}, {secs:.2}s"),
    );
}

#[test]
fn criterion_05_kaplan_meier_hand_fixtures() {
    // (times, events, expected event times, expected survival)
    let fixtures: Vec<(Vec<f64>, Vec<bool>, Vec<f64>, Vec<f64>)> = vec![
        (vec![1.0, 2.0, 3.0], vec![true; 3], vec![1.0, 2.0, 3.0], vec![2.0 / 3.0, 1.0 / 3.0, 0.0]),
        (vec![1.0, 2.0, 3.0, 4.0], vec![true, false, true, true], vec![1.0, 3.0, 4.0], vec![0.75, 0.375, 0.0]),
        // censored at an event time stays in that risk set
        (vec![2.0, 2.0, 5.0, 6.0], vec![true, false, true, false], vec![2.0, 5.0], vec![0.75, 0.375]),
        (vec![1.0, 1.0, 2.0, 3.0, 4.0, 5.0], vec![true, true, false, true, false, true],
         vec![1.0, 3.0, 5.0], vec![4.0 / 6.0, 4.0 / 6.0 * 2.0 / 3.0, 0.0]),
    ];
    let mut ok = true;
    for (t, e, times, surv) in &fixtures {
        let c = kaplan_meier(t, e).unwrap();
        ok &= c.event_times == *times;
        ok &= c.survival.len() == surv.len()
            && c.survival.iter().zip(surv).all(|(a, b)| (a - b).abs() <= 1e-15);
    }
    // without censoring S(t) = 1 - ECDF(t)
    let mut r = rng(5);
    let mut ecdf_ok = true;
    for _ in 0..50 {
        let n = r.random_range(1..=30);
        let t: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(1..10u32))).collect();
        let c = kaplan_meier(&t, &vec![true; n]).unwrap();
        for probe in 0..=10 {
            let probe = f64::from(probe);
            let ecdf = t.iter().filter(|&&x| x <= probe).count() as f64 / n as f64;
            ecdf_ok &= (c.survival_at(probe) - (1.0 - ecdf)).abs() < 1e-12;
        }
    }
    report(
        5,
        ok && ecdf_ok,
        format!("{} hand fixtures exact to 1 ulp: {ok}; 1 - ECDF on 50 samples: {ecdf_ok}", fixtures.len()),
    );
}

#[test]
fn criterion_06_state_esr_matches_scalar_oracle() {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    let mut invariants = true;
    let mut rows = 0;
    for fixture in 0..50 {
        let mut pop = PopulationTable::new();
        let mut esr = ExpectedSurvivalTable::new();
        let mut cells: BTreeMap<(u32, String), Vec<(u64, Option<f64>)>> = BTreeMap::new();
        let states = ["AA", "BB"];
        let ages = [50u32, 51, 52];
        for (si, state) in states.iter().enumerate() {
            let k = r.random_range(1..=4);
            for c in 0..k {
                let county = format!("{state}{c}");
                for &age in &ages {
                    let p = Profile::new(age, "F", 2010, "white");
                    let count = r.random_range(1..500u64);
                    pop.insert(p.clone(), &county, state, count).unwrap();
                    // first county always has a cell so some weight survives
                    let value = (c == 0 || r.random_bool(0.8)).then(|| r.random_range(0.5..1.0));
                    if let Some(v) = value {
                        esr.insert(p, &county, state, v).unwrap();
                    }
                    cells.entry((age, state.to_string())).or_default().push((count, value));
                }
            }
            let _ = si;
        }
        let mut subjects = Vec::new();
        for i in 0..20 {
            let state = states[r.random_range(0..2)];
            let age = ages[r.random_range(0..3)];
            subjects.push(common::subject(&format!("f{fixture}s{i}"), age, state, &format!("{state}0"), 5.0, i % 2 == 0));
        }
        let cohort = common::cohort(subjects);
        let (out, _) = attach_state_esr(&cohort, &esr, &pop, AttachPolicy::default()).unwrap();
        for s in out.subjects() {
            let age = s.age.years().unwrap();
            let cs = &cells[&(age, s.state.clone())];
            // scalar oracle: population-weighted mean over counties with a cell
            let (mut num, mut den) = (0.0, 0.0);
            for (count, value) in cs {
                if let Some(v) = value {
                    num += *count as f64 * v;
                    den += *count as f64;
                }
            }
            let got = s.numeric["state_esr"];
            worst = worst.max((got - num / den).abs());
            let present: Vec<f64> = cs.iter().filter_map(|c| c.1).collect();
            let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            invariants &= got >= lo - 1e-12 && got <= hi + 1e-12;
            let w = county_weights(&pop, &Profile::new(age, "F", 2010, "white"), &s.state).unwrap();
            invariants &= (w.values().sum::<f64>() - 1.0).abs() < 1e-12;
            rows += 1;
        }
    }
    report(
        6,
        worst <= 1e-12 && invariants,
        format!("50 fixtures, {rows} rows, max |error| {worst:.2e}, convexity and weight sums hold: {invariants}"),
    );
}

/// Two-sided tail by Simpson integration of the t density on [0, |t|].
fn t_tail_oracle(t: f64, df: f64) -> f64 {
    let ln_gamma = |x: f64| statrs::function::gamma::ln_gamma(x);
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let f = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let n = 20_000;
    let h = t.abs() / n as f64;
    let mut s = f(0.0) + f(t.abs());
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

#[test]
fn criterion_07_paired_t_test() {
    let r = paired_t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 5.0]).unwrap();
    let p = t_sf(2.045, 29);
    let oracle = t_tail_oracle(2.045, 29.0);
    let sig3 = |x: f64| format!("{:.2e}", x);
    report(
        7,
        r.t_statistic == -4.0 && r.df == 2 && sig3(p) == sig3(oracle) && (p - 0.05).abs() < 0.0005,
        format!("t = {}, df = {}, t_sf(2.045, 29) = {p:.6}, integration oracle {oracle:.6}", r.t_statistic, r.df),
    );
}

#[test]
fn criterion_08_bootstrap_coverage() {
    let start = Instant::now();
    let mut r = rng(8);
    let (mu, sd) = (0.01, 0.02);
    let normal = Normal::new(mu, sd).unwrap();
    let trials = 500;
    let mut covered = 0;
    for trial in 0..trials {
        let d: Vec<f64> = (0..30).map(|_| normal.sample(&mut r)).collect();
        let ci = bootstrap_ci(&d, 0.95, 1000, trial).unwrap();
        if ci.lo <= mu && mu <= ci.hi {
            covered += 1;
        }
    }
    let coverage = covered as f64 / trials as f64;
    let secs = start.elapsed().as_secs_f64();
    report(
        8,
        (0.91..=0.98).contains(&coverage) && secs < 60.0,
        format!("coverage {coverage:.3} over {trials} trials, {secs:.2}s"),
    );
}

#[test]
fn criterion_09_end_to_end_reproduction() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("planted.json");
    std::fs::write(
        &config,
        r#"{"schema_version": 1, "synth": {"n_subjects": 50000, "n_states": 5, "seed": 2024}}"#,
    )
    .unwrap();
    let out = dir.path().join("planted");
    cmd_experiment(&config, &out, &SeedOverrides::default()).unwrap();
    let rows = geosurv::experiment::read_report(
        std::fs::File::open(out.join("report.csv")).unwrap(),
        &out.join("report.csv"),
    )
    .unwrap();
    let overall = rows.iter().find(|r| r.dataset_name == "Overall").unwrap();
    let planted_ok = overall.avg_c_index_improvement > 0.0 && overall.p_value < 0.05;

    // null geography at the subset-test level
    // a cohort whose subsets stay degenerate after the redraw is replaced by
    // a fresh draw; the count of such draws is reported
    let reps = 200;
    let mut rejections = 0;
    let mut completed = 0;
    let mut discarded = 0;
    let mut rep = 0u64;
    while completed < reps {
        rep += 1;
        let synth = SynthConfig {
            n_subjects: 5_000,
            geo_effect_scale: 0.0,
            seed: 10_000 + rep,
            ..Default::default()
        };
        let tables = generate_tables(&synth).unwrap();
        let (cohort, _) = generate_cohort(&synth, &tables).unwrap();
        let (cohort, _) =
            attach_state_esr(&cohort, &tables.esr, &tables.population, AttachPolicy::default()).unwrap();
        let cfg = ExperimentConfig {
            subset_seed: rep,
            split_seed: 500 + rep,
            bootstrap: geosurv::experiment::BootstrapConfig {
                replicates: 200,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut spec = EncodingSpec {
            categorical: cfg.covariates.categorical.clone(),
            numeric: cfg.covariates.numeric.clone(),
            ..Default::default()
        };
        spec.categorical.extend(cfg.geo.categorical.iter().cloned());
        spec.categorical.extend(cfg.overall_geo.categorical.iter().cloned());
        spec.numeric.extend(cfg.geo.numeric.iter().cloned());
        let m = encode_covariates(&cohort.sorted_by_id(), &spec).unwrap();
        let res = match run_subset_ttest(&m, &cfg, &cfg.geo_feature_names(true), "null") {
            Ok(res) => res,
            Err(geosurv::Error::DegenerateSubset { .. }) => {
                discarded += 1;
                continue;
            }
            Err(e) => panic!("null repetition {rep}: {e}"),
        };
        completed += 1;
        if res.p < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / reps as f64;
    let secs = start.elapsed().as_secs_f64();
    report(
        9,
        planted_ok && rate <= 0.10 && secs < 600.0,
        format!(
            "planted Overall: avg improvement {:.4}, t {:.3}, p {:.3e}; null rejection rate {rate:.3} ({rejections}/{reps}, {discarded} degenerate draws replaced); {secs:.1}s",
            overall.avg_c_index_improvement, overall.t_statistic, overall.p_value
        ),
    );
}

#[test]
fn criterion_10_experiment_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.json");
    std::fs::write(
        &config,
        r#"{"schema_version": 1, "synth": {"n_subjects": 20000, "n_states": 3, "seed": 77}, "bootstrap": {"replicates": 500}}"#,
    )
    .unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    cmd_experiment(&config, &a, &SeedOverrides::default()).unwrap();
    cmd_experiment(&config, &b, &SeedOverrides::default()).unwrap();
    // rerun from the manifest alone
    cmd_experiment(&a.join("manifest.json"), &c, &SeedOverrides::default()).unwrap();
    let ra = std::fs::read(a.join("report.csv")).unwrap();
    let rb = std::fs::read(b.join("report.csv")).unwrap();
    let rc = std::fs::read(c.join("report.csv")).unwrap();
    report(
        10,
        ra == rb && ra == rc && !ra.is_empty(),
        format!("report.csv {} bytes; repeat identical: {}; manifest rerun identical: {}", ra.len(), ra == rb, ra == rc),
    );
}

#[test]
fn criterion_11_subset_sizes() {
    let parts = subset_partition(53_522, 30, 7);
    let sizes: std::collections::BTreeSet<usize> = parts.iter().map(Vec::len).collect();
    let mut all: Vec<usize> = parts.concat();
    let total = all.len();
    all.sort_unstable();
    all.dedup();
    report(
        11,
        parts.len() == 30 && sizes.iter().all(|s| *s == 1_784 || *s == 1_783) && all.len() == total,
        format!("{} subsets, sizes {sizes:?}, disjoint: {}, rows used {total} of 53522", parts.len(), all.len() == total),
    );
}

#[test]
fn criterion_12_weibull_recovery() {
    let mut r = rng(12);
    let (shape, scale, beta) = (1.5, 10.0, 0.7);
    let n = 5_000;
    let mut x = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = StandardNormal.sample(&mut r);
        let e: f64 = Exp1.sample(&mut r);
        let t = scale * (e / (beta * xi).exp()).powf(1.0 / shape);
        let c = r.random_range(0.0..60.0);
        x.push(xi);
        time.push(f64::min(t, c));
        event.push(t <= c);
    }
    let m = DesignMatrix::new(vec!["x".into()], x, time, event).unwrap();
    let fit = weibull_ph_fit(&m, &WeibullFitOptions::default()).unwrap();
    let rel = |est: f64, truth: f64| (est - truth).abs() / truth;
    let errs = [rel(fit.shape, shape), rel(fit.scale, scale), rel(fit.beta[0], beta)];
    report(
        12,
        fit.converged && errs.iter().all(|e| *e < 0.10),
        format!(
            "shape {:.4}, scale {:.4}, beta {:.4}; relative errors {:.4} {:.4} {:.4}",
            fit.shape, fit.scale, fit.beta[0], errs[0], errs[1], errs[2]
        ),
    );
}
