mod common;

use geosurv::data::{clean_cohort, split_indices, CleaningRules};
use geosurv::estimators::kaplan_meier;
use geosurv::experiment::subset_partition;
use geosurv::metrics::{concordance_index, concordance_index_pairwise, TiePolicy};
use geosurv::stats::bootstrap_ci;
use proptest::prelude::*;

fn survival(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>)> {
    (2..max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(1u8..15, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(0u8..6, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
        )
    })
}

proptest! {
    #[test]
    fn fast_c_index_equals_pairwise((t, e, r) in survival(60)) {
        for policy in [TiePolicy::Harrell, TiePolicy::Strict] {
            let fast = geosurv::metrics::concordance_index_with(&t, &e, &r, policy).ok();
            let slow = concordance_index_pairwise(&t, &e, &r, policy).ok();
            prop_assert_eq!(fast, slow);
        }
    }

    #[test]
    fn c_index_bounded_and_flips_with_risk((t, e, r) in survival(40)) {
        if let Ok(c) = concordance_index(&t, &e, &r) {
            prop_assert!((0.0..=1.0).contains(&c.c));
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let flipped = concordance_index(&t, &e, &neg).unwrap();
            prop_assert!((c.c + flipped.c - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn km_is_non_increasing((t, e, _) in survival(40)) {
        let c = kaplan_meier(&t, &e).unwrap();
        prop_assert!(c.survival.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(c.survival.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn split_is_a_partition(n in 0usize..300, f in 0.0f64..1.0, seed in any::<u64>()) {
        let (train, test) = split_indices(n, f, seed).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(test.len(), geosurv::data::test_size(n, f));
    }

    #[test]
    fn subsets_are_disjoint_and_equal(n in 60usize..2_000, k in 2usize..30, seed in any::<u64>()) {
        let parts = subset_partition(n, k, seed);
        prop_assert_eq!(parts.len(), k);
        prop_assert!(parts.iter().all(|p| p.len() == n / k));
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), k * (n / k));
        prop_assert!(n - all.len() < k);
    }

    #[test]
    fn bootstrap_interval_is_ordered(d in prop::collection::vec(-1.0f64..1.0, 2..40), seed in any::<u64>()) {
        let ci = bootstrap_ci(&d, 0.95, 200, seed).unwrap();
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(ci.lo <= ci.hi);
        prop_assert!(ci.lo >= lo - 1e-12 && ci.hi <= hi + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cleaning_reaches_a_fixed_point(seed in 0u64..1_000, missing in prop::collection::vec(0usize..60, 0..10)) {
        let cohort = common::synth_cohort(&common::small_synth(60, seed));
        let subjects = cohort
            .subjects()
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, mut s)| {
                if missing.contains(&i) {
                    s.categorical.remove("grade");
                }
                s
            })
            .collect();
        let cohort = common::cohort(subjects);
        let rules = CleaningRules::default();
        let (once, _) = clean_cohort(&cohort, &rules);
        let (twice, report) = clean_cohort(&once, &rules);
        prop_assert!(report.is_empty());
        prop_assert_eq!(once.subjects(), twice.subjects());
    }
}
