//! Invariants checked over random inputs.

mod oracle;

use std::collections::BTreeSet;
use std::path::Path;

use proptest::prelude::*;
use unrank_core::io::{format_pairs, parse_pairs};
use unrank_core::scalar::{hinge, hinge_slope};
use unrank_core::{
    build_forget_set, build_protocol, generate, partition, quantile, ForgetOptions, ForgetProtocol, GenConfig, Label,
    Removal, SubstituteMap,
};

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, 1..40)
}

fn small_gen(n_queries: usize, pos: usize, seed: u64) -> GenConfig {
    GenConfig {
        n_queries,
        docs_per_query: pos * 5,
        pos_per_query: pos,
        neg_ratio: 4,
        d_feat: 4,
        n_topics: 3,
        noise_sigma: 0.3,
        test_fraction: 0.25,
        seed,
    }
}

proptest! {
    #[test]
    fn quantile_endpoints_are_exact(xs in scores()) {
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(quantile(&xs, 0.0).unwrap(), min);
        prop_assert_eq!(quantile(&xs, 1.0).unwrap(), max);
    }

    #[test]
    fn quantile_is_monotone_in_gamma(xs in scores(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantile(&xs, lo).unwrap() <= quantile(&xs, hi).unwrap());
    }

    #[test]
    fn quantile_matches_oracle(xs in scores(), g in 0.0f64..=1.0) {
        let got = quantile(&xs, g).unwrap();
        let want = oracle::quantile(&xs, g);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{} vs {}", got, want);
    }

    #[test]
    fn hinge_is_one_sided(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let h = hinge(a, b);
        prop_assert!(h >= 0.0);
        if a <= b {
            prop_assert_eq!(h, 0.0);
            prop_assert_eq!(hinge_slope(a, b), 0.0);
        } else {
            prop_assert_eq!(h, a - b);
            prop_assert_eq!(hinge_slope(a, b), 1.0);
        }
    }

    #[test]
    fn forget_and_retain_partition_the_training_set(seed in 0u64..5_000) {
        let Some(case) = oracle::random_case(seed) else { return Ok(()) };
        let retain = partition(&case.train, &case.forget).unwrap();
        prop_assert_eq!(case.forget.len() + retain.len(), case.train.num_pairs());
        for (q, d, _) in &retain.pairs {
            prop_assert!(!case.forget.contains(*q, *d));
        }
    }

    #[test]
    fn pairs_tsv_round_trips(rows in prop::collection::vec(("[a-z0-9_]{1,8}", "[A-Za-z0-9.-]{1,8}", any::<bool>()), 0..30)) {
        let pairs: Vec<(String, String, Label)> = rows
            .into_iter()
            .map(|(q, d, p)| (q, d, if p { Label::Positive } else { Label::Negative }))
            .collect();
        let text = format_pairs(&pairs);
        prop_assert_eq!(parse_pairs(&text, Path::new("pairs.tsv")).unwrap(), pairs);
    }

    #[test]
    fn random_substitutes_satisfy_constraints(seed in 0u64..5_000, sub_seed in any::<u64>()) {
        let Some(case) = oracle::random_case(seed) else { return Ok(()) };
        let subs = SubstituteMap::random(&case.train, &case.forget, sub_seed).unwrap();
        subs.validate(&case.train, &case.forget).unwrap();
        prop_assert_eq!(subs.len(), case.forget.len());
        for ((q, d), r) in subs.iter() {
            prop_assert!(case.forget.contains(q, d));
            prop_assert!(!case.forget.docs_of(q).unwrap().contains(&r));
            prop_assert!(case.train.label(q, r) != Some(Label::Positive));
        }
    }

    #[test]
    fn protocol_hits_its_target_exactly(
        n_queries in 8usize..40,
        pos in 1usize..3,
        fraction in 0.0f64..0.5,
        seed in 0u64..1_000,
    ) {
        let corpus = generate::<f64>(&small_gen(n_queries, pos, seed)).unwrap();
        let proto = ForgetProtocol { fraction, balance: 0.5, seed };
        let target = proto.target(corpus.train.num_positive_pairs());
        match build_protocol(&corpus.train, &proto) {
            Ok((spec, subs)) => {
                let forget = build_forget_set(&corpus.train, &spec, ForgetOptions::default()).unwrap();
                prop_assert_eq!(forget.len(), target);
                subs.validate(&corpus.train, &forget).unwrap();
                let by_query = forget.restrict(Removal::Query).len() as f64;
                prop_assert!((by_query - 0.5 * target as f64).abs() <= 1.0);
                // Query and document removal never cover the same pair.
                prop_assert_eq!(
                    forget.restrict(Removal::Query).len() + forget.restrict(Removal::Document).len(),
                    forget.len()
                );
            }
            Err(e) => prop_assert!(e.to_string().contains("achievable maximum"), "{}", e),
        }
    }

    #[test]
    fn generated_train_and_test_are_disjoint(n_queries in 4usize..30, pos in 1usize..3, seed in 0u64..1_000) {
        let cfg = small_gen(n_queries, pos, seed);
        let corpus = generate::<f64>(&cfg).unwrap();
        let ids = |ds: &unrank_core::Dataset<f64>| -> BTreeSet<String> {
            ds.queries().map(|q| ds.query_id(q).to_string()).collect()
        };
        let (train, test) = (ids(&corpus.train), ids(&corpus.test));
        prop_assert_eq!(train.len(), n_queries);
        prop_assert_eq!(test.len(), cfg.n_test_queries());
        prop_assert!(train.is_disjoint(&test));
        let positives = |ds: &unrank_core::Dataset<f64>| -> BTreeSet<String> {
            ds.pairs().filter(|p| p.2.is_positive()).map(|(_, d, _)| ds.doc_id(d).to_string()).collect()
        };
        prop_assert!(positives(&corpus.train).is_disjoint(&positives(&corpus.test)));
        for q in corpus.train.queries() {
            prop_assert_eq!(corpus.train.docs_of(q).len(), cfg.docs_per_query);
        }
    }
}
