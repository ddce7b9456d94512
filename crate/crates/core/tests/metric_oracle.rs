//! Library metrics against the exhaustive-counting oracle.

mod oracle;

use oracle::{library_metrics, oracle_metrics, random_case, random_cases, METRIC_NAMES};
use proptest::prelude::*;
use unrank_core::{ScorerKind, ScorerParams};

#[test]
fn fifty_random_cases_match_the_oracle() {
    let cases = random_cases(50, 0);
    assert_eq!(cases.len(), 50);
    let mut ties = 0;
    for (i, case) in cases.iter().enumerate() {
        let lib = library_metrics(case);
        let ora = oracle_metrics(case);
        for ((name, a), b) in METRIC_NAMES.iter().zip(lib).zip(ora) {
            assert!((a - b).abs() <= 1e-12, "case {i}: {name} library {a} oracle {b}");
        }
        let s = &case.student;
        let scores: Vec<f64> = case
            .train
            .pairs()
            .map(|(q, d, _)| s.score(case.train.query_features(q), case.train.doc_features(d)).unwrap())
            .collect();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted.dedup();
        if sorted.len() < scores.len() {
            ties += 1;
        }
    }
    // The grid-valued cases are meant to exercise tie breaking.
    assert!(ties > 10, "only {ties} cases had tied scores");
}

/// Multiplies the final-layer weights by `c`, which scales every score by
/// `c` without changing any ordering.
fn scale_output(p: &ScorerParams<f64>, c: f64) -> ScorerParams<f64> {
    let shape = p.shape();
    let mut w = p.weights().to_vec();
    match shape.kind {
        ScorerKind::BiEncoder => {
            let half = shape.hidden * shape.input_dim;
            w[..half].iter_mut().for_each(|x| *x *= c);
        }
        ScorerKind::CrossMlp => {
            let u = shape.hidden * 2 * shape.input_dim + shape.hidden;
            w[u..].iter_mut().for_each(|x| *x *= c);
        }
    }
    ScorerParams::new(shape, w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Powers of two scale every score exactly, so even exact ties survive.
    #[test]
    fn metrics_invariant_under_positive_score_scaling(seed in 0u64..10_000, e in -8i32..=8) {
        let Some(mut case) = random_case(seed) else { return Ok(()) };
        let before = library_metrics(&case);
        let c = 2f64.powi(e);
        case.student = scale_output(&case.student, c);
        case.teacher = scale_output(&case.teacher, c);
        prop_assert_eq!(before, library_metrics(&case));
    }
}
