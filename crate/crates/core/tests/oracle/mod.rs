//! Independent reference implementations for the evaluation metrics and
//! random small corpora to compare them on.
//!
//! Ranks are computed by exhaustive counting over string ids rather than by
//! sorting, and every candidate set is rebuilt from the raw records.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unrank_core::data::FeatureTable;
use unrank_core::{
    apply_substitutes, build_forget_set, Dataset, ForgetOptions, ForgetSet, ForgetSpec, Label, ScorerKind,
    ScorerParams, ScorerShape, SubstituteMap,
};

/// Everything needed to evaluate one random case.
pub struct Case {
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    pub spec: ForgetSpec,
    pub forget: ForgetSet,
    pub subs: SubstituteMap,
    pub teacher: ScorerParams<f64>,
    pub student: ScorerParams<f64>,
}

fn grid_value(rng: &mut ChaCha8Rng) -> f64 {
    // Coarse values make exact score ties common.
    [-1.0, -0.5, 0.0, 0.5, 1.0][rng.random_range(0..5)]
}

fn random_params(rng: &mut ChaCha8Rng, shape: ScorerShape) -> ScorerParams<f64> {
    let w = (0..shape.num_weights()).map(|_| grid_value(rng)).collect();
    ScorerParams::new(shape, w).unwrap()
}

fn random_corpus(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    n_docs: usize,
    dim: usize,
) -> (Vec<(String, String, Label)>, FeatureTable<f64>) {
    let n_queries = rng.random_range(2..=5);
    let mut pairs = Vec::new();
    let mut qf = FeatureTable::new();
    for i in 0..n_queries {
        let q = format!("{prefix}q{i}");
        qf.insert(q.clone(), (0..dim).map(|_| grid_value(rng)).collect());
        let size = rng.random_range(2..=6.min(n_docs));
        let mut docs: Vec<usize> = (0..n_docs).collect();
        docs.shuffle(rng);
        let n_pos = rng.random_range(1..size);
        for (j, d) in docs[..size].iter().enumerate() {
            let label = if j < n_pos { Label::Positive } else { Label::Negative };
            pairs.push((q.clone(), format!("d{d}"), label));
        }
    }
    (pairs, qf)
}

/// A random case, or `None` when the draw admits no valid substitutes or
/// leaves no retained positive.
pub fn random_case(seed: u64) -> Option<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=3);
    let n_docs = rng.random_range(6..=9);
    let mut df = FeatureTable::new();
    for d in 0..n_docs {
        df.insert(format!("d{d}"), (0..dim).map(|_| grid_value(&mut rng)).collect());
    }
    let (pairs, qf) = random_corpus(&mut rng, "", n_docs, dim);
    let (test_pairs, test_qf) = random_corpus(&mut rng, "t", n_docs, dim);
    let train = Dataset::from_records(dim, pairs.clone(), &qf, &df).unwrap();
    let test = Dataset::from_records(dim, test_pairs, &test_qf, &df).unwrap();

    let mut spec = ForgetSpec::default();
    let queries: Vec<String> = qf.keys().cloned().collect();
    spec.forget_queries.insert(queries[rng.random_range(0..queries.len())].clone());
    let positives: Vec<&String> = pairs.iter().filter(|p| p.2.is_positive()).map(|p| &p.1).collect();
    spec.forget_docs.insert(positives[rng.random_range(0..positives.len())].clone());
    let forget = build_forget_set(&train, &spec, ForgetOptions::default()).unwrap();
    let subs = SubstituteMap::random(&train, &forget, rng.random()).ok()?;
    unrank_core::partition(&train, &forget).ok()?.judged_with_positives().first()?;

    let kind = if rng.random_bool(0.5) { ScorerKind::BiEncoder } else { ScorerKind::CrossMlp };
    let shape = ScorerShape::new(kind, dim, rng.random_range(1..=3));
    let teacher = random_params(&mut rng, shape);
    let student = random_params(&mut rng, shape);
    Some(Case { train, test, spec, forget, subs, teacher, student })
}

/// The first `n` valid cases from consecutive seeds.
pub fn random_cases(n: usize, base_seed: u64) -> Vec<Case> {
    (base_seed..).filter_map(random_case).take(n).collect()
}

/// Raw string-keyed view of the forget request and corrected lists.
pub struct Lists {
    /// `D_q` with labels.
    pub docs: BTreeMap<String, Vec<(String, bool)>>,
    /// `D_q^f`.
    pub forgotten: BTreeMap<String, BTreeSet<String>>,
    /// `r_q(d)` keyed by `(q, d)`.
    pub subs: BTreeMap<(String, String), String>,
}

impl Lists {
    pub fn new(case: &Case) -> Self {
        let ds = &case.train;
        let mut docs: BTreeMap<String, Vec<(String, bool)>> = BTreeMap::new();
        for (q, d, l) in ds.records() {
            docs.entry(q).or_default().push((d, l.is_positive()));
        }
        // Forget pairs rebuilt from the spec.
        let mut forgotten: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (q, list) in &docs {
            for (d, pos) in list {
                if *pos && (case.spec.forget_queries.contains(q) || case.spec.forget_docs.contains(d)) {
                    forgotten.entry(q.clone()).or_default().insert(d.clone());
                }
            }
        }
        let subs = case
            .subs
            .iter()
            .map(|((q, d), r)| ((ds.query_id(q).to_string(), ds.doc_id(d).to_string()), ds.doc_id(r).to_string()))
            .collect();
        Self { docs, forgotten, subs }
    }

    /// `D_q^* = (D_q \ D_q^f) ∪ r_q(D_q^f)` as a set of ids.
    pub fn star(&self, q: &str) -> BTreeSet<String> {
        let f = self.forgotten.get(q).cloned().unwrap_or_default();
        let mut out: BTreeSet<String> =
            self.docs[q].iter().map(|(d, _)| d.clone()).filter(|d| !f.contains(d)).collect();
        for d in &f {
            out.insert(self.subs[&(q.to_string(), d.clone())].clone());
        }
        out
    }
}

pub fn score(p: &ScorerParams<f64>, ds: &Dataset<f64>, q: &str, d: &str) -> f64 {
    let qf = ds.query_features(ds.query_idx(q).unwrap());
    let df = ds.doc_features(ds.doc_idx(d).unwrap());
    p.score(qf, df).unwrap()
}

/// `1 + #{c in candidates : c beats d}`, where a higher score wins and equal
/// scores go to the lexicographically smaller id.
pub fn rank(p: &ScorerParams<f64>, ds: &Dataset<f64>, q: &str, d: &str, candidates: &BTreeSet<String>) -> usize {
    let s = score(p, ds, q, d);
    1 + candidates
        .iter()
        .filter(|c| c.as_str() != d)
        .filter(|c| {
            let t = score(p, ds, q, c);
            t > s || (t == s && c.as_str() < d)
        })
        .count()
}

fn ids(list: &[(String, bool)]) -> BTreeSet<String> {
    list.iter().map(|(d, _)| d.clone()).collect()
}

pub fn p_forget(case: &Case, w: &ScorerParams<f64>) -> f64 {
    let l = Lists::new(case);
    let mut vals = Vec::new();
    for (q, f) in &l.forgotten {
        let cands = ids(&l.docs[q]);
        let best = f.iter().map(|d| rank(w, &case.train, q, d, &cands)).min().unwrap();
        vals.push(1.0 / best as f64);
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

pub fn p_correct(case: &Case, w: &ScorerParams<f64>, m: &ScorerParams<f64>) -> f64 {
    let l = Lists::new(case);
    let mut sum = 0.0;
    let mut n = 0;
    for (q, f) in &l.forgotten {
        let cands = ids(&l.docs[q]);
        let star = l.star(q);
        for d in f {
            let r = &l.subs[&(q.clone(), d.clone())];
            let rt = rank(m, &case.train, q, d, &cands);
            let rs = rank(w, &case.train, q, r, &star);
            sum += (1.0 / rt as f64 - 1.0 / rs as f64).powi(2);
            n += 1;
        }
    }
    1.0 - sum / n as f64
}

/// MRR of the best positive over queries with a retained positive, ranking
/// among the query's retained documents.
pub fn p_retain(case: &Case, w: &ScorerParams<f64>) -> f64 {
    let l = Lists::new(case);
    let mut vals = Vec::new();
    for (q, list) in &l.docs {
        let f = l.forgotten.get(q).cloned().unwrap_or_default();
        let kept: Vec<(String, bool)> = list.iter().filter(|(d, _)| !f.contains(d)).cloned().collect();
        if !kept.iter().any(|(_, p)| *p) {
            continue;
        }
        let cands = ids(&kept);
        let best = kept.iter().filter(|(_, p)| *p).map(|(d, _)| rank(w, &case.train, q, d, &cands)).min().unwrap();
        vals.push(1.0 / best as f64);
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

pub fn p_test(case: &Case, w: &ScorerParams<f64>) -> f64 {
    let mut by_q: BTreeMap<String, Vec<(String, bool)>> = BTreeMap::new();
    for (q, d, l) in case.test.records() {
        by_q.entry(q).or_default().push((d, l.is_positive()));
    }
    let vals: Vec<f64> = by_q
        .iter()
        .map(|(q, list)| {
            let cands = ids(list);
            let best = list.iter().filter(|(_, p)| *p).map(|(d, _)| rank(w, &case.test, q, d, &cands)).min().unwrap();
            1.0 / best as f64
        })
        .collect();
    vals.iter().sum::<f64>() / vals.len() as f64
}

pub fn p_delta_retain(case: &Case, w: &ScorerParams<f64>, m: &ScorerParams<f64>) -> f64 {
    let l = Lists::new(case);
    let mut per_query = Vec::new();
    for (q, list) in &l.docs {
        let f = l.forgotten.get(q).cloned().unwrap_or_default();
        let kept: Vec<&String> = list.iter().filter(|(d, p)| *p && !f.contains(d)).map(|(d, _)| d).collect();
        if kept.is_empty() {
            continue;
        }
        let cands = ids(list);
        let star = l.star(q);
        let s: f64 = kept
            .iter()
            .map(|d| {
                let rt = rank(m, &case.train, q, d, &cands);
                let rs = rank(w, &case.train, q, d, &star);
                (1.0 / rt as f64 - 1.0 / rs as f64).powi(2)
            })
            .sum();
        per_query.push(s / kept.len() as f64);
    }
    per_query.iter().sum::<f64>() / per_query.len() as f64
}

/// Library values for the same case, for side-by-side comparison.
pub fn library_metrics(case: &Case) -> [f64; 5] {
    let c = apply_substitutes(&case.train, &case.forget, &case.subs).unwrap();
    let r = unrank_core::MetricsReport::compute(&case.student, &case.teacher, &c, &case.forget, Some(&case.test), None)
        .unwrap();
    [r.p_forget.unwrap(), r.p_correct.unwrap(), r.p_retain, r.p_test.unwrap(), r.p_delta_retain]
}

pub fn oracle_metrics(case: &Case) -> [f64; 5] {
    let (w, m) = (&case.student, &case.teacher);
    [p_forget(case, w), p_correct(case, w, m), p_retain(case, w), p_test(case, w), p_delta_retain(case, w, m)]
}

pub const METRIC_NAMES: [&str; 5] = ["p_forget", "p_correct", "p_retain", "p_test", "p_delta_retain"];

/// Reference `gamma`-quantile by linear interpolation on the sorted list.
pub fn quantile(xs: &[f64], gamma: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = gamma * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Central-difference gradient of `f` at `w`.
pub fn numeric_grad(w: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = w.to_vec();
    (0..w.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, 1e-8)`, maximised over entries.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8)).fold(0.0, f64::max)
}
