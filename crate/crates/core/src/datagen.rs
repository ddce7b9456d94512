//! Synthetic corpora with planted topic structure and the forget-set protocol.
//!
//! Every query belongs to one of `n_topics` unit-norm centroids. Its positive
//! documents are fresh noisy copies of that centroid; its negatives are drawn
//! from per-topic background documents of the *other* topics. Background
//! documents are shared across queries, so document removal can touch
//! several lists.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    build_forget_set, Dataset, DocIdx, FeatureTable, ForgetOptions, ForgetSpec, Label, QueryIdx, SubstituteMap,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_queries: usize,
    /// Judged documents per query; must equal `pos_per_query * (1 + neg_ratio)`.
    pub docs_per_query: usize,
    pub pos_per_query: usize,
    /// Negatives per positive.
    pub neg_ratio: usize,
    pub d_feat: usize,
    pub n_topics: usize,
    /// Total noise norm scale; each coordinate gets `noise_sigma / sqrt(d_feat)`.
    pub noise_sigma: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_queries: 100,
            docs_per_query: 20,
            pos_per_query: 1,
            neg_ratio: 19,
            d_feat: 16,
            n_topics: 10,
            noise_sigma: 0.3,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_queries == 0 || self.d_feat == 0 {
            return bad("n_queries and d_feat must be >= 1".into());
        }
        if self.pos_per_query == 0 || self.neg_ratio == 0 {
            return bad("pos_per_query and neg_ratio must be >= 1".into());
        }
        if self.docs_per_query != self.pos_per_query * (1 + self.neg_ratio) {
            return bad(format!(
                "docs_per_query {} must equal pos_per_query * (1 + neg_ratio) = {}",
                self.docs_per_query,
                self.pos_per_query * (1 + self.neg_ratio)
            ));
        }
        if self.n_topics < 2 {
            return bad(format!("n_topics must be >= 2 (negatives need foreign topics), got {}", self.n_topics));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        Ok(())
    }

    pub fn n_negatives(&self) -> usize {
        self.pos_per_query * self.neg_ratio
    }

    pub fn n_test_queries(&self) -> usize {
        ((self.n_queries as f64 * self.test_fraction).round() as usize).max(1)
    }
}

/// A generated train/test pair of corpora.
#[derive(Clone, Debug)]
pub struct Corpus<T> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    /// Topic of every query id, train and test.
    pub topics: Vec<(String, usize)>,
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn noisy(rng: &mut ChaCha8Rng, centroid: &[f64], noise: Option<&Normal<f64>>) -> Vec<f64> {
    match noise {
        Some(n) => centroid.iter().map(|c| c + n.sample(rng)).collect(),
        None => centroid.to_vec(),
    }
}

fn cast<T: Scalar>(v: Vec<f64>) -> Vec<T> {
    v.into_iter().map(T::lit).collect()
}

/// Generates disjoint train and test corpora.
pub fn generate<T: Scalar>(cfg: &GenConfig) -> Result<Corpus<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = if cfg.noise_sigma > 0.0 {
        let sd = cfg.noise_sigma / (cfg.d_feat as f64).sqrt();
        Some(Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let centroids: Vec<Vec<f64>> = (0..cfg.n_topics).map(|_| unit_vector(&mut rng, cfg.d_feat)).collect();

    let mut doc_features: FeatureTable<T> = FeatureTable::new();
    let mut next_doc = 0usize;
    let mut new_doc = |features: Vec<f64>, table: &mut FeatureTable<T>| {
        let id = format!("d{next_doc:05}");
        next_doc += 1;
        table.insert(id.clone(), cast(features));
        id
    };

    // Background pool: docs_per_query documents per topic.
    let mut background: Vec<Vec<String>> = Vec::with_capacity(cfg.n_topics);
    for c in &centroids {
        let pool = (0..cfg.docs_per_query)
            .map(|_| {
                let f = noisy(&mut rng, c, noise.as_ref());
                new_doc(f, &mut doc_features)
            })
            .collect();
        background.push(pool);
    }

    let n_test = cfg.n_test_queries();
    let mut query_features: FeatureTable<T> = FeatureTable::new();
    let mut topics = Vec::with_capacity(cfg.n_queries + n_test);
    let mut train_pairs = Vec::new();
    let mut test_pairs = Vec::new();
    for i in 0..cfg.n_queries + n_test {
        let topic = i % cfg.n_topics;
        let qid = format!("q{i:04}");
        query_features.insert(qid.clone(), cast(noisy(&mut rng, &centroids[topic], noise.as_ref())));
        topics.push((qid.clone(), topic));
        let out = if i < cfg.n_queries { &mut train_pairs } else { &mut test_pairs };
        for _ in 0..cfg.pos_per_query {
            let d = new_doc(noisy(&mut rng, &centroids[topic], noise.as_ref()), &mut doc_features);
            out.push((qid.clone(), d, Label::Positive));
        }
        let foreign: Vec<&String> =
            background.iter().enumerate().filter(|(t, _)| *t != topic).flat_map(|(_, pool)| pool.iter()).collect();
        for j in index::sample(&mut rng, foreign.len(), cfg.n_negatives()).iter() {
            out.push((qid.clone(), foreign[j].clone(), Label::Negative));
        }
    }

    let train = Dataset::from_records(cfg.d_feat, train_pairs, &query_features, &doc_features)?;
    let test = Dataset::from_records(cfg.d_feat, test_pairs, &query_features, &doc_features)?;
    Ok(Corpus { train, test, topics })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgetProtocol {
    /// Share of positive pairs to forget.
    pub fraction: f64,
    /// Target share of forget pairs coming from query removal.
    pub balance: f64,
    pub seed: u64,
}

impl Default for ForgetProtocol {
    fn default() -> Self {
        Self { fraction: 0.10, balance: 0.5, seed: 0 }
    }
}

impl ForgetProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::Config(format!("fraction must lie in [0, 1], got {}", self.fraction)));
        }
        if !(0.0..=1.0).contains(&self.balance) {
            return Err(Error::Config(format!("balance must lie in [0, 1], got {}", self.balance)));
        }
        Ok(())
    }

    /// `ceil(fraction * positive_pairs)`, robust to float noise in the product.
    pub fn target(&self, positive_pairs: usize) -> usize {
        ((self.fraction * positive_pairs as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Picks removal requests until exactly `ceil(fraction * |positive pairs|)`
/// positive pairs are covered, alternating between query and document
/// removal according to `balance`, then draws random substitutes.
///
/// Query removal of `q` covers its positive pairs; document removal of `d`
/// covers every positive pair of `d`. Requests never overlap and never
/// overshoot the target.
pub fn build_protocol<T: Scalar>(dataset: &Dataset<T>, proto: &ForgetProtocol) -> Result<(ForgetSpec, SubstituteMap)> {
    proto.validate()?;
    let total = dataset.num_positive_pairs();
    let target = proto.target(total);
    let mut rng = ChaCha8Rng::seed_from_u64(proto.seed);

    let mut queries: Vec<QueryIdx> = dataset.queries().collect();
    queries.shuffle(&mut rng);
    let mut relevant: Vec<Vec<QueryIdx>> = vec![Vec::new(); dataset.num_docs()];
    for (q, d, l) in dataset.pairs() {
        if l.is_positive() {
            relevant[d.index()].push(q);
        }
    }
    let mut docs: Vec<DocIdx> = dataset.universe().filter(|d| !relevant[d.index()].is_empty()).collect();
    docs.shuffle(&mut rng);

    let mut spec = ForgetSpec::default();
    let mut taken_queries: BTreeSet<QueryIdx> = BTreeSet::new();
    let mut taken_pairs: BTreeSet<(QueryIdx, DocIdx)> = BTreeSet::new();
    let (mut by_query, mut by_doc) = (0usize, 0usize);
    let (mut qi, mut di) = (0usize, 0usize);

    let mut next_query = |taken_pairs: &BTreeSet<(QueryIdx, DocIdx)>, room: usize| {
        while qi < queries.len() {
            let q = queries[qi];
            qi += 1;
            let n = dataset.positives(q).count();
            if n <= room && dataset.positives(q).all(|d| !taken_pairs.contains(&(q, d))) {
                return Some(q);
            }
        }
        None
    };
    let mut next_doc = |taken_queries: &BTreeSet<QueryIdx>, room: usize| {
        while di < docs.len() {
            let d = docs[di];
            di += 1;
            let qs = &relevant[d.index()];
            if qs.len() <= room && qs.iter().all(|q| !taken_queries.contains(q)) {
                return Some(d);
            }
        }
        None
    };

    while by_query + by_doc < target {
        let room = target - by_query - by_doc;
        let prefer_query = by_query as f64 * (1.0 - proto.balance) <= by_doc as f64 * proto.balance
            && proto.balance > 0.0
            || proto.balance >= 1.0;
        let mut picked = false;
        for use_query in [prefer_query, !prefer_query] {
            if use_query {
                if let Some(q) = next_query(&taken_pairs, room) {
                    for d in dataset.positives(q) {
                        taken_pairs.insert((q, d));
                        by_query += 1;
                    }
                    taken_queries.insert(q);
                    spec.forget_queries.insert(dataset.query_id(q).to_string());
                    picked = true;
                    break;
                }
            } else if let Some(d) = next_doc(&taken_queries, room) {
                for &q in &relevant[d.index()] {
                    taken_pairs.insert((q, d));
                    by_doc += 1;
                }
                spec.forget_docs.insert(dataset.doc_id(d).to_string());
                picked = true;
                break;
            }
        }
        if !picked {
            return Err(Error::Config(format!(
                "fraction {} needs {target} forget pairs but only {} are reachable (achievable maximum fraction {:.4})",
                proto.fraction,
                by_query + by_doc,
                (by_query + by_doc) as f64 / total as f64
            )));
        }
    }
    let expected_query = proto.balance * target as f64;
    if (by_query as f64 - expected_query).abs() > 1.0 + 1e-9 {
        let reached = 2 * by_query.min(by_doc) + 1;
        return Err(Error::Config(format!(
            "fraction {} cannot be balanced ({by_query} query-removal vs {by_doc} document-removal pairs); achievable maximum fraction {:.4}",
            proto.fraction,
            reached.min(total) as f64 / total as f64
        )));
    }

    let forget = build_forget_set(dataset, &spec, ForgetOptions::default())?;
    debug_assert_eq!(forget.len(), target);
    let subs = SubstituteMap::random(dataset, &forget, proto.seed.wrapping_add(1))?;
    Ok((spec, subs))
}
