//! Labelled pairwise corpora, forget/retain partitions and substitutes.
//!
//! A [`Dataset`] holds the judged query–document pairs `S` together with
//! entity-level feature vectors. Identifiers are opaque strings; internally
//! queries and documents are interned into [`QueryIdx`] / [`DocIdx`] whose
//! numeric order equals the lexicographic order of the string ids, so any
//! tie-break "by ascending document id" is a tie-break by index.
//!
//! Forgetting is described by a [`ForgetSpec`] (queries and/or documents to
//! remove), resolved against a dataset into a [`ForgetSet`]. Each forgotten
//! pair is mapped to a substitute document by a [`SubstituteMap`], and
//! [`apply_substitutes`] produces the [`CorrectedDataset`] `S* = F* ∪ R`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryIdx(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DocIdx(pub u32);

impl QueryIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl DocIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Binary relevance label. Graded judgements are thresholded before ingestion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        matches!(self, Label::Positive)
    }
}

/// Per-entity feature vectors keyed by string id.
pub type FeatureTable<T> = BTreeMap<String, Vec<T>>;

/// One query with its judged candidate documents, sorted by document index.
#[derive(Clone, Debug, PartialEq)]
pub struct JudgedList {
    pub query: QueryIdx,
    pub docs: Vec<(DocIdx, Label)>,
}

impl JudgedList {
    pub fn positives(&self) -> impl Iterator<Item = DocIdx> + '_ {
        self.docs.iter().filter(|(_, l)| l.is_positive()).map(|(d, _)| *d)
    }

    pub fn negatives(&self) -> impl Iterator<Item = DocIdx> + '_ {
        self.docs.iter().filter(|(_, l)| !l.is_positive()).map(|(d, _)| *d)
    }
}

/// The judged corpus `S` with query set `Q`, per-query documents `D_q` and
/// the document universe `D` (every document appearing in some pair).
#[derive(Clone, Debug)]
pub struct Dataset<T> {
    dim: usize,
    query_ids: Vec<String>,
    doc_ids: Vec<String>,
    query_index: HashMap<String, QueryIdx>,
    doc_index: HashMap<String, DocIdx>,
    docs_of: Vec<Vec<(DocIdx, Label)>>,
    query_features: Vec<Vec<T>>,
    doc_features: Vec<Vec<T>>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds and validates a dataset from string-keyed records.
    ///
    /// Every pair must be unique, every query needs at least one positive and
    /// one negative document, and every referenced entity needs a finite
    /// feature vector of length `dim`. Feature rows for entities that appear
    /// in no pair are ignored.
    pub fn from_records<I>(
        dim: usize,
        pairs: I,
        query_features: &FeatureTable<T>,
        doc_features: &FeatureTable<T>,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, Label)>,
    {
        if dim == 0 {
            return Err(Error::InvalidDataset("feature dimension must be positive".into()));
        }
        let mut grouped: BTreeMap<String, BTreeMap<String, Label>> = BTreeMap::new();
        let mut all_docs: BTreeSet<String> = BTreeSet::new();
        for (q, d, label) in pairs {
            all_docs.insert(d.clone());
            let slot = grouped.entry(q.clone()).or_default();
            if slot.insert(d.clone(), label).is_some() {
                return Err(Error::InvalidDataset(format!("duplicate pair ({q}, {d})")));
            }
        }
        if grouped.is_empty() {
            return Err(Error::InvalidDataset("no pairs".into()));
        }

        let query_ids: Vec<String> = grouped.keys().cloned().collect();
        let doc_ids: Vec<String> = all_docs.into_iter().collect();
        let query_index: HashMap<String, QueryIdx> =
            query_ids.iter().enumerate().map(|(i, q)| (q.clone(), QueryIdx(i as u32))).collect();
        let doc_index: HashMap<String, DocIdx> =
            doc_ids.iter().enumerate().map(|(i, d)| (d.clone(), DocIdx(i as u32))).collect();

        let mut docs_of = Vec::with_capacity(query_ids.len());
        for (q, docs) in &grouped {
            let list: Vec<(DocIdx, Label)> = docs.iter().map(|(d, l)| (doc_index[d], *l)).collect();
            if !list.iter().any(|(_, l)| l.is_positive()) {
                return Err(Error::InvalidDataset(format!("query `{q}` has no positive document")));
            }
            if list.iter().all(|(_, l)| l.is_positive()) {
                return Err(Error::InvalidDataset(format!("query `{q}` has no negative document")));
            }
            docs_of.push(list);
        }

        let lookup = |table: &FeatureTable<T>, id: &str, what: &str| -> Result<Vec<T>> {
            let v =
                table.get(id).ok_or_else(|| Error::InvalidDataset(format!("missing features for {what} `{id}`")))?;
            if v.len() != dim {
                return Err(Error::InvalidDataset(format!("{what} `{id}` has {} features, expected {dim}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidDataset(format!("{what} `{id}` has non-finite features")));
            }
            Ok(v.clone())
        };
        let query_features =
            query_ids.iter().map(|q| lookup(query_features, q, "query")).collect::<Result<Vec<_>>>()?;
        let doc_features = doc_ids.iter().map(|d| lookup(doc_features, d, "document")).collect::<Result<Vec<_>>>()?;

        Ok(Self { dim, query_ids, doc_ids, query_index, doc_index, docs_of, query_features, doc_features })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_queries(&self) -> usize {
        self.query_ids.len()
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.docs_of.iter().map(Vec::len).sum()
    }

    pub fn num_positive_pairs(&self) -> usize {
        self.pairs().filter(|(_, _, l)| l.is_positive()).count()
    }

    pub fn queries(&self) -> impl Iterator<Item = QueryIdx> + '_ {
        (0..self.query_ids.len() as u32).map(QueryIdx)
    }

    /// The document universe `D`, in ascending id order.
    pub fn universe(&self) -> impl Iterator<Item = DocIdx> + '_ {
        (0..self.doc_ids.len() as u32).map(DocIdx)
    }

    pub fn query_id(&self, q: QueryIdx) -> &str {
        &self.query_ids[q.index()]
    }

    pub fn doc_id(&self, d: DocIdx) -> &str {
        &self.doc_ids[d.index()]
    }

    pub fn query_idx(&self, id: &str) -> Result<QueryIdx> {
        self.query_index.get(id).copied().ok_or_else(|| Error::UnknownQuery(id.to_string()))
    }

    pub fn doc_idx(&self, id: &str) -> Result<DocIdx> {
        self.doc_index.get(id).copied().ok_or_else(|| Error::UnknownDoc(id.to_string()))
    }

    /// `D_q` with labels, sorted by document index.
    pub fn docs_of(&self, q: QueryIdx) -> &[(DocIdx, Label)] {
        &self.docs_of[q.index()]
    }

    pub fn positives(&self, q: QueryIdx) -> impl Iterator<Item = DocIdx> + '_ {
        self.docs_of(q).iter().filter(|(_, l)| l.is_positive()).map(|(d, _)| *d)
    }

    pub fn negatives(&self, q: QueryIdx) -> impl Iterator<Item = DocIdx> + '_ {
        self.docs_of(q).iter().filter(|(_, l)| !l.is_positive()).map(|(d, _)| *d)
    }

    pub fn label(&self, q: QueryIdx, d: DocIdx) -> Option<Label> {
        let docs = self.docs_of(q);
        docs.binary_search_by_key(&d, |(doc, _)| *doc).ok().map(|i| docs[i].1)
    }

    pub fn query_features(&self, q: QueryIdx) -> &[T] {
        &self.query_features[q.index()]
    }

    pub fn doc_features(&self, d: DocIdx) -> &[T] {
        &self.doc_features[d.index()]
    }

    /// Every judged pair `(q, d, y)` in query-then-document order.
    pub fn pairs(&self) -> impl Iterator<Item = (QueryIdx, DocIdx, Label)> + '_ {
        self.docs_of
            .iter()
            .enumerate()
            .flat_map(|(qi, docs)| docs.iter().map(move |(d, l)| (QueryIdx(qi as u32), *d, *l)))
    }

    pub fn judged(&self) -> Vec<JudgedList> {
        self.queries().map(|q| JudgedList { query: q, docs: self.docs_of(q).to_vec() }).collect()
    }

    /// String-keyed records, suitable for writing back to disk.
    pub fn records(&self) -> Vec<(String, String, Label)> {
        self.pairs().map(|(q, d, l)| (self.query_id(q).to_string(), self.doc_id(d).to_string(), l)).collect()
    }

    pub fn query_feature_table(&self) -> FeatureTable<T> {
        self.queries().map(|q| (self.query_id(q).to_string(), self.query_features(q).to_vec())).collect()
    }

    pub fn doc_feature_table(&self) -> FeatureTable<T> {
        self.universe().map(|d| (self.doc_id(d).to_string(), self.doc_features(d).to_vec())).collect()
    }
}

/// Queries `Q^f` and documents `D^f` whose learned relevance must be removed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgetSpec {
    #[serde(default)]
    pub forget_queries: BTreeSet<String>,
    #[serde(default)]
    pub forget_docs: BTreeSet<String>,
}

impl ForgetSpec {
    pub fn is_empty(&self) -> bool {
        self.forget_queries.is_empty() && self.forget_docs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgetOptions {
    /// Let document removal also forget pairs where the document is a
    /// negative. Off by default: only positive pairs carry relevance to remove.
    #[serde(default)]
    pub include_negative_doc_removal: bool,
}

/// Which removal request put a pair into the forget set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Removal {
    Query,
    Document,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForgetEntry {
    pub label: Label,
    pub via_query: bool,
    pub via_doc: bool,
}

/// The forget set `F` with its per-query view `D_q^f`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForgetSet {
    entries: BTreeMap<(QueryIdx, DocIdx), ForgetEntry>,
    per_query: BTreeMap<QueryIdx, BTreeSet<DocIdx>>,
}

impl ForgetSet {
    fn insert(&mut self, q: QueryIdx, d: DocIdx, label: Label, via: Removal) {
        let e = self.entries.entry((q, d)).or_insert(ForgetEntry { label, via_query: false, via_doc: false });
        match via {
            Removal::Query => e.via_query = true,
            Removal::Document => e.via_doc = true,
        }
        self.per_query.entry(q).or_default().insert(d);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, q: QueryIdx, d: DocIdx) -> bool {
        self.entries.contains_key(&(q, d))
    }

    pub fn entry(&self, q: QueryIdx, d: DocIdx) -> Option<&ForgetEntry> {
        self.entries.get(&(q, d))
    }

    /// Forget pairs `(q, d, y)` in ascending order.
    pub fn pairs(&self) -> impl Iterator<Item = (QueryIdx, DocIdx, Label)> + '_ {
        self.entries.iter().map(|(&(q, d), e)| (q, d, e.label))
    }

    /// `D_q^f`; empty for queries outside `Q_F`.
    pub fn docs_of(&self, q: QueryIdx) -> Option<&BTreeSet<DocIdx>> {
        self.per_query.get(&q)
    }

    /// `Q_F`: queries with at least one forgotten document.
    pub fn queries(&self) -> impl Iterator<Item = QueryIdx> + '_ {
        self.per_query.keys().copied()
    }

    /// The sub-forget-set of pairs contributed by one removal type. Pairs
    /// requested by both a query and a document removal appear in both.
    pub fn restrict(&self, via: Removal) -> ForgetSet {
        let mut out = ForgetSet::default();
        for (&(q, d), e) in &self.entries {
            let keep = match via {
                Removal::Query => e.via_query,
                Removal::Document => e.via_doc,
            };
            if keep {
                out.entries.insert((q, d), *e);
                out.per_query.entry(q).or_default().insert(d);
            }
        }
        out
    }
}

/// Resolves a [`ForgetSpec`] against a dataset.
///
/// Query removal contributes every positive pair of each query in `Q^f`.
/// Document removal contributes the positive pairs of each document in `D^f`
/// (all pairs when `include_negative_doc_removal` is set). The union is
/// returned.
pub fn build_forget_set<T: Scalar>(dataset: &Dataset<T>, spec: &ForgetSpec, opts: ForgetOptions) -> Result<ForgetSet> {
    let mut out = ForgetSet::default();
    for qid in &spec.forget_queries {
        let q = dataset.query_idx(qid)?;
        for d in dataset.positives(q) {
            out.insert(q, d, Label::Positive, Removal::Query);
        }
    }
    if !spec.forget_docs.is_empty() {
        let docs = spec.forget_docs.iter().map(|id| dataset.doc_idx(id)).collect::<Result<BTreeSet<_>>>()?;
        for (q, d, label) in dataset.pairs() {
            if docs.contains(&d) && (label.is_positive() || opts.include_negative_doc_removal) {
                out.insert(q, d, label, Removal::Document);
            }
        }
    }
    Ok(out)
}

/// The retain set `R = S \ F`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RetainSet {
    pub pairs: Vec<(QueryIdx, DocIdx, Label)>,
}

impl RetainSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Retained pairs grouped by query. Queries whose retained pairs hold no
    /// positive are dropped, since they carry no retrieval target.
    pub fn judged_with_positives(&self) -> Vec<JudgedList> {
        let mut grouped: BTreeMap<QueryIdx, Vec<(DocIdx, Label)>> = BTreeMap::new();
        for &(q, d, l) in &self.pairs {
            grouped.entry(q).or_default().push((d, l));
        }
        grouped
            .into_iter()
            .filter(|(_, docs)| docs.iter().any(|(_, l)| l.is_positive()))
            .map(|(query, docs)| JudgedList { query, docs })
            .collect()
    }
}

/// Splits `S` into `R = S \ F`. Fails if `F` holds a pair not in `S`.
pub fn partition<T: Scalar>(dataset: &Dataset<T>, forget: &ForgetSet) -> Result<RetainSet> {
    for (q, d, label) in forget.pairs() {
        if dataset.label(q, d) != Some(label) {
            return Err(Error::InvalidDataset(format!(
                "forget pair ({}, {}) is not in the dataset",
                dataset.query_id(q),
                dataset.doc_id(d)
            )));
        }
    }
    let pairs = dataset.pairs().filter(|(q, d, _)| !forget.contains(*q, *d)).collect();
    Ok(RetainSet { pairs })
}

/// The per-query substitute function `r_q`, keyed by forgotten pair.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubstituteMap {
    subs: BTreeMap<(QueryIdx, DocIdx), DocIdx>,
}

impl SubstituteMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, q: QueryIdx, d: DocIdx, sub: DocIdx) {
        self.subs.insert((q, d), sub);
    }

    pub fn get(&self, q: QueryIdx, d: DocIdx) -> Option<DocIdx> {
        self.subs.get(&(q, d)).copied()
    }

    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((QueryIdx, DocIdx), DocIdx)> + '_ {
        self.subs.iter().map(|(k, v)| (*k, *v))
    }

    /// Draws `r_q(d)` uniformly from `D \ (D_q^f ∪ D_q^+)` for every forget
    /// pair. Substitutes for the same query are distinct while the candidate
    /// pool allows it.
    pub fn random<T: Scalar>(dataset: &Dataset<T>, forget: &ForgetSet, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Self::new();
        for q in forget.queries() {
            let forgotten = forget.docs_of(q).expect("query in Q_F");
            let positives: BTreeSet<DocIdx> = dataset.positives(q).collect();
            let mut pool: Vec<DocIdx> =
                dataset.universe().filter(|d| !forgotten.contains(d) && !positives.contains(d)).collect();
            if pool.is_empty() {
                return Err(Error::InvalidSubstitute(format!(
                    "no admissible substitute for query `{}`",
                    dataset.query_id(q)
                )));
            }
            pool.shuffle(&mut rng);
            for (i, &d) in forgotten.iter().enumerate() {
                out.insert(q, d, pool[i % pool.len()]);
            }
        }
        Ok(out)
    }

    /// Checks that the domain is exactly `F` and every substitute lies
    /// outside `D_q^f ∪ D_q^+`.
    pub fn validate<T: Scalar>(&self, dataset: &Dataset<T>, forget: &ForgetSet) -> Result<()> {
        let missing = missing_substitutes(dataset, forget, self);
        if !missing.is_empty() {
            return Err(Error::MissingSubstitutes(missing));
        }
        for (&(q, d), &sub) in &self.subs {
            if !forget.contains(q, d) {
                return Err(Error::InvalidSubstitute(format!(
                    "({}, {}) is not a forget pair",
                    dataset.query_id(q),
                    dataset.doc_id(d)
                )));
            }
            check_substitute(dataset, forget, q, d, sub)?;
        }
        Ok(())
    }
}

fn pair_name<T: Scalar>(dataset: &Dataset<T>, q: QueryIdx, d: DocIdx) -> String {
    format!("{}|{}", dataset.query_id(q), dataset.doc_id(d))
}

fn missing_substitutes<T: Scalar>(dataset: &Dataset<T>, forget: &ForgetSet, subs: &SubstituteMap) -> Vec<String> {
    forget.pairs().filter(|(q, d, _)| subs.get(*q, *d).is_none()).map(|(q, d, _)| pair_name(dataset, q, d)).collect()
}

fn check_substitute<T: Scalar>(
    dataset: &Dataset<T>,
    forget: &ForgetSet,
    q: QueryIdx,
    d: DocIdx,
    sub: DocIdx,
) -> Result<()> {
    let in_forget = forget.docs_of(q).is_some_and(|s| s.contains(&sub));
    let positive = dataset.label(q, sub) == Some(Label::Positive);
    if in_forget || positive {
        return Err(Error::InvalidSubstitute(format!(
            "{} -> {} is {} for that query",
            pair_name(dataset, q, d),
            dataset.doc_id(sub),
            if in_forget { "itself forgotten" } else { "already positive" }
        )));
    }
    Ok(())
}

/// `S* = F* ∪ R`, with the post-substitution document sets `D_q^*`.
#[derive(Clone, Debug)]
pub struct CorrectedDataset<'a, T> {
    pub base: &'a Dataset<T>,
    /// `F*` followed by `R`; a multiset, so `|S*| = |S|` always holds.
    pub star_pairs: Vec<(QueryIdx, DocIdx, Label)>,
    docs_star: Vec<Vec<(DocIdx, Label)>>,
    subs: SubstituteMap,
}

impl<'a, T: Scalar> CorrectedDataset<'a, T> {
    /// `D_q^*` with labels. A substitute that was already judged for `q`
    /// appears once, carrying its label from `F*`.
    pub fn docs_star_of(&self, q: QueryIdx) -> &[(DocIdx, Label)] {
        &self.docs_star[q.index()]
    }

    pub fn substitutes(&self) -> &SubstituteMap {
        &self.subs
    }

    pub fn judged(&self) -> Vec<JudgedList> {
        self.base.queries().map(|q| JudgedList { query: q, docs: self.docs_star_of(q).to_vec() }).collect()
    }
}

/// Builds the corrected dataset. Every forget pair must have a substitute;
/// extra entries in `subs` are ignored.
pub fn apply_substitutes<'a, T: Scalar>(
    dataset: &'a Dataset<T>,
    forget: &ForgetSet,
    subs: &SubstituteMap,
) -> Result<CorrectedDataset<'a, T>> {
    let missing = missing_substitutes(dataset, forget, subs);
    if !missing.is_empty() {
        return Err(Error::MissingSubstitutes(missing));
    }

    let mut star_pairs = Vec::with_capacity(dataset.num_pairs());
    let mut used = SubstituteMap::new();
    for (q, d, label) in forget.pairs() {
        let sub = subs.get(q, d).expect("coverage checked");
        check_substitute(dataset, forget, q, d, sub)?;
        used.insert(q, d, sub);
        star_pairs.push((q, sub, label));
    }
    star_pairs.extend(dataset.pairs().filter(|(q, d, _)| !forget.contains(*q, *d)));

    let docs_star = dataset
        .queries()
        .map(|q| {
            let mut docs: BTreeMap<DocIdx, Label> =
                dataset.docs_of(q).iter().filter(|(d, _)| !forget.contains(q, *d)).copied().collect();
            if let Some(forgotten) = forget.docs_of(q) {
                for &d in forgotten {
                    let label = forget.entry(q, d).expect("forget pair").label;
                    docs.insert(used.get(q, d).expect("substitute"), label);
                }
            }
            docs.into_iter().collect()
        })
        .collect();

    Ok(CorrectedDataset { base: dataset, star_pairs, docs_star, subs: used })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Two queries over five documents with two-dimensional features.
    ///
    /// q1: d1 +, d2 -, d4 -     q2: d3 +, d4 -, d5 +, d1 -
    pub fn small() -> Dataset<f64> {
        let pairs = [
            ("q1", "d1", Label::Positive),
            ("q1", "d2", Label::Negative),
            ("q1", "d4", Label::Negative),
            ("q2", "d3", Label::Positive),
            ("q2", "d4", Label::Negative),
            ("q2", "d5", Label::Positive),
            ("q2", "d1", Label::Negative),
        ]
        .into_iter()
        .map(|(q, d, l)| (q.to_string(), d.to_string(), l));
        let qf: FeatureTable<f64> =
            [("q1", vec![1.0, 0.0]), ("q2", vec![0.0, 1.0])].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let df: FeatureTable<f64> =
            (1..=9).map(|i| (format!("d{i}"), vec![i as f64 * 0.1, 1.0 - i as f64 * 0.1])).collect();
        Dataset::from_records(2, pairs, &qf, &df).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::small;
    use super::*;

    fn spec(queries: &[&str], docs: &[&str]) -> ForgetSpec {
        ForgetSpec {
            forget_queries: queries.iter().map(|s| s.to_string()).collect(),
            forget_docs: docs.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn named(ds: &Dataset<f64>, f: &ForgetSet) -> Vec<(String, String, Label)> {
        f.pairs().map(|(q, d, l)| (ds.query_id(q).into(), ds.doc_id(d).into(), l)).collect()
    }

    #[test]
    fn query_removal_selects_only_positives() {
        let ds = small();
        let f = build_forget_set(&ds, &spec(&["q1"], &[]), ForgetOptions::default()).unwrap();
        assert_eq!(named(&ds, &f), vec![("q1".into(), "d1".into(), Label::Positive)]);
    }

    #[test]
    fn document_removal_selects_positive_pairs_of_the_document() {
        let ds = small();
        let f = build_forget_set(&ds, &spec(&[], &["d3"]), ForgetOptions::default()).unwrap();
        assert_eq!(named(&ds, &f), vec![("q2".into(), "d3".into(), Label::Positive)]);

        // d1 is positive for q1 and negative for q2.
        let f = build_forget_set(&ds, &spec(&[], &["d1"]), ForgetOptions::default()).unwrap();
        assert_eq!(f.len(), 1);
        let opts = ForgetOptions { include_negative_doc_removal: true };
        let f = build_forget_set(&ds, &spec(&[], &["d1"]), opts).unwrap();
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn overlapping_query_and_document_removal_counts_once() {
        let ds = small();
        let f = build_forget_set(&ds, &spec(&["q1"], &["d1"]), ForgetOptions::default()).unwrap();
        assert_eq!(f.len(), 1);
        let e = f.entry(ds.query_idx("q1").unwrap(), ds.doc_idx("d1").unwrap()).unwrap();
        assert!(e.via_query && e.via_doc);
        assert_eq!(f.restrict(Removal::Query).len(), 1);
        assert_eq!(f.restrict(Removal::Document).len(), 1);
    }

    #[test]
    fn unknown_ids_are_named() {
        let ds = small();
        let err = build_forget_set(&ds, &spec(&["qx"], &[]), ForgetOptions::default()).unwrap_err();
        assert!(err.to_string().contains("qx"));
        let err = build_forget_set(&ds, &spec(&[], &["dz"]), ForgetOptions::default()).unwrap_err();
        assert!(err.to_string().contains("dz"));
    }

    #[test]
    fn partition_sizes() {
        let ds = small();
        let empty = ForgetSet::default();
        let r = partition(&ds, &empty).unwrap();
        assert_eq!(r.len(), ds.num_pairs());

        let f = build_forget_set(&ds, &spec(&["q1", "q2"], &[]), ForgetOptions::default()).unwrap();
        let r = partition(&ds, &f).unwrap();
        assert_eq!(f.len() + r.len(), ds.num_pairs());
        assert!(r.pairs.iter().all(|(_, _, l)| *l == Label::Negative));
    }

    #[test]
    fn substitute_maps_forget_pair() {
        let ds = small();
        let f = build_forget_set(&ds, &spec(&["q1"], &[]), ForgetOptions::default()).unwrap();
        let (q1, d1, d9) = (ds.query_idx("q1").unwrap(), ds.doc_idx("d1").unwrap(), ds.doc_idx("d3").unwrap());
        let mut subs = SubstituteMap::new();
        subs.insert(q1, d1, d9);
        let c = apply_substitutes(&ds, &f, &subs).unwrap();
        assert_eq!(c.star_pairs[0], (q1, d9, Label::Positive));
        assert_eq!(c.star_pairs.len(), ds.num_pairs());
    }

    #[test]
    fn substitute_equal_to_existing_negative_keeps_one_copy() {
        let ds = small();
        let f = build_forget_set(&ds, &spec(&["q1"], &[]), ForgetOptions::default()).unwrap();
        let q1 = ds.query_idx("q1").unwrap();
        let d1 = ds.doc_idx("d1").unwrap();
        let d2 = ds.doc_idx("d2").unwrap();
        let mut subs = SubstituteMap::new();
        subs.insert(q1, d1, d2);
        let c = apply_substitutes(&ds, &f, &subs).unwrap();

        // Set-algebra oracle: (D_q \ D_q^f) ∪ {r_q(d)}.
        let mut oracle: BTreeSet<DocIdx> = ds.docs_of(q1).iter().map(|(d, _)| *d).collect();
        oracle.remove(&d1);
        oracle.insert(d2);
        let got: BTreeSet<DocIdx> = c.docs_star_of(q1).iter().map(|(d, _)| *d).collect();
        assert_eq!(got, oracle);
        assert_eq!(c.docs_star_of(q1).len(), oracle.len());
        let label = c.docs_star_of(q1).iter().find(|(d, _)| *d == d2).unwrap().1;
        assert_eq!(label, Label::Positive);
        assert_eq!(c.star_pairs.len(), ds.num_pairs());
    }

    #[test]
    fn missing_substitute_is_reported() {
        let ds = small();
        let f = build_forget_set(&ds, &spec(&["q1", "q2"], &[]), ForgetOptions::default()).unwrap();
        let mut subs = SubstituteMap::new();
        subs.insert(ds.query_idx("q1").unwrap(), ds.doc_idx("d1").unwrap(), ds.doc_idx("d2").unwrap());
        subs.insert(ds.query_idx("q2").unwrap(), ds.doc_idx("d3").unwrap(), ds.doc_idx("d4").unwrap());
        match apply_substitutes(&ds, &f, &subs) {
            Err(Error::MissingSubstitutes(p)) => assert_eq!(p, vec!["q2|d5".to_string()]),
            other => panic!("expected missing substitutes, got {other:?}"),
        }
    }

    #[test]
    fn substitute_may_not_be_positive_or_forgotten() {
        let ds = small();
        let f = build_forget_set(&ds, &spec(&[], &["d3"]), ForgetOptions::default()).unwrap();
        let q2 = ds.query_idx("q2").unwrap();
        let mut subs = SubstituteMap::new();
        subs.insert(q2, ds.doc_idx("d3").unwrap(), ds.doc_idx("d5").unwrap());
        assert!(matches!(apply_substitutes(&ds, &f, &subs), Err(Error::InvalidSubstitute(_))));
        assert!(subs.validate(&ds, &f).is_err());
    }

    #[test]
    fn random_substitutes_respect_constraints() {
        let ds = small();
        let f = build_forget_set(&ds, &spec(&["q2"], &["d1"]), ForgetOptions::default()).unwrap();
        let subs = SubstituteMap::random(&ds, &f, 7).unwrap();
        subs.validate(&ds, &f).unwrap();
        assert_eq!(subs, SubstituteMap::random(&ds, &f, 7).unwrap());
        let c = apply_substitutes(&ds, &f, &subs).unwrap();
        for q in ds.queries() {
            let star: BTreeSet<DocIdx> = c.docs_star_of(q).iter().map(|(d, _)| *d).collect();
            if let Some(fq) = f.docs_of(q) {
                assert!(star.is_disjoint(fq));
            }
        }
    }

    #[test]
    fn dataset_validation() {
        let qf: FeatureTable<f64> = [("q".to_string(), vec![0.0])].into_iter().collect();
        let df: FeatureTable<f64> = [("a".to_string(), vec![0.0]), ("b".to_string(), vec![1.0])].into_iter().collect();
        let rec = |v: &[(&str, &str, Label)]| {
            v.iter().map(|(q, d, l)| (q.to_string(), d.to_string(), *l)).collect::<Vec<_>>()
        };
        let dup = rec(&[("q", "a", Label::Positive), ("q", "a", Label::Negative)]);
        assert!(Dataset::from_records(1, dup, &qf, &df).is_err());
        let no_neg = rec(&[("q", "a", Label::Positive), ("q", "b", Label::Positive)]);
        assert!(Dataset::from_records(1, no_neg, &qf, &df).is_err());
        let ok = rec(&[("q", "a", Label::Positive), ("q", "b", Label::Negative)]);
        assert!(Dataset::from_records(1, ok.clone(), &qf, &df).is_ok());
        assert!(Dataset::from_records(2, ok, &qf, &df).is_err());
    }
}
