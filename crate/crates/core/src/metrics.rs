//! Ranking metrics for forgetting, correction, retention and generalisation.
//!
//! Ranks are 1-based over a query's candidate set, by descending score with
//! ties broken by ascending document id. All metrics are reciprocal-rank
//! based and are reported as `f64` whatever the scorer's scalar type.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{CorrectedDataset, Dataset, DocIdx, ForgetSet, JudgedList, QueryIdx, Removal, RetainSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scorer::ScorerParams;

/// One query's ranking.
#[derive(Clone, Debug)]
pub struct RankTable<T> {
    /// `(doc, score)` by descending score.
    pub order: Vec<(DocIdx, T)>,
    rank_of: HashMap<DocIdx, usize>,
}

impl<T: Scalar> RankTable<T> {
    /// Ranks already-computed scores. Duplicate documents keep their first
    /// score.
    pub fn from_scores(scores: impl IntoIterator<Item = (DocIdx, T)>) -> Self {
        let mut seen = HashMap::new();
        let mut order: Vec<(DocIdx, T)> = Vec::new();
        for (d, s) in scores {
            if seen.insert(d, ()).is_none() {
                order.push((d, s));
            }
        }
        order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        let rank_of = order.iter().enumerate().map(|(i, (d, _))| (*d, i + 1)).collect();
        Self { order, rank_of }
    }

    /// 1-based rank, `None` if `d` is not a candidate.
    pub fn rank(&self, d: DocIdx) -> Option<usize> {
        self.rank_of.get(&d).copied()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Scores `docs` for query `q` and ranks them.
pub fn rank<T: Scalar>(
    params: &ScorerParams<T>,
    dataset: &Dataset<T>,
    q: QueryIdx,
    docs: impl IntoIterator<Item = DocIdx>,
) -> Result<RankTable<T>> {
    let qf = dataset.query_features(q);
    let scores = docs
        .into_iter()
        .map(|d| params.score(qf, dataset.doc_features(d)).map(|s| (d, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankTable::from_scores(scores))
}

fn rank_original<T: Scalar>(params: &ScorerParams<T>, dataset: &Dataset<T>, q: QueryIdx) -> Result<RankTable<T>> {
    rank(params, dataset, q, dataset.docs_of(q).iter().map(|(d, _)| *d))
}

fn rank_star<T: Scalar>(
    params: &ScorerParams<T>,
    corrected: &CorrectedDataset<'_, T>,
    q: QueryIdx,
) -> Result<RankTable<T>> {
    rank(params, corrected.base, q, corrected.docs_star_of(q).iter().map(|(d, _)| *d))
}

fn recip(rank: usize) -> f64 {
    1.0 / rank as f64
}

/// Mean over `Q_F` of the reciprocal of the best rank any forgotten document
/// reaches, with ranks over the original `D_q`. Lower means stronger
/// forgetting.
pub fn p_forget<T: Scalar>(params: &ScorerParams<T>, dataset: &Dataset<T>, forget: &ForgetSet) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for q in forget.queries() {
        let table = rank_original(params, dataset, q)?;
        let best = forget
            .docs_of(q)
            .expect("query in Q_F")
            .iter()
            .filter_map(|d| table.rank(*d))
            .min()
            .ok_or_else(|| Error::InvalidDataset("forgotten document outside D_q".into()))?;
        total += recip(best);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("forget set"));
    }
    Ok(total / n as f64)
}

/// `1 - mean_F (1/rank_M(q, d; D_q) - 1/rank_w(q, r_q(d); D_q^*))^2`.
pub fn p_correct<T: Scalar>(
    student: &ScorerParams<T>,
    teacher: &ScorerParams<T>,
    corrected: &CorrectedDataset<'_, T>,
    forget: &ForgetSet,
) -> Result<f64> {
    if forget.is_empty() {
        return Err(Error::Empty("forget set"));
    }
    let dataset = corrected.base;
    let mut teacher_tables: BTreeMap<QueryIdx, RankTable<T>> = BTreeMap::new();
    let mut student_tables: BTreeMap<QueryIdx, RankTable<T>> = BTreeMap::new();
    let mut sum = 0.0;
    for (q, d, _) in forget.pairs() {
        let sub = corrected
            .substitutes()
            .get(q, d)
            .ok_or_else(|| Error::MissingSubstitutes(vec![format!("{}|{}", dataset.query_id(q), dataset.doc_id(d))]))?;
        if let std::collections::btree_map::Entry::Vacant(e) = teacher_tables.entry(q) {
            e.insert(rank_original(teacher, dataset, q)?);
            student_tables.insert(q, rank_star(student, corrected, q)?);
        }
        let t = teacher_tables[&q].rank(d).expect("forgotten doc in D_q");
        let s = student_tables[&q].rank(sub).expect("substitute in D_q^*");
        sum += (recip(t) - recip(s)).powi(2);
    }
    Ok(1.0 - sum / forget.len() as f64)
}

/// Mean reciprocal rank of the best-ranked positive per query.
pub fn mrr<T: Scalar>(params: &ScorerParams<T>, dataset: &Dataset<T>, lists: &[JudgedList]) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::Empty("query list"));
    }
    let mut total = 0.0;
    for list in lists {
        let table = rank(params, dataset, list.query, list.docs.iter().map(|(d, _)| *d))?;
        let best = list.positives().filter_map(|d| table.rank(d)).min().ok_or_else(|| {
            Error::InvalidDataset(format!("query `{}` has no positive document", dataset.query_id(list.query)))
        })?;
        total += recip(best);
    }
    Ok(total / lists.len() as f64)
}

/// Retrieval MRR over every query of `dataset`.
pub fn p_retain<T: Scalar>(params: &ScorerParams<T>, dataset: &Dataset<T>) -> Result<f64> {
    mrr(params, dataset, &dataset.judged())
}

/// Retrieval MRR restricted to the retain set: candidates are a query's
/// retained documents and targets its retained positives.
pub fn p_retain_on<T: Scalar>(params: &ScorerParams<T>, dataset: &Dataset<T>, retain: &RetainSet) -> Result<f64> {
    mrr(params, dataset, &retain.judged_with_positives())
}

/// Retrieval MRR on a held-out split.
pub fn p_test<T: Scalar>(params: &ScorerParams<T>, test: &Dataset<T>) -> Result<f64> {
    p_retain(params, test)
}

/// Mean per-document squared shift in reciprocal rank of retained positives,
/// student over `D_q^*` against teacher over `D_q`. Queries with no retained
/// positive are skipped.
pub fn p_delta_retain<T: Scalar>(
    student: &ScorerParams<T>,
    teacher: &ScorerParams<T>,
    corrected: &CorrectedDataset<'_, T>,
    forget: &ForgetSet,
) -> Result<f64> {
    let dataset = corrected.base;
    let mut total = 0.0;
    let mut n = 0usize;
    for q in dataset.queries() {
        let retained: Vec<DocIdx> = dataset.positives(q).filter(|d| !forget.contains(q, *d)).collect();
        if retained.is_empty() {
            continue;
        }
        let t = rank_original(teacher, dataset, q)?;
        let s = rank_star(student, corrected, q)?;
        let inner: f64 = retained
            .iter()
            .map(|d| (recip(s.rank(*d).expect("retained in D_q^*")) - recip(t.rank(*d).unwrap())).powi(2))
            .sum();
        total += inner / retained.len() as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("retained positives"));
    }
    Ok(total / n as f64)
}

/// `(mean unlearn epoch / mean train epoch) * n_unlearn_epochs`.
pub fn normalised_unlearn_time(
    unlearn_epoch_seconds: &[f64],
    train_epoch_seconds: &[f64],
    n_unlearn_epochs: usize,
) -> Result<f64> {
    if unlearn_epoch_seconds.is_empty() {
        return Err(Error::Empty("unlearn epoch timings"));
    }
    if train_epoch_seconds.is_empty() {
        return Err(Error::Empty("train epoch timings"));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let train = mean(train_epoch_seconds);
    if train <= 0.0 || !train.is_finite() {
        return Err(Error::Config("mean train epoch duration must be positive".into()));
    }
    Ok(mean(unlearn_epoch_seconds) / train * n_unlearn_epochs as f64)
}

/// All evaluation scores of one unlearned model.
///
/// Removal-specific fields are `None` when the forget set has no pairs of
/// that type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub p_forget: Option<f64>,
    pub p_forget_query: Option<f64>,
    pub p_forget_doc: Option<f64>,
    pub p_correct: Option<f64>,
    pub p_correct_query: Option<f64>,
    pub p_correct_doc: Option<f64>,
    pub p_retain: f64,
    pub p_test: Option<f64>,
    pub p_delta_retain: f64,
    pub unlearn_time_normalised: Option<f64>,
}

/// Column order of [`MetricsReport::to_csv`].
pub const METRICS_CSV_HEADER: &str = "p_forget,p_forget_query,p_forget_doc,p_correct,\
p_correct_query,p_correct_doc,p_retain,p_test,p_delta_retain,unlearn_time_normalised";

impl MetricsReport {
    /// Evaluates `student` against `teacher` on the training corpus (through
    /// `corrected` and `forget`) and optionally a held-out split.
    pub fn compute<T: Scalar>(
        student: &ScorerParams<T>,
        teacher: &ScorerParams<T>,
        corrected: &CorrectedDataset<'_, T>,
        forget: &ForgetSet,
        test: Option<&Dataset<T>>,
        unlearn_time_normalised: Option<f64>,
    ) -> Result<Self> {
        let dataset = corrected.base;
        let nonempty = |f: ForgetSet| if f.is_empty() { None } else { Some(f) };
        let by_query = nonempty(forget.restrict(Removal::Query));
        let by_doc = nonempty(forget.restrict(Removal::Document));
        let all = nonempty(forget.clone());

        let pf = |f: &Option<ForgetSet>| f.as_ref().map(|f| p_forget(student, dataset, f)).transpose();
        let pc = |f: &Option<ForgetSet>| f.as_ref().map(|f| p_correct(student, teacher, corrected, f)).transpose();
        let retain = crate::data::partition(dataset, forget)?;

        Ok(Self {
            p_forget: pf(&all)?,
            p_forget_query: pf(&by_query)?,
            p_forget_doc: pf(&by_doc)?,
            p_correct: pc(&all)?,
            p_correct_query: pc(&by_query)?,
            p_correct_doc: pc(&by_doc)?,
            p_retain: p_retain_on(student, dataset, &retain)?,
            p_test: test.map(|t| p_test(student, t)).transpose()?,
            p_delta_retain: p_delta_retain(student, teacher, corrected, forget)?,
            unlearn_time_normalised,
        })
    }

    /// Named values in CSV column order.
    pub fn fields(&self) -> [(&'static str, Option<f64>); 10] {
        [
            ("p_forget", self.p_forget),
            ("p_forget_query", self.p_forget_query),
            ("p_forget_doc", self.p_forget_doc),
            ("p_correct", self.p_correct),
            ("p_correct_query", self.p_correct_query),
            ("p_correct_doc", self.p_correct_doc),
            ("p_retain", Some(self.p_retain)),
            ("p_test", self.p_test),
            ("p_delta_retain", Some(self.p_delta_retain)),
            ("unlearn_time_normalised", self.unlearn_time_normalised),
        ]
    }

    /// Header line plus one data row; missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let row: Vec<String> =
            self.fields().iter().map(|(_, v)| v.map(|x| x.to_string()).unwrap_or_default()).collect();
        format!("{METRICS_CSV_HEADER}\n{}\n", row.join(","))
    }
}
