//! Corrective unranking distillation.
//!
//! The trained model is frozen as a teacher and a student initialised from it
//! is updated with two hinge-based objectives:
//!
//! * forget/correct, for each forgotten pair `x = (q, d)` with substitute
//!   `r(x) = (q, r_q(d))`:
//!   `H(f_w(x), qtl) + H(f_M(x), f_w(r(x)))`, where `qtl` is the γ-quantile of
//!   the teacher's scores on the query's sampled negatives `A_q^-`;
//! * retain, for each retained positive `(q, d+)`:
//!   `H(f_M(q, d+), f_w(q, d+)) + mean_{d- ∈ A_q^-} H(f_w(q, d-), f_M(q, d-))`,
//!
//! with `H(a, b) = max(0, a - b)`. The negative samples and quantile targets
//! are fixed once from the teacher before optimisation begins; the work list
//! is then visited item by item with one SGD step per item.

use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DocIdx, ForgetSet, QueryIdx, SubstituteMap};
use crate::error::{Error, Result};
use crate::scalar::{hinge, hinge_slope, Scalar};
use crate::scorer::{ScorerParams, TeacherSnapshot};

/// Linear-interpolation quantile: the sorted scores are read at fractional
/// index `gamma * (len - 1)`. `gamma = 0` gives the minimum and `gamma = 1`
/// the maximum, exactly.
pub fn quantile<T: Scalar>(scores: &[T], gamma: f64) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::Empty("quantile scores"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("quantile level must lie in [0, 1], got {gamma}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { layer: "quantile input" });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let pos = gamma * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return Ok(sorted[lo]);
    }
    let frac = T::lit(pos - lo as f64);
    let (a, b) = (sorted[lo], sorted[hi]);
    // Clamping keeps the result monotone in gamma under rounding.
    Ok((a + frac * (b - a)).min(b).max(a))
}

/// Forget/correct loss from the four scalars it reads:
/// `H(student(x), qtl) + H(teacher(x), student(r(x)))`.
pub fn fc_loss_from_scores<T: Scalar>(student_x: T, qtl: T, teacher_x: T, student_sub: T) -> T {
    hinge(student_x, qtl) + hinge(teacher_x, student_sub)
}

/// Retain loss from scores: `H(teacher(d+), student(d+))` plus the mean over
/// `(student(d-), teacher(d-))` of `H(student(d-), teacher(d-))`.
pub fn retain_loss_from_scores<T: Scalar>(teacher_pos: T, student_pos: T, negatives: &[(T, T)]) -> T {
    let neg = if negatives.is_empty() {
        T::zero()
    } else {
        negatives.iter().map(|&(s, t)| hinge(s, t)).sum::<T>() / T::from_usize(negatives.len()).unwrap()
    };
    hinge(teacher_pos, student_pos) + neg
}

/// [`fc_loss_from_scores`] evaluated through the scorers.
pub fn fc_loss<T: Scalar>(
    student: &ScorerParams<T>,
    teacher: &TeacherSnapshot<T>,
    dataset: &Dataset<T>,
    pair: (QueryIdx, DocIdx),
    sub: DocIdx,
    qtl: T,
) -> Result<T> {
    let qf = dataset.query_features(pair.0);
    let xf = dataset.doc_features(pair.1);
    let rf = dataset.doc_features(sub);
    Ok(fc_loss_from_scores(student.score(qf, xf)?, qtl, teacher.score(qf, xf)?, student.score(qf, rf)?))
}

/// [`retain_loss_from_scores`] evaluated through the scorers.
pub fn retain_loss<T: Scalar>(
    student: &ScorerParams<T>,
    teacher: &TeacherSnapshot<T>,
    dataset: &Dataset<T>,
    q: QueryIdx,
    d_pos: DocIdx,
    negs: &[DocIdx],
) -> Result<T> {
    let qf = dataset.query_features(q);
    let pf = dataset.doc_features(d_pos);
    let scored = negs
        .iter()
        .map(|d| {
            let f = dataset.doc_features(*d);
            Ok((student.score(qf, f)?, teacher.score(qf, f)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(retain_loss_from_scores(teacher.score(qf, pf)?, student.score(qf, pf)?, &scored))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnlearnConfig {
    /// Size of each query's negative sample `A_q^-`.
    pub k: usize,
    /// Quantile level of the forgetting target.
    pub gamma: f64,
    pub lambda_fc: f64,
    pub lambda_r: f64,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop when the mean per-item loss of an epoch drops below this value.
    pub early_stop_loss: Option<f64>,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        Self { k: 5, gamma: 0.0, lambda_fc: 1.0, lambda_r: 1.0, epochs: 20, lr: 0.05, seed: 0, early_stop_loss: None }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.lambda_fc >= 0.0 && self.lambda_r >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fixed per-query negative samples `A_q^-`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeSample {
    per_query: Vec<Vec<DocIdx>>,
}

impl NegativeSample {
    pub fn get(&self, q: QueryIdx) -> &[DocIdx] {
        &self.per_query[q.index()]
    }
}

/// Draws `k` negatives per query from `D_q^-`: without replacement when
/// `k <= |D_q^-|`, with replacement otherwise.
pub fn sample_negatives<T: Scalar>(dataset: &Dataset<T>, k: usize, seed: u64) -> Result<NegativeSample> {
    sample_negatives_excluding(dataset, k, seed, |_, _| false)
}

/// As [`sample_negatives`], skipping negatives for which `exclude` holds.
/// A query whose negatives are all excluded falls back to the full `D_q^-`.
pub fn sample_negatives_excluding<T, F>(dataset: &Dataset<T>, k: usize, seed: u64, exclude: F) -> Result<NegativeSample>
where
    T: Scalar,
    F: Fn(QueryIdx, DocIdx) -> bool,
{
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut per_query = Vec::with_capacity(dataset.num_queries());
    for q in dataset.queries() {
        let all: Vec<DocIdx> = dataset.negatives(q).collect();
        if all.is_empty() {
            return Err(Error::InvalidDataset(format!("query `{}` has no negative document", dataset.query_id(q))));
        }
        let kept: Vec<DocIdx> = all.iter().copied().filter(|d| !exclude(q, *d)).collect();
        let pool = if kept.is_empty() { all } else { kept };
        let sample: Vec<DocIdx> = if k <= pool.len() {
            index::sample(&mut rng, pool.len(), k).iter().map(|i| pool[i]).collect()
        } else {
            (0..k).map(|_| pool[rng.random_range(0..pool.len())]).collect()
        };
        per_query.push(sample);
    }
    Ok(NegativeSample { per_query })
}

/// `A_q^-` for unlearning: forgotten documents and the query's substitutes
/// are kept out of the sample so no document receives conflicting targets.
fn anchor_negatives<T: Scalar>(
    dataset: &Dataset<T>,
    forget: &ForgetSet,
    subs: &SubstituteMap,
    cfg: &UnlearnConfig,
) -> Result<NegativeSample> {
    sample_negatives_excluding(dataset, cfg.k, cfg.seed, |q, d| {
        forget.docs_of(q).is_some_and(|fs| fs.contains(&d) || fs.iter().any(|f| subs.get(q, *f) == Some(d)))
    })
}

/// One row of an unlearning log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlearnEpoch {
    pub epoch: usize,
    /// Mean per-item loss on forget-side items.
    pub fc_loss: f64,
    /// Mean per-item loss on retain-side items.
    pub retain_loss: f64,
    pub wall_seconds: f64,
}

/// An unlearned model with its per-epoch log.
#[derive(Clone, Debug)]
pub struct Unlearned<T> {
    pub params: ScorerParams<T>,
    pub log: Vec<UnlearnEpoch>,
}

impl<T> Unlearned<T> {
    pub fn epoch_seconds(&self) -> Vec<f64> {
        self.log.iter().map(|e| e.wall_seconds).collect()
    }
}

enum WorkItem<T> {
    Forget { q: QueryIdx, d: DocIdx, sub: DocIdx, teacher_x: T, qtl: T },
    Retain { q: QueryIdx, d: DocIdx, teacher_pos: T, negatives: Vec<(DocIdx, T)> },
}

/// Runs corrective unranking distillation and returns `M_correct`.
pub fn curd_unlearn<T: Scalar>(
    teacher: &TeacherSnapshot<T>,
    dataset: &Dataset<T>,
    forget: &ForgetSet,
    subs: &SubstituteMap,
    cfg: &UnlearnConfig,
) -> Result<Unlearned<T>> {
    curd_unlearn_observed(teacher, dataset, forget, subs, cfg, |_, _| Ok(()))
}

/// As [`curd_unlearn`], calling `observer(epoch, &student)` before the first
/// epoch (epoch 0) and after every epoch. Observer time is not logged.
pub fn curd_unlearn_observed<T, F>(
    teacher: &TeacherSnapshot<T>,
    dataset: &Dataset<T>,
    forget: &ForgetSet,
    subs: &SubstituteMap,
    cfg: &UnlearnConfig,
    mut observer: F,
) -> Result<Unlearned<T>>
where
    T: Scalar,
    F: FnMut(usize, &ScorerParams<T>) -> Result<()>,
{
    cfg.validate()?;
    let tp = teacher.params();
    if tp.shape().input_dim != dataset.dim() {
        return Err(Error::Shape(format!(
            "teacher input_dim {} does not match dataset dimension {}",
            tp.shape().input_dim,
            dataset.dim()
        )));
    }

    let negatives = anchor_negatives(dataset, forget, subs, cfg)?;

    let teacher_score = |q: QueryIdx, d: DocIdx| tp.score(dataset.query_features(q), dataset.doc_features(d));
    let mut qtl: Vec<Option<T>> = vec![None; dataset.num_queries()];
    for q in forget.queries() {
        let scores = negatives.get(q).iter().map(|d| teacher_score(q, *d)).collect::<Result<Vec<_>>>()?;
        qtl[q.index()] = Some(quantile(&scores, cfg.gamma)?);
    }

    let mut items: Vec<WorkItem<T>> = Vec::new();
    for (q, d, label) in dataset.pairs() {
        if forget.contains(q, d) {
            let sub = subs.get(q, d).ok_or_else(|| {
                Error::MissingSubstitutes(vec![format!("{}|{}", dataset.query_id(q), dataset.doc_id(d))])
            })?;
            items.push(WorkItem::Forget {
                q,
                d,
                sub,
                teacher_x: teacher_score(q, d)?,
                qtl: qtl[q.index()].expect("query in Q_F"),
            });
        } else if label.is_positive() {
            let negs =
                negatives.get(q).iter().map(|n| teacher_score(q, *n).map(|t| (*n, t))).collect::<Result<Vec<_>>>()?;
            items.push(WorkItem::Retain { q, d, teacher_pos: teacher_score(q, d)?, negatives: negs });
        }
    }

    let mut student = tp.clone();
    observer(0, &student)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);
    let lr = T::lit(cfg.lr);
    let lambda_fc = T::lit(cfg.lambda_fc);
    let lambda_r = T::lit(cfg.lambda_r);
    let mut grad = vec![T::zero(); student.weights().len()];
    let n_fc = items.iter().filter(|i| matches!(i, WorkItem::Forget { .. })).count();
    let n_r = items.len() - n_fc;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let (mut fc_sum, mut r_sum) = (0.0, 0.0);
        for &i in &order {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let mut active = false;
            let loss = match &items[i] {
                WorkItem::Forget { q, d, sub, teacher_x, qtl } => {
                    let qf = dataset.query_features(*q);
                    let (xf, rf) = (dataset.doc_features(*d), dataset.doc_features(*sub));
                    let s_x = student.forward(qf, xf);
                    let s_r = student.forward(qf, rf);
                    let forget_slope = hinge_slope(s_x, *qtl);
                    let correct_slope = hinge_slope(*teacher_x, s_r);
                    if forget_slope > T::zero() {
                        student.backward(qf, xf, lambda_fc, &mut grad)?;
                        active = true;
                    }
                    if correct_slope > T::zero() {
                        student.backward(qf, rf, -lambda_fc, &mut grad)?;
                        active = true;
                    }
                    let l = lambda_fc * fc_loss_from_scores(s_x, *qtl, *teacher_x, s_r);
                    fc_sum += l.as_f64();
                    l
                }
                WorkItem::Retain { q, d, teacher_pos, negatives } => {
                    let qf = dataset.query_features(*q);
                    let pf = dataset.doc_features(*d);
                    let s_pos = student.forward(qf, pf);
                    let mut l = hinge(*teacher_pos, s_pos);
                    if hinge_slope(*teacher_pos, s_pos) > T::zero() {
                        student.backward(qf, pf, -lambda_r, &mut grad)?;
                        active = true;
                    }
                    let per_neg = lambda_r / T::from_usize(negatives.len()).unwrap();
                    let mut neg_sum = T::zero();
                    for (n, t) in negatives {
                        let nf = dataset.doc_features(*n);
                        let s = student.forward(qf, nf);
                        if hinge_slope(s, *t) > T::zero() {
                            neg_sum = neg_sum + hinge(s, *t);
                            student.backward(qf, nf, per_neg, &mut grad)?;
                            active = true;
                        }
                    }
                    l = lambda_r * (l + neg_sum / T::from_usize(negatives.len()).unwrap());
                    r_sum += l.as_f64();
                    l
                }
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, item: i });
            }
            if active {
                student.sgd_step(&grad, lr);
            }
        }
        let wall_seconds = start.elapsed().as_secs_f64();
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        log.push(UnlearnEpoch { epoch, fc_loss: mean(fc_sum, n_fc), retain_loss: mean(r_sum, n_r), wall_seconds });
        observer(epoch, &student)?;
        if let Some(threshold) = cfg.early_stop_loss {
            if mean(fc_sum + r_sum, items.len()) < threshold {
                break;
            }
        }
    }
    Ok(Unlearned { params: student, log })
}

/// Teacher-side quantile targets for every query in `Q_F`, as used by
/// [`curd_unlearn`]. Exposed for inspection and testing.
pub fn quantile_targets<T: Scalar>(
    teacher: &TeacherSnapshot<T>,
    dataset: &Dataset<T>,
    forget: &ForgetSet,
    subs: &SubstituteMap,
    cfg: &UnlearnConfig,
) -> Result<Vec<(QueryIdx, T)>> {
    let negatives = anchor_negatives(dataset, forget, subs, cfg)?;
    forget
        .queries()
        .map(|q| {
            let scores = negatives
                .get(q)
                .iter()
                .map(|d| teacher.score(dataset.query_features(q), dataset.doc_features(*d)))
                .collect::<Result<Vec<_>>>()?;
            Ok((q, quantile(&scores, cfg.gamma)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::small;
    use crate::data::{build_forget_set, FeatureTable, ForgetOptions, ForgetSpec, Label};
    use crate::scorer::{ScorerKind, ScorerShape};

    /// Sort-and-interpolate reference written independently of `quantile`.
    fn oracle_quantile(xs: &[f64], gamma: f64) -> f64 {
        let mut v = xs.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = gamma * (v.len() as f64 - 1.0);
        let i = h.floor() as usize;
        if i + 1 >= v.len() {
            return v[v.len() - 1];
        }
        v[i] * (1.0 - (h - i as f64)) + v[i + 1] * (h - i as f64)
    }

    #[test]
    fn quantile_examples() {
        let s = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&s, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&s, 1.0).unwrap(), 4.0);
        assert_eq!(oracle_quantile(&s, 0.5), 2.5);
        assert_eq!(quantile(&s, 0.5).unwrap(), 2.5);
        assert!(quantile::<f64>(&[], 0.5).is_err());
        assert!(quantile(&s, 1.5).is_err());
    }

    #[test]
    fn fc_loss_examples() {
        assert_eq!(fc_loss_from_scores(2.0, 2.0, 4.0, 4.0), 0.0);
        assert_eq!(fc_loss_from_scores(5.0, 2.0, 4.0, 1.0), 6.0);
        assert_eq!(fc_loss_from_scores(1.0, 2.0, 4.0, 5.0), 0.0);
    }

    #[test]
    fn retain_loss_examples() {
        assert_eq!(retain_loss_from_scores(4.0, 4.0, &[(1.0, 1.0)]), 0.0);
        // teacher pos 4, student pos 3; negative student 2, teacher 1.
        assert_eq!(retain_loss_from_scores(4.0, 3.0, &[(2.0, 1.0)]), 2.0);
        assert_eq!(retain_loss_from_scores(4.0, 5.0, &[(0.0, 1.0), (-1.0, 2.0)]), 0.0);
    }

    fn negatives_fixture(n_neg: usize) -> Dataset<f64> {
        let mut pairs = vec![("q".to_string(), "p".to_string(), Label::Positive)];
        let mut df: FeatureTable<f64> = [("p".to_string(), vec![1.0])].into_iter().collect();
        for i in 0..n_neg {
            pairs.push(("q".into(), format!("n{i:02}"), Label::Negative));
            df.insert(format!("n{i:02}"), vec![-(i as f64)]);
        }
        let qf: FeatureTable<f64> = [("q".to_string(), vec![1.0])].into_iter().collect();
        Dataset::from_records(1, pairs, &qf, &df).unwrap()
    }

    #[test]
    fn sampling_without_replacement() {
        let ds = negatives_fixture(10);
        let s = sample_negatives(&ds, 5, 1).unwrap();
        let got = s.get(QueryIdx(0));
        assert_eq!(got.len(), 5);
        let distinct: std::collections::BTreeSet<_> = got.iter().collect();
        assert_eq!(distinct.len(), 5);
        assert_eq!(s, sample_negatives(&ds, 5, 1).unwrap());
    }

    #[test]
    fn sampling_with_replacement() {
        let ds = negatives_fixture(3);
        let s = sample_negatives(&ds, 5, 2).unwrap();
        let got = s.get(QueryIdx(0));
        assert_eq!(got.len(), 5);
        let negs: Vec<DocIdx> = ds.negatives(QueryIdx(0)).collect();
        assert!(got.iter().all(|d| negs.contains(d)));
    }

    #[test]
    fn empty_forget_set_is_a_fixed_point() {
        let ds = small();
        let shape = ScorerShape::new(ScorerKind::BiEncoder, 2, 3);
        let teacher = TeacherSnapshot::new(ScorerParams::init(shape, 8).unwrap());
        let cfg = UnlearnConfig { epochs: 3, ..Default::default() };
        let out = curd_unlearn(&teacher, &ds, &ForgetSet::default(), &SubstituteMap::new(), &cfg).unwrap();
        assert_eq!(&out.params, teacher.params());
        assert!(out.log.iter().all(|e| e.fc_loss == 0.0 && e.retain_loss == 0.0));
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(UnlearnConfig { gamma: 1.1, ..Default::default() }.validate().is_err());
        assert!(UnlearnConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(UnlearnConfig::default().validate().is_ok());
    }

    #[test]
    fn quantile_targets_are_teacher_only() {
        let ds = small();
        let shape = ScorerShape::new(ScorerKind::BiEncoder, 2, 2);
        let teacher = TeacherSnapshot::new(ScorerParams::init(shape, 1).unwrap());
        let spec = ForgetSpec { forget_queries: ["q1".to_string()].into(), ..Default::default() };
        let f = build_forget_set(&ds, &spec, ForgetOptions::default()).unwrap();
        let subs = SubstituteMap::random(&ds, &f, 0).unwrap();
        let cfg = UnlearnConfig { k: 2, ..Default::default() };
        let a = quantile_targets(&teacher, &ds, &f, &subs, &cfg).unwrap();
        let b = quantile_targets(&teacher, &ds, &f, &subs, &UnlearnConfig { lr: 0.5, epochs: 7, ..cfg }).unwrap();
        assert_eq!(a, b);
    }
}
