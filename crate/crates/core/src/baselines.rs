//! Comparison unlearners adapted to corrective unranking.
//!
//! | Method | Start | Procedure |
//! |--------|-------|-----------|
//! | Retrain | fresh init | base training on `S*` |
//! | CF | teacher | continued training on `S*` |
//! | Amnesiac | teacher | push forgotten docs below sampled negatives, then lift substitutes above them |
//! | NegGrad | teacher | gradient ascent of the pairwise loss on `F`, then training on `S*` |
//! | BadT | teacher | squared-error distillation: random teacher on `F`, trained teacher on `S*` |

use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curd::{UnlearnEpoch, Unlearned};
use crate::data::{CorrectedDataset, Dataset, DocIdx, ForgetSet, QueryIdx};
use crate::error::{Error, Result};
use crate::scalar::{hinge, Scalar};
use crate::scorer::{ScorerParams, ScorerShape, TeacherSnapshot};
use crate::trainer::{train_from, TrainConfig, TrainEpoch};

/// Unlearning method selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Retrain,
    Cf,
    Amnesiac,
    Neggrad,
    Badt,
    Curd,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Method::Retrain, Method::Cf, Method::Amnesiac, Method::Neggrad, Method::Badt, Method::Curd];

    pub fn name(self) -> &'static str {
        match self {
            Method::Retrain => "retrain",
            Method::Cf => "cf",
            Method::Amnesiac => "amnesiac",
            Method::Neggrad => "neggrad",
            Method::Badt => "badt",
            Method::Curd => "curd",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s.to_ascii_lowercase()).ok_or_else(|| {
            Error::Config(format!("unknown method `{s}` (expected one of retrain, cf, amnesiac, neggrad, badt, curd)"))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub margin: f64,
    pub negatives_per_positive: usize,
    /// Negatives per forgotten pair for Amnesiac.
    pub amnesiac_negatives: usize,
    pub neggrad_ascent_epochs: usize,
    pub neggrad_ascent_lr: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.05,
            seed: 0,
            margin: 1.0,
            negatives_per_positive: 5,
            amnesiac_negatives: 10,
            neggrad_ascent_epochs: 1,
            neggrad_ascent_lr: 0.05,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("baseline epochs must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !(self.margin > 0.0) || self.neggrad_ascent_lr < 0.0 {
            return Err(Error::Config("baseline lr and margin must be > 0".into()));
        }
        if self.negatives_per_positive == 0 || self.amnesiac_negatives == 0 {
            return Err(Error::Config("negative counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Continued-training settings derived from this config.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            margin: self.margin,
            lr: self.lr,
            epochs: self.epochs,
            negatives_per_positive: self.negatives_per_positive,
            seed: self.seed,
            patience: 0,
            min_delta: 0.0,
        }
    }
}

fn as_unlearn_log(log: Vec<TrainEpoch>, offset: usize) -> Vec<UnlearnEpoch> {
    log.into_iter()
        .map(|e| UnlearnEpoch {
            epoch: e.epoch + offset,
            fc_loss: 0.0,
            retain_loss: e.loss,
            wall_seconds: e.wall_seconds,
        })
        .collect()
}

/// Trains from scratch on `S*` with the base training settings.
pub fn retrain<T: Scalar>(
    corrected: &CorrectedDataset<'_, T>,
    shape: ScorerShape,
    train_cfg: &TrainConfig,
) -> Result<Unlearned<T>> {
    let init = ScorerParams::init(shape, train_cfg.seed)?;
    let out = train_from(init, corrected.base, &corrected.judged(), train_cfg)?;
    Ok(Unlearned { params: out.params, log: as_unlearn_log(out.log, 0) })
}

/// Continues training the teacher on `S*`.
pub fn catastrophic_forgetting<T: Scalar>(
    teacher: &TeacherSnapshot<T>,
    corrected: &CorrectedDataset<'_, T>,
    cfg: &BaselineConfig,
) -> Result<Unlearned<T>> {
    let out = train_from(teacher.params().clone(), corrected.base, &corrected.judged(), &cfg.train_config())?;
    Ok(Unlearned { params: out.params, log: as_unlearn_log(out.log, 0) })
}

struct ForgetItem {
    q: QueryIdx,
    d: DocIdx,
    sub: DocIdx,
    negatives: Vec<DocIdx>,
}

/// Per forget pair: up to `m` negatives of the query (excluding forgotten and
/// substitute documents), sampled once without replacement.
fn forget_items<T: Scalar>(
    dataset: &Dataset<T>,
    forget: &ForgetSet,
    corrected: &CorrectedDataset<'_, T>,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ForgetItem>> {
    let subs = corrected.substitutes();
    forget
        .pairs()
        .map(|(q, d, _)| {
            let sub = subs.get(q, d).ok_or_else(|| {
                Error::MissingSubstitutes(vec![format!("{}|{}", dataset.query_id(q), dataset.doc_id(d))])
            })?;
            let taken = forget.docs_of(q).expect("query in Q_F");
            let pool: Vec<DocIdx> = dataset
                .negatives(q)
                .filter(|n| !taken.contains(n) && !taken.iter().any(|f| subs.get(q, *f) == Some(*n)))
                .collect();
            let k = m.min(pool.len());
            let negatives = index::sample(rng, pool.len(), k).iter().map(|i| pool[i]).collect();
            Ok(ForgetItem { q, d, sub, negatives })
        })
        .collect()
}

/// Score-level label swap: forgotten documents are trained to fall below
/// their sampled negatives while those negatives are lifted to the teacher's
/// old score for the forgotten pair; a second phase trains each substitute
/// above the same negatives. No retention term is used.
pub fn amnesiac<T: Scalar>(
    teacher: &TeacherSnapshot<T>,
    corrected: &CorrectedDataset<'_, T>,
    forget: &ForgetSet,
    cfg: &BaselineConfig,
) -> Result<Unlearned<T>> {
    cfg.validate()?;
    let dataset = corrected.base;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(4);
    let items = forget_items(dataset, forget, corrected, cfg.amnesiac_negatives, &mut rng)?;
    let tp = teacher.params();
    let old: Vec<T> = items
        .iter()
        .map(|it| tp.score(dataset.query_features(it.q), dataset.doc_features(it.d)))
        .collect::<Result<_>>()?;

    let mut w = tp.clone();
    let margin = T::lit(cfg.margin);
    let lr = T::lit(cfg.lr);
    let mut grad = vec![T::zero(); w.weights().len()];
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut log = Vec::with_capacity(2 * cfg.epochs);

    for phase in 0..2 {
        for e in 1..=cfg.epochs {
            let epoch = phase * cfg.epochs + e;
            let start = Instant::now();
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                let it = &items[i];
                if it.negatives.is_empty() {
                    continue;
                }
                let qf = dataset.query_features(it.q);
                let inv = T::one() / T::from_usize(it.negatives.len()).unwrap();
                grad.iter_mut().for_each(|g| *g = T::zero());
                let mut loss = T::zero();
                if phase == 0 {
                    let xf = dataset.doc_features(it.d);
                    let s_x = w.forward(qf, xf);
                    for n in &it.negatives {
                        let nf = dataset.doc_features(*n);
                        let s_n = w.forward(qf, nf);
                        let swap = hinge(margin + s_x, s_n);
                        if swap > T::zero() {
                            w.backward(qf, xf, inv, &mut grad)?;
                            w.backward(qf, nf, -inv, &mut grad)?;
                        }
                        let lift = hinge(old[i], s_n);
                        if lift > T::zero() {
                            w.backward(qf, nf, -inv, &mut grad)?;
                        }
                        loss = loss + (swap + lift) * inv;
                    }
                } else {
                    let rf = dataset.doc_features(it.sub);
                    let s_r = w.forward(qf, rf);
                    for n in &it.negatives {
                        let nf = dataset.doc_features(*n);
                        let l = hinge(margin + w.forward(qf, nf), s_r);
                        if l > T::zero() {
                            w.backward(qf, rf, -inv, &mut grad)?;
                            w.backward(qf, nf, inv, &mut grad)?;
                        }
                        loss = loss + l * inv;
                    }
                }
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, item: i });
                }
                w.sgd_step(&grad, lr);
                total += loss.as_f64();
            }
            log.push(UnlearnEpoch {
                epoch,
                fc_loss: if items.is_empty() { 0.0 } else { total / items.len() as f64 },
                retain_loss: 0.0,
                wall_seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(Unlearned { params: w, log })
}

/// Gradient of the pairwise margin loss on a fixed batch of
/// `(query, positive, negative)` triples, averaged over the batch.
pub fn pairwise_gradient<T: Scalar>(
    params: &ScorerParams<T>,
    dataset: &Dataset<T>,
    batch: &[(QueryIdx, DocIdx, DocIdx)],
    margin: f64,
) -> Result<(T, Vec<T>)> {
    let margin = T::lit(margin);
    let mut grad = vec![T::zero(); params.weights().len()];
    let mut loss = T::zero();
    if batch.is_empty() {
        return Ok((loss, grad));
    }
    let inv = T::one() / T::from_usize(batch.len()).unwrap();
    for &(q, p, n) in batch {
        let qf = dataset.query_features(q);
        let (pf, nf) = (dataset.doc_features(p), dataset.doc_features(n));
        let l = hinge(margin + params.forward(qf, nf), params.forward(qf, pf));
        if l > T::zero() {
            params.backward(qf, pf, -inv, &mut grad)?;
            params.backward(qf, nf, inv, &mut grad)?;
        }
        loss = loss + l * inv;
    }
    Ok((loss, grad))
}

/// NegGrad phase 1: gradient ascent of the pairwise loss restricted to the
/// positive forget pairs, one step per pair with freshly sampled negatives.
pub fn neggrad_ascent<T: Scalar>(
    start: ScorerParams<T>,
    dataset: &Dataset<T>,
    forget: &ForgetSet,
    cfg: &BaselineConfig,
) -> Result<Unlearned<T>> {
    let mut w = start;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(5);
    let lr = T::lit(cfg.neggrad_ascent_lr);
    let mut pairs: Vec<(QueryIdx, DocIdx)> =
        forget.pairs().filter(|(_, _, l)| l.is_positive()).map(|(q, d, _)| (q, d)).collect();
    let mut log = Vec::with_capacity(cfg.neggrad_ascent_epochs);
    for epoch in 1..=cfg.neggrad_ascent_epochs {
        let start = Instant::now();
        pairs.shuffle(&mut rng);
        let mut total = 0.0;
        for (item, &(q, d)) in pairs.iter().enumerate() {
            let negs: Vec<DocIdx> = dataset.negatives(q).collect();
            let m = cfg.negatives_per_positive.min(negs.len());
            let batch: Vec<_> = index::sample(&mut rng, negs.len(), m).iter().map(|i| (q, d, negs[i])).collect();
            let (loss, grad) = pairwise_gradient(&w, dataset, &batch, cfg.margin)?;
            w.ascent_step(&grad, lr);
            if !loss.is_finite() || !w.is_finite() {
                return Err(Error::Diverged { epoch, item });
            }
            total += loss.as_f64();
        }
        log.push(UnlearnEpoch {
            epoch,
            fc_loss: if pairs.is_empty() { 0.0 } else { total / pairs.len() as f64 },
            retain_loss: 0.0,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(Unlearned { params: w, log })
}

/// Gradient ascent on `F`, then fine-tuning on `S*`.
pub fn neggrad<T: Scalar>(
    teacher: &TeacherSnapshot<T>,
    corrected: &CorrectedDataset<'_, T>,
    forget: &ForgetSet,
    cfg: &BaselineConfig,
) -> Result<Unlearned<T>> {
    cfg.validate()?;
    let ascended = neggrad_ascent(teacher.params().clone(), corrected.base, forget, cfg)?;
    let offset = ascended.log.len();
    let tuned = train_from(ascended.params, corrected.base, &corrected.judged(), &cfg.train_config())?;
    let mut log = ascended.log;
    log.extend(as_unlearn_log(tuned.log, offset));
    Ok(Unlearned { params: tuned.params, log })
}

/// Seed offset for the randomly initialised bad teacher.
const BAD_TEACHER_SEED: u64 = 0xBAD7;

/// Squared-error distillation from two teachers: a randomly initialised model
/// on the forget pairs and the trained model on `S*`. Substitute pairs take
/// the trained teacher's score of the pair they replace.
pub fn bad_teacher<T: Scalar>(
    teacher: &TeacherSnapshot<T>,
    corrected: &CorrectedDataset<'_, T>,
    forget: &ForgetSet,
    cfg: &BaselineConfig,
) -> Result<Unlearned<T>> {
    cfg.validate()?;
    let dataset = corrected.base;
    let tp = teacher.params();
    let bad = ScorerParams::<T>::init(tp.shape(), cfg.seed ^ BAD_TEACHER_SEED)?;
    let score =
        |p: &ScorerParams<T>, q: QueryIdx, d: DocIdx| p.score(dataset.query_features(q), dataset.doc_features(d));

    // (query, doc, target, is_forget)
    let mut items: Vec<(QueryIdx, DocIdx, T, bool)> = Vec::new();
    for (q, d, _) in forget.pairs() {
        items.push((q, d, score(&bad, q, d)?, true));
    }
    let subs = corrected.substitutes();
    for (q, d, _) in forget.pairs() {
        let sub = subs.get(q, d).expect("corrected dataset covers F");
        items.push((q, sub, score(tp, q, d)?, false));
    }
    for (q, d, _) in dataset.pairs().filter(|(q, d, _)| !forget.contains(*q, *d)) {
        items.push((q, d, score(tp, q, d)?, false));
    }
    let n_forget = forget.len();
    let n_star = items.len() - n_forget;

    let mut w = tp.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(6);
    let lr = T::lit(cfg.lr);
    let two = T::lit(2.0);
    let mut grad = vec![T::zero(); w.weights().len()];
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let (mut f_sum, mut s_sum) = (0.0, 0.0);
        for &i in &order {
            let (q, d, target, is_forget) = items[i];
            let qf = dataset.query_features(q);
            let df = dataset.doc_features(d);
            let diff = w.forward(qf, df) - target;
            let loss = diff * diff;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, item: i });
            }
            if diff != T::zero() {
                grad.iter_mut().for_each(|g| *g = T::zero());
                w.backward(qf, df, two * diff, &mut grad)?;
                w.sgd_step(&grad, lr);
            }
            if is_forget {
                f_sum += loss.as_f64();
            } else {
                s_sum += loss.as_f64();
            }
        }
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        log.push(UnlearnEpoch {
            epoch,
            fc_loss: mean(f_sum, n_forget),
            retain_loss: mean(s_sum, n_star),
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(Unlearned { params: w, log })
}

/// Runs one of the comparison methods. `train_cfg` is used by Retrain only.
pub fn run_baseline<T: Scalar>(
    method: Method,
    teacher: &TeacherSnapshot<T>,
    corrected: &CorrectedDataset<'_, T>,
    forget: &ForgetSet,
    train_cfg: &TrainConfig,
    cfg: &BaselineConfig,
) -> Result<Unlearned<T>> {
    match method {
        Method::Retrain => retrain(corrected, teacher.params().shape(), train_cfg),
        Method::Cf => catastrophic_forgetting(teacher, corrected, cfg),
        Method::Amnesiac => amnesiac(teacher, corrected, forget, cfg),
        Method::Neggrad => neggrad(teacher, corrected, forget, cfg),
        Method::Badt => bad_teacher(teacher, corrected, forget, cfg),
        Method::Curd => Err(Error::Config("curd is not a baseline; call curd_unlearn".into())),
    }
}
