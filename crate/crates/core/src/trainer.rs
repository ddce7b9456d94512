//! Base training with a pairwise margin loss.
//!
//! Each positive `(q, d+)` is paired with negatives drawn per epoch without
//! replacement from the query's negatives and the scorer is updated by SGD on
//! `mean_j max(0, margin - f(q, d+) + f(q, d-_j))`.

use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DocIdx, JudgedList};
use crate::error::{Error, Result};
use crate::metrics::mrr;
use crate::scalar::{hinge, Scalar};
use crate::scorer::{ScorerParams, ScorerShape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    pub lr: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
    /// Stop once validation MRR has moved by at most `min_delta` over the
    /// last `patience` epochs. Zero disables the check.
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { margin: 1.0, lr: 0.05, epochs: 30, negatives_per_positive: 5, seed: 0, patience: 0, min_delta: 1e-4 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be > 0, got {}", self.margin)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config("negatives_per_positive must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub val_mrr: f64,
    /// Optimisation time only; validation is excluded.
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Trained<T> {
    pub params: ScorerParams<T>,
    pub log: Vec<TrainEpoch>,
}

/// Trains a freshly initialised scorer on every pair of `dataset`.
pub fn train<T: Scalar>(dataset: &Dataset<T>, shape: ScorerShape, cfg: &TrainConfig) -> Result<Trained<T>> {
    if shape.input_dim != dataset.dim() {
        return Err(Error::Shape(format!(
            "scorer input_dim {} does not match dataset dimension {}",
            shape.input_dim,
            dataset.dim()
        )));
    }
    let init = ScorerParams::init(shape, cfg.seed)?;
    train_from(init, dataset, &dataset.judged(), cfg)
}

/// Continues training `init` on the judged lists (which may come from a
/// corrected dataset). Features are looked up in `dataset`.
pub fn train_from<T: Scalar>(
    init: ScorerParams<T>,
    dataset: &Dataset<T>,
    lists: &[JudgedList],
    cfg: &TrainConfig,
) -> Result<Trained<T>> {
    cfg.validate()?;
    let mut params = init;
    let mut log = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok(Trained { params, log });
    }

    let split: Vec<(Vec<DocIdx>, Vec<DocIdx>)> =
        lists.iter().map(|l| (l.positives().collect(), l.negatives().collect())).collect();
    let mut items: Vec<(usize, DocIdx)> =
        split.iter().enumerate().flat_map(|(i, (pos, _))| pos.iter().map(move |d| (i, *d))).collect();
    if items.is_empty() {
        return Err(Error::Empty("positive training pairs"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let margin = T::lit(cfg.margin);
    let lr = T::lit(cfg.lr);
    let mut grad = vec![T::zero(); params.weights().len()];

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        items.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (item, &(li, pos)) in items.iter().enumerate() {
            let negatives = &split[li].1;
            if negatives.is_empty() {
                continue;
            }
            let m = cfg.negatives_per_positive.min(negatives.len());
            let picks = index::sample(&mut rng, negatives.len(), m);
            let qf = dataset.query_features(lists[li].query);
            let pf = dataset.doc_features(pos);
            let s_pos = params.forward(qf, pf);
            let inv_m = T::one() / T::from_usize(m).unwrap();

            grad.iter_mut().for_each(|g| *g = T::zero());
            let mut loss = T::zero();
            let mut pos_coeff = T::zero();
            for j in picks.iter() {
                let nf = dataset.doc_features(negatives[j]);
                let s_neg = params.forward(qf, nf);
                let l = hinge(margin + s_neg, s_pos);
                if l > T::zero() {
                    loss = loss + l * inv_m;
                    pos_coeff = pos_coeff - inv_m;
                    params.backward(qf, nf, inv_m, &mut grad)?;
                }
            }
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, item });
            }
            if pos_coeff != T::zero() {
                params.backward(qf, pf, pos_coeff, &mut grad)?;
                params.sgd_step(&grad, lr);
            }
            loss_sum += loss.as_f64();
        }
        let wall_seconds = start.elapsed().as_secs_f64();
        let val_mrr = mrr(&params, dataset, lists)?;
        log.push(TrainEpoch { epoch, loss: loss_sum / items.len() as f64, val_mrr, wall_seconds });
        if converged(&log, cfg) {
            break;
        }
    }
    Ok(Trained { params, log })
}

fn converged(log: &[TrainEpoch], cfg: &TrainConfig) -> bool {
    let p = cfg.patience;
    if p == 0 || log.len() <= p {
        return false;
    }
    let last = log[log.len() - 1].val_mrr;
    log[log.len() - 1 - p..log.len() - 1].iter().all(|e| (e.val_mrr - last).abs() <= cfg.min_delta)
}
