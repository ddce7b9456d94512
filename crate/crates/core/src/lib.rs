//! Corrective unranking for neural ranking models.
//!
//! A trained scorer is the teacher. Given pairs to forget and substitute
//! documents to rank in their place, [`curd::curd_unlearn`] distils a student
//! that pushes forgotten documents down to a low-relevance quantile, lifts
//! substitutes to the teacher's old scores and keeps every other pair where
//! the teacher had it. [`baselines`] holds the comparison methods and
//! [`metrics`] the evaluation.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar for callers that do not care.

// `!(x > 0.0)` in config checks is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod curd;
pub mod data;
pub mod datagen;
pub mod error;
pub mod io;
pub mod metrics;
pub mod scalar;
pub mod scorer;
pub mod trainer;

pub use baselines::{run_baseline, BaselineConfig, Method};
pub use curd::{curd_unlearn, curd_unlearn_observed, quantile, UnlearnConfig, UnlearnEpoch, Unlearned};
pub use data::{
    apply_substitutes, build_forget_set, partition, CorrectedDataset, Dataset, DocIdx, ForgetOptions, ForgetSet,
    ForgetSpec, JudgedList, Label, QueryIdx, Removal, RetainSet, SubstituteMap,
};
pub use datagen::{build_protocol, generate, Corpus, ForgetProtocol, GenConfig};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use scalar::Scalar;
pub use scorer::{ScorerKind, ScorerParams, ScorerShape, TeacherSnapshot};
pub use trainer::{train, train_from, TrainConfig, TrainEpoch, Trained};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Params64 = ScorerParams<f64>;
pub type Params32 = ScorerParams<f32>;
pub type Teacher64 = TeacherSnapshot<f64>;
pub type Teacher32 = TeacherSnapshot<f32>;
pub type Corrected64<'a> = CorrectedDataset<'a, f64>;
pub type Corrected32<'a> = CorrectedDataset<'a, f32>;
