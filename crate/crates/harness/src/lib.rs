//! Config-driven experiments for corrective unranking: corpus generation,
//! teacher training, unlearning with CuRD or a baseline, evaluation,
//! parameter sweeps and reports.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod svg;
pub mod sweep;

pub use config::{ExperimentConfig, Precision};
pub use error::{HResult, HarnessError};
pub use sweep::{Axis, AxisValue, SweepReport};
