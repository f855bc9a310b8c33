//! Straight-through-estimator training of a two-layer binary network on
//! synthetic Gaussian data, with recovery, recurrence and drift diagnostics.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod model;
pub mod optimizer;
pub mod output;
pub mod record;
pub mod rng;
pub mod svg;

pub use error::{Error, Result};
pub use model::{Dataset, NetworkSpec, NoiseSpec};
pub use optimizer::{InitSpec, StepSchedule, TrainState};
pub use record::RunRecord;
