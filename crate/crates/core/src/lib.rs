//! A laboratory for studying how automatic stepsize tuners interact with loss
//! sharpness and the edge of stability.
//!
//! The crate provides:
//!
//! - [`model`]: a fully connected ReLU network objective (squared or logistic
//!   loss, L2 weight decay) with exact reverse-mode gradients over a flat
//!   parameter vector;
//! - [`tuners`]: constant, Armijo-backtracking (plain/loose/warm-started),
//!   and capped Polyak stepsize rules;
//! - [`probe`]: sharpness estimation via finite-difference Hessian-vector
//!   products and power iteration;
//! - [`eos`]: the closed-form quadratic top-eigenmode model with per-tuner
//!   stable-stepsize predictions;
//! - [`data`]: CIFAR-10 binary loading, a synthetic teacher-labeled
//!   generator, and deterministic minibatch schedules;
//! - [`harness`]: the training loop wiring everything together, with CSV
//!   metric logging and a max-stable-stepsize bisection helper.
//!
//! Everything is deterministic given the configured seeds; training runs with
//! identical configs produce byte-identical CSVs.

pub mod data;
pub mod eos;
pub mod harness;
pub mod model;
pub mod params;
pub mod probe;
pub mod tuners;

pub use data::{BatchSchedule, DataError, Dataset};
pub use eos::{QuadraticState, Stability};
pub use harness::{
    DatasetConfig, ExperimentConfig, HarnessError, RunSummary, StepRecord, SubsetSpec,
};
pub use model::{Batch, LossKind, ModelError, ModelSpec};
pub use params::ParamVector;
pub use probe::{ProbeConfig, ProbeError, ProbeResult};
pub use tuners::{StepOutcome, TunerConfig, TunerError, TunerKind, TunerState};
