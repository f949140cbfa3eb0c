//! Experiment harness for `scrible-core`: configuration files, repeated and
//! swept runs with CSV/JSON/SVG artifacts, the runtime verification suite and
//! the lower-bound demonstration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod harness;
pub mod plot;
pub mod verify;

pub use config::{Algorithm, ExperimentConfig};
pub use error::{Result, SimError};
pub use harness::{lowerbound_demo, replot, run_experiment, sweep, LowerBoundReport, RunArtifacts, SweepArtifacts};
pub use verify::{verify, CheckReport, Suite, VerifyReport};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SCRIBLE_OUT_DIR";

/// The ε grid of the published experiment.
pub const PUBLISHED_EPSILONS: [f64; 5] = [0.0, 0.005, 0.01, 0.015, 0.02];
