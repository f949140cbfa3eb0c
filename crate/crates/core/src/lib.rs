//! Bandit linear optimization under budgeted adversarial perturbations.
//!
//! The learner is SCRiBLe run over a shrunk copy `(1-δ)K` of the action set:
//! it samples on the Dikin ellipsoid of a self-concordant barrier, forms a
//! one-point estimate of the loss vector, and follows the regularized leader.
//! Keeping iterates off the boundary bounds their local norms, which is what
//! controls the damage a perturbation budget `C` can do.
//!
//! The crate is `no_std` (it needs `alloc`) and free of I/O; the simulator and
//! CLI live in `scrible-sim`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod adversary;
pub mod barrier;
pub mod error;
pub mod ftrl;
pub mod geometry;
pub mod learner;
pub mod regret;
pub mod rng;

pub use adversary::{
    BlackBoxAdversary, BudgetAccountant, LinearLossSequence, LossOracle, PerturbationKind, PerturbationSchedule,
};
pub use barrier::{hessian_inverse_sqrt, Barrier, HessianFactor};
pub use error::{Error, Result};
pub use geometry::{shrink, Domain, DomainKind, Point, ShrunkDomain};
pub use learner::{
    best_iterate, dikin_point, one_point_estimate, run_episode, EtaPreset, Learner, LearnerConfig, LossFeedback,
    Observation, RoundRecord, StepBoundStats,
};
pub use regret::{
    compute_regret, delta_policy, expected_bound, highprob_bound, linear_comparator, BoundInputs, RegretReport,
};
pub use rng::{sample_unit_sphere, RngStream};
