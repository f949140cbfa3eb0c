//! Shrunk-domain SCRiBLe.
//!
//! Each round runs a fixed protocol: [`Learner::propose`] samples a point on
//! the Dikin ellipsoid around the current iterate, the environment reports a
//! scalar loss for it, [`Learner::estimate`] turns that loss into a one-point
//! estimate of the loss vector, and [`Learner::update`] re-solves the
//! regularized-leader program over the shrunk set. `delta = 0` runs the same
//! machinery over the full set, which is plain SCRiBLe.

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;

use crate::barrier::{hessian_inverse_sqrt, Barrier, HessianFactor};
use crate::error::{config, Error, Result};
use crate::ftrl;
use crate::geometry::{Point, MAX_DELTA, MEMBERSHIP_TOL};
use crate::rng::sample_unit_sphere;

pub const DEFAULT_SOLVER_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

/// Learning-rate rules used by the analysis and the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaPreset {
    /// `sqrt(ν ln(1/δ)) / (2 d sqrt(T))`.
    ShrinkLog,
    /// `sqrt(ln(1/δ)) / (4 d sqrt(T))`, the rate of the published experiments.
    ShrinkLogQuarter,
    /// `sqrt(ν ln T) / (2 d sqrt(T))`.
    HorizonLog,
    Fixed(f64),
}

impl EtaPreset {
    /// Resolve to a number. With `delta = 0` (no shrinkage) the logarithm uses
    /// the `C = 0` shrink factor `1/T²`.
    pub fn resolve(self, nu: f64, d: usize, horizon: usize, delta: f64) -> f64 {
        let t = horizon as f64;
        let log_inv_delta = if delta > 0.0 {
            -libm::log(delta)
        } else {
            2.0 * libm::log(t)
        };
        let denom = d as f64 * libm::sqrt(t);
        match self {
            EtaPreset::ShrinkLog => libm::sqrt(nu * log_inv_delta) / (2.0 * denom),
            EtaPreset::ShrinkLogQuarter => libm::sqrt(log_inv_delta) / (4.0 * denom),
            EtaPreset::HorizonLog => libm::sqrt(nu * libm::log(t)) / (2.0 * denom),
            EtaPreset::Fixed(eta) => eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub horizon: usize,
    pub eta: f64,
    /// `0` runs the baseline over `K`; positive values shrink to `(1-δ)K`.
    pub delta: f64,
    pub barrier: Barrier,
    pub solver_tolerance: f64,
    pub max_iterations: usize,
    /// Turn step-bound violations on rounds with `|f_t| <= 1` into errors.
    pub verify_steps: bool,
}

impl LearnerConfig {
    pub fn new(barrier: Barrier, horizon: usize, delta: f64, eta: EtaPreset) -> Result<Self> {
        let eta = eta.resolve(barrier.nu(), barrier.domain().dim(), horizon, delta);
        let cfg = Self {
            horizon,
            eta,
            delta,
            barrier,
            solver_tolerance: DEFAULT_SOLVER_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            verify_steps: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(config("horizon must be at least 1"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(config(alloc::format!(
                "learning rate {} must be finite and non-negative",
                self.eta
            )));
        }
        if !(0.0..=MAX_DELTA).contains(&self.delta) {
            return Err(config(alloc::format!("delta {} outside [0, 2/3]", self.delta)));
        }
        if !(self.solver_tolerance > 0.0) {
            return Err(config("solver tolerance must be positive"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.barrier.domain().dim()
    }

    /// Radius `4 d η` of the local-norm ball that consecutive iterates stay in.
    pub fn step_bound(&self) -> f64 {
        4.0 * self.dim() as f64 * self.eta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    /// One-based index of the round about to be played.
    pub t: usize,
    pub x: Point,
    pub grad_sum: DVector<f64>,
    /// Factorisation of the barrier Hessian at `x`.
    pub factor: HessianFactor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub y: Point,
    pub mu: DVector<f64>,
}

/// What the environment reports for a played point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub loss: f64,
    /// Perturbation component, when the environment exposes it.
    pub sigma: Option<f64>,
}

/// Anything that can score a played point in round `t` (one-based).
pub trait LossFeedback {
    fn observe(&mut self, y: &Point, t: usize) -> Result<Observation>;
}

/// Outcome of one regularized-leader update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateInfo {
    /// `‖x_{t+1} - x_t‖_{x_t}`.
    pub step_local_norm: f64,
    pub residual: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub x: Point,
    pub mu: DVector<f64>,
    pub y: Point,
    pub loss: f64,
    pub g: DVector<f64>,
    /// `A_t⁻¹ μ_t`, so that `g = d · loss · direction`.
    pub direction: DVector<f64>,
    pub sigma: Option<f64>,
    pub step_local_norm: f64,
    pub x_next: Point,
}

/// `y = x + A μ`.
pub fn dikin_point(x: &Point, factor: &HessianFactor, mu: &DVector<f64>) -> Point {
    x + factor.inv_sqrt() * mu
}

/// `g = d · loss · A⁻¹ μ`.
pub fn one_point_estimate(factor: &HessianFactor, loss: f64, mu: &DVector<f64>) -> DVector<f64> {
    factor.sqrt() * mu * (factor.dim() as f64 * loss)
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Ready,
    Proposed(Proposal),
    Estimated {
        proposal: Proposal,
        loss: f64,
        g: DVector<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Learner {
    cfg: LearnerConfig,
    state: LearnerState,
    phase: Phase,
}

impl Learner {
    /// Start at the barrier minimiser, which is the center for both
    /// symmetric shapes.
    pub fn new(cfg: LearnerConfig) -> Result<Self> {
        cfg.validate()?;
        let domain = cfg.barrier.domain();
        let x = domain.center();
        let factor = hessian_inverse_sqrt(&cfg.barrier.hessian(&x)?)?;
        let state = LearnerState {
            t: 1,
            grad_sum: DVector::zeros(domain.dim()),
            x,
            factor,
        };
        Ok(Self {
            cfg,
            state,
            phase: Phase::Ready,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    /// Draw `μ` uniformly from the sphere and play `y = x + A μ`.
    pub fn propose<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Proposal> {
        if self.phase != Phase::Ready {
            return Err(Error::Protocol(
                "propose called before the previous round was completed",
            ));
        }
        let mu = sample_unit_sphere(rng, self.cfg.dim())?;
        let proposal = self.propose_with(mu)?;
        self.phase = Phase::Proposed(proposal.clone());
        Ok(proposal)
    }

    fn propose_with(&self, mu: DVector<f64>) -> Result<Proposal> {
        let y = dikin_point(&self.state.x, &self.state.factor, &mu);
        let domain = self.cfg.barrier.domain();
        if !domain.contains(&y, MEMBERSHIP_TOL) {
            return Err(Error::Invariant(alloc::format!(
                "Dikin sample left the domain (gauge {})",
                domain.gauge(&y)
            )));
        }
        Ok(Proposal { y, mu })
    }

    /// `g = d · loss · A⁻¹ μ`, with `A⁻¹ = H^{1/2}` from the cached factorisation.
    pub fn estimate(&mut self, loss: f64, mu: &DVector<f64>) -> Result<DVector<f64>> {
        let proposal = match &self.phase {
            Phase::Proposed(p) => p.clone(),
            _ => return Err(Error::Protocol("estimate requires a pending proposal")),
        };
        if proposal.mu != *mu {
            return Err(Error::Protocol(
                "estimate called with a direction that was not proposed",
            ));
        }
        if !loss.is_finite() {
            return Err(Error::Invariant(alloc::format!("non-finite loss {loss}")));
        }
        let g = one_point_estimate(&self.state.factor, loss, mu);
        self.phase = Phase::Estimated {
            proposal,
            loss,
            g: g.clone(),
        };
        Ok(g)
    }

    fn direction(&self, mu: &DVector<f64>) -> DVector<f64> {
        self.state.factor.sqrt() * mu
    }

    /// Fold `g` into the cumulative estimate and move to the regularized leader.
    pub fn update(&mut self, g: &DVector<f64>) -> Result<UpdateInfo> {
        match &self.phase {
            Phase::Estimated { g: pending, .. } if pending == g => {}
            Phase::Estimated { .. } => return Err(Error::Protocol("update called with a foreign estimate")),
            _ => return Err(Error::Protocol("update requires an estimate for the current round")),
        }
        let grad_sum = &self.state.grad_sum + g;
        let solution = ftrl::solve(
            &self.cfg.barrier,
            &(&grad_sum * self.cfg.eta),
            self.cfg.delta,
            self.cfg.solver_tolerance,
        )?;
        let x_next = solution.x;
        let scale = 1.0 - self.cfg.delta;
        if self.cfg.barrier.domain().gauge(&x_next) > scale * (1.0 + MEMBERSHIP_TOL) {
            return Err(Error::Invariant("iterate left the shrunk domain".into()));
        }
        let step_local_norm = self.cfg.barrier.local_norm(&self.state.x, &(&x_next - &self.state.x))?;
        let factor = hessian_inverse_sqrt(&self.cfg.barrier.hessian(&x_next)?)?;
        self.state = LearnerState {
            t: self.state.t + 1,
            x: x_next,
            grad_sum,
            factor,
        };
        self.phase = Phase::Ready;
        Ok(UpdateInfo {
            step_local_norm,
            residual: solution.residual,
            clamped: solution.clamped,
        })
    }

    /// Play one full round against `feedback`.
    pub fn play_round<R, F>(&mut self, rng: &mut R, feedback: &mut F) -> Result<RoundRecord>
    where
        R: Rng + ?Sized,
        F: LossFeedback + ?Sized,
    {
        let t = self.state.t;
        let x = self.state.x.clone();
        let Proposal { y, mu } = self.propose(rng)?;
        let obs = feedback.observe(&y, t)?;
        let direction = self.direction(&mu);
        let g = self.estimate(obs.loss, &mu)?;
        let info = self.update(&g)?;
        if self.cfg.verify_steps && obs.loss.abs() <= 1.0 && !(info.step_local_norm < self.cfg.step_bound()) {
            return Err(Error::Invariant(alloc::format!(
                "round {t}: step {} not below 4dη = {}",
                info.step_local_norm,
                self.cfg.step_bound()
            )));
        }
        Ok(RoundRecord {
            t,
            x,
            mu,
            y,
            loss: obs.loss,
            g,
            direction,
            sigma: obs.sigma,
            step_local_norm: info.step_local_norm,
            x_next: self.state.x.clone(),
        })
    }
}

/// Run `cfg.horizon` rounds from a fresh learner.
pub fn run_episode<R, F>(cfg: &LearnerConfig, feedback: &mut F, rng: &mut R) -> Result<Vec<RoundRecord>>
where
    R: Rng + ?Sized,
    F: LossFeedback + ?Sized,
{
    let mut learner = Learner::new(cfg.clone())?;
    (0..cfg.horizon).map(|_| learner.play_round(rng, feedback)).collect()
}

/// Played point with the smallest observed loss; ties go to the earliest round.
pub fn best_iterate(records: &[RoundRecord]) -> Option<&RoundRecord> {
    records.iter().fold(None, |best: Option<&RoundRecord>, r| match best {
        Some(b) if b.loss <= r.loss => Some(b),
        _ => Some(r),
    })
}

/// Step-bound statistics over an episode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepBoundStats {
    pub rounds: usize,
    /// Rounds with `‖x_{t+1} - x_t‖_{x_t} >= 4dη`.
    pub violations: usize,
    /// Violations on rounds with `|f_t| <= 1`, where the bound is guaranteed.
    pub hard_violations: usize,
    pub max_ratio: f64,
}

impl StepBoundStats {
    pub fn from_records(records: &[RoundRecord], bound: f64) -> Self {
        let mut stats = StepBoundStats {
            rounds: records.len(),
            ..Default::default()
        };
        for r in records {
            let ratio = r.step_local_norm / bound;
            stats.max_ratio = stats.max_ratio.max(ratio);
            if !(r.step_local_norm < bound) {
                stats.violations += 1;
                if r.loss.abs() <= 1.0 {
                    stats.hard_violations += 1;
                }
            }
        }
        stats
    }

    pub fn satisfied_fraction(&self) -> f64 {
        if self.rounds == 0 {
            return 1.0;
        }
        1.0 - self.violations as f64 / self.rounds as f64
    }

    /// Fraction of rounds without a violation at `|f_t| <= 1`; violations at
    /// larger losses count as warnings only.
    pub fn enforced_fraction(&self) -> f64 {
        if self.rounds == 0 {
            return 1.0;
        }
        1.0 - self.hard_violations as f64 / self.rounds as f64
    }
}
