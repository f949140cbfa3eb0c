//! Oblivious loss sequences with budgeted perturbations.
//!
//! A round's loss is `f_t(y) = θ_tᵀ y + σ_t(y)`. The linear part is fixed
//! before play; the perturbation may depend on the played point but its total
//! magnitude over the episode is capped by the budget `C`, enforced by
//! clipping toward zero.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{config, Error, Result};
use crate::geometry::{Domain, Point, MEMBERSHIP_TOL};
use crate::learner::{LossFeedback, Observation};
use crate::rng::{sample_in_domain, sample_unit_sphere};

/// Largest budget-to-horizon ratio covered by the shrink-factor analysis.
pub const MAX_BUDGET_RATIO: f64 = 2.0 / 3.0;

/// Default gauge at which the boundary offset switches on.
pub const DEFAULT_BOUNDARY_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLossSequence {
    thetas: Vec<DVector<f64>>,
    bound: f64,
}

impl LinearLossSequence {
    pub fn new(thetas: Vec<DVector<f64>>, bound: f64) -> Result<Self> {
        if thetas.is_empty() {
            return Err(config("loss sequence must cover at least one round"));
        }
        let d = thetas[0].len();
        if thetas.iter().any(|t| t.len() != d) {
            return Err(config("loss vectors must share one dimension"));
        }
        if let Some((i, t)) = thetas.iter().enumerate().find(|(_, t)| !(t.norm() <= bound)) {
            return Err(config(alloc::format!(
                "loss vector {} has norm {} above G = {bound}",
                i + 1,
                t.norm()
            )));
        }
        Ok(Self { thetas, bound })
    }

    /// `θ_t = r u` with `u` uniform on the sphere and `r` uniform on `[0, G]`.
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, horizon: usize, d: usize, bound: f64) -> Result<Self> {
        if horizon == 0 || d == 0 {
            return Err(config("horizon and dimension must be at least 1"));
        }
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(config("loss bound G must be finite and non-negative"));
        }
        let mut thetas = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let u = sample_unit_sphere(rng, d)?;
            let r = rng.random::<f64>() * bound;
            thetas.push(u * r);
        }
        Ok(Self { thetas, bound })
    }

    pub fn horizon(&self) -> usize {
        self.thetas.len()
    }

    pub fn dim(&self) -> usize {
        self.thetas[0].len()
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Loss vector for one-based round `t`.
    pub fn theta(&self, t: usize) -> &DVector<f64> {
        &self.thetas[t - 1]
    }

    pub fn thetas(&self) -> &[DVector<f64>] {
        &self.thetas
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationKind {
    None,
    /// `ε sin(π yᵀl)`, plus `offset` once the gauge of `y` reaches
    /// `boundary_threshold`.
    Sinusoidal {
        epsilon: f64,
        direction: DVector<f64>,
        offset: f64,
        boundary_threshold: f64,
    },
    /// Fixed magnitude for listed one-based rounds.
    Spikes(BTreeMap<usize, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSchedule {
    kind: PerturbationKind,
    budget: f64,
    per_round_cap: Option<f64>,
}

impl PerturbationSchedule {
    /// Sinusoidal schedules get a per-round cap of `1 + offset`; others are
    /// uncapped until [`with_cap`](Self::with_cap) says otherwise.
    pub fn new(kind: PerturbationKind, budget: f64) -> Result<Self> {
        if !(budget >= 0.0 && budget.is_finite()) {
            return Err(config("budget C must be finite and non-negative"));
        }
        let per_round_cap = match &kind {
            PerturbationKind::Sinusoidal {
                epsilon,
                offset,
                boundary_threshold,
                ..
            } => {
                if !(*epsilon >= 0.0) || !offset.is_finite() || !(*boundary_threshold > 0.0) {
                    return Err(config(
                        "sinusoidal perturbation needs epsilon >= 0, finite offset, threshold > 0",
                    ));
                }
                Some(1.0 + offset.abs())
            }
            PerturbationKind::Spikes(spikes) => {
                if spikes.keys().any(|t| *t == 0) || spikes.values().any(|m| !m.is_finite()) {
                    return Err(config("spike rounds are one-based and magnitudes finite"));
                }
                None
            }
            PerturbationKind::None => None,
        };
        Ok(Self {
            kind,
            budget,
            per_round_cap,
        })
    }

    pub fn none() -> Self {
        Self {
            kind: PerturbationKind::None,
            budget: 0.0,
            per_round_cap: None,
        }
    }

    pub fn with_cap(mut self, cap: Option<f64>) -> Self {
        self.per_round_cap = cap;
        self
    }

    pub fn kind(&self) -> &PerturbationKind {
        &self.kind
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn per_round_cap(&self) -> Option<f64> {
        self.per_round_cap
    }

    /// Whether `C / T <= 2/3`, the regime covered by the shrink analysis.
    pub fn check_regime(&self, horizon: usize) -> Result<()> {
        let ratio = self.budget / horizon as f64;
        if ratio > MAX_BUDGET_RATIO {
            return Err(config(alloc::format!("budget ratio C/T = {ratio} exceeds 2/3")));
        }
        Ok(())
    }

    /// Perturbation before any cap or budget clipping.
    pub fn raw(&self, domain: &Domain, y: &Point, t: usize) -> f64 {
        match &self.kind {
            PerturbationKind::None => 0.0,
            PerturbationKind::Sinusoidal {
                epsilon,
                direction,
                offset,
                boundary_threshold,
            } => {
                let wave = epsilon * libm::sin(y.dot(direction) * core::f64::consts::PI);
                if domain.gauge(y) >= *boundary_threshold {
                    wave + offset
                } else {
                    wave
                }
            }
            PerturbationKind::Spikes(spikes) => spikes.get(&t).copied().unwrap_or(0.0),
        }
    }
}

/// Running total of realised `|σ_t|`.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetAccountant {
    budget: f64,
    used: f64,
    clip_events: usize,
    cap_events: usize,
}

impl BudgetAccountant {
    pub fn new(budget: f64) -> Self {
        Self {
            budget,
            used: 0.0,
            clip_events: 0,
            cap_events: 0,
        }
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn used(&self) -> f64 {
        self.used
    }

    pub fn remaining(&self) -> f64 {
        (self.budget - self.used).max(0.0)
    }

    /// Rounds where the budget forced a smaller perturbation.
    pub fn clip_events(&self) -> usize {
        self.clip_events
    }

    /// Rounds where the per-round cap bound.
    pub fn cap_events(&self) -> usize {
        self.cap_events
    }

    /// Apply the per-round cap, clip toward zero to fit the remaining budget,
    /// charge the result, and return it.
    pub fn charge(&mut self, raw: f64, cap: Option<f64>) -> f64 {
        let mut sigma = raw;
        if let Some(cap) = cap {
            if sigma.abs() > cap {
                sigma = libm::copysign(cap, sigma);
                self.cap_events += 1;
            }
        }
        let remaining = self.remaining();
        if sigma.abs() > remaining {
            sigma = libm::copysign(remaining, sigma);
            self.clip_events += 1;
        }
        self.used = (self.used + sigma.abs()).min(self.budget);
        sigma
    }
}

/// One round's loss split into its two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub linear: f64,
    pub sigma: f64,
}

/// `f_t(y) = θ_tᵀy + σ_t(y)` with the perturbation charged to a budget.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOracle {
    domain: Domain,
    linear: Arc<LinearLossSequence>,
    schedule: PerturbationSchedule,
    accountant: BudgetAccountant,
    log: Vec<LossParts>,
}

impl LossOracle {
    pub fn new(domain: Domain, linear: Arc<LinearLossSequence>, schedule: PerturbationSchedule) -> Result<Self> {
        if linear.dim() != domain.dim() {
            return Err(config("loss vectors and domain differ in dimension"));
        }
        if let PerturbationKind::Sinusoidal { direction, .. } = schedule.kind() {
            if direction.len() != domain.dim() {
                return Err(config("perturbation direction and domain differ in dimension"));
            }
        }
        let accountant = BudgetAccountant::new(schedule.budget());
        Ok(Self {
            domain,
            linear,
            schedule,
            accountant,
            log: Vec::new(),
        })
    }

    /// Exactly linear losses.
    pub fn linear_only(domain: Domain, linear: Arc<LinearLossSequence>) -> Result<Self> {
        Self::new(domain, linear, PerturbationSchedule::none())
    }

    pub fn linear(&self) -> &LinearLossSequence {
        &self.linear
    }

    pub fn schedule(&self) -> &PerturbationSchedule {
        &self.schedule
    }

    pub fn accountant(&self) -> &BudgetAccountant {
        &self.accountant
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Per-round loss parts in evaluation order.
    pub fn log(&self) -> &[LossParts] {
        &self.log
    }

    pub fn horizon(&self) -> usize {
        self.linear.horizon()
    }

    fn check_round(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.horizon() {
            return Err(config(alloc::format!("round {t} outside 1..={}", self.horizon())));
        }
        Ok(())
    }

    /// Realised perturbation at `y` in round `t`, charged to the budget.
    pub fn evaluate_perturbation(&mut self, y: &Point, t: usize) -> Result<f64> {
        self.check_round(t)?;
        if matches!(self.schedule.kind(), PerturbationKind::None) {
            return Ok(0.0);
        }
        let raw = self.schedule.raw(&self.domain, y, t);
        Ok(self.accountant.charge(raw, self.schedule.per_round_cap()))
    }

    pub fn evaluate_loss(&mut self, y: &Point, t: usize) -> Result<f64> {
        self.check_round(t)?;
        self.domain.check_dim(y)?;
        if !self.domain.contains(y, MEMBERSHIP_TOL) {
            return Err(Error::DomainViolation {
                gauge: self.domain.gauge(y),
                limit: 1.0,
            });
        }
        let linear = self.linear.theta(t).dot(y);
        let sigma = self.evaluate_perturbation(y, t)?;
        self.log.push(LossParts { linear, sigma });
        Ok(linear + sigma)
    }
}

impl LossFeedback for LossOracle {
    fn observe(&mut self, y: &Point, t: usize) -> Result<Observation> {
        let loss = self.evaluate_loss(y, t)?;
        let sigma = self.log.last().map(|p| p.sigma);
        Ok(Observation { loss, sigma })
    }
}

/// Answers `+ε` to every query, then hides a fresh point `z` with value `-ε`.
///
/// No algorithm that only sees these answers can locate `z`, so whatever it
/// outputs is `2ε` worse than the minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct BlackBoxAdversary {
    epsilon: f64,
    domain: Domain,
    queried: Vec<Point>,
    hidden: Option<Point>,
}

fn same_bits(a: &Point, b: &Point) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

impl BlackBoxAdversary {
    pub fn new(epsilon: f64, domain: Domain) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(config("epsilon must be positive"));
        }
        Ok(Self {
            epsilon,
            domain,
            queried: Vec::new(),
            hidden: None,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn queried(&self) -> &[Point] {
        &self.queried
    }

    pub fn hidden_point(&self) -> Option<&Point> {
        self.hidden.as_ref()
    }

    pub fn is_finalized(&self) -> bool {
        self.hidden.is_some()
    }

    pub fn query(&mut self, x: &Point) -> Result<f64> {
        if self.hidden.is_some() {
            return Err(Error::Protocol("query after finalization"));
        }
        self.queried.push(x.clone());
        Ok(self.epsilon)
    }

    /// Function value after finalization.
    pub fn value(&self, x: &Point) -> Result<f64> {
        match &self.hidden {
            Some(z) if same_bits(z, x) => Ok(-self.epsilon),
            Some(_) => Ok(self.epsilon),
            None => Err(Error::Protocol("value requested before finalization")),
        }
    }

    /// Fix the hidden minimiser away from every query and from `x_hat`, and
    /// return the optimality gap `f(x̂) - min f`.
    pub fn finalize<R: Rng + ?Sized>(&mut self, x_hat: &Point, rng: &mut R) -> Result<f64> {
        if self.hidden.is_some() {
            return Err(Error::Protocol("adversary already finalized"));
        }
        let z = loop {
            let z = sample_in_domain(rng, &self.domain);
            if !same_bits(&z, x_hat) && !self.queried.iter().any(|q| same_bits(q, &z)) {
                break z;
            }
        };
        self.hidden = Some(z.clone());
        Ok(self.value(x_hat)? - self.value(&z)?)
    }
}

impl LossFeedback for BlackBoxAdversary {
    fn observe(&mut self, y: &Point, _t: usize) -> Result<Observation> {
        Ok(Observation {
            loss: self.query(y)?,
            sigma: None,
        })
    }
}
