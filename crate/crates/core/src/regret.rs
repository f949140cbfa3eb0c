//! Regret measurement against the best fixed point for the linear part of
//! the losses, the shrink-factor policy, and closed-form regret bounds.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::adversary::LossOracle;
use crate::error::{config, Result};
use crate::geometry::{Domain, DomainKind, Point, MAX_DELTA};
use crate::learner::RoundRecord;

/// Minimiser over `K` of `⟨Θ, x⟩` for the cumulative loss vector `Θ`.
pub fn linear_comparator(domain: &Domain, theta_sum: &DVector<f64>) -> Point {
    match domain.kind() {
        DomainKind::Ball { radius } => {
            let n = theta_sum.norm();
            if n == 0.0 {
                domain.center()
            } else {
                theta_sum * (-radius / n)
            }
        }
        DomainKind::Box { halfwidths } => DVector::from_iterator(
            theta_sum.len(),
            theta_sum.iter().zip(halfwidths).map(|(t, h)| {
                if *t > 0.0 {
                    -h
                } else if *t < 0.0 {
                    *h
                } else {
                    0.0
                }
            }),
        ),
    }
}

/// Per-round tracks of an episode, all cumulative and indexed from round 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub cumulative_loss: Vec<f64>,
    pub comparator_point: Point,
    /// `Σ_t θ_tᵀh` plus any configured comparator offset.
    pub comparator_loss: f64,
    pub regret: Vec<f64>,
    /// Regret of the linear parts alone, `Σ θ_tᵀ(y_t - h)`.
    pub linear_regret: Vec<f64>,
    /// `Σ θ_τᵀ(y_τ - x_τ)`.
    pub deviation_track: Vec<f64>,
    /// `Σ (d σ_τ A_τ⁻¹ μ_τ)ᵀ(x_τ - h)`.
    pub error_track: Vec<f64>,
    /// Realised `σ_t`.
    pub sigma: Vec<f64>,
    pub budget: f64,
    pub budget_used: f64,
    pub clip_events: usize,
}

impl RegretReport {
    pub fn final_regret(&self) -> f64 {
        self.regret.last().copied().unwrap_or(0.0)
    }

    /// Interval certain to contain the regret against the true minimiser of
    /// the perturbed losses: the measured value is off by at most `2C`.
    pub fn corrected_interval(&self) -> (f64, f64) {
        let r = self.final_regret();
        (r - 2.0 * self.budget, r + 2.0 * self.budget)
    }
}

/// Regret with `σ` at the comparator taken as zero.
pub fn compute_regret(records: &[RoundRecord], oracle: &LossOracle, comparator: &Point) -> Result<RegretReport> {
    compute_regret_with_offset(records, oracle, comparator, 0.0)
}

/// Regret with a total comparator perturbation `offset ∈ [-C, C]`.
pub fn compute_regret_with_offset(
    records: &[RoundRecord],
    oracle: &LossOracle,
    comparator: &Point,
    offset: f64,
) -> Result<RegretReport> {
    let budget = oracle.schedule().budget();
    if offset.abs() > budget {
        return Err(config("comparator offset must lie within [-C, C]"));
    }
    if records.len() > oracle.log().len() {
        return Err(config("oracle log is shorter than the trajectory"));
    }
    let d = comparator.len() as f64;
    let n = records.len();
    let mut report = RegretReport {
        cumulative_loss: Vec::with_capacity(n),
        comparator_point: comparator.clone(),
        comparator_loss: 0.0,
        regret: Vec::with_capacity(n),
        linear_regret: Vec::with_capacity(n),
        deviation_track: Vec::with_capacity(n),
        error_track: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        budget,
        budget_used: oracle.accountant().used(),
        clip_events: oracle.accountant().clip_events(),
    };
    let (mut loss, mut comp, mut lin, mut dev, mut err) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (r, parts) in records.iter().zip(oracle.log()) {
        let theta = oracle.linear().theta(r.t);
        let comp_round = theta.dot(comparator);
        loss += r.loss;
        comp += comp_round;
        lin += parts.linear - comp_round;
        dev += theta.dot(&(&r.y - &r.x));
        err += d * parts.sigma * r.direction.dot(&(&r.x - comparator));
        report.cumulative_loss.push(loss);
        report.regret.push(loss - comp);
        report.linear_regret.push(lin);
        report.deviation_track.push(dev);
        report.error_track.push(err);
        report.sigma.push(parts.sigma);
    }
    if let Some(last) = report.regret.last_mut() {
        *last -= offset;
    }
    report.comparator_loss = comp + offset;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaChoice {
    pub delta: f64,
    /// The raw rule exceeded 2/3 and was clamped.
    pub clamped: bool,
}

/// `δ = 1/T²` without perturbations, `δ = C/T` otherwise, kept in `(0, 2/3]`.
pub fn delta_policy(budget: f64, horizon: usize) -> Result<DeltaChoice> {
    if horizon == 0 || !(budget >= 0.0) {
        return Err(config("delta policy needs T >= 1 and C >= 0"));
    }
    let t = horizon as f64;
    let raw = if budget == 0.0 { 1.0 / (t * t) } else { budget / t };
    Ok(if raw > MAX_DELTA {
        DeltaChoice {
            delta: MAX_DELTA,
            clamped: true,
        }
    } else {
        DeltaChoice {
            delta: raw,
            clamped: false,
        }
    })
}

/// Parameters of the regret bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub d: usize,
    pub horizon: usize,
    pub nu: f64,
    pub delta: f64,
    pub budget: f64,
    pub loss_bound: f64,
    pub diameter: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.horizon == 0 {
            return Err(config("bounds need d >= 1 and T >= 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config(alloc::format!(
                "bounds need delta in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.nu > 0.0) || !(self.budget >= 0.0) {
            return Err(config("bounds need nu > 0 and C >= 0"));
        }
        Ok(())
    }
}

/// `4d sqrt(νT ln(1/δ)) + 2Cd(ν + 2sqrt(ν))(1-δ)/δ + δGDT + 2C`.
pub fn expected_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let BoundInputs {
        d,
        horizon,
        nu,
        delta,
        budget,
        loss_bound,
        diameter,
        ..
    } = *inputs;
    let (d, t) = (d as f64, horizon as f64);
    Ok(4.0 * d * libm::sqrt(nu * t * -libm::log(delta))
        + 2.0 * budget * d * (nu + 2.0 * libm::sqrt(nu)) * (1.0 - delta) / delta
        + delta * loss_bound * diameter * t
        + 2.0 * budget)
}

/// Constants of the peeled Freedman inequality for the deviation martingale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleConstants {
    /// `S = ⌈ln GD⌉ ⌈ln((GD)² T)⌉`.
    pub s: u64,
    /// Variance proxy `V = G²D²T`.
    pub variance: f64,
    /// Increment bound `B* = b = GD`.
    pub range: f64,
}

pub fn martingale_constants(loss_bound: f64, diameter: f64, horizon: usize) -> Result<MartingaleConstants> {
    let gd = loss_bound * diameter;
    let first = libm::ceil(libm::log(gd));
    if !(first >= 1.0) {
        return Err(config(alloc::format!(
            "high-probability bound needs GD > 1, got GD = {gd}"
        )));
    }
    let second = libm::ceil(libm::log(gd * gd * horizon as f64));
    Ok(MartingaleConstants {
        s: (first * second) as u64,
        variance: gd * gd * horizon as f64,
        range: gd,
    })
}

/// Expected bound plus `S (sqrt(8V ln(S/γ)) + 2B* ln(S/γ))`.
pub fn highprob_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    if !(inputs.gamma > 0.0 && inputs.gamma < 1.0) {
        return Err(config("gamma must lie in (0, 1)"));
    }
    let m = martingale_constants(inputs.loss_bound, inputs.diameter, inputs.horizon)?;
    let s = m.s as f64;
    let log_term = libm::log(s / inputs.gamma);
    let martingale = s * (libm::sqrt(8.0 * m.variance * log_term) + 2.0 * m.range * log_term);
    Ok(expected_bound(inputs)? + martingale)
}
