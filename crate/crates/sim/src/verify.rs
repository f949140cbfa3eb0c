//! Runtime property checks. Every check draws from its own fixed seed and
//! reports the worst observed margin (bound minus measurement; negative means
//! violated).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use scrible_core::adversary::BudgetAccountant;
use scrible_core::geometry::MAX_DELTA;
use scrible_core::learner::StepBoundStats;
use scrible_core::regret::martingale_constants;
use scrible_core::rng::sample_in_domain;
use scrible_core::{
    compute_regret, dikin_point, ftrl, hessian_inverse_sqrt, linear_comparator, one_point_estimate, run_episode,
    sample_unit_sphere, Barrier, Domain, DomainKind, EtaPreset, LearnerConfig, LinearLossSequence, LossOracle,
    PerturbationKind, PerturbationSchedule, Point, RngStream,
};
use serde::Serialize;

use crate::harness::lowerbound_demo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Barrier,
    Dikin,
    #[serde(rename = "lemma2")]
    LogGrowth,
    #[serde(rename = "lemma3")]
    ShrunkDistance,
    #[serde(rename = "lemma4")]
    StepBound,
    #[serde(rename = "lemma5")]
    Estimator,
    FtrlOracle,
    Budget,
    Lowerbound,
    Martingale,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Barrier,
        Suite::Dikin,
        Suite::LogGrowth,
        Suite::ShrunkDistance,
        Suite::StepBound,
        Suite::Estimator,
        Suite::FtrlOracle,
        Suite::Budget,
        Suite::Lowerbound,
        Suite::Martingale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Barrier => "barrier",
            Suite::Dikin => "dikin",
            Suite::LogGrowth => "lemma2",
            Suite::ShrunkDistance => "lemma3",
            Suite::StepBound => "lemma4",
            Suite::Estimator => "lemma5",
            Suite::FtrlOracle => "ftrl_oracle",
            Suite::Budget => "budget",
            Suite::Lowerbound => "lowerbound",
            Suite::Martingale => "martingale",
        }
    }

    pub fn run(self) -> CheckReport {
        match self {
            Suite::Barrier => check_barrier(),
            Suite::Dikin => check_dikin(100_000),
            Suite::LogGrowth => check_log_growth(10_000),
            Suite::ShrunkDistance => check_shrunk_distance(10_000),
            Suite::StepBound => check_step_bound(),
            Suite::Estimator => check_estimator(200_000),
            Suite::FtrlOracle => check_ftrl_oracle(1_000),
            Suite::Budget => check_budget(),
            Suite::Lowerbound => check_lowerbound(),
            Suite::Martingale => check_martingale(200),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub samples: usize,
    pub worst_margin: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckReport {
    fn from_margin(suite: Suite, samples: usize, worst_margin: f64, detail: String) -> Self {
        Self {
            name: suite.name(),
            samples,
            worst_margin,
            pass: worst_margin >= 0.0,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn verify(suites: &[Suite]) -> VerifyReport {
    let mut suites = suites.to_vec();
    suites.sort();
    suites.dedup();
    VerifyReport {
        checks: suites.into_iter().map(Suite::run).collect(),
    }
}

fn ball5() -> Barrier {
    Barrier::new(Domain::ball(5, 5.0).expect("valid ball"))
}

fn box5() -> Barrier {
    Barrier::new(Domain::boxed(vec![1.0, 2.0, 1.5, 3.0, 1.0]).expect("valid box"))
}

/// Interior point with gauge uniform on `[0, max_gauge]`.
pub fn interior_point(rng: &mut RngStream, domain: &Domain, max_gauge: f64) -> Point {
    loop {
        let p = sample_in_domain(rng, domain);
        let g = domain.gauge(&p);
        if g > 0.0 {
            return p * (rng.random::<f64>() * max_gauge / g);
        }
    }
}

/// Relative finite-difference agreement of gradient and Hessian.
pub fn check_barrier() -> CheckReport {
    let mut rng = RngStream::new(0xB0, 0);
    let mut worst = f64::INFINITY;
    let mut samples = 0;
    for b in [ball5(), box5()] {
        let d = b.domain().dim();
        for _ in 0..500 {
            let x = interior_point(&mut rng, b.domain(), 0.95);
            let scale = b.domain().diameter() / 2.0;
            let step = 1e-5 * scale;
            let grad = b.gradient(&x).expect("interior");
            let hess = b.hessian(&x).expect("interior");
            let mut fd_grad = DVector::zeros(d);
            let mut fd_hess = nalgebra::DMatrix::zeros(d, d);
            for i in 0..d {
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus[i] += step;
                minus[i] -= step;
                fd_grad[i] = (b.value(&plus).expect("interior") - b.value(&minus).expect("interior")) / (2.0 * step);
                let col = (b.gradient(&plus).expect("interior") - b.gradient(&minus).expect("interior")) / (2.0 * step);
                fd_hess.set_column(i, &col);
            }
            let g_err = (&fd_grad - &grad).norm() / grad.norm().max(1.0 / scale);
            let h_err = (&fd_hess - &hess).norm() / hess.norm();
            worst = worst.min(1e-5 - g_err).min(1e-4 - h_err);
            samples += 1;
        }
    }
    CheckReport::from_margin(
        Suite::Barrier,
        samples,
        worst,
        "gradient rel. err <= 1e-5, Hessian rel. err <= 1e-4".into(),
    )
}

/// `x + h ∈ K` whenever `‖h‖_x = 1`, on a ball and a box.
pub fn check_dikin(per_domain: usize) -> CheckReport {
    let mut rng = RngStream::new(0xD1, 0);
    let mut worst = f64::INFINITY;
    for b in [ball5(), Barrier::new(Domain::cube(5, 1.0).expect("valid cube"))] {
        let d = b.domain().dim();
        for _ in 0..per_domain {
            let x = interior_point(&mut rng, b.domain(), 0.999);
            let factor = hessian_inverse_sqrt(&b.hessian(&x).expect("interior")).expect("positive definite");
            let mu = sample_unit_sphere(&mut rng, d).expect("d >= 1");
            let y = dikin_point(&x, &factor, &mu);
            worst = worst.min(1.0 + 1e-12 - b.domain().gauge(&y));
        }
    }
    CheckReport::from_margin(
        Suite::Dikin,
        2 * per_domain,
        worst,
        "gauge(x + A mu) <= 1 + 1e-12".into(),
    )
}

/// `R(z) - R(x) <= ν ln(1 / (1 - π_x(z)))` on the ball.
pub fn check_log_growth(samples: usize) -> CheckReport {
    let mut rng = RngStream::new(0x12, 0);
    let b = ball5();
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let x = interior_point(&mut rng, b.domain(), 0.999);
        let z = interior_point(&mut rng, b.domain(), 0.999);
        let pi = b.domain().minkowski_gauge(&x, &z).expect("same dimension");
        let lhs = b.value(&z).expect("interior") - b.value(&x).expect("interior");
        let rhs = b.nu() * (1.0 / (1.0 - pi)).ln();
        worst = worst.min(rhs + 1e-9 - lhs);
    }
    CheckReport::from_margin(
        Suite::LogGrowth,
        samples,
        worst,
        "R(z) - R(x) <= nu ln(1/(1 - pi_x(z)))".into(),
    )
}

/// `‖y - x‖_x <= 2(1/δ - 1)(ν + 2√ν)` on `K_δ`, with half the pairs pushed to
/// gauge 0.999 of the shrunk set.
pub fn check_shrunk_distance(per_delta: usize) -> CheckReport {
    let mut rng = RngStream::new(0x13, 0);
    let mut worst = f64::INFINITY;
    let mut samples = 0;
    for b in [ball5(), box5()] {
        for delta in [0.1, 0.5, MAX_DELTA] {
            let bound = 2.0 * (1.0 / delta - 1.0) * (b.nu() + 2.0 * b.nu().sqrt());
            let scale = 1.0 - delta;
            for i in 0..per_delta {
                let mut x = interior_point(&mut rng, b.domain(), scale);
                let mut y = interior_point(&mut rng, b.domain(), scale);
                if i % 2 == 0 {
                    x *= scale * 0.999 / b.domain().gauge(&x);
                    y *= scale * 0.999 / b.domain().gauge(&y);
                }
                let dist = b.local_norm(&x, &(&y - &x)).expect("interior");
                worst = worst.min(bound + 1e-9 - dist);
                samples += 1;
            }
        }
    }
    CheckReport::from_margin(
        Suite::ShrunkDistance,
        samples,
        worst,
        "||y - x||_x <= 2(1/delta - 1)(nu + 2 sqrt(nu))".into(),
    )
}

/// Step bound on the published setting and on a scaled fixture with `|f| <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBoundCheck {
    pub published: StepBoundStats,
    pub bounded: StepBoundStats,
}

pub fn step_bound_episodes(seed: u64) -> StepBoundCheck {
    let episode = |radius: f64, g: f64, seed: u64| {
        let horizon = 2000;
        let domain = Domain::ball(5, radius).expect("valid ball");
        let stream = RngStream::new(seed, 0);
        let seq = LinearLossSequence::generate(&mut stream.fork(1), horizon, 5, g).expect("valid sequence");
        let mut oracle = LossOracle::linear_only(domain.clone(), Arc::new(seq)).expect("matching dims");
        let delta = 1.0 / (horizon as f64 * horizon as f64);
        let cfg = LearnerConfig::new(Barrier::new(domain), horizon, delta, EtaPreset::ShrinkLog).expect("valid");
        let records = run_episode(&cfg, &mut oracle, &mut stream.fork(3)).expect("episode");
        StepBoundStats::from_records(&records, cfg.step_bound())
    };
    StepBoundCheck {
        published: episode(5.0, 3.0, seed),
        bounded: episode(1.0, 0.1, seed + 1),
    }
}

pub fn check_step_bound() -> CheckReport {
    let s = step_bound_episodes(0x14);
    let margin = (s.published.enforced_fraction() - 0.999).min(-(s.bounded.violations as f64));
    CheckReport::from_margin(
        Suite::StepBound,
        s.published.rounds + s.bounded.rounds,
        margin,
        format!(
            "G=3 D=5 setting: {:.4} enforced, {:.4} of all rounds within 4 d eta ({} violations, {} with |f| <= 1); \
             |f| <= 1 fixture: {} violations",
            s.published.enforced_fraction(),
            s.published.satisfied_fraction(),
            s.published.violations,
            s.published.hard_violations,
            s.bounded.violations
        ),
    )
}

/// Largest `|mean(g)_i - θ_i|` in units of the standard error.
pub fn estimator_bias_in_se(samples: usize, seed: u64) -> f64 {
    let d = 5;
    let b = ball5();
    let mut rng = RngStream::new(seed, 0);
    let x = sample_unit_sphere(&mut rng, d).expect("d >= 1") * 2.5;
    let theta = sample_unit_sphere(&mut rng, d).expect("d >= 1") * 3.0;
    let factor = hessian_inverse_sqrt(&b.hessian(&x).expect("interior")).expect("positive definite");
    let mut sum = DVector::zeros(d);
    let mut sum_sq = DVector::zeros(d);
    for _ in 0..samples {
        let mu = sample_unit_sphere(&mut rng, d).expect("d >= 1");
        let g = one_point_estimate(&factor, theta.dot(&dikin_point(&x, &factor, &mu)), &mu);
        sum_sq += g.component_mul(&g);
        sum += g;
    }
    let n = samples as f64;
    (0..d)
        .map(|i| {
            let m = sum[i] / n;
            let var = (sum_sq[i] / n - m * m) * n / (n - 1.0);
            (m - theta[i]).abs() / (var / n).sqrt()
        })
        .fold(0.0, f64::max)
}

pub fn check_estimator(samples: usize) -> CheckReport {
    let z = estimator_bias_in_se(samples, 0x15);
    CheckReport::from_margin(
        Suite::Estimator,
        samples,
        4.0 - z,
        format!("max |mean(g) - theta| = {z:.3} standard errors"),
    )
}

fn bisect_1d(c: f64, h: f64, limit: f64) -> f64 {
    let deriv = |u: f64| c + 1.0 / (h - u) - 1.0 / (h + u);
    let (mut lo, mut hi) = (-limit, limit);
    if deriv(lo) >= 0.0 {
        return lo;
    }
    if deriv(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// FTRL minimiser by bisection on each 1-D stationarity condition.
pub fn ftrl_bisection(domain: &Domain, scaled_sum: &DVector<f64>, delta: f64) -> Point {
    let scale = (1.0 - delta).min(1.0 - scrible_core::geometry::INTERIOR_MARGIN);
    match domain.kind() {
        DomainKind::Ball { radius } => {
            let c = scaled_sum.norm();
            if c == 0.0 {
                return domain.center();
            }
            scaled_sum * (bisect_1d(c, *radius, scale * radius) / c)
        }
        DomainKind::Box { halfwidths } => DVector::from_iterator(
            scaled_sum.len(),
            scaled_sum
                .iter()
                .zip(halfwidths)
                .map(|(c, h)| bisect_1d(*c, *h, scale * h)),
        ),
    }
}

pub fn check_ftrl_oracle(per_domain: usize) -> CheckReport {
    let mut rng = RngStream::new(0xF7, 0);
    let mut worst = 0.0_f64;
    for b in [ball5(), box5()] {
        for i in 0..per_domain {
            let delta = [0.0, 0.2, 0.5][i % 3];
            let magnitude = 10f64.powf(rng.random_range(-3.0..3.0));
            let l = sample_unit_sphere(&mut rng, 5).expect("d >= 1") * magnitude;
            let got = match ftrl::solve(&b, &l, delta, 1e-10) {
                Ok(s) => s.x,
                Err(_) => return CheckReport::from_margin(Suite::FtrlOracle, i, -1.0, "solver failed".into()),
            };
            worst = worst.max((got - ftrl_bisection(b.domain(), &l, delta)).norm());
        }
    }
    CheckReport::from_margin(
        Suite::FtrlOracle,
        2 * per_domain,
        1e-8 - worst,
        format!("max deviation from bisection oracle {worst:.3e}"),
    )
}

/// Spike schedule asking for 1.5 C in total.
pub fn budget_stress(seed: u64) -> (f64, f64, usize) {
    let horizon = 1000;
    let budget = 100.0;
    let domain = Domain::ball(5, 5.0).expect("valid ball");
    let stream = RngStream::new(seed, 0);
    let seq = LinearLossSequence::generate(&mut stream.fork(1), horizon, 5, 3.0).expect("valid sequence");
    let spikes = (1..=300)
        .map(|k| (3 * k, if k % 2 == 0 { 0.5 } else { -0.5 }))
        .collect();
    let schedule = PerturbationSchedule::new(PerturbationKind::Spikes(spikes), budget).expect("valid schedule");
    let mut oracle = LossOracle::new(domain.clone(), Arc::new(seq), schedule).expect("matching dims");
    let cfg = LearnerConfig::new(Barrier::new(domain), horizon, 0.1, EtaPreset::ShrinkLogQuarter).expect("valid");
    let records = run_episode(&cfg, &mut oracle, &mut stream.fork(3)).expect("episode");
    let mut running: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for r in &records {
        running += r.sigma.unwrap_or(0.0).abs();
        peak = peak.max(running);
    }
    (
        budget,
        peak.max(oracle.accountant().used()),
        oracle.accountant().clip_events(),
    )
}

pub fn check_budget() -> CheckReport {
    let (budget, peak, clips) = budget_stress(0xB6);
    let mut acc = BudgetAccountant::new(1.0);
    let mut rng = RngStream::new(0xB7, 0);
    let mut worst = budget + 1e-12 - peak;
    for _ in 0..10_000 {
        acc.charge(rng.random_range(-0.5..0.5), None);
        worst = worst.min(1.0 + 1e-12 - acc.used());
    }
    let mut report = CheckReport::from_margin(
        Suite::Budget,
        10_001,
        worst,
        format!("peak spend {peak} of C = {budget}; {clips} clip events"),
    );
    report.pass &= clips > 0;
    report
}

pub fn check_lowerbound() -> CheckReport {
    let learner = LearnerConfig::new(ball5(), 1000, 0.01, EtaPreset::ShrinkLogQuarter).expect("valid");
    match lowerbound_demo(0.01, &learner, 0x18) {
        Ok(r) => {
            let exact = r.gap.to_bits() == 0.02f64.to_bits();
            let mut report = CheckReport::from_margin(
                Suite::Lowerbound,
                r.queries,
                if exact { 0.0 } else { -(r.gap - 0.02).abs() },
                format!("gap {} (2 eps = 0.02), floor 2C = {}", r.gap, r.regret_floor),
            );
            report.pass = exact;
            report
        }
        Err(e) => CheckReport::from_margin(Suite::Lowerbound, 0, -1.0, e.to_string()),
    }
}

/// The deviation martingale `Σ θ_tᵀ(y_t - x_t)` is centred across episodes and
/// inside its peeled Freedman envelope in each.
pub fn check_martingale(episodes: usize) -> CheckReport {
    let horizon = 200;
    let gamma = 0.01;
    let domain = Domain::ball(5, 5.0).expect("valid ball");
    let stream = RngStream::new(0x19, 0);
    let seq = Arc::new(LinearLossSequence::generate(&mut stream.fork(1), horizon, 5, 3.0).expect("valid sequence"));
    let h = linear_comparator(&domain, &seq.thetas().iter().fold(DVector::zeros(5), |a, t| a + t));
    let cfg =
        LearnerConfig::new(Barrier::new(domain.clone()), horizon, 0.0, EtaPreset::ShrinkLogQuarter).expect("valid");
    let m = martingale_constants(3.0, 5.0, horizon).expect("GD > e");
    let s = m.s as f64;
    let log_term = (s / gamma).ln();
    let envelope = s * ((8.0 * m.variance * log_term).sqrt() + 2.0 * m.range * log_term);
    let mut finals = Vec::with_capacity(episodes);
    let mut worst_envelope = f64::INFINITY;
    for e in 0..episodes {
        let mut oracle = LossOracle::linear_only(domain.clone(), seq.clone()).expect("matching dims");
        let records = run_episode(&cfg, &mut oracle, &mut stream.fork(100 + e as u64)).expect("episode");
        let report = compute_regret(&records, &oracle, &h).expect("regret");
        let dev = *report.deviation_track.last().expect("T >= 1");
        worst_envelope = worst_envelope.min(envelope - dev.abs());
        finals.push(dev);
    }
    let n = episodes as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let var = finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let z = mean.abs() / se;
    CheckReport::from_margin(
        Suite::Martingale,
        episodes,
        (4.0 - z).min(worst_envelope),
        format!("mean deviation {mean:.3} ({z:.2} SE); envelope {envelope:.1}"),
    )
}
