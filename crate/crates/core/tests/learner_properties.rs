use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use scrible_core::ftrl;
use scrible_core::learner::StepBoundStats;
use scrible_core::{
    dikin_point, hessian_inverse_sqrt, one_point_estimate, run_episode, sample_unit_sphere, Barrier, Domain,
    DomainKind, EtaPreset, LearnerConfig, LinearLossSequence, LossOracle, Point, RngStream,
};

/// Minimiser of `c u - ln(h - u) - ln(h + u)` over `|u| <= limit`, by bisection
/// on the derivative. Deliberately ignores the closed form.
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

fn ftrl_oracle(domain: &Domain, l: &DVector<f64>, delta: f64) -> Point {
    let scale = (1.0 - delta).min(1.0 - 1e-9);
    match domain.kind() {
        DomainKind::Ball { radius } => {
            let c = l.norm();
            if c == 0.0 {
                return domain.center();
            }
            // Radial problem along -L: c u - ln(D² - u²) for u = -r.
            let u = bisect_1d(c, *radius, scale * radius);
            l * (u / c)
        }
        DomainKind::Box { halfwidths } => DVector::from_iterator(
            l.len(),
            l.iter().zip(halfwidths).map(|(c, h)| bisect_1d(*c, *h, scale * h)),
        ),
    }
}

#[test]
fn unit_ball_pull_matches_bisection() {
    let b = Barrier::new(Domain::ball(2, 1.0).unwrap());
    let l = DVector::from_column_slice(&[1.0, 0.0]);
    let x = ftrl::solve(&b, &l, 0.0, 1e-10).unwrap().x;
    assert!((x[0] + 0.414_213_562_373_095_1).abs() < 1e-12);
    assert!((&x - ftrl_oracle(b.domain(), &l, 0.0)).norm() < 1e-12);

    let l = DVector::from_column_slice(&[100.0, 0.0]);
    let x = ftrl::solve(&b, &l, 0.5, 1e-10).unwrap().x;
    assert!(x.norm() <= 0.5 && x[0] < 0.0 && x[1] == 0.0);
    assert!((&x - ftrl_oracle(b.domain(), &l, 0.5)).norm() < 1e-12);
}

#[test]
fn ftrl_matches_bisection_oracle() {
    let mut rng = RngStream::new(201, 0);
    let domains = [
        Domain::ball(5, 5.0).unwrap(),
        Domain::boxed(vec![1.0, 2.0, 1.5, 4.0, 1.0]).unwrap(),
    ];
    let mut worst = 0.0_f64;
    for domain in &domains {
        let barrier = Barrier::new(domain.clone());
        for i in 0..1000 {
            let delta = [0.0, 0.2, 0.5][i % 3];
            let magnitude = 10f64.powf(rng.random_range(-3.0..3.0));
            let l = sample_unit_sphere(&mut rng, 5).unwrap() * magnitude;
            let got = ftrl::solve(&barrier, &l, delta, 1e-10).unwrap().x;
            let want = ftrl_oracle(domain, &l, delta);
            worst = worst.max((got - want).norm());
        }
    }
    assert!(worst <= 1e-8, "worst deviation {worst}");
}

#[test]
fn damped_newton_matches_closed_form_when_constraint_slack() {
    let mut rng = RngStream::new(202, 0);
    for domain in [Domain::ball(4, 3.0).unwrap(), Domain::cube(4, 2.0).unwrap()] {
        let barrier = Barrier::new(domain);
        for _ in 0..100 {
            let l = sample_unit_sphere(&mut rng, 4).unwrap() * rng.random_range(0.01..5.0);
            let closed = ftrl::solve(&barrier, &l, 0.0, 1e-10).unwrap();
            let newton = ftrl::solve_damped_newton(&barrier, &l, 0.0, 1e-12, 200).unwrap();
            assert!((closed.x - newton.x).norm() < 1e-8);
        }
    }
}

#[test]
fn estimator_is_unbiased_for_linear_losses() {
    let mut rng = RngStream::new(203, 0);
    let d = 5;
    let barrier = Barrier::new(Domain::ball(d, 5.0).unwrap());
    let x = sample_unit_sphere(&mut rng, d).unwrap() * 2.5;
    let theta = sample_unit_sphere(&mut rng, d).unwrap() * 3.0;
    let factor = hessian_inverse_sqrt(&barrier.hessian(&x).unwrap()).unwrap();
    let n = 200_000;
    let mut sum = DVector::zeros(d);
    let mut sum_sq = DVector::zeros(d);
    for _ in 0..n {
        let mu = sample_unit_sphere(&mut rng, d).unwrap();
        let y = dikin_point(&x, &factor, &mu);
        let g = one_point_estimate(&factor, theta.dot(&y), &mu);
        sum_sq += g.component_mul(&g);
        sum += g;
    }
    let mean = &sum / n as f64;
    for i in 0..d {
        let var = sum_sq[i] / n as f64 - mean[i] * mean[i];
        let stderr = (var * n as f64 / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt();
        assert!(
            (mean[i] - theta[i]).abs() <= 4.0 * stderr,
            "coordinate {i}: {} vs {}",
            mean[i],
            theta[i]
        );
    }
}

fn reference_episode(
    seed: u64,
    delta: f64,
    g_bound: f64,
    radius: f64,
    horizon: usize,
) -> (LearnerConfig, Vec<scrible_core::RoundRecord>) {
    let d = 5;
    let domain = Domain::ball(d, radius).unwrap();
    let base = RngStream::new(seed, 0);
    let seq = LinearLossSequence::generate(&mut base.fork(1), horizon, d, g_bound).unwrap();
    let mut oracle = LossOracle::linear_only(domain.clone(), Arc::new(seq)).unwrap();
    let cfg = LearnerConfig::new(Barrier::new(domain), horizon, delta, EtaPreset::ShrinkLog).unwrap();
    let records = run_episode(&cfg, &mut oracle, &mut base.fork(2)).unwrap();
    (cfg, records)
}

#[test]
fn estimator_dual_norm_identity_every_round() {
    let (cfg, records) = reference_episode(204, 0.1, 3.0, 5.0, 300);
    let d = cfg.dim() as f64;
    for r in &records {
        let dual = cfg.barrier.dual_local_norm(&r.x, &r.g).unwrap();
        assert!(
            (dual - d * r.loss.abs()).abs() <= 1e-9 * (1.0 + d * r.loss.abs()),
            "round {}",
            r.t
        );
        assert!(cfg.barrier.domain().contains(&r.y, 1e-12));
    }
}

#[test]
fn consecutive_iterates_stay_close_for_bounded_losses() {
    // |f| <= G·D = 0.1, so the step bound must hold every round.
    let (cfg, records) = reference_episode(205, 1.0 / 4e6, 0.1, 1.0, 2000);
    let stats = StepBoundStats::from_records(&records, cfg.step_bound());
    assert!(records.iter().all(|r| r.loss.abs() <= 1.0));
    assert_eq!(stats.violations, 0, "max ratio {}", stats.max_ratio);
}

#[test]
fn verify_mode_accepts_bounded_episode() {
    let domain = Domain::ball(3, 1.0).unwrap();
    let base = RngStream::new(206, 0);
    let seq = LinearLossSequence::generate(&mut base.fork(1), 500, 3, 0.5).unwrap();
    let mut oracle = LossOracle::linear_only(domain.clone(), Arc::new(seq)).unwrap();
    let mut cfg = LearnerConfig::new(Barrier::new(domain), 500, 0.2, EtaPreset::ShrinkLogQuarter).unwrap();
    cfg.verify_steps = true;
    assert_eq!(run_episode(&cfg, &mut oracle, &mut base.fork(2)).unwrap().len(), 500);
}

#[test]
fn iterates_stay_in_shrunk_set() {
    for delta in [0.05, 0.3, 2.0 / 3.0] {
        let (cfg, records) = reference_episode(207, delta, 3.0, 5.0, 400);
        for r in &records {
            assert!(cfg.barrier.domain().gauge(&r.x_next) <= (1.0 - delta) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn box_episode_keeps_all_plays_feasible() {
    let d = 4;
    let domain = Domain::boxed(vec![1.0, 2.0, 1.0, 3.0]).unwrap();
    let base = RngStream::new(208, 0);
    let seq = LinearLossSequence::generate(&mut base.fork(1), 1000, d, 2.0).unwrap();
    let mut oracle = LossOracle::linear_only(domain.clone(), Arc::new(seq)).unwrap();
    let cfg = LearnerConfig::new(Barrier::new(domain.clone()), 1000, 0.0, EtaPreset::ShrinkLog).unwrap();
    let records = run_episode(&cfg, &mut oracle, &mut base.fork(2)).unwrap();
    assert!(records.iter().all(|r| domain.contains(&r.y, 1e-12)));
}

#[test]
fn episodes_replay_bit_for_bit() {
    let (_, a) = reference_episode(209, 0.2, 3.0, 5.0, 200);
    let (_, b) = reference_episode(209, 0.2, 3.0, 5.0, 200);
    assert_eq!(a, b);
}
