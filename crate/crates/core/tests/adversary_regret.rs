use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use scrible_core::adversary::BudgetAccountant;
use scrible_core::regret::{compute_regret_with_offset, martingale_constants};
use scrible_core::{
    best_iterate, compute_regret, expected_bound, highprob_bound, linear_comparator, run_episode, sample_unit_sphere,
    Barrier, BlackBoxAdversary, BoundInputs, Domain, EtaPreset, LearnerConfig, LinearLossSequence, LossOracle,
    PerturbationKind, PerturbationSchedule, RngStream,
};

const D: usize = 5;

fn sinusoidal(rng: &mut RngStream, epsilon: f64, budget: f64) -> PerturbationSchedule {
    let direction = sample_unit_sphere(rng, D).unwrap();
    PerturbationSchedule::new(
        PerturbationKind::Sinusoidal {
            epsilon,
            direction,
            offset: 2.0,
            boundary_threshold: 0.95,
        },
        budget,
    )
    .unwrap()
}

fn setup(seed: u64, horizon: usize) -> (Domain, Arc<LinearLossSequence>, RngStream) {
    let base = RngStream::new(seed, 0);
    let seq = LinearLossSequence::generate(&mut base.fork(1), horizon, D, 3.0).unwrap();
    (Domain::ball(D, 5.0).unwrap(), Arc::new(seq), base)
}

fn learner(domain: &Domain, horizon: usize, delta: f64) -> LearnerConfig {
    LearnerConfig::new(
        Barrier::new(domain.clone()),
        horizon,
        delta,
        EtaPreset::ShrinkLogQuarter,
    )
    .unwrap()
}

#[test]
fn budget_never_overspent_and_matches_trajectory() {
    let (domain, seq, base) = setup(301, 2000);
    let schedule = sinusoidal(&mut base.fork(3), 0.02, 150.0);
    let mut oracle = LossOracle::new(domain.clone(), seq, schedule).unwrap();
    let records = run_episode(&learner(&domain, 2000, 0.0), &mut oracle, &mut base.fork(2)).unwrap();
    let used = oracle.accountant().used();
    assert!(used <= 150.0 + 1e-12);
    let recorded: f64 = records.iter().map(|r| r.sigma.unwrap().abs()).sum();
    assert!((used - recorded).abs() <= 1e-9);
}

#[test]
fn spike_schedule_over_budget_is_clipped() {
    let (domain, seq, base) = setup(302, 1000);
    let budget = 100.0;
    // Raw spikes total 1.5 C.
    let spikes: BTreeMap<usize, f64> = (1..=300)
        .map(|t| (t * 3, if t % 2 == 0 { 0.5 } else { -0.5 }))
        .collect();
    let schedule = PerturbationSchedule::new(PerturbationKind::Spikes(spikes), budget).unwrap();
    let mut oracle = LossOracle::new(domain.clone(), seq, schedule).unwrap();
    let records = run_episode(&learner(&domain, 1000, 0.1), &mut oracle, &mut base.fork(2)).unwrap();
    assert!(oracle.accountant().used() <= budget + 1e-12);
    assert!(oracle.accountant().clip_events() > 0);
    let mut running = 0.0;
    for r in &records {
        running += r.sigma.unwrap().abs();
        assert!(running <= budget + 1e-12);
    }
}

#[test]
fn oblivious_sequence_shared_between_learners() {
    let (domain, seq, base) = setup(303, 500);
    let schedule = sinusoidal(&mut base.fork(3), 0.02, 1000.0);
    let template = LossOracle::new(domain.clone(), seq, schedule).unwrap();
    let mut a = template.clone();
    let mut b = template.clone();
    let ra = run_episode(&learner(&domain, 500, 0.0), &mut a, &mut base.fork(2)).unwrap();
    let rb = run_episode(&learner(&domain, 500, 0.5), &mut b, &mut base.fork(2)).unwrap();
    assert_eq!(a.linear().thetas(), b.linear().thetas());
    assert_eq!(a.linear().thetas(), template.linear().thetas());
    // Same μ stream, different iterates.
    assert_eq!(ra[0].mu, rb[0].mu);
    assert_ne!(ra.last().unwrap().y, rb.last().unwrap().y);
}

#[test]
fn zero_budget_means_linear_losses() {
    let (domain, seq, base) = setup(304, 500);
    let schedule = sinusoidal(&mut base.fork(3), 0.02, 0.0);
    let mut oracle = LossOracle::new(domain.clone(), seq, schedule).unwrap();
    let records = run_episode(&learner(&domain, 500, 0.0), &mut oracle, &mut base.fork(2)).unwrap();
    for r in &records {
        assert_eq!(r.sigma, Some(0.0));
        assert_eq!(r.loss, oracle.linear().theta(r.t).dot(&r.y));
    }
    let total = seq_sum(&oracle);
    let comparator = linear_comparator(&domain, &total);
    let report = compute_regret(&records, &oracle, &comparator).unwrap();
    for (a, b) in report.regret.iter().zip(&report.linear_regret) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }
    assert!(report.error_track.iter().all(|e| *e == 0.0));
}

fn seq_sum(oracle: &LossOracle) -> nalgebra::DVector<f64> {
    oracle
        .linear()
        .thetas()
        .iter()
        .fold(nalgebra::DVector::zeros(D), |acc, t| acc + t)
}

#[test]
fn regret_decomposition_is_exact_per_round() {
    let (domain, seq, base) = setup(305, 800);
    let schedule = sinusoidal(&mut base.fork(3), 0.02, 4000.0);
    let mut oracle = LossOracle::new(domain.clone(), seq, schedule).unwrap().clone();
    let records = run_episode(&learner(&domain, 800, 0.0), &mut oracle, &mut base.fork(2)).unwrap();
    let h = linear_comparator(&domain, &seq_sum(&oracle));
    let report = compute_regret(&records, &oracle, &h).unwrap();
    for r in &records {
        let theta = oracle.linear().theta(r.t);
        let lhs = theta.dot(&(&r.y - &h));
        let rhs = theta.dot(&(&r.y - &r.x)) + theta.dot(&(&r.x - &h));
        assert!((lhs - rhs).abs() <= 1e-9);
    }
    // Regret = linear regret + realised perturbations, with σ(h) = 0.
    let sigma_total: f64 = report.sigma.iter().sum();
    let n = records.len() - 1;
    assert!((report.regret[n] - report.linear_regret[n] - sigma_total).abs() <= 1e-8);
    let (lo, hi) = report.corrected_interval();
    assert_eq!(hi - lo, 4.0 * 4000.0);

    let shifted = compute_regret_with_offset(&records, &oracle, &h, 10.0).unwrap();
    assert!((report.final_regret() - shifted.final_regret() - 10.0).abs() < 1e-9);
    assert!(compute_regret_with_offset(&records, &oracle, &h, 5000.0).is_err());
}

#[test]
fn comparator_play_has_zero_regret() {
    let (domain, seq, _) = setup(306, 50);
    let mut oracle = LossOracle::linear_only(domain.clone(), seq).unwrap();
    let h = linear_comparator(&domain, &seq_sum(&oracle));
    let records: Vec<_> = (1..=50)
        .map(|t| {
            let loss = oracle.evaluate_loss(&h, t).unwrap();
            scrible_core::RoundRecord {
                t,
                x: h.clone(),
                mu: nalgebra::DVector::zeros(D),
                y: h.clone(),
                loss,
                g: nalgebra::DVector::zeros(D),
                direction: nalgebra::DVector::zeros(D),
                sigma: Some(0.0),
                step_local_norm: 0.0,
                x_next: h.clone(),
            }
        })
        .collect();
    let report = compute_regret(&records, &oracle, &h).unwrap();
    assert!(report.regret.iter().all(|r| r.abs() < 1e-12));
    assert!(report.deviation_track.iter().all(|r| *r == 0.0));
}

#[test]
fn deviation_track_is_centered() {
    let (domain, seq, base) = setup(307, 200);
    let reps = 200;
    let finals: Vec<f64> = (0..reps)
        .map(|rep| {
            let mut oracle = LossOracle::linear_only(domain.clone(), seq.clone()).unwrap();
            let records = run_episode(&learner(&domain, 200, 0.0), &mut oracle, &mut base.fork(100 + rep)).unwrap();
            let h = linear_comparator(&domain, &seq_sum(&oracle));
            *compute_regret(&records, &oracle, &h)
                .unwrap()
                .deviation_track
                .last()
                .unwrap()
        })
        .collect();
    let mean = finals.iter().sum::<f64>() / reps as f64;
    let var = finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
    assert!(
        mean.abs() <= 4.0 * (var / reps as f64).sqrt(),
        "mean {mean}, sd {}",
        var.sqrt()
    );
}

#[test]
fn blackbox_gap_is_twice_epsilon_for_any_learner() {
    let domain = Domain::ball(D, 5.0).unwrap();
    let base = RngStream::new(308, 0);
    for delta in [0.0, 0.3] {
        let mut adv = BlackBoxAdversary::new(0.01, domain.clone()).unwrap();
        let records = run_episode(&learner(&domain, 1000, delta), &mut adv, &mut base.fork(1)).unwrap();
        assert_eq!(adv.queried().len(), 1000);
        let x_hat = best_iterate(&records).unwrap();
        assert_eq!(x_hat.t, 1);
        let gap = adv.finalize(&x_hat.y, &mut base.fork(2)).unwrap();
        assert_eq!(gap.to_bits(), 0.02f64.to_bits());
    }
}

fn reference_inputs() -> BoundInputs {
    BoundInputs {
        d: 5,
        horizon: 2000,
        nu: 1.0,
        delta: 1.0 / 4e6,
        budget: 0.0,
        loss_bound: 3.0,
        diameter: 5.0,
        gamma: 0.01,
        eta: 0.0,
    }
}

// Reference values from a 40-digit evaluation of the bound formulas.
#[test]
fn bound_values_at_reference_parameters() {
    let i = reference_inputs();
    let e = expected_bound(&i).unwrap();
    assert!((e / 3_487.333_687_104_861_5 - 1.0).abs() < 1e-12, "{e}");
    assert_eq!(martingale_constants(3.0, 5.0, 2000).unwrap().s, 42);
    let h = highprob_bound(&i).unwrap();
    assert!((h / 244_173.962_688_588_5 - 1.0).abs() < 1e-12, "{h}");
    let with_budget = BoundInputs {
        budget: 400.0,
        delta: 0.2,
        ..i
    };
    assert!((expected_bound(&with_budget).unwrap() / 55_934.702_749_598_89 - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn accountant_is_monotone_and_within_budget(
        budget in 0.0f64..50.0,
        raws in proptest::collection::vec(-10.0f64..10.0, 1..200),
        cap in proptest::option::of(0.1f64..5.0),
    ) {
        let mut acc = BudgetAccountant::new(budget);
        let mut last = 0.0;
        let mut spent = 0.0;
        for raw in raws {
            let s = acc.charge(raw, cap);
            prop_assert!(s.abs() <= raw.abs());
            prop_assert!(s == 0.0 || s.signum() == raw.signum());
            spent += s.abs();
            prop_assert!(acc.used() >= last);
            prop_assert!(acc.used() <= budget + 1e-12);
            last = acc.used();
        }
        prop_assert!((spent - acc.used()).abs() <= 1e-9);
    }

    #[test]
    fn gauge_is_positively_homogeneous(
        v in proptest::collection::vec(-3.0f64..3.0, 4),
        s in 0.0f64..4.0,
    ) {
        let x = nalgebra::DVector::from_vec(v);
        for domain in [Domain::ball(4, 2.0).unwrap(), Domain::boxed(vec![1.0, 2.0, 3.0, 4.0]).unwrap()] {
            let a = domain.gauge(&(&x * s));
            let b = s * domain.gauge(&x);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
            let neg = domain.gauge(&-&x);
            prop_assert!((neg - domain.gauge(&x)).abs() <= 1e-15);
        }
    }
}
