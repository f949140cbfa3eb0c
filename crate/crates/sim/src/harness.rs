//! Episode execution, repetitions, ε sweeps and the lower-bound demonstration.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use scrible_core::learner::StepBoundStats;
use scrible_core::{
    best_iterate, compute_regret, delta_policy, expected_bound, highprob_bound, linear_comparator, run_episode,
    Barrier, BlackBoxAdversary, BoundInputs, LearnerConfig, LinearLossSequence, LossOracle, RegretReport, RngStream,
    RoundRecord,
};
use serde::Serialize;

use crate::config::{Algorithm, DeltaSetting, ExperimentConfig};
use crate::error::{io_err, CoreContext, Result, SimError};
use crate::plot::{emit_plot, read_table, write_table, TableRow};

/// Child streams of a repetition's stream.
pub const THETA_STREAM: u64 = 1;
pub const PERTURBATION_STREAM: u64 = 2;
pub const LEARNER_STREAM: u64 = 3;
pub const FINALIZE_STREAM: u64 = 4;

pub const TRAJECTORY_FILE: &str = "trajectories.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TABLE_FILE: &str = "regret_table.csv";
pub const PLOT_FILE: &str = "plot.svg";
pub const CONFIG_FILE: &str = "config.toml";

/// Resolved learner parameters for one algorithm.
#[derive(Debug, Clone)]
pub struct AlgorithmSetup {
    pub algorithm: Algorithm,
    pub delta: f64,
    pub delta_clamped: bool,
    pub learner: LearnerConfig,
}

impl AlgorithmSetup {
    pub fn resolve(cfg: &ExperimentConfig, algorithm: Algorithm) -> Result<(Self, Option<String>)> {
        let budget = cfg.budget();
        let (delta, clamped) = match algorithm {
            Algorithm::ScribleBaseline => (0.0, false),
            Algorithm::Shrunk => match cfg.delta {
                DeltaSetting::Value(delta) => (delta, false),
                DeltaSetting::Keyword(_) => {
                    let choice = delta_policy(budget, cfg.horizon).context(|| "delta policy".into())?;
                    (choice.delta, choice.clamped)
                }
            },
        };
        let mut warning = None;
        if clamped {
            let msg = format!(
                "C/T = {} exceeds 2/3; algorithm1 runs with delta = 2/3 outside the analysed regime",
                budget / cfg.horizon as f64
            );
            if !cfg.budget_regime_override {
                return Err(SimError::Config(format!(
                    "{msg} (set budget_regime_override = true to proceed)"
                )));
            }
            warning = Some(msg);
        }
        let barrier = Barrier::new(cfg.domain()?);
        let learner = LearnerConfig::new(barrier, cfg.horizon, delta, cfg.eta.preset())
            .context(|| format!("{} learner", algorithm.name()))?;
        Ok((
            Self {
                algorithm,
                delta,
                delta_clamped: clamped,
                learner,
            },
            warning,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub algorithm: Algorithm,
    pub rep: usize,
    pub records: Vec<RoundRecord>,
    pub report: RegretReport,
    pub steps: StepBoundStats,
}

/// One repetition of one algorithm. The loss sequence, perturbation direction
/// and sphere draws depend on `(master_seed, rep)` only, so every algorithm
/// and every ε faces the same randomness.
pub fn run_single(cfg: &ExperimentConfig, setup: &AlgorithmSetup, rep: usize) -> Result<EpisodeOutcome> {
    let ctx = |what: &str| format!("{} rep {rep}: {what}", setup.algorithm.name());
    let stream = RngStream::new(cfg.master_seed, 0).fork(rep as u64);
    let domain = cfg.domain()?;
    let seq = LinearLossSequence::generate(&mut stream.fork(THETA_STREAM), cfg.horizon, cfg.d, cfg.loss_bound)
        .context(|| ctx("loss sequence"))?;
    let schedule = cfg.schedule(&mut stream.fork(PERTURBATION_STREAM))?;
    let mut oracle = LossOracle::new(domain.clone(), Arc::new(seq), schedule).context(|| ctx("loss oracle"))?;
    let records =
        run_episode(&setup.learner, &mut oracle, &mut stream.fork(LEARNER_STREAM)).context(|| ctx("episode"))?;
    let theta_sum = oracle
        .linear()
        .thetas()
        .iter()
        .fold(nalgebra::DVector::zeros(cfg.d), |acc, t| acc + t);
    let comparator = linear_comparator(&domain, &theta_sum);
    let report = compute_regret(&records, &oracle, &comparator).context(|| ctx("regret"))?;
    let steps = StepBoundStats::from_records(&records, setup.learner.step_bound());
    Ok(EpisodeOutcome {
        algorithm: setup.algorithm,
        rep,
        records,
        report,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bounds {
    pub expected: Option<f64>,
    pub high_probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub delta: f64,
    pub delta_clamped: bool,
    pub eta: f64,
    pub reps: usize,
    pub final_regrets: Vec<f64>,
    pub mean_regret: f64,
    pub median_regret: f64,
    pub max_regret: f64,
    /// Mean regret widened by `±2C` to cover the perturbed comparator.
    pub corrected_interval: (f64, f64),
    pub mean_linear_regret: f64,
    pub mean_budget_used: f64,
    pub max_budget_used: f64,
    pub clip_events: usize,
    pub step_bound: f64,
    pub step_violations: usize,
    pub step_hard_violations: usize,
    pub step_satisfied_fraction: f64,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub master_seed: u64,
    pub config_hash: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub d: usize,
    pub epsilon: f64,
    pub budget: f64,
    pub algorithms: BTreeMap<String, AlgorithmSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub trajectory_csv: Vec<PathBuf>,
    pub summary_json: PathBuf,
    pub table_csv: PathBuf,
    pub plot_svg: PathBuf,
    pub config: ExperimentConfig,
    pub summary: Summary,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn bounds_for(cfg: &ExperimentConfig, setup: &AlgorithmSetup, nu: f64, diameter: f64) -> Bounds {
    let inputs = BoundInputs {
        d: cfg.d,
        horizon: cfg.horizon,
        nu,
        delta: setup.delta,
        budget: cfg.budget(),
        loss_bound: cfg.loss_bound,
        diameter,
        gamma: cfg.gamma,
        eta: setup.learner.eta,
    };
    Bounds {
        expected: expected_bound(&inputs).ok(),
        high_probability: highprob_bound(&inputs).ok(),
    }
}

fn summarize(cfg: &ExperimentConfig, setup: &AlgorithmSetup, outcomes: &[&EpisodeOutcome]) -> AlgorithmSummary {
    let finals: Vec<f64> = outcomes.iter().map(|o| o.report.final_regret()).collect();
    let linear: Vec<f64> = outcomes
        .iter()
        .map(|o| o.report.linear_regret.last().copied().unwrap_or(0.0))
        .collect();
    let used: Vec<f64> = outcomes.iter().map(|o| o.report.budget_used).collect();
    let mean_regret = mean(&finals);
    let budget = cfg.budget();
    let barrier = &setup.learner.barrier;
    // The bound's D is the radius-type scale of the barrier: half the diameter.
    let scale = barrier.domain().diameter() / 2.0;
    let steps = outcomes.iter().fold((0, 0, 0), |acc, o| {
        (
            acc.0 + o.steps.rounds,
            acc.1 + o.steps.violations,
            acc.2 + o.steps.hard_violations,
        )
    });
    AlgorithmSummary {
        delta: setup.delta,
        delta_clamped: setup.delta_clamped,
        eta: setup.learner.eta,
        reps: outcomes.len(),
        mean_regret,
        median_regret: median(&finals),
        max_regret: finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        corrected_interval: (mean_regret - 2.0 * budget, mean_regret + 2.0 * budget),
        final_regrets: finals,
        mean_linear_regret: mean(&linear),
        mean_budget_used: mean(&used),
        max_budget_used: used.iter().copied().fold(0.0, f64::max),
        clip_events: outcomes.iter().map(|o| o.report.clip_events).sum(),
        step_bound: setup.learner.step_bound(),
        step_violations: steps.1,
        step_hard_violations: steps.2,
        step_satisfied_fraction: if steps.0 == 0 {
            1.0
        } else {
            1.0 - steps.1 as f64 / steps.0 as f64
        },
        bounds: bounds_for(cfg, setup, barrier.nu(), scale),
    }
}

/// Every repetition of every configured algorithm, sorted by (algorithm, rep).
pub fn run_episodes(cfg: &ExperimentConfig) -> Result<(Vec<AlgorithmSetup>, Vec<EpisodeOutcome>, Vec<String>)> {
    cfg.validate()?;
    let mut setups = Vec::new();
    let mut warnings = Vec::new();
    let mut algorithms = cfg.algorithms.clone();
    algorithms.sort();
    for alg in algorithms {
        let (setup, warning) = AlgorithmSetup::resolve(cfg, alg)?;
        if let Some(w) = warning {
            log::warn!("{w}");
            warnings.push(w);
        }
        setups.push(setup);
    }
    let jobs: Vec<(usize, usize)> = (0..setups.len())
        .flat_map(|a| (0..cfg.reps).map(move |r| (a, r)))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|&(a, rep)| run_single(cfg, &setups[a], rep))
        .collect::<Result<Vec<_>>>()?;
    Ok((setups, outcomes, warnings))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write_trajectories(path: &Path, cfg: &ExperimentConfig, hash: &str, outcomes: &[EpisodeOutcome]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# master_seed={}", cfg.master_seed).map_err(io_err(path))?;
    writeln!(out, "# config_hash={hash}").map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "run_id",
        "algorithm",
        "rep",
        "t",
        "loss",
        "cum_loss",
        "regret",
        "deviation_track",
        "sigma",
        "budget_used",
        "step_local_norm",
    ])?;
    for o in outcomes {
        let run_id = format!("{}-{}-r{}", &hash[..12], o.algorithm.name(), o.rep);
        let mut used = 0.0;
        for (i, r) in o.records.iter().enumerate() {
            let sigma = o.report.sigma[i];
            used += sigma.abs();
            w.write_record([
                run_id.as_str(),
                o.algorithm.name(),
                &o.rep.to_string(),
                &r.t.to_string(),
                &fmt(r.loss),
                &fmt(o.report.cumulative_loss[i]),
                &fmt(o.report.regret[i]),
                &fmt(o.report.deviation_track[i]),
                &fmt(sigma),
                &fmt(used),
                &fmt(r.step_local_norm),
            ])?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn table_rows(summary: &Summary) -> Vec<TableRow> {
    summary
        .algorithms
        .iter()
        .map(|(name, s)| TableRow {
            epsilon: summary.epsilon,
            algorithm: name.clone(),
            reps: s.reps,
            mean_regret: s.mean_regret,
            median_regret: s.median_regret,
            max_regret: s.max_regret,
            budget: summary.budget,
            mean_budget_used: s.mean_budget_used,
        })
        .collect()
}

/// Run all repetitions and write trajectories, summary, table, plot and the
/// resolved configuration into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    let (setups, outcomes, warnings) = run_episodes(cfg)?;
    let hash = cfg.hash()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut algorithms = BTreeMap::new();
    for setup in &setups {
        let mine: Vec<&EpisodeOutcome> = outcomes.iter().filter(|o| o.algorithm == setup.algorithm).collect();
        algorithms.insert(setup.algorithm.name().to_string(), summarize(cfg, setup, &mine));
    }
    let summary = Summary {
        master_seed: cfg.master_seed,
        config_hash: hash.clone(),
        horizon: cfg.horizon,
        d: cfg.d,
        epsilon: cfg.epsilon,
        budget: cfg.budget(),
        algorithms,
        warnings,
    };

    let trajectory = out_dir.join(TRAJECTORY_FILE);
    write_trajectories(&trajectory, cfg, &hash, &outcomes)?;
    let summary_json = out_dir.join(SUMMARY_FILE);
    write_text(&summary_json, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    let table_csv = out_dir.join(TABLE_FILE);
    let rows = table_rows(&summary);
    write_table(&table_csv, cfg.master_seed, &hash, &rows)?;
    let plot_svg = out_dir.join(PLOT_FILE);
    write_text(&plot_svg, &emit_plot(&rows, cfg.master_seed, &hash)?)?;
    let mut snapshot = cfg.clone();
    snapshot.out_dir = None;
    write_text(
        &out_dir.join(CONFIG_FILE),
        &format!("# config_hash = \"{hash}\"\n{}", snapshot.to_toml()?),
    )?;

    Ok(RunArtifacts {
        dir: out_dir.to_path_buf(),
        trajectory_csv: vec![trajectory],
        summary_json,
        table_csv,
        plot_svg,
        config: cfg.clone(),
        summary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepArtifacts {
    pub runs: Vec<RunArtifacts>,
    pub table_csv: PathBuf,
    pub plot_svg: PathBuf,
    pub rows: Vec<TableRow>,
}

pub fn epsilon_dir_name(epsilon: f64) -> String {
    format!("eps_{epsilon}")
}

/// One run per ε with the base seed, then an aggregate table and plot.
pub fn sweep(base: &ExperimentConfig, epsilons: &[f64], out_dir: &Path) -> Result<SweepArtifacts> {
    if epsilons.is_empty() {
        return Err(SimError::Config("sweep needs at least one epsilon".into()));
    }
    let mut runs = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        let mut cfg = base.clone();
        cfg.epsilon = epsilon;
        runs.push(run_experiment(&cfg, &out_dir.join(epsilon_dir_name(epsilon)))?);
    }
    let rows: Vec<TableRow> = runs.iter().flat_map(|r| table_rows(&r.summary)).collect();
    let mut base_snapshot = base.clone();
    base_snapshot.epsilon = 0.0;
    let hash = base_snapshot.hash()?;
    let table_csv = out_dir.join(TABLE_FILE);
    write_table(&table_csv, base.master_seed, &hash, &rows)?;
    let plot_svg = out_dir.join(PLOT_FILE);
    write_text(&plot_svg, &emit_plot(&rows, base.master_seed, &hash)?)?;
    Ok(SweepArtifacts {
        runs,
        table_csv,
        plot_svg,
        rows,
    })
}

/// Re-render `plot.svg` from the regret table in `dir`.
pub fn replot(dir: &Path) -> Result<PathBuf> {
    let table = dir.join(TABLE_FILE);
    if !table.is_file() {
        return Err(SimError::MissingArtifact(table));
    }
    let (seed, hash, rows) = read_table(&table)?;
    let path = dir.join(PLOT_FILE);
    write_text(&path, &emit_plot(&rows, seed, &hash)?)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// `f(x̂) - min f`.
    pub gap: f64,
    /// `C = εT`.
    pub budget: f64,
    /// Sequence-level regret floor `2C`.
    pub regret_floor: f64,
    pub best_round: usize,
    pub queries: usize,
}

/// Run a learner against the black-box adversary, convert its trajectory to a
/// single point and report the resulting optimization gap.
pub fn lowerbound_demo(epsilon: f64, learner: &LearnerConfig, seed: u64) -> Result<LowerBoundReport> {
    let domain = learner.barrier.domain().clone();
    let mut adversary = BlackBoxAdversary::new(epsilon, domain).context(|| "adversary".into())?;
    let stream = RngStream::new(seed, 0);
    let records = run_episode(learner, &mut adversary, &mut stream.fork(LEARNER_STREAM))
        .context(|| "lower-bound episode".into())?;
    let best = best_iterate(&records).ok_or_else(|| SimError::Config("T must be at least 1".into()))?;
    let gap = adversary
        .finalize(&best.y, &mut stream.fork(FINALIZE_STREAM))
        .context(|| "finalize".into())?;
    let budget = epsilon * learner.horizon as f64;
    Ok(LowerBoundReport {
        epsilon,
        horizon: learner.horizon,
        gap,
        budget,
        regret_floor: 2.0 * budget,
        best_round: best.t,
        queries: adversary.queried().len(),
    })
}
