use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scrible_core::{delta_policy, Barrier, LearnerConfig};
use scrible_sim::config::ExperimentConfig;
use scrible_sim::{lowerbound_demo, replot, run_experiment, sweep, verify, SimError, Suite, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "scrible", version, about = "Bandit optimization with budgeted perturbations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every repetition of every configured algorithm.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override master_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run once per epsilon with paired seeds and plot mean regret against epsilon.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilons: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run property checks; all suites when none are named.
    Verify {
        #[arg(long, value_delimiter = ',')]
        suite: Vec<Suite>,
    },
    /// Play a learner against the black-box adversary.
    Lowerbound {
        #[arg(long)]
        epsilon: f64,
        #[arg(long = "T")]
        horizon: usize,
        /// Take domain and learning rate from this config (defaults to the published setting).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-render plot.svg from a run or sweep directory.
    Plot {
        #[arg(long = "from")]
        from: PathBuf,
    },
}

fn out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("scrible-out"))
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, SimError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<ExitCode, SimError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out_dir: dir,
        } => {
            let cfg = load(&config, seed)?;
            let dir = out_dir(dir, &cfg);
            let run = run_experiment(&cfg, &dir)?;
            for (name, s) in &run.summary.algorithms {
                println!(
                    "{name}: mean regret {:.3}, median {:.3}, max {:.3} over {} reps",
                    s.mean_regret, s.median_regret, s.max_regret, s.reps
                );
            }
            println!("artifacts in {}", dir.display());
        }
        Command::Sweep {
            config,
            epsilons,
            seed,
            out_dir: dir,
        } => {
            let cfg = load(&config, seed)?;
            let dir = out_dir(dir, &cfg);
            let result = sweep(&cfg, &epsilons, &dir)?;
            println!("{:>8}  {:<18} {:>12}", "epsilon", "algorithm", "mean regret");
            for row in &result.rows {
                println!("{:>8}  {:<18} {:>12.3}", row.epsilon, row.algorithm, row.mean_regret);
            }
            println!("plot: {}", result.plot_svg.display());
        }
        Command::Verify { suite } => {
            let suites = if suite.is_empty() { Suite::ALL.to_vec() } else { suite };
            let report = verify(&suites);
            for c in &report.checks {
                println!(
                    "{} {:<12} samples={:<7} worst_margin={:.3e}  {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.samples,
                    c.worst_margin,
                    c.detail
                );
            }
            if !report.passed() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Lowerbound {
            epsilon,
            horizon,
            config,
            seed,
        } => {
            let cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::published(epsilon),
            };
            let delta = delta_policy(epsilon * horizon as f64, horizon)
                .map_err(|e| SimError::Config(e.to_string()))?
                .delta;
            let learner = LearnerConfig::new(Barrier::new(cfg.domain()?), horizon, delta, cfg.eta.preset())
                .map_err(|e| SimError::Config(e.to_string()))?;
            let report = lowerbound_demo(epsilon, &learner, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Plot { from } => {
            println!("{}", replot(&from)?.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors share the config-error code; 2 is reserved for verify failures.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
