//! Command-line front end; all real work lives in the library.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 gradient
//! verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use difftraffic::config::ExperimentConfig;
use difftraffic::harness::{
    run_bench_jacobian, run_check_gradients, run_evaluate, run_simulate, run_train, GlobalOpts,
};
use difftraffic::ppo::Algorithm;
use difftraffic::Error;

#[derive(Parser)]
#[command(
    name = "difftraffic",
    version,
    about = "Differentiable single-lane traffic simulation and gradient-enhanced RL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Added to every seed from the config.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,

    /// Parallel seed runs (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run an uncontrolled or replayed-action rollout and write the trace.
    Simulate {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Steps to run (default: the scenario horizon).
        #[arg(long)]
        steps: Option<usize>,
        /// Replay file with one acceleration per line for the controlled
        /// vehicle.
        #[arg(long)]
        actions: Option<PathBuf>,
        /// Output directory (default: the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train PPO or DiffPPO over all seeds and write training curves.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's algorithm (ppo | diffppo).
        #[arg(long)]
        algo: Option<String>,
        /// Override the perturbation threshold delta.
        #[arg(long)]
        delta: Option<f64>,
        /// Run the preset delta sweep {0.1, 0.2, 0.4}.
        #[arg(long)]
        delta_sweep: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved policy with deterministic mean actions.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Policy file written by `train`.
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Verify analytical gradients against finite differences.
    CheckGradients {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Test hook: corrupt one Jacobian term to prove the check fails.
        #[arg(long, hide = true)]
        corrupt_jacobian: bool,
    },
    /// Time analytical vs finite-difference Jacobians.
    BenchJacobian {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV file to append the result row to.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    let opts = GlobalOpts {
        jobs: cli.jobs.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        }),
        seed_offset: cli.seed_offset,
        quiet: cli.quiet,
    };

    match run(cli.command, &opts) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::VerificationFailed(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command, opts: &GlobalOpts) -> difftraffic::Result<ExitCode> {
    match command {
        Command::Simulate {
            config,
            steps,
            actions,
            out,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let out = out.unwrap_or_else(|| PathBuf::from(&config.output_dir));
            let summary = run_simulate(&config, steps, actions.as_deref(), &out, opts)?;
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            config,
            algo,
            delta,
            delta_sweep,
            out,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let algo = match algo {
                Some(s) => Some(s.parse::<Algorithm>()?),
                None => None,
            };
            let out = out.unwrap_or_else(|| PathBuf::from(&config.output_dir));
            let artifacts = run_train(&config, algo, delta, delta_sweep, &out, opts)?;
            for a in &artifacts {
                println!(
                    "{}: aggregate {}, best policy {}",
                    a.label,
                    a.aggregate_path.display(),
                    a.best_policy_path.display()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            config,
            policy,
            episodes,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let metrics = run_evaluate(&config, &policy, episodes, opts)?;
            println!("{}", serde_json::to_string_pretty(&metrics).unwrap());
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckGradients {
            config,
            trials,
            corrupt_jacobian,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let report = run_check_gradients(&config, trials, corrupt_jacobian, opts)?;
            for s in &report.surfaces {
                println!(
                    "{}: max error {:.3e} (tolerance {:.0e}) {}",
                    s.name,
                    s.max_error,
                    s.tolerance,
                    if s.passed() { "ok" } else { "FAIL" }
                );
            }
            if report.passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
        Command::BenchJacobian {
            n,
            iters,
            seed,
            out,
        } => {
            let report = run_bench_jacobian(n, iters, seed, out.as_deref(), opts)?;
            println!(
                "n={} iters={} analytical_s={:.6} fd_s={:.6} speedup={:.2}",
                report.n, report.iters, report.analytical_s, report.fd_s, report.speedup
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
