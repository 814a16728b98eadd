//! File-producing entry points behind the command-line tool.
//!
//! Every function here is deterministic in its data outputs given the config
//! and seeds; only wall-clock columns vary between runs. All files land
//! under the given output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bench::{bench_csv_row, jacobian_benchmark, BenchReport, BENCH_CSV_HEADER};
use crate::config::ExperimentConfig;
use crate::env::{observe, simulate, ScenarioConfig, SimulationRun, TrafficEnv};
use crate::jacobian::{
    finite_difference_jacobian, sample_interior_state, step_jacobian,
};
use crate::policy::GaussianPolicy;
use crate::ppo::Algorithm;
use crate::reward::{combined_reward, jerk_penalty, reward_grad_state};
use crate::sim::step;
use crate::trainer::{
    aggregate_metrics, train_single_seed, AggregateRow, IterationMetrics, SeedRunResult,
};
use crate::{Error, Result};

/// Options shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct GlobalOpts {
    /// Parallel seed runs; defaults to available parallelism.
    pub jobs: usize,
    /// Added to every seed in the config.
    pub seed_offset: u64,
    pub quiet: bool,
}

impl Default for GlobalOpts {
    fn default() -> Self {
        GlobalOpts {
            jobs: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            seed_offset: 0,
            quiet: true,
        }
    }
}

macro_rules! status {
    ($opts:expr, $($arg:tt)*) => {
        if !$opts.quiet {
            println!($($arg)*);
        }
    };
}

/// Summary written by `simulate`.
#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub mean_flow: f64,
    pub total_fuel_gal: f64,
    pub collision_count: usize,
}

pub const TRACE_CSV_HEADER: &str = "step,vehicle,x,v,accel,fuel_rate,overridden";

/// Runs an uncontrolled (or replayed-action) rollout and writes
/// `trace.csv` and `summary.json` under `out_dir`.
pub fn run_simulate(
    config: &ExperimentConfig,
    steps: Option<usize>,
    actions_path: Option<&Path>,
    out_dir: &Path,
    opts: &GlobalOpts,
) -> Result<SimulateSummary> {
    let scenario = config.scenario_config();
    let seed = first_seed(config, opts)?;
    let actions = match actions_path {
        Some(path) => Some(read_actions(path)?),
        None => None,
    };
    let steps = steps.unwrap_or(scenario.horizon);
    let run = simulate(&scenario, seed, steps, actions.as_deref())?;

    fs::create_dir_all(out_dir)?;
    write_trace_csv(&out_dir.join("trace.csv"), &run)?;
    let summary = SimulateSummary {
        mean_flow: run.mean_flow,
        total_fuel_gal: run.total_fuel_gal,
        collision_count: run.collision_count,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(out_dir.join("summary.json"), json + "\n")?;
    status!(
        opts,
        "simulate: {} steps, mean_flow {:.4} m/s, fuel {:.6} gal, collisions {}",
        run.steps_completed,
        run.mean_flow,
        run.total_fuel_gal,
        run.collision_count
    );
    Ok(summary)
}

fn read_actions(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read actions {}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad action '{l}': {e}")))
        })
        .collect()
}

fn write_trace_csv(path: &Path, run: &SimulationRun) -> Result<()> {
    let mut out = String::with_capacity(64 * (run.rows.len() + 1));
    out.push_str(TRACE_CSV_HEADER);
    out.push('\n');
    for row in &run.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.step,
            row.vehicle,
            row.x,
            row.v,
            row.accel,
            row.fuel_rate,
            u8::from(row.overridden)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

fn first_seed(config: &ExperimentConfig, opts: &GlobalOpts) -> Result<u64> {
    config
        .seeds
        .first()
        .map(|s| s.wrapping_add(opts.seed_offset))
        .ok_or_else(|| Error::Config("seed list is empty".into()))
}

/// Everything `train` produced for one algorithm/delta combination.
#[derive(Debug)]
pub struct TrainArtifacts {
    pub label: String,
    pub runs: Vec<SeedRunResult>,
    pub failures: Vec<(u64, String)>,
    pub aggregate: Vec<AggregateRow>,
    pub aggregate_path: PathBuf,
    pub best_policy_path: PathBuf,
    /// Largest `|eps * ds/da|_inf` seen and the number of bound violations,
    /// both totalled over all seeds.
    pub max_bound_product: f64,
    pub bound_violations: usize,
}

impl TrainArtifacts {
    pub fn best_run(&self) -> Option<&SeedRunResult> {
        self.runs
            .iter()
            .max_by(|a, b| a.final_mean_reward(10).total_cmp(&b.final_mean_reward(10)))
    }
}

pub const TRAIN_CSV_HEADER: &str =
    "iteration,mean_reward,std_reward,mean_r_vel,mean_r_mpg,mean_jerk_pen,collisions,wall_time_s";
pub const AGGREGATE_CSV_HEADER: &str =
    "iteration,mean_reward_mean,mean_reward_std,r_vel_mean,r_mpg_mean,jerk_pen_mean,collisions_mean";

/// Trains all seeds (in parallel up to `opts.jobs`), writing per-seed CSVs,
/// an aggregate CSV, per-seed policies, and the best policy per
/// algorithm/delta label. With `delta_sweep` the perturbation threshold runs
/// over {0.1, 0.2, 0.4}.
pub fn run_train(
    config: &ExperimentConfig,
    algo_override: Option<Algorithm>,
    delta_override: Option<f64>,
    delta_sweep: bool,
    out_dir: &Path,
    opts: &GlobalOpts,
) -> Result<Vec<TrainArtifacts>> {
    let scenario = config.scenario_config();
    let mut train_cfg = config.train_config();
    if let Some(algo) = algo_override {
        train_cfg.algorithm = algo;
    }
    let mut pert = config.perturbation_config();
    if let Some(delta) = delta_override {
        pert.delta = delta;
    }
    let seeds: Vec<u64> = config
        .seeds
        .iter()
        .map(|s| s.wrapping_add(opts.seed_offset))
        .collect();
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }

    let deltas: Vec<f64> = if delta_sweep {
        vec![0.1, 0.2, 0.4]
    } else {
        vec![pert.delta]
    };

    fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let algo_name = match train_cfg.algorithm {
        Algorithm::Ppo => "ppo",
        Algorithm::DiffPpo => "diffppo",
    };
    let mut artifacts = Vec::new();
    for delta in deltas {
        let mut pert_run = pert;
        pert_run.delta = delta;
        let label = if delta_sweep {
            format!("{algo_name}_delta{delta}")
        } else {
            algo_name.to_string()
        };
        status!(opts, "training {label}: {} seeds", seeds.len());

        let results: Vec<(u64, std::result::Result<SeedRunResult, String>)> = pool.install(|| {
            use rayon::prelude::*;
            seeds
                .par_iter()
                .map(|&seed| {
                    let run = train_single_seed(&scenario, &train_cfg, &pert_run, seed)
                        .map_err(|e| e.to_string());
                    (seed, run)
                })
                .collect()
        });

        let mut runs = Vec::new();
        let mut failures = Vec::new();
        for (seed, result) in results {
            match result {
                Ok(run) => runs.push(run),
                Err(e) => failures.push((seed, e)),
            }
        }
        for (seed, e) in &failures {
            eprintln!("seed {seed} failed: {e}");
        }
        if runs.is_empty() {
            return Err(Error::Config(format!("every seed of {label} failed")));
        }

        for run in &runs {
            let path = out_dir.join(format!("{label}_seed{}.csv", run.seed));
            write_training_csv(&path, &run.metrics)?;
            run.policy
                .save(&out_dir.join(format!("{label}_seed{}_policy.bin", run.seed)))?;
        }
        let aggregate = aggregate_metrics(&runs);
        let aggregate_path = out_dir.join(format!("{label}_aggregate.csv"));
        write_aggregate_csv(&aggregate_path, &aggregate)?;

        let best = runs
            .iter()
            .max_by(|a, b| a.final_mean_reward(10).total_cmp(&b.final_mean_reward(10)))
            .expect("at least one run");
        let best_policy_path = out_dir.join(format!("{label}_best_policy.bin"));
        best.policy.save(&best_policy_path)?;
        status!(
            opts,
            "{label}: best seed {} final-10 mean reward {:.3}",
            best.seed,
            best.final_mean_reward(10)
        );

        let max_bound_product = runs
            .iter()
            .map(|r| r.audit.max_bound_product)
            .fold(0.0, f64::max);
        let bound_violations = runs.iter().map(|r| r.audit.violations).sum();
        artifacts.push(TrainArtifacts {
            label,
            runs,
            failures,
            aggregate,
            aggregate_path,
            best_policy_path,
            max_bound_product,
            bound_violations,
        });
    }
    Ok(artifacts)
}

fn write_training_csv(path: &Path, metrics: &[IterationMetrics]) -> Result<()> {
    let mut out = String::new();
    out.push_str(TRAIN_CSV_HEADER);
    out.push('\n');
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            m.iteration,
            m.mean_reward,
            m.std_reward,
            m.mean_r_vel,
            m.mean_r_mpg,
            m.mean_jerk_pen,
            m.collisions,
            m.wall_time_s
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut out = String::new();
    out.push_str(AGGREGATE_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iteration,
            r.mean_reward_mean,
            r.mean_reward_std,
            r.r_vel_mean,
            r.r_mpg_mean,
            r.jerk_pen_mean,
            r.collisions_mean
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Societal metrics of a trained policy under deterministic (mean-action)
/// rollouts.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalMetrics {
    /// Time-averaged mean velocity (m/s), averaged over episodes.
    pub mean_flow: f64,
    /// Gallons consumed per vehicle per episode.
    pub fuel_per_vehicle_gal: f64,
    /// Mean absolute action change per step.
    pub mean_jerk: f64,
    pub episodes: usize,
    pub collisions: usize,
}

/// Evaluates a saved policy over deterministic rollouts.
pub fn run_evaluate(
    config: &ExperimentConfig,
    policy_path: &Path,
    episodes: usize,
    opts: &GlobalOpts,
) -> Result<EvalMetrics> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let scenario = config.scenario_config();
    let policy = GaussianPolicy::load(policy_path)?;
    if policy.obs_dim() != 2 * scenario.vehicle_count {
        return Err(Error::PolicyFormat(format!(
            "policy expects {} observation entries but the scenario produces {}",
            policy.obs_dim(),
            2 * scenario.vehicle_count
        )));
    }
    let base_seed = first_seed(config, opts)?;
    evaluate_policy(&scenario, &policy, episodes, base_seed).map(|m| {
        status!(
            opts,
            "evaluate: mean_flow {:.4} m/s, fuel/vehicle {:.6} gal, mean jerk {:.4}",
            m.mean_flow,
            m.fuel_per_vehicle_gal,
            m.mean_jerk
        );
        m
    })
}

/// Deterministic mean-action rollouts of a policy.
///
/// The flow metric is averaged over the full horizon: an episode that ends
/// in a collision contributes zero flow for its remaining steps, so
/// crash-prone policies cannot score well on truncated episodes.
pub fn evaluate_policy(
    scenario: &ScenarioConfig,
    policy: &GaussianPolicy,
    episodes: usize,
    base_seed: u64,
) -> Result<EvalMetrics> {
    let mut flow_sum = 0.0;
    let mut fuel_total = 0.0;
    let mut jerk_sum = 0.0;
    let mut jerk_steps = 0usize;
    let mut collisions = 0usize;
    for episode in 0..episodes {
        let seed = base_seed
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(episode as u64);
        let mut env = TrafficEnv::new(scenario.clone(), seed)?;
        let mut prev_action = 0.0;
        let mut episode_flow = 0.0;
        loop {
            let obs = observe(env.state(), scenario);
            let action = policy.mean_action(obs.as_slice());
            let step = env.step(action)?;
            episode_flow += step.terms.velocity;
            jerk_sum += jerk_penalty(action, prev_action);
            jerk_steps += 1;
            prev_action = action;
            for (i, veh) in env.state().vehicles.iter().enumerate() {
                fuel_total +=
                    scenario.fuel.rate(veh.velocity, step.accelerations[i]) * scenario.step.dt;
            }
            if step.collided {
                collisions += 1;
            }
            if step.done {
                break;
            }
        }
        flow_sum += episode_flow / scenario.horizon as f64;
    }
    Ok(EvalMetrics {
        mean_flow: flow_sum / episodes as f64,
        fuel_per_vehicle_gal: fuel_total / episodes as f64 / scenario.vehicle_count as f64,
        mean_jerk: jerk_sum / jerk_steps.max(1) as f64,
        episodes,
        collisions,
    })
}

/// Mean flow of the uncontrolled (all-IDM) scenario under the same episode
/// protocol and full-horizon convention as [`evaluate_policy`]; the baseline
/// a trained policy must beat.
pub fn uncontrolled_mean_flow(
    scenario: &ScenarioConfig,
    episodes: usize,
    base_seed: u64,
) -> Result<f64> {
    let mut flow_sum = 0.0;
    for episode in 0..episodes {
        let seed = base_seed
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(episode as u64);
        let run = simulate(scenario, seed, scenario.horizon, None)?;
        flow_sum += run.mean_flow * run.steps_completed as f64 / scenario.horizon as f64;
    }
    Ok(flow_sum / episodes as f64)
}

/// One verification surface of `check-gradients`.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceReport {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
}

impl SurfaceReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

/// Report of all three gradient surfaces.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub surfaces: Vec<SurfaceReport>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.surfaces.iter().all(SurfaceReport::passed)
    }
}

/// Compares every analytical gradient surface against finite differences on
/// randomized states: the step Jacobian, the action sensitivity of the
/// environment, and the reward gradient. `corrupt_jacobian` injects a small
/// error into the analytical Jacobian to prove the check can fail.
pub fn run_check_gradients(
    config: &ExperimentConfig,
    trials: usize,
    corrupt_jacobian: bool,
    opts: &GlobalOpts,
) -> Result<CheckReport> {
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let scenario = config.scenario_config();
    let params = scenario.idm;
    let cfg = scenario.step;
    let mut rng = ChaCha8Rng::seed_from_u64(first_seed(config, opts)?);

    // Surface 1: step Jacobian vs central differences.
    let mut max_jac = 0.0_f64;
    for trial in 0..trials {
        let ring = trial % 2 == 0;
        let n = scenario.vehicle_count.max(2);
        let state = sample_interior_state(&mut rng, n, ring, &params, &cfg);
        let out = step(&state, &params, &cfg, None)?;
        let analytical = step_jacobian(&state, &params, &cfg, &out.clipped)?;
        let mut dense = analytical.to_dense();
        if corrupt_jacobian {
            dense[(1, 0)] += 1e-3;
        }
        let numerical = finite_difference_jacobian(&state, &params, &cfg, 1e-5)?;
        max_jac = max_jac.max((dense - numerical).abs().max());
    }

    // Surface 2: action sensitivity vs differencing the next observation.
    let mut max_sens = 0.0_f64;
    let env_proto = TrafficEnv::new(scenario.clone(), 17)?;
    let h = 1e-6;
    for trial in 0..trials {
        let mut env = env_proto.clone();
        if env.is_done() {
            env.reset(trial as u64)?;
        }
        // Walk a few random steps in, then probe an interior action.
        for _ in 0..(trial % 5) {
            use rand::Rng;
            let a = rng.gen_range(cfg.action_min * 0.5..cfg.action_max * 0.5);
            if env.step(a)?.done {
                env.reset(trial as u64)?;
            }
        }
        use rand::Rng;
        let action = rng.gen_range(cfg.action_min * 0.8..cfg.action_max * 0.8);
        let mut env_plus = env.clone();
        let mut env_minus = env.clone();
        let mut env_mid = env;
        let plus = env_plus.step(action + h)?.observation;
        let minus = env_minus.step(action - h)?.observation;
        let mid = env_mid.step(action)?.unit;
        if mid.gradient_blocked {
            continue;
        }
        for k in 0..plus.len() {
            let fd = (plus.0[k] - minus.0[k]) / (2.0 * h);
            max_sens = max_sens.max((fd - mid.next_obs_grad_action[k]).abs());
        }
    }

    // Surface 3: reward gradient vs differencing the combined reward.
    let mut max_reward = 0.0_f64;
    let h_r = 1e-6;
    for _ in 0..trials {
        use rand::Rng;
        let n = scenario.vehicle_count;
        let state = sample_interior_state(&mut rng, n, true, &params, &cfg);
        let accels: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let grad = reward_grad_state(&state, &accels, &scenario.weights, &scenario.fuel)?;
        for slot in 0..2 * n {
            let mut flat = state.flatten();
            flat[slot] += h_r;
            let mut plus = state.clone();
            plus.assign_flat(&flat)?;
            flat[slot] -= 2.0 * h_r;
            let mut minus = state.clone();
            minus.assign_flat(&flat)?;
            let r_plus =
                combined_reward(&plus, &accels, 0.4, 0.1, &scenario.weights, &scenario.fuel)?;
            let r_minus =
                combined_reward(&minus, &accels, 0.4, 0.1, &scenario.weights, &scenario.fuel)?;
            let fd = (r_plus - r_minus) / (2.0 * h_r);
            max_reward = max_reward.max((grad[slot] - fd).abs());
        }
    }

    let report = CheckReport {
        surfaces: vec![
            SurfaceReport {
                name: "step_jacobian",
                max_error: max_jac,
                tolerance: 1e-6,
            },
            SurfaceReport {
                name: "action_sensitivity",
                max_error: max_sens,
                tolerance: 1e-6,
            },
            SurfaceReport {
                name: "reward_grad_state",
                max_error: max_reward,
                tolerance: 1e-7,
            },
        ],
    };
    for s in &report.surfaces {
        status!(
            opts,
            "{}: max error {:.3e} (tolerance {:.0e}) {}",
            s.name,
            s.max_error,
            s.tolerance,
            if s.passed() { "ok" } else { "FAIL" }
        );
    }
    Ok(report)
}

/// Runs the Jacobian runtime benchmark, appending a CSV row per call.
pub fn run_bench_jacobian(
    n: usize,
    iters: usize,
    seed: u64,
    out: Option<&Path>,
    opts: &GlobalOpts,
) -> Result<BenchReport> {
    let report = jacobian_benchmark(n, iters, seed)?;
    status!(
        opts,
        "bench: n={} iters={} analytical {:.4}s fd {:.4}s speedup {:.1}x",
        report.n,
        report.iters,
        report.analytical_s,
        report.fd_s,
        report.speedup
    );
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let exists = path.exists();
        let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
        if !exists {
            writeln!(file, "{BENCH_CSV_HEADER}")?;
        }
        writeln!(file, "{}", bench_csv_row(&report))?;
    }
    Ok(report)
}

/// Uncontrolled ring diagnostics used by tests and examples: velocity
/// variance at two checkpoints of a long uncontrolled run.
pub fn wave_growth_diagnostic(
    scenario: &ScenarioConfig,
    seed: u64,
    early_step: usize,
    late_step: usize,
) -> Result<(f64, f64)> {
    let run = simulate(scenario, seed, late_step, None)?;
    let variance_at = |step: usize| -> f64 {
        let velocities: Vec<f64> = run
            .rows
            .iter()
            .filter(|r| r.step == step)
            .map(|r| r.v)
            .collect();
        let n = velocities.len() as f64;
        if n == 0.0 {
            return f64::NAN;
        }
        let mean = velocities.iter().sum::<f64>() / n;
        velocities.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
    };
    Ok((variance_at(early_step), variance_at(late_step)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulate_is_byte_deterministic() {
        let mut config = ExperimentConfig::unstable_ring();
        config.scenario.vehicle_count = 6;
        config.scenario.track_length = 120.0;
        config.scenario.horizon = 30;
        config.scenario.warmup_steps = 5;
        let opts = GlobalOpts::default();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_simulate(&config, Some(25), None, dir_a.path(), &opts).unwrap();
        run_simulate(&config, Some(25), None, dir_b.path(), &opts).unwrap();
        for name in ["trace.csv", "summary.json"] {
            let a = fs::read(dir_a.path().join(name)).unwrap();
            let b = fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }

    #[test]
    fn simulate_zero_steps_writes_header_only() {
        let mut config = ExperimentConfig::unstable_ring();
        config.scenario.vehicle_count = 6;
        config.scenario.track_length = 120.0;
        config.scenario.warmup_steps = 5;
        let dir = tempfile::tempdir().unwrap();
        let summary = run_simulate(
            &config,
            Some(0),
            None,
            dir.path(),
            &GlobalOpts::default(),
        )
        .unwrap();
        assert_eq!(summary.mean_flow, 0.0);
        assert_eq!(summary.total_fuel_gal, 0.0);
        let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert_eq!(trace.trim_end(), TRACE_CSV_HEADER);
    }

    #[test]
    fn evaluate_rejects_zero_episodes() {
        let config = ExperimentConfig::unstable_ring();
        let dir = tempfile::tempdir().unwrap();
        let policy_path = dir.path().join("p.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        GaussianPolicy::new(
            &crate::policy::PolicySpec::default(),
            28,
            -1.0,
            1.0,
            &mut rng,
        )
        .save(&policy_path)
        .unwrap();
        assert!(run_evaluate(&config, &policy_path, 0, &GlobalOpts::default()).is_err());
    }

    #[test]
    fn check_gradients_passes_clean_and_fails_corrupted() {
        let mut config = ExperimentConfig::unstable_ring();
        config.scenario.vehicle_count = 4;
        config.scenario.track_length = 100.0;
        config.scenario.warmup_steps = 5;
        config.scenario.horizon = 40;
        let opts = GlobalOpts::default();
        let clean = run_check_gradients(&config, 6, false, &opts).unwrap();
        assert!(clean.passed(), "{:?}", clean.surfaces);
        let corrupted = run_check_gradients(&config, 6, true, &opts).unwrap();
        assert!(!corrupted.passed());
    }

    #[test]
    fn bench_csv_appends_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.csv");
        let opts = GlobalOpts::default();
        run_bench_jacobian(4, 3, 0, Some(&path), &opts).unwrap();
        run_bench_jacobian(8, 3, 0, Some(&path), &opts).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with(BENCH_CSV_HEADER));
    }
}
