//! Training orchestration: rollout collection, the PPO / DiffPPO iteration
//! loop, per-seed runs, and cross-seed aggregation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ExperienceUnit, ScenarioConfig, TrafficEnv};
use crate::policy::{GaussianPolicy, ValueNet};
use crate::ppo::{
    compute_gae, normalize_advantages, perturb_experience, ppo_update, Algorithm, BatchSample,
    Optimizers, PerturbationConfig, TrainConfig,
};
use crate::{Error, Result};

/// One collected step: the experience unit plus the log probability of its
/// action under the collecting policy.
#[derive(Debug, Clone)]
pub struct RolloutStep {
    pub unit: ExperienceUnit,
    pub log_prob: f64,
    /// The action preceding this step (the jerk reference), needed by the
    /// experience perturbation.
    pub prev_action: f64,
    /// Raw reward terms of the step, kept for metrics.
    pub velocity_term: f64,
    pub mpg_term: f64,
    pub jerk_term: f64,
    pub collided: bool,
}

/// Per-episode totals used for the training log.
#[derive(Debug, Clone, Copy, Default)]
pub struct EpisodeStats {
    pub total_reward: f64,
    pub mean_velocity_term: f64,
    pub mean_mpg_term: f64,
    pub mean_jerk_term: f64,
    pub steps: usize,
    pub collided: bool,
}

/// Accumulates episode statistics across rollout boundaries.
#[derive(Debug, Clone, Copy, Default)]
pub struct EpisodeTracker {
    reward: f64,
    velocity: f64,
    mpg: f64,
    jerk: f64,
    steps: usize,
}

impl EpisodeTracker {
    fn push(&mut self, step: &RolloutStep) -> Option<EpisodeStats> {
        self.reward += step.unit.reward;
        self.velocity += step.velocity_term;
        self.mpg += step.mpg_term;
        self.jerk += step.jerk_term;
        self.steps += 1;
        if step.unit.done {
            let n = self.steps as f64;
            let stats = EpisodeStats {
                total_reward: self.reward,
                mean_velocity_term: self.velocity / n,
                mean_mpg_term: self.mpg / n,
                mean_jerk_term: self.jerk / n,
                steps: self.steps,
                collided: step.collided,
            };
            *self = EpisodeTracker::default();
            Some(stats)
        } else {
            None
        }
    }
}

/// A fixed-length batch of on-policy experience.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub steps: Vec<RolloutStep>,
    pub completed_episodes: Vec<EpisodeStats>,
}

/// Collects exactly `steps` units, resetting the environment whenever an
/// episode ends (reset seeds are drawn from the rollout stream, so the whole
/// collection is deterministic in `seed`). Episodes may span rollout
/// boundaries; `tracker` carries the partial sums across calls.
pub fn collect_rollout(
    env: &mut TrafficEnv,
    policy: &GaussianPolicy,
    steps: usize,
    seed: u64,
    tracker: &mut EpisodeTracker,
) -> Result<Rollout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rollout = Rollout {
        steps: Vec::with_capacity(steps),
        completed_episodes: Vec::new(),
    };
    for _ in 0..steps {
        if env.is_done() {
            env.reset(rng.gen())?;
        }
        let obs = crate::env::observe(env.state(), env.config());
        let (action, log_prob) = policy.sample(obs.as_slice(), &mut rng);
        let step = env.step(action)?;
        let rollout_step = RolloutStep {
            unit: step.unit,
            log_prob,
            prev_action: step.prev_action,
            velocity_term: step.terms.velocity,
            mpg_term: step.terms.mpg,
            jerk_term: step.terms.jerk,
            collided: step.collided,
        };
        if let Some(episode) = tracker.push(&rollout_step) {
            rollout.completed_episodes.push(episode);
        }
        rollout.steps.push(rollout_step);
    }
    Ok(rollout)
}

/// Bookkeeping of every perturbation applied during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PerturbationAudit {
    pub units_seen: usize,
    pub units_perturbed: usize,
    /// Largest observed `|eps * ds/da|_inf` over all perturbed units.
    pub max_bound_product: f64,
    /// Count of units where the bound `|eps * ds/da|_inf <= delta` failed.
    pub violations: usize,
}

/// Applies the experience perturbation in place and re-evaluates the stored
/// log probabilities at the shifted actions under the collecting policy.
pub fn perturb_rollout(
    rollout: &mut Rollout,
    policy: &GaussianPolicy,
    cfg: &PerturbationConfig,
    jerk_weight: f64,
    audit: &mut PerturbationAudit,
) {
    let (action_min, action_max) = policy.action_bounds();
    for step in &mut rollout.steps {
        audit.units_seen += 1;
        let (perturbed, eps) = perturb_experience(
            &step.unit,
            cfg,
            action_min,
            action_max,
            step.prev_action,
            jerk_weight,
        );
        if eps != 0.0 {
            audit.units_perturbed += 1;
            let product = step
                .unit
                .next_obs_grad_action
                .iter()
                .fold(0.0_f64, |m, g| m.max((eps * g).abs()));
            audit.max_bound_product = audit.max_bound_product.max(product);
            if product > cfg.delta {
                audit.violations += 1;
            }
            step.log_prob = policy.log_prob(step.unit.obs.as_slice(), perturbed.action);
            step.unit = perturbed;
        }
    }
}

/// One row of the per-seed training log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_r_vel: f64,
    pub mean_r_mpg: f64,
    pub mean_jerk_pen: f64,
    pub collisions: usize,
    /// Seconds elapsed since the start of this seed's run.
    pub wall_time_s: f64,
}

/// Everything produced by one seed's training run.
#[derive(Debug, Clone)]
pub struct SeedRunResult {
    pub seed: u64,
    pub metrics: Vec<IterationMetrics>,
    pub policy: GaussianPolicy,
    pub audit: PerturbationAudit,
}

impl SeedRunResult {
    /// Mean reward over the final `k` iterations.
    pub fn final_mean_reward(&self, k: usize) -> f64 {
        let rows = &self.metrics[self.metrics.len().saturating_sub(k)..];
        if rows.is_empty() {
            return f64::NAN;
        }
        rows.iter().map(|m| m.mean_reward).sum::<f64>() / rows.len() as f64
    }
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    // SplitMix64 over the (seed, stream) pair.
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains one seed: collect, optionally perturb, estimate advantages,
/// update, repeat.
pub fn train_single_seed(
    scenario: &ScenarioConfig,
    train: &TrainConfig,
    perturbation: &PerturbationConfig,
    seed: u64,
) -> Result<SeedRunResult> {
    scenario.validate()?;
    train.validate()?;
    perturbation.validate()?;

    let start = Instant::now();
    let obs_dim = 2 * scenario.vehicle_count;
    let mut env = TrafficEnv::new(scenario.clone(), derive_seed(seed, 0))?;
    let mut policy_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut policy = GaussianPolicy::new(
        &train.policy,
        obs_dim,
        scenario.step.action_min,
        scenario.step.action_max,
        &mut policy_rng,
    );
    let mut value_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let mut value = ValueNet::new(&train.policy, obs_dim, &mut value_rng);
    let mut opt = Optimizers::new(&policy, &value, train.learning_rate);
    let mut update_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));

    let mut tracker = EpisodeTracker::default();
    let mut audit = PerturbationAudit::default();
    let mut metrics = Vec::with_capacity(train.iterations);
    let mut last_episode: Option<EpisodeStats> = None;

    for iteration in 1..=train.iterations {
        let mut rollout = collect_rollout(
            &mut env,
            &policy,
            train.steps_per_iteration,
            derive_seed(seed, 100 + iteration as u64),
            &mut tracker,
        )?;

        if train.algorithm == Algorithm::DiffPpo {
            perturb_rollout(
                &mut rollout,
                &policy,
                perturbation,
                scenario.weights.jerk,
                &mut audit,
            );
        }

        let n = rollout.steps.len();
        let mut rewards = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        let mut next_values = Vec::with_capacity(n);
        for step in &rollout.steps {
            rewards.push(step.unit.reward);
            dones.push(step.unit.done);
            values.push(value.predict(step.unit.obs.as_slice()));
            next_values.push(value.predict(step.unit.next_obs.as_slice()));
        }
        let gae = compute_gae(
            &rewards,
            &dones,
            &values,
            &next_values,
            train.gamma,
            train.gae_lambda,
        )?;
        let mut advantages = gae.advantages;
        normalize_advantages(&mut advantages);

        // The first iterations train the critic only (zero advantages leave
        // the policy untouched); until the critic knows the return scale,
        // advantages rank start-state luck rather than actions.
        let critic_warmup = iteration <= 2;
        let batch: Vec<BatchSample> = rollout
            .steps
            .iter()
            .enumerate()
            .map(|(t, step)| BatchSample {
                obs: step.unit.obs.as_slice().to_vec(),
                action: step.unit.action,
                old_log_prob: step.log_prob,
                advantage: if critic_warmup { 0.0 } else { advantages[t] },
                ret: gae.returns[t],
            })
            .collect();
        let stats =
            ppo_update(&mut policy, &mut value, &batch, train, &mut opt, &mut update_rng)?;
        log::debug!(
            "seed {seed} iter {iteration}: policy_loss {:.4} value_loss {:.1} kl {:.4} std {:.3}",
            stats.policy_loss,
            stats.value_loss,
            stats.approx_kl,
            policy.std()
        );

        if let Some(last) = rollout.completed_episodes.last() {
            last_episode = Some(*last);
        }
        metrics.push(iteration_metrics(
            iteration,
            &rollout.completed_episodes,
            last_episode.as_ref(),
            start.elapsed().as_secs_f64(),
        ));
    }

    Ok(SeedRunResult {
        seed,
        metrics,
        policy,
        audit,
    })
}

fn iteration_metrics(
    iteration: usize,
    episodes: &[EpisodeStats],
    fallback: Option<&EpisodeStats>,
    wall_time_s: f64,
) -> IterationMetrics {
    // An iteration that completed no episode (horizon longer than the batch)
    // reports the most recent completed episode instead of dropping the row.
    let source: &[EpisodeStats] = if episodes.is_empty() {
        fallback.map(std::slice::from_ref).unwrap_or(&[])
    } else {
        episodes
    };
    if source.is_empty() {
        return IterationMetrics {
            iteration,
            mean_reward: f64::NAN,
            std_reward: 0.0,
            mean_r_vel: f64::NAN,
            mean_r_mpg: f64::NAN,
            mean_jerk_pen: f64::NAN,
            collisions: 0,
            wall_time_s,
        };
    }
    let n = source.len() as f64;
    let mean_reward = source.iter().map(|e| e.total_reward).sum::<f64>() / n;
    let var = source
        .iter()
        .map(|e| (e.total_reward - mean_reward).powi(2))
        .sum::<f64>()
        / n;
    IterationMetrics {
        iteration,
        mean_reward,
        std_reward: var.sqrt(),
        mean_r_vel: source.iter().map(|e| e.mean_velocity_term).sum::<f64>() / n,
        mean_r_mpg: source.iter().map(|e| e.mean_mpg_term).sum::<f64>() / n,
        mean_jerk_pen: source.iter().map(|e| e.mean_jerk_term).sum::<f64>() / n,
        collisions: episodes.iter().filter(|e| e.collided).count(),
        wall_time_s,
    }
}

/// Outcome of a multi-seed experiment. Failed seeds are recorded and do not
/// abort the remaining ones.
#[derive(Debug)]
pub struct TrainOutcome {
    pub runs: Vec<SeedRunResult>,
    pub failures: Vec<(u64, Error)>,
}

impl TrainOutcome {
    /// The run whose final-10-iteration mean reward is highest.
    pub fn best_run(&self) -> Option<&SeedRunResult> {
        self.runs.iter().max_by(|a, b| {
            a.final_mean_reward(10)
                .total_cmp(&b.final_mean_reward(10))
        })
    }
}

/// Trains every seed sequentially. The command-line harness fans seeds out
/// in parallel instead; results are identical because each run is
/// self-contained.
pub fn train(
    scenario: &ScenarioConfig,
    train_cfg: &TrainConfig,
    perturbation: &PerturbationConfig,
    seeds: &[u64],
) -> Result<TrainOutcome> {
    if seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &seed in seeds {
        match train_single_seed(scenario, train_cfg, perturbation, seed) {
            Ok(run) => runs.push(run),
            Err(e) => failures.push((seed, e)),
        }
    }
    Ok(TrainOutcome { runs, failures })
}

/// Cross-seed mean and standard deviation of one metric at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub mean_reward_mean: f64,
    pub mean_reward_std: f64,
    pub r_vel_mean: f64,
    pub r_mpg_mean: f64,
    pub jerk_pen_mean: f64,
    pub collisions_mean: f64,
}

/// Aggregates per-seed logs into mean ± std curves over seeds.
pub fn aggregate_metrics(runs: &[SeedRunResult]) -> Vec<AggregateRow> {
    let iterations = runs.iter().map(|r| r.metrics.len()).min().unwrap_or(0);
    (0..iterations)
        .map(|t| {
            let rows: Vec<&IterationMetrics> = runs.iter().map(|r| &r.metrics[t]).collect();
            let n = rows.len() as f64;
            let mean = rows.iter().map(|m| m.mean_reward).sum::<f64>() / n;
            let var = rows
                .iter()
                .map(|m| (m.mean_reward - mean).powi(2))
                .sum::<f64>()
                / n;
            AggregateRow {
                iteration: t + 1,
                mean_reward_mean: mean,
                mean_reward_std: var.sqrt(),
                r_vel_mean: rows.iter().map(|m| m.mean_r_vel).sum::<f64>() / n,
                r_mpg_mean: rows.iter().map(|m| m.mean_r_mpg).sum::<f64>() / n,
                jerk_pen_mean: rows.iter().map(|m| m.mean_jerk_pen).sum::<f64>() / n,
                collisions_mean: rows.iter().map(|m| m.collisions as f64).sum::<f64>() / n,
            }
        })
        .collect()
}
