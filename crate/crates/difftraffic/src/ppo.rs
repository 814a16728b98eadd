//! On-policy actor-critic machinery: GAE, the clipped-surrogate update, and
//! gradient-based experience perturbation.
//!
//! The perturbation shifts each collected `(action, reward, next state)`
//! along the simulator-provided gradients, bounded so the perturbed next
//! state stays within an infinity-norm distance `delta` of the original --
//! close enough that whole-trajectory advantage estimation (GAE) remains
//! valid. Perturbed units replace the originals in the buffer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::ExperienceUnit;
use crate::nn::Adam;
use crate::policy::{GaussianPolicy, PolicySpec, ValueNet};
use crate::{Error, Result};

/// Which update algorithm to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ppo,
    DiffPpo,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppo" => Ok(Algorithm::Ppo),
            "diffppo" => Ok(Algorithm::DiffPpo),
            other => Err(Error::Config(format!(
                "unknown algorithm '{other}' (expected 'ppo' or 'diffppo')"
            ))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub steps_per_iteration: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub algorithm: Algorithm,
    pub policy: PolicySpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 50,
            steps_per_iteration: 3000,
            // The discount horizon must cover the tens-of-seconds lag
            // between gap-keeping actions and the flow they unlock; 0.99
            // hides that payoff entirely at dt = 0.1 s.
            gamma: 0.999,
            gae_lambda: 0.98,
            clip_ratio: 0.2,
            epochs: 4,
            minibatch_size: 256,
            learning_rate: 3e-4,
            algorithm: Algorithm::Ppo,
            policy: PolicySpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.iterations >= 1
            && self.steps_per_iteration >= 1
            && self.gamma > 0.0
            && self.gamma <= 1.0
            && (0.0..=1.0).contains(&self.gae_lambda)
            && self.clip_ratio > 0.0
            && self.epochs >= 1
            && self.minibatch_size >= 1
            && self.learning_rate > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("TrainConfig {self:?}")))
        }
    }
}

/// Experience-perturbation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    /// Bound on the infinity norm of the next-state shift.
    pub delta: f64,
    /// Base magnitude of the action perturbation.
    pub eta: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            delta: 0.2,
            // Half the default initial policy standard deviation: phantom
            // actions stay within the policy's own uncertainty.
            eta: 0.05,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta > 0.0 && self.delta.is_finite() && self.eta >= 0.0 && self.eta.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "PerturbationConfig {self:?}"
            )))
        }
    }
}

/// Shifts one experience unit along its immediate-reward gradient.
///
/// The step is `eps = eta * sign(dr/da)` where `dr/da` is the full
/// derivative of the step reward: the simulator-provided state chain stored
/// on the unit plus the jerk term's direct action derivative,
/// `-jerk_weight * sign(a - prev_action)`. With a nonzero jerk weight the
/// direct term dominates, so the shift pulls actions toward the previous
/// one -- the perturbed buffer holds smoother phantom experience. `eps` is
/// shrunk so that `|eps * ds/da|_inf <= delta`, and re-shrunk if the
/// perturbed action hits the bounds.
///
/// The perturbed reward applies the state chain at first order and the jerk
/// change exactly. Terminal units, units whose gradients were blocked by
/// clipping or a yield override, and units with a zero reward gradient pass
/// through unchanged. Returns the (possibly identical) unit and the applied
/// `eps`; the caller re-evaluates the stored log probability at the shifted
/// action.
pub fn perturb_experience(
    unit: &ExperienceUnit,
    cfg: &PerturbationConfig,
    action_min: f64,
    action_max: f64,
    prev_action: f64,
    jerk_weight: f64,
) -> (ExperienceUnit, f64) {
    let jerk_grad = -jerk_weight * (unit.action - prev_action).signum();
    let reward_grad = unit.reward_grad_action + jerk_grad;
    if unit.done || unit.gradient_blocked || reward_grad == 0.0 || cfg.eta == 0.0 {
        return (unit.clone(), 0.0);
    }

    let mut eps = cfg.eta * reward_grad.signum();
    let max_ds = unit
        .next_obs_grad_action
        .iter()
        .fold(0.0_f64, |m, g| m.max(g.abs()));
    if max_ds > 0.0 && eps.abs() * max_ds > cfg.delta {
        eps = (cfg.delta / max_ds).copysign(eps);
    }
    // Clamping the action can only shrink the step, never flip it. A step
    // toward the previous action also must not overshoot it (the jerk kink).
    let mut shifted = (unit.action + eps).clamp(action_min, action_max);
    if jerk_grad != 0.0 && (shifted - prev_action).signum() != (unit.action - prev_action).signum()
    {
        shifted = prev_action;
    }
    eps = shifted - unit.action;
    // Enforce the bound exactly despite rounding in delta / max_ds * max_ds.
    while eps != 0.0 && eps.abs() * max_ds > cfg.delta {
        eps = f64::from_bits(eps.abs().to_bits() - 1).copysign(eps);
    }
    if eps == 0.0 {
        return (unit.clone(), 0.0);
    }

    let mut perturbed = unit.clone();
    perturbed.action = unit.action + eps;
    perturbed.reward = unit.reward
        + eps * unit.reward_grad_action
        + jerk_weight * ((unit.action - prev_action).abs() - (perturbed.action - prev_action).abs());
    for (value, grad) in perturbed
        .next_obs
        .0
        .iter_mut()
        .zip(&unit.next_obs_grad_action)
    {
        *value += eps * grad;
    }
    (perturbed, eps)
}

/// Raw GAE advantages and discounted returns.
#[derive(Debug, Clone, PartialEq)]
pub struct GaeResult {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Standard GAE recursion over a rollout that may contain several episodes.
///
/// `values` and `next_values` hold the critic's estimates at each unit's
/// state and next state; terminal units bootstrap with zero. Advantages come
/// back raw; normalize with [`normalize_advantages`] before the update.
pub fn compute_gae(
    rewards: &[f64],
    dones: &[bool],
    values: &[f64],
    next_values: &[f64],
    gamma: f64,
    gae_lambda: f64,
) -> Result<GaeResult> {
    let n = rewards.len();
    if dones.len() != n || values.len() != n || next_values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: dones.len().min(values.len()).min(next_values.len()),
        });
    }
    let mut advantages = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * mask * next_values[t] - values[t];
        carry = delta + gamma * gae_lambda * mask * carry;
        advantages[t] = carry;
    }
    let returns = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    Ok(GaeResult {
        advantages,
        returns,
    })
}

/// In-place per-batch normalization to zero mean and unit variance.
pub fn normalize_advantages(advantages: &mut [f64]) {
    let n = advantages.len();
    if n == 0 {
        return;
    }
    let mean = advantages.iter().sum::<f64>() / n as f64;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-8);
    for a in advantages.iter_mut() {
        *a = (*a - mean) / std;
    }
}

/// One sample of the update batch.
#[derive(Debug, Clone)]
pub struct BatchSample {
    pub obs: Vec<f64>,
    pub action: f64,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Losses and diagnostics of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
}

/// Optimizer state carried across iterations.
pub struct Optimizers {
    pub policy: Adam,
    pub log_std: Adam,
    pub value: Adam,
}

impl Optimizers {
    pub fn new(policy: &GaussianPolicy, value: &ValueNet, learning_rate: f64) -> Self {
        Optimizers {
            policy: Adam::new(policy.param_count(), learning_rate),
            log_std: Adam::new(1, learning_rate),
            // The critic chases return-scale targets from scratch every run;
            // a faster step keeps its bias from dominating early advantages.
            value: Adam::new(value.param_count(), 3.0 * learning_rate),
        }
    }
}

/// Clipped-surrogate PPO update over shuffled minibatches.
///
/// The policy loss is `-min(ratio * A, clip(ratio) * A)`; samples whose
/// ratio is clipped against an adverse advantage contribute no gradient. The
/// value head minimizes half squared error against the GAE returns. Both
/// heads take `epochs` passes. A non-finite loss aborts with diagnostics.
pub fn ppo_update<R: Rng>(
    policy: &mut GaussianPolicy,
    value: &mut ValueNet,
    batch: &[BatchSample],
    cfg: &TrainConfig,
    opt: &mut Optimizers,
    rng: &mut R,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Ok(UpdateStats {
            policy_loss: 0.0,
            value_loss: 0.0,
            approx_kl: 0.0,
        });
    }
    let n = batch.len();
    let mut policy_loss_sum = 0.0;
    let mut value_loss_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut samples_seen = 0usize;

    // Stop taking policy epochs once the update drifts this far from the
    // collecting policy; the surrogate is only trusted nearby.
    const TARGET_KL: f64 = 0.02;

    let mut indices: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        // Fisher-Yates shuffle.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            indices.swap(i, j);
        }
        let mut epoch_kl_sum = 0.0;
        for chunk in indices.chunks(cfg.minibatch_size) {
            let batch_size = chunk.len() as f64;
            let mut policy_grads = policy.zero_grads();
            let mut log_std_grad = 0.0;
            let mut value_grads = value.zero_grads();

            for &idx in chunk {
                let sample = &batch[idx];
                let eval = policy.evaluate(&sample.obs);
                let new_log_prob = policy.log_prob_given_mean(eval.mean, sample.action);
                let ratio = (new_log_prob - sample.old_log_prob).exp();
                let surr_unclipped = ratio * sample.advantage;
                let surr_clipped =
                    ratio.clamp(1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * sample.advantage;
                let objective = surr_unclipped.min(surr_clipped);
                policy_loss_sum += -objective;
                kl_sum += sample.old_log_prob - new_log_prob;
                epoch_kl_sum += sample.old_log_prob - new_log_prob;
                samples_seen += 1;

                // Gradient flows only through the unclipped branch.
                if surr_unclipped <= surr_clipped {
                    let d_objective_d_logp = surr_unclipped;
                    let d_loss_d_logp = -d_objective_d_logp / batch_size;
                    let d_logp_d_mean = policy.log_prob_grad_mean(eval.mean, sample.action);
                    let d_raw = d_loss_d_logp * d_logp_d_mean * eval.mean_grad_raw;
                    let grads = policy.backward(&eval.cache, d_raw);
                    policy_grads.accumulate(&grads);
                    log_std_grad += d_loss_d_logp
                        * policy.log_prob_grad_log_std(eval.mean, sample.action);
                }

                let (v, v_cache) = value.forward(&sample.obs);
                let err = v - sample.ret;
                value_loss_sum += 0.5 * err * err;
                let v_grads = value.backward(&v_cache, err / batch_size);
                value_grads.accumulate(&v_grads);
            }

            let flat = policy_grads.to_flat();
            if flat.iter().any(|g| !g.is_finite()) || !log_std_grad.is_finite() {
                return Err(Error::NonFiniteLoss(format!(
                    "policy gradient diverged (minibatch of {batch_size}, log_std {})",
                    policy.log_std()
                )));
            }
            let update = opt.policy.step(&flat);
            let ls_update = opt.log_std.step(&[log_std_grad]);
            policy.apply_update(&update, ls_update[0]);

            let v_flat = value_grads.to_flat();
            if v_flat.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss("value gradient diverged".into()));
            }
            let v_update = opt.value.step(&v_flat);
            value.apply_update(&v_update);
        }
        if epoch_kl_sum / n as f64 > TARGET_KL {
            break;
        }
    }

    let denom = samples_seen.max(1) as f64;
    let stats = UpdateStats {
        policy_loss: policy_loss_sum / denom,
        value_loss: value_loss_sum / denom,
        approx_kl: kl_sum / denom,
    };
    if !(stats.policy_loss.is_finite() && stats.value_loss.is_finite()) {
        return Err(Error::NonFiniteLoss(format!("{stats:?}")));
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Observation;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(
        reward: f64,
        dr_da: f64,
        ds_da: Vec<f64>,
        action: f64,
        done: bool,
        blocked: bool,
    ) -> ExperienceUnit {
        let dim = ds_da.len();
        ExperienceUnit {
            obs: Observation(vec![0.0; dim]),
            action,
            reward,
            next_obs: Observation(vec![0.5; dim]),
            reward_grad_action: dr_da,
            next_obs_grad_action: ds_da,
            done,
            gradient_blocked: blocked,
        }
    }

    #[test]
    fn perturb_passes_through_zero_gradient() {
        let cfg = PerturbationConfig::default();
        let u = unit(1.0, 0.0, vec![0.1, 0.2], 0.3, false, false);
        let (p, eps) = perturb_experience(&u, &cfg, -1.0, 1.0, 0.3, 0.0);
        assert_eq!(eps, 0.0);
        assert_eq!(p, u);
    }

    #[test]
    fn perturb_passes_through_blocked_and_terminal_units() {
        let cfg = PerturbationConfig::default();
        let blocked = unit(1.0, 2.0, vec![0.1], 0.3, false, true);
        assert_eq!(perturb_experience(&blocked, &cfg, -1.0, 1.0, 0.0, 0.0).1, 0.0);
        let terminal = unit(1.0, 2.0, vec![0.1], 0.3, true, false);
        assert_eq!(perturb_experience(&terminal, &cfg, -1.0, 1.0, 0.0, 0.0).1, 0.0);
    }

    #[test]
    fn perturb_hand_example() {
        // dr/da = 2, max |ds/da| = 4, delta = 0.2, eta = 1: the bound gives
        // eps = 0.05 and the reward moves by 0.1, with the constraint tight.
        let cfg = PerturbationConfig {
            delta: 0.2,
            eta: 1.0,
        };
        let u = unit(1.0, 2.0, vec![4.0, -1.0], 0.0, false, false);
        let (p, eps) = perturb_experience(&u, &cfg, -10.0, 10.0, 0.0, 0.0);
        assert_relative_eq!(eps, 0.05, max_relative = 1e-12);
        assert_relative_eq!(p.reward, 1.1, max_relative = 1e-12);
        assert!((eps * 4.0 - 0.2).abs() < 1e-15);
        assert_relative_eq!(p.action, 0.05, max_relative = 1e-12);
    }

    #[test]
    fn perturb_bound_holds_exactly_over_fuzz() {
        let cfg = PerturbationConfig {
            delta: 0.07,
            eta: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..2000 {
            let dim = rng.gen_range(1..6);
            let ds: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let u = unit(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-2.0..2.0),
                ds,
                rng.gen_range(-1.0..1.0),
                false,
                false,
            );
            let prev = rng.gen_range(-1.0..1.0);
            let jerk_weight = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            let (p, eps) = perturb_experience(&u, &cfg, -1.0, 1.0, prev, jerk_weight);
            for g in &u.next_obs_grad_action {
                assert!(
                    (eps * g).abs() <= cfg.delta,
                    "bound violated: |{eps} * {g}| > {}",
                    cfg.delta
                );
            }
            assert!(eps.abs() <= cfg.eta);
            assert!((-1.0..=1.0).contains(&p.action));
            // The perturbed reward never understates the true jerk change,
            // and with no jerk term it moves with the sign of eps * dr/da.
            if eps != 0.0 && jerk_weight == 0.0 {
                assert!((p.reward - u.reward) * (eps * u.reward_grad_action) >= 0.0);
            }
        }
    }

    #[test]
    fn perturb_clamps_at_action_bounds() {
        let cfg = PerturbationConfig {
            delta: 10.0,
            eta: 0.5,
        };
        let u = unit(0.0, 1.0, vec![0.01], 0.9, false, false);
        let (p, eps) = perturb_experience(&u, &cfg, -1.0, 1.0, 0.9, 0.0);
        assert_relative_eq!(p.action, 1.0, max_relative = 1e-12);
        assert_relative_eq!(eps, 0.1, max_relative = 1e-9);
    }

    #[test]
    fn perturb_with_jerk_term_smooths_toward_previous_action() {
        // The jerk derivative dominates the small state chain, so the shift
        // points at the previous action and the exact jerk saving raises the
        // perturbed reward.
        let cfg = PerturbationConfig {
            delta: 0.2,
            eta: 0.05,
        };
        let u = unit(1.0, 0.008, vec![0.003], 0.5, false, false);
        let (p, eps) = perturb_experience(&u, &cfg, -3.0, 1.0, 0.1, 1.0);
        assert!(eps < 0.0, "shift must point toward prev action, got {eps}");
        assert_relative_eq!(p.action, 0.45, max_relative = 1e-12);
        // reward change: eps * dr_state + jerk saving of |eps|
        let expected = 1.0 + eps * 0.008 + 0.05;
        assert_relative_eq!(p.reward, expected, max_relative = 1e-12);
    }

    #[test]
    fn perturb_never_overshoots_the_jerk_kink() {
        let cfg = PerturbationConfig {
            delta: 10.0,
            eta: 0.5,
        };
        // Action only 0.1 above the previous one; a 0.5 smoothing step must
        // stop exactly at the previous action.
        let u = unit(0.0, 0.001, vec![0.01], 0.3, false, false);
        let (p, eps) = perturb_experience(&u, &cfg, -3.0, 1.0, 0.2, 1.0);
        assert_relative_eq!(p.action, 0.2, max_relative = 1e-12);
        assert_relative_eq!(eps, -0.1, max_relative = 1e-12);
    }

    #[test]
    fn gae_single_terminal_step() {
        let out = compute_gae(&[1.0], &[true], &[0.0], &[0.0], 0.99, 0.95).unwrap();
        assert_relative_eq!(out.advantages[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(out.returns[0], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn gae_lambda_zero_is_one_step_td() {
        let rewards = [1.0, 2.0, 3.0];
        let dones = [false, false, true];
        let values = [0.5, 1.0, 1.5];
        let next_values = [1.0, 1.5, 0.0];
        let out = compute_gae(&rewards, &dones, &values, &next_values, 0.9, 0.0).unwrap();
        for t in 0..3 {
            let mask = if dones[t] { 0.0 } else { 1.0 };
            let td = rewards[t] + 0.9 * mask * next_values[t] - values[t];
            assert_relative_eq!(out.advantages[t], td, max_relative = 1e-12);
        }
    }

    #[test]
    fn gae_undiscounted_full_lambda_sums_remaining_rewards() {
        let rewards = [1.0, 2.0, 3.0, 4.0];
        let dones = [false, false, false, true];
        let zeros = [0.0; 4];
        let out = compute_gae(&rewards, &dones, &zeros, &zeros, 1.0, 1.0).unwrap();
        assert_relative_eq!(out.advantages[0], 10.0, max_relative = 1e-12);
        assert_relative_eq!(out.advantages[1], 9.0, max_relative = 1e-12);
        assert_relative_eq!(out.advantages[3], 4.0, max_relative = 1e-12);
    }

    #[test]
    fn gae_rejects_length_mismatch() {
        assert!(compute_gae(&[1.0], &[true, false], &[0.0], &[0.0], 0.9, 0.9).is_err());
    }

    #[test]
    fn normalized_advantages_have_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut adv: Vec<f64> = (0..512).map(|_| rng.gen_range(-3.0..7.0)).collect();
        normalize_advantages(&mut adv);
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-10, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-6, "variance {var}");
    }

    fn tiny_setup(seed: u64) -> (GaussianPolicy, ValueNet, Optimizers) {
        let spec = PolicySpec {
            hidden_sizes: vec![8],
            init_log_std: (0.5_f64).ln(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::new(&spec, 3, -1.0, 1.0, &mut rng);
        let value = ValueNet::new(&spec, 3, &mut rng);
        let opt = Optimizers::new(&policy, &value, 1e-3);
        (policy, value, opt)
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let (mut policy, mut value, mut opt) = tiny_setup(3);
        let reference = policy.clone();
        let cfg = TrainConfig {
            epochs: 2,
            minibatch_size: 4,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch: Vec<BatchSample> = (0..16)
            .map(|k| {
                let obs = vec![0.1 * k as f64, -0.2, 0.3];
                let action = 0.1;
                BatchSample {
                    old_log_prob: policy.log_prob(&obs, action),
                    obs,
                    action,
                    advantage: 0.0,
                    ret: 0.5,
                }
            })
            .collect();
        ppo_update(&mut policy, &mut value, &batch, &cfg, &mut opt, &mut rng).unwrap();
        assert_eq!(policy, reference);
    }

    #[test]
    fn clipped_adverse_samples_contribute_no_gradient() {
        // A sample whose ratio is far outside the clip window with an
        // adverse advantage must not move the policy.
        let (mut policy, mut value, mut opt) = tiny_setup(7);
        let reference = policy.clone();
        let cfg = TrainConfig {
            epochs: 1,
            minibatch_size: 1,
            clip_ratio: 0.2,
            ..TrainConfig::default()
        };
        let obs = vec![0.2, 0.4, -0.1];
        let action = 0.3;
        // Fake a stored log prob far above the current one: ratio << 1 - clip,
        // advantage < 0 puts min() on the clipped constant branch.
        let batch = vec![BatchSample {
            old_log_prob: policy.log_prob(&obs, action) + 3.0,
            obs,
            action,
            advantage: -2.0,
            ret: 0.0,
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        ppo_update(&mut policy, &mut value, &batch, &cfg, &mut opt, &mut rng).unwrap();
        assert_eq!(policy, reference);
    }

    #[test]
    fn update_reports_finite_stats_and_learns_value() {
        let (mut policy, mut value, mut opt) = tiny_setup(11);
        let cfg = TrainConfig {
            epochs: 40,
            minibatch_size: 8,
            learning_rate: 3e-3,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let obs = vec![0.5, -0.5, 1.0];
        let target = 2.0;
        let batch: Vec<BatchSample> = (0..8)
            .map(|_| BatchSample {
                obs: obs.clone(),
                action: 0.2,
                old_log_prob: policy.log_prob(&obs, 0.2),
                advantage: 0.0,
                ret: target,
            })
            .collect();
        let before = (value.predict(&obs) - target).abs();
        let stats =
            ppo_update(&mut policy, &mut value, &batch, &cfg, &mut opt, &mut rng).unwrap();
        let after = (value.predict(&obs) - target).abs();
        assert!(stats.value_loss.is_finite());
        assert!(after < before, "value error {before} -> {after}");
    }
}
