//! Scratch sanity probe (not shipped): PPO on a continuous bandit.
//! reward = -(a - 0.5)^2, one-step episodes. Mean action must approach 0.5.

use difftraffic::policy::{GaussianPolicy, PolicySpec, ValueNet};
use difftraffic::ppo::{
    compute_gae, normalize_advantages, ppo_update, BatchSample, Optimizers, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let spec = PolicySpec {
        hidden_sizes: vec![16],
        init_log_std: (0.3_f64).ln(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut policy = GaussianPolicy::new(&spec, 2, -1.0, 1.0, &mut rng);
    let mut value = ValueNet::new(&spec, 2, &mut rng);
    let cfg = TrainConfig {
        steps_per_iteration: 512,
        minibatch_size: 128,
        epochs: 4,
        ..TrainConfig::default()
    };
    let mut opt = Optimizers::new(&policy, &value, cfg.learning_rate);

    for iter in 0..40 {
        let obs = vec![0.3, -0.7];
        let mut samples = Vec::new();
        let mut rewards = Vec::new();
        for _ in 0..cfg.steps_per_iteration {
            let (a, logp) = policy.sample(&obs, &mut rng);
            let r = -(a - 0.5) * (a - 0.5);
            rewards.push(r);
            samples.push((a, logp, r));
        }
        let n = rewards.len();
        let values: Vec<f64> = (0..n).map(|_| value.predict(&obs)).collect();
        let gae = compute_gae(
            &rewards,
            &vec![true; n],
            &values,
            &vec![0.0; n],
            cfg.gamma,
            cfg.gae_lambda,
        )
        .unwrap();
        let mut adv = gae.advantages.clone();
        normalize_advantages(&mut adv);
        let batch: Vec<BatchSample> = samples
            .iter()
            .enumerate()
            .map(|(t, (a, logp, _))| BatchSample {
                obs: obs.clone(),
                action: *a,
                old_log_prob: *logp,
                advantage: adv[t],
                ret: gae.returns[t],
            })
            .collect();
        let mut urng = ChaCha8Rng::seed_from_u64(iter as u64);
        let stats = ppo_update(&mut policy, &mut value, &batch, &cfg, &mut opt, &mut urng).unwrap();
        if iter % 5 == 0 || iter == 39 {
            println!(
                "iter {iter:>2}: mean action {:+.4} (target +0.5) std {:.3} V {:+.4} kl {:.4}",
                policy.mean_action(&obs),
                policy.std(),
                value.predict(&obs),
                stats.approx_kl
            );
        }
    }
}
