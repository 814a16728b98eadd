//! Gaussian acceleration policy and value function.
//!
//! The policy is a small tanh network whose scalar output is squashed into
//! the action bounds to form the mean of a Gaussian with a learned,
//! state-independent log standard deviation. The value function shares the
//! trunk shape with separate parameters.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::nn::{gaussian, Mlp, MlpCache, MlpGrads};
use crate::{Error, Result};

/// Architecture of the approximators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySpec {
    /// Hidden layer widths of both the policy and value trunks.
    pub hidden_sizes: Vec<usize>,
    /// Initial log standard deviation of the action Gaussian.
    pub init_log_std: f64,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec {
            hidden_sizes: vec![64, 64],
            init_log_std: (0.1_f64).ln(),
        }
    }
}

const LOG_STD_MIN: f64 = -22.0;
const LOG_STD_MAX: f64 = 2.0;
const LOG_SQRT_TAU: f64 = 0.918_938_533_204_672_8; // 0.5 * ln(2 pi)

/// Gaussian policy over a scalar acceleration.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    mean_net: Mlp,
    log_std: f64,
    action_min: f64,
    action_max: f64,
}

/// Forward cache plus the squashed mean, for the update pass.
pub struct PolicyEval {
    pub mean: f64,
    /// d(mean)/d(raw network output), the squash derivative.
    pub mean_grad_raw: f64,
    pub cache: MlpCache,
}

impl GaussianPolicy {
    pub fn new<R: Rng>(
        spec: &PolicySpec,
        obs_dim: usize,
        action_min: f64,
        action_max: f64,
        rng: &mut R,
    ) -> Self {
        let mut sizes = Vec::with_capacity(spec.hidden_sizes.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(&spec.hidden_sizes);
        sizes.push(1);
        // Small final-layer weights plus a bias chosen so the initial mean
        // action is zero acceleration (coasting) when the bounds contain
        // zero; mid-range otherwise. With asymmetric bounds a mid-range
        // start would brake continuously.
        let mut mean_net = Mlp::new(&sizes, 0.01, rng);
        let mid = 0.5 * (action_min + action_max);
        let half = 0.5 * (action_max - action_min);
        if action_min < 0.0 && action_max > 0.0 {
            let raw = (-mid / half).clamp(-0.999, 0.999).atanh();
            mean_net.set_output_bias(0, raw);
        }
        GaussianPolicy {
            mean_net,
            log_std: spec.init_log_std,
            action_min,
            action_max,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_size()
    }

    pub fn action_bounds(&self) -> (f64, f64) {
        (self.action_min, self.action_max)
    }

    pub fn log_std(&self) -> f64 {
        self.log_std
    }

    pub fn set_log_std(&mut self, log_std: f64) {
        self.log_std = log_std.clamp(LOG_STD_MIN, LOG_STD_MAX);
    }

    pub fn std(&self) -> f64 {
        self.log_std.exp()
    }

    fn squash(&self, raw: f64) -> (f64, f64) {
        let mid = 0.5 * (self.action_min + self.action_max);
        let half = 0.5 * (self.action_max - self.action_min);
        let t = raw.tanh();
        (mid + half * t, half * (1.0 - t * t))
    }

    /// Deterministic (mean) action.
    pub fn mean_action(&self, obs: &[f64]) -> f64 {
        let raw = self.mean_net.infer(obs)[0];
        self.squash(raw).0
    }

    /// Forward pass with cache for the update step.
    pub fn evaluate(&self, obs: &[f64]) -> PolicyEval {
        let (out, cache) = self.mean_net.forward(obs);
        let (mean, mean_grad_raw) = self.squash(out[0]);
        PolicyEval {
            mean,
            mean_grad_raw,
            cache,
        }
    }

    /// Samples an action, clamps it to the bounds, and returns its log
    /// density under the Gaussian. The stored action and log probability are
    /// always consistent: both refer to the clamped value.
    pub fn sample<R: Rng>(&self, obs: &[f64], rng: &mut R) -> (f64, f64) {
        let mean = self.mean_action(obs);
        let raw = mean + self.std() * gaussian(rng);
        let action = raw.clamp(self.action_min, self.action_max);
        (action, self.log_prob_given_mean(mean, action))
    }

    /// Gaussian log density of `action` under the policy at `obs`.
    pub fn log_prob(&self, obs: &[f64], action: f64) -> f64 {
        self.log_prob_given_mean(self.mean_action(obs), action)
    }

    pub fn log_prob_given_mean(&self, mean: f64, action: f64) -> f64 {
        let z = (action - mean) / self.std();
        -0.5 * z * z - self.log_std - LOG_SQRT_TAU
    }

    /// d(log prob)/d(mean) at the given mean and action.
    pub fn log_prob_grad_mean(&self, mean: f64, action: f64) -> f64 {
        let var = self.std() * self.std();
        (action - mean) / var
    }

    /// d(log prob)/d(log std) at the given mean and action.
    pub fn log_prob_grad_log_std(&self, mean: f64, action: f64) -> f64 {
        let z = (action - mean) / self.std();
        z * z - 1.0
    }

    pub fn backward(&self, cache: &MlpCache, d_raw: f64) -> MlpGrads {
        self.mean_net.backward(cache, &[d_raw])
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads::zeros_like(&self.mean_net)
    }

    pub fn param_count(&self) -> usize {
        self.mean_net.param_count()
    }

    pub fn apply_update(&mut self, net_update: &[f64], log_std_update: f64) {
        self.mean_net.apply_update(net_update);
        self.log_std = (self.log_std - log_std_update).clamp(LOG_STD_MIN, LOG_STD_MAX);
    }

    /// Serializes to the versioned flat binary layout: an 8-byte magic
    /// string, the layer count and layer sizes as little-endian u32, the
    /// action bounds, every network parameter in declaration order as
    /// little-endian f64, and finally the log standard deviation.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(POLICY_MAGIC);
        let sizes = self.mean_net.sizes();
        bytes.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for &s in sizes {
            bytes.extend_from_slice(&(s as u32).to_le_bytes());
        }
        bytes.extend_from_slice(&self.action_min.to_le_bytes());
        bytes.extend_from_slice(&self.action_max.to_le_bytes());
        for p in self.mean_net.to_flat() {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        bytes.extend_from_slice(&self.log_std.to_le_bytes());
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut reader = ByteReader::new(&bytes);
        let magic = reader.take(POLICY_MAGIC.len())?;
        if magic != POLICY_MAGIC {
            return Err(Error::PolicyFormat("bad magic string".into()));
        }
        let n_sizes = reader.u32()? as usize;
        if !(2..=16).contains(&n_sizes) {
            return Err(Error::PolicyFormat(format!("{n_sizes} layer sizes")));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(reader.u32()? as usize);
        }
        if sizes.last() != Some(&1) || sizes.iter().any(|&s| s == 0) {
            return Err(Error::PolicyFormat(format!("layer sizes {sizes:?}")));
        }
        let action_min = reader.f64()?;
        let action_max = reader.f64()?;
        if !(action_min < action_max) {
            return Err(Error::PolicyFormat("action bounds out of order".into()));
        }
        let mut net = Mlp::new(&sizes, 1.0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        let mut flat = Vec::with_capacity(net.param_count());
        for _ in 0..net.param_count() {
            flat.push(reader.f64()?);
        }
        net.assign_flat(&flat);
        let log_std = reader.f64()?;
        if !reader.at_end() {
            return Err(Error::PolicyFormat("trailing bytes".into()));
        }
        if !log_std.is_finite() || flat.iter().any(|p| !p.is_finite()) {
            return Err(Error::PolicyFormat("non-finite parameters".into()));
        }
        Ok(GaussianPolicy {
            mean_net: net,
            log_std,
            action_min,
            action_max,
        })
    }
}

pub const POLICY_MAGIC: &[u8; 8] = b"TRAFPOL1";

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::PolicyFormat("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// State-value approximator with the same trunk shape as the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    net: Mlp,
}

impl ValueNet {
    pub fn new<R: Rng>(spec: &PolicySpec, obs_dim: usize, rng: &mut R) -> Self {
        let mut sizes = Vec::with_capacity(spec.hidden_sizes.len() + 2);
        sizes.push(obs_dim);
        sizes.extend_from_slice(&spec.hidden_sizes);
        sizes.push(1);
        ValueNet {
            net: Mlp::new(&sizes, 1.0, rng),
        }
    }

    pub fn predict(&self, obs: &[f64]) -> f64 {
        self.net.infer(obs)[0]
    }

    pub fn forward(&self, obs: &[f64]) -> (f64, MlpCache) {
        let (out, cache) = self.net.forward(obs);
        (out[0], cache)
    }

    pub fn backward(&self, cache: &MlpCache, d_value: f64) -> MlpGrads {
        self.net.backward(cache, &[d_value])
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads::zeros_like(&self.net)
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_size()
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn apply_update(&mut self, update: &[f64]) {
        self.net.apply_update(update);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_chacha::ChaCha8Rng;

    fn test_policy() -> GaussianPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        GaussianPolicy::new(&PolicySpec::default(), 4, -1.0, 1.0, &mut rng)
    }

    #[test]
    fn mean_stays_in_bounds() {
        let policy = test_policy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let obs: Vec<f64> = (0..4).map(|_| gaussian(&mut rng) * 10.0).collect();
            let m = policy.mean_action(&obs);
            assert!((-1.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn sampled_action_and_log_prob_are_consistent() {
        let policy = test_policy();
        let obs = [0.1, 0.2, 0.3, 0.4];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let (action, lp) = policy.sample(&obs, &mut rng);
            assert!((-1.0..=1.0).contains(&action));
            assert_relative_eq!(lp, policy.log_prob(&obs, action), max_relative = 1e-12);
        }
    }

    #[test]
    fn log_prob_gradients_match_finite_differences() {
        let policy = test_policy();
        let action = 0.37;
        let mean = 0.1;
        let h = 1e-7;
        let fd_mean = (policy.log_prob_given_mean(mean + h, action)
            - policy.log_prob_given_mean(mean - h, action))
            / (2.0 * h);
        assert_relative_eq!(
            fd_mean,
            policy.log_prob_grad_mean(mean, action),
            epsilon = 1e-6
        );

        let mut hi = policy.clone();
        hi.set_log_std(policy.log_std() + h);
        let mut lo = policy.clone();
        lo.set_log_std(policy.log_std() - h);
        let fd_ls = (hi.log_prob_given_mean(mean, action) - lo.log_prob_given_mean(mean, action))
            / (2.0 * h);
        assert_relative_eq!(
            fd_ls,
            policy.log_prob_grad_log_std(mean, action),
            epsilon = 1e-6
        );
    }

    #[test]
    fn save_load_round_trip() {
        let policy = test_policy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.bin");
        policy.save(&path).unwrap();
        let loaded = GaussianPolicy::load(&path).unwrap();
        assert_eq!(policy, loaded);
    }

    #[test]
    fn load_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOTAPOLICYFILE..").unwrap();
        assert!(matches!(
            GaussianPolicy::load(&path),
            Err(Error::PolicyFormat(_))
        ));
    }

    #[test]
    fn load_rejects_truncated_file() {
        let policy = test_policy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.bin");
        policy.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            GaussianPolicy::load(&path),
            Err(Error::PolicyFormat(_))
        ));
    }
}
