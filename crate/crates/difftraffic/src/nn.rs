//! Minimal feed-forward network with hand-written reverse-mode gradients.
//!
//! The approximators here are small (two hidden layers of 64 tanh units), so
//! exact backpropagation is a page of code and no framework is needed.
//! Parameters flatten in declaration order -- layer by layer, weights then
//! biases -- which is also the serialization and optimizer layout.

use rand::Rng;

/// Fully connected network, tanh hidden activations, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// Layer widths, `[input, hidden.., output]`.
    sizes: Vec<usize>,
    /// Row-major `fan_in x fan_out` weights per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Activations per layer, starting with the input itself.
    activations: Vec<Vec<f64>>,
    /// Pre-activation sums per layer.
    pre: Vec<Vec<f64>>,
}

/// Parameter gradients in the same shape as the network.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (acc, g) in self.weights.iter_mut().zip(&other.weights) {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        for (acc, g) in self.biases.iter_mut().zip(&other.biases) {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    /// Flattens in declaration order (weights then biases per layer).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        flat
    }
}

impl Mlp {
    /// Xavier-style initialization; `output_scale` shrinks the final layer
    /// (small initial policy outputs keep early actions near zero).
    pub fn new<R: Rng>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for layer in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[layer], sizes[layer + 1]);
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let scale = if layer == sizes.len() - 2 {
                std * output_scale
            } else {
                std
            };
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| gaussian(rng) * scale)
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Overwrites the bias of output unit `k`.
    pub fn set_output_bias(&mut self, k: usize, value: f64) {
        let last = self.biases.len() - 1;
        self.biases[last][k] = value;
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn param_count(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Forward pass returning the output and the cache for backprop.
    pub fn forward(&self, input: &[f64]) -> (Vec<f64>, MlpCache) {
        debug_assert_eq!(input.len(), self.sizes[0]);
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        activations.push(input.to_vec());
        let mut x = input.to_vec();
        for layer in 0..layers {
            let (fan_in, fan_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let w = &self.weights[layer];
            let b = &self.biases[layer];
            let mut z = b.clone();
            for i in 0..fan_in {
                let xi = x[i];
                if xi != 0.0 {
                    let row = &w[i * fan_out..(i + 1) * fan_out];
                    for (zj, wj) in z.iter_mut().zip(row) {
                        *zj += xi * wj;
                    }
                }
            }
            pre.push(z.clone());
            let a: Vec<f64> = if layer + 1 < layers {
                z.iter().map(|v| v.tanh()).collect()
            } else {
                z
            };
            activations.push(a.clone());
            x = a;
        }
        (x, MlpCache { activations, pre })
    }

    /// Forward pass without keeping the cache.
    pub fn infer(&self, input: &[f64]) -> Vec<f64> {
        self.forward(input).0
    }

    /// Backpropagates `d_output = dL/d(output)` through the cached forward
    /// pass and returns parameter gradients.
    pub fn backward(&self, cache: &MlpCache, d_output: &[f64]) -> MlpGrads {
        let layers = self.weights.len();
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = d_output.to_vec();
        for layer in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[layer], self.sizes[layer + 1]);
            if layer + 1 < layers {
                // Undo the tanh of this layer's output.
                let z = &cache.pre[layer];
                for (d, zj) in delta.iter_mut().zip(z) {
                    let t = zj.tanh();
                    *d *= 1.0 - t * t;
                }
            }
            grads.biases[layer].copy_from_slice(&delta);
            let a_prev = &cache.activations[layer];
            let dw = &mut grads.weights[layer];
            for i in 0..fan_in {
                let ai = a_prev[i];
                if ai != 0.0 {
                    let row = &mut dw[i * fan_out..(i + 1) * fan_out];
                    for (g, d) in row.iter_mut().zip(&delta) {
                        *g = ai * d;
                    }
                }
            }
            if layer > 0 {
                let w = &self.weights[layer];
                let mut prev = vec![0.0; fan_in];
                for i in 0..fan_in {
                    let row = &w[i * fan_out..(i + 1) * fan_out];
                    prev[i] = row.iter().zip(&delta).map(|(wj, d)| wj * d).sum();
                }
                delta = prev;
            }
        }
        grads
    }

    /// Flattened parameters in declaration order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        flat
    }

    /// Loads flattened parameters in declaration order.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut offset = 0;
        for layer in 0..self.weights.len() {
            let wl = self.weights[layer].len();
            self.weights[layer].copy_from_slice(&flat[offset..offset + wl]);
            offset += wl;
            let bl = self.biases[layer].len();
            self.biases[layer].copy_from_slice(&flat[offset..offset + bl]);
            offset += bl;
        }
    }

    /// Applies an optimizer step: `param -= update`, in flat layout.
    pub fn apply_update(&mut self, update: &[f64]) {
        assert_eq!(update.len(), self.param_count());
        let mut offset = 0;
        for layer in 0..self.weights.len() {
            for w in self.weights[layer].iter_mut() {
                *w -= update[offset];
                offset += 1;
            }
            for b in self.biases[layer].iter_mut() {
                *b -= update[offset];
                offset += 1;
            }
        }
    }
}

/// Box-Muller standard normal draw.
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    /// Returns the update to subtract from the parameters.
    pub fn step(&mut self, grads: &[f64]) -> Vec<f64> {
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let mut update = vec![0.0; grads.len()];
        for i in 0..grads.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            update[i] = self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        update
    }
}
