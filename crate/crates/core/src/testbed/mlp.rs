//! Dense tanh network with hand-written backprop over a flat parameter vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Layer `l` maps `sizes[l]` inputs to `sizes[l + 1]` outputs; its row-major
/// weights are followed by its bias in `params`. Hidden layers use tanh, the
/// output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer inputs recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
}

impl Mlp {
    /// Uniform `±1/sqrt(fan_in)` init; the output layer is additionally scaled
    /// by `output_scale`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let mut params = Vec::with_capacity(Self::count_params(sizes));
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let scale = if l + 1 == layers { output_scale } else { 1.0 };
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..bound) * scale);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, ForwardCache) {
        assert_eq!(x.len(), self.input_dim(), "input dimension");
        let layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut a = x.to_vec();
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + n_in * n_out];
            let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let mut z: Vec<f64> = b.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *zo += row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>();
            }
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        (a, ForwardCache { inputs })
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = grad_output.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let a = &cache.inputs[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let g_row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                g_row.iter_mut().zip(a).for_each(|(g, ai)| *g += d * ai);
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &w[o * n_in..(o + 1) * n_in];
                    prev.iter_mut().zip(row).for_each(|(p, wi)| *p += d * wi);
                }
                // a is the tanh output of the previous layer
                prev.iter_mut().zip(a).for_each(|(p, ai)| *p *= 1.0 - ai * ai);
                delta = prev;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new(&[3, 4, 2], 1.0, &mut rng);
        assert_eq!(m.num_params(), 3 * 4 + 4 + 4 * 2 + 2);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(&[3, 5, 4, 2], 1.0, &mut rng);
        let x = [0.3, -0.7, 1.1];
        let weights = [0.6, -1.4];
        let loss = |m: &Mlp| m.forward(&x).iter().zip(&weights).map(|(o, w)| o * w).sum::<f64>();
        let (_, cache) = mlp.forward_cached(&x);
        let mut grad = vec![0.0; mlp.num_params()];
        mlp.backward(&cache, &weights, &mut grad);
        let h = 1e-6;
        for k in 0..mlp.num_params() {
            let mut plus = mlp.clone();
            plus.params_mut()[k] += h;
            let mut minus = mlp.clone();
            minus.params_mut()[k] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7, "param {k}: fd {fd} vs {}", grad[k]);
        }
    }
}
