use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{bce_loss, Expert, ExpertLogits};
use crate::data::Label;
use crate::nn::{kaiming_uniform, Layout};

/// Fully connected layers with ReLU between them (none after the last).
/// Parameters live in a caller-owned slice: per layer, `W[out×in]` then `b[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    sizes: Vec<usize>,
}

/// Pre-activations of every layer plus the post-ReLU inputs to each layer.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }
}

impl MlpSpec {
    pub fn new(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self { sizes: sizes.to_vec() }
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

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Registers this MLP's tensors in `layout` under `prefix`.
    pub fn register(&self, layout: &mut Layout, prefix: &str) {
        for (l, w) in self.sizes.windows(2).enumerate() {
            layout.push(format!("{prefix}.w{l}"), &[w[1], w[0]]);
            layout.push(format!("{prefix}.b{l}"), &[w[1]]);
        }
    }

    /// Kaiming-uniform weights, zero biases.
    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        let mut off = 0;
        for w in self.sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            kaiming_uniform(&mut params[off..off + n_in * n_out], n_in, rng);
            off += n_in * n_out;
            params[off..off + n_out].fill(0.0);
            off += n_out;
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> MlpCache {
        assert_eq!(x.len(), self.input_dim(), "MLP input dimension");
        let n_layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut h = x.to_vec();
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let z: Vec<f64> = (0..n_out)
                .map(|o| bias[o] + weights[o * n_in..(o + 1) * n_in].iter().zip(&h).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let next = if l + 1 < n_layers { z.iter().map(|v| v.max(0.0)).collect() } else { Vec::new() };
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
        }
        MlpCache { inputs, pre }
    }

    /// Accumulates `∂/∂θ` of `dout · output` into `grad` and returns the
    /// gradient with respect to the input.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, dout: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = dout.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.inputs[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for i in 0..n_in {
                    grad[off + o * n_in + i] += d * input[i];
                }
                grad[off + n_in * n_out + o] += d;
            }
            let mut din = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (i, v) in din.iter_mut().enumerate() {
                    *v += params[off + o * n_in + i] * d;
                }
            }
            if l > 0 {
                // ReLU of the previous layer.
                for (v, z) in din.iter_mut().zip(&cache.pre[l - 1]) {
                    if *z <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            delta = din;
        }
        delta
    }
}

/// A standalone MLP classifier over feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    spec: MlpSpec,
    params: Vec<f64>,
}

impl MlpHead {
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        let spec = MlpSpec::new(sizes);
        assert_eq!(spec.output_dim(), 2, "classifier heads have two outputs");
        let mut params = vec![0.0; spec.param_count()];
        spec.init(&mut params, &mut ChaCha8Rng::seed_from_u64(seed));
        Self { spec, params }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn zero(&mut self) {
        self.params.fill(0.0);
    }
}

impl Expert for MlpHead {
    type Input = Vec<f64>;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn logits(&self, input: &Vec<f64>) -> ExpertLogits {
        let out = self.spec.forward(&self.params, input);
        ExpertLogits::new(out.output()[0], out.output()[1])
    }

    fn accumulate_grad(&self, input: &Vec<f64>, label: Label, scale: f64, grad: &mut [f64]) -> f64 {
        let cache = self.spec.forward(&self.params, input);
        let (loss, dz) = bce_loss(ExpertLogits::new(cache.output()[0], cache.output()[1]), label);
        self.spec.backward(&self.params, &cache, &[dz[0] * scale, dz[1] * scale], grad);
        loss
    }
}
