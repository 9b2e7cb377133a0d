use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use super::PolicyError;
use crate::nn::{log_sum_exp, Checkpoint, Layout};

pub const CONTEXT_DIM: usize = 16;
const CHECKPOINT_KIND: &str = "toy_policy";

const PROJ_W: usize = 0;
const PROJ_B: usize = 1;
const EMBED: usize = 2;
const HEAD_W: usize = 3;
const HEAD_B: usize = 4;

/// Linear-conditional autoregressive policy.
///
/// Visual features are projected to a context vector `c = P·f + p`; the
/// logits of token `t+1` are `W·[c; E(token_t)] + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    vocab_size: usize,
    feature_dim: usize,
    layout: Layout,
    params: Vec<f64>,
}

impl ToyPolicy {
    /// All parameters zero: every next-token distribution is uniform.
    pub fn zeros(vocab_size: usize, feature_dim: usize) -> Self {
        let mut layout = Layout::default();
        layout.push("proj.w", &[CONTEXT_DIM, feature_dim]);
        layout.push("proj.b", &[CONTEXT_DIM]);
        layout.push("embed", &[vocab_size, CONTEXT_DIM]);
        layout.push("head.w", &[vocab_size, 2 * CONTEXT_DIM]);
        layout.push("head.b", &[vocab_size]);
        let params = vec![0.0; layout.len()];
        Self { vocab_size, feature_dim, layout, params }
    }

    /// Weights drawn from `N(0, scale²)`, biases zero.
    pub fn random(vocab_size: usize, feature_dim: usize, scale: f64, seed: u64) -> Self {
        let mut p = Self::zeros(vocab_size, feature_dim);
        let dist = Normal::new(0.0, scale).expect("non-negative scale");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in [PROJ_W, EMBED, HEAD_W] {
            for v in &mut p.params[p.layout.range(slot)] {
                *v = dist.sample(&mut rng);
            }
        }
        p
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Mutable view of one named tensor (`proj.w`, `proj.b`, `embed`, `head.w`, `head.b`).
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let slot = self.layout.slots().iter().find(|s| s.name == name)?.range();
        Some(&mut self.params[slot])
    }

    pub fn check_features(&self, features: &[f64]) -> Result<(), PolicyError> {
        if features.len() != self.feature_dim {
            return Err(PolicyError::Shape(format!(
                "expected {} visual features, got {}",
                self.feature_dim,
                features.len()
            )));
        }
        Ok(())
    }

    pub fn check_tokens(&self, tokens: &[usize]) -> Result<(), PolicyError> {
        match tokens.iter().find(|&&t| t >= self.vocab_size) {
            Some(&t) => Err(PolicyError::UnknownToken(t)),
            None => Ok(()),
        }
    }

    /// The projected visual context `c`.
    pub fn context(&self, features: &[f64]) -> Vec<f64> {
        let w = &self.params[self.layout.range(PROJ_W)];
        let b = &self.params[self.layout.range(PROJ_B)];
        (0..CONTEXT_DIM)
            .map(|d| b[d] + w[d * self.feature_dim..(d + 1) * self.feature_dim].iter().zip(features).map(|(a, f)| a * f).sum::<f64>())
            .collect()
    }

    /// Logits over the vocabulary for the token following `prev`.
    pub fn next_logits(&self, context: &[f64], prev: usize) -> Vec<f64> {
        let e = &self.params[self.layout.range(EMBED)][prev * CONTEXT_DIM..(prev + 1) * CONTEXT_DIM];
        let w = &self.params[self.layout.range(HEAD_W)];
        let b = &self.params[self.layout.range(HEAD_B)];
        (0..self.vocab_size)
            .map(|v| {
                let row = &w[v * 2 * CONTEXT_DIM..(v + 1) * 2 * CONTEXT_DIM];
                let (wc, we) = row.split_at(CONTEXT_DIM);
                b[v] + wc.iter().zip(context).map(|(a, c)| a * c).sum::<f64>()
                    + we.iter().zip(e).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    }

    /// Per-step log-probabilities `log π(token_t | c, token_{t−1})` for `t ≥ 1`.
    pub fn step_logprobs(&self, features: &[f64], tokens: &[usize]) -> Result<Vec<f64>, PolicyError> {
        self.check_features(features)?;
        self.check_tokens(tokens)?;
        let c = self.context(features);
        Ok(tokens
            .windows(2)
            .map(|w| {
                let logits = self.next_logits(&c, w[0]);
                logits[w[1]] - log_sum_exp(&logits)
            })
            .collect())
    }

    /// `Σ_{t≥1} log π(token_t | c, token_{t−1})`; always ≤ 0.
    pub fn sequence_logprob(&self, features: &[f64], tokens: &[usize]) -> Result<f64, PolicyError> {
        Ok(self.step_logprobs(features, tokens)?.iter().sum())
    }

    /// Adds `scale · ∇θ sequence_logprob` into `grad`; returns the log-probability.
    pub fn accumulate_logprob_grad(
        &self,
        features: &[f64],
        tokens: &[usize],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64, PolicyError> {
        self.check_features(features)?;
        self.check_tokens(tokens)?;
        let c = self.context(features);
        let head_w = &self.params[self.layout.range(HEAD_W)];
        let embed = &self.params[self.layout.range(EMBED)];
        let (hw_off, hb_off, e_off) = (
            self.layout.slot(HEAD_W).offset,
            self.layout.slot(HEAD_B).offset,
            self.layout.slot(EMBED).offset,
        );
        let mut dc = [0.0; CONTEXT_DIM];
        let mut total = 0.0;
        for w in tokens.windows(2) {
            let (prev, next) = (w[0], w[1]);
            let logits = self.next_logits(&c, prev);
            let lse = log_sum_exp(&logits);
            total += logits[next] - lse;
            let e = &embed[prev * CONTEXT_DIM..(prev + 1) * CONTEXT_DIM];
            let mut de = [0.0; CONTEXT_DIM];
            for (v, z) in logits.iter().enumerate() {
                // ∂ log p(next) / ∂ z_v = 1[v = next] − softmax_v
                let d = scale * ((v == next) as u8 as f64 - (z - lse).exp());
                if d == 0.0 {
                    continue;
                }
                let row = hw_off + v * 2 * CONTEXT_DIM;
                for k in 0..CONTEXT_DIM {
                    grad[row + k] += d * c[k];
                    grad[row + CONTEXT_DIM + k] += d * e[k];
                    dc[k] += d * head_w[v * 2 * CONTEXT_DIM + k];
                    de[k] += d * head_w[v * 2 * CONTEXT_DIM + CONTEXT_DIM + k];
                }
                grad[hb_off + v] += d;
            }
            for (k, g) in de.iter().enumerate() {
                grad[e_off + prev * CONTEXT_DIM + k] += g;
            }
        }
        let (pw_off, pb_off) = (self.layout.slot(PROJ_W).offset, self.layout.slot(PROJ_B).offset);
        for (d, g) in dc.iter().enumerate() {
            grad[pb_off + d] += g;
            for (j, f) in features.iter().enumerate() {
                grad[pw_off + d * self.feature_dim + j] += g * f;
            }
        }
        Ok(total)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let meta = json!({ "vocab_size": self.vocab_size, "feature_dim": self.feature_dim, "context_dim": CONTEXT_DIM });
        Checkpoint::from_params(CHECKPOINT_KIND, meta, &self.layout, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, PolicyError> {
        let get = |k: &str| {
            ck.meta.get(k).and_then(|v| v.as_u64()).map(|v| v as usize).ok_or_else(|| {
                PolicyError::Checkpoint(crate::nn::CheckpointError::Mismatch(format!("policy checkpoint lacks meta.{k}")))
            })
        };
        let mut p = Self::zeros(get("vocab_size")?, get("feature_dim")?);
        ck.load_into(CHECKPOINT_KIND, &p.layout, &mut p.params)?;
        Ok(p)
    }
}

/// Frozen snapshot of a policy used as the DPO reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePolicy(ToyPolicy);

impl ReferencePolicy {
    pub fn snapshot(policy: &ToyPolicy) -> Self {
        Self(policy.clone())
    }

    pub fn policy(&self) -> &ToyPolicy {
        &self.0
    }
}

impl std::ops::Deref for ReferencePolicy {
    type Target = ToyPolicy;

    fn deref(&self) -> &ToyPolicy {
        &self.0
    }
}
