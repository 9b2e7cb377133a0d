use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::experts::ExpertLogits;
use crate::nn::sigmoid;

/// Per-source weights of the fused verdict logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionWeights {
    /// Policy (raw) logits.
    pub alpha: f64,
    /// Semantic expert.
    pub beta: f64,
    /// NPR expert.
    pub gamma: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: 0.2 }
    }
}

impl FusionWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    /// Policy logits only.
    pub fn policy_only() -> Self {
        Self::new(1.0, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()
    }
}

/// Fused `(real, fake)` logits at the verdict position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedLogits {
    pub real: f64,
    pub fake: f64,
}

impl FusedLogits {
    pub fn p_fake(&self) -> f64 {
        p_fake_of(self.real, self.fake)
    }

    pub fn verdict(&self) -> Label {
        verdict_of(self.p_fake())
    }
}

/// `e^fake / (e^real + e^fake)`, normalized over the pair only.
pub fn p_fake_of(real: f64, fake: f64) -> f64 {
    sigmoid(fake - real)
}

/// Fake iff `p_fake > 0.5`; an exact tie is real.
pub fn verdict_of(p_fake: f64) -> Label {
    if p_fake > 0.5 {
        Label::Fake
    } else {
        Label::Real
    }
}

/// `α·raw + β·clip + γ·npr`, independently per class.
pub fn fuse_logits(raw: ExpertLogits, clip: ExpertLogits, npr: ExpertLogits, w: FusionWeights) -> FusedLogits {
    FusedLogits {
        real: w.alpha * raw.logit_real + w.beta * clip.logit_real + w.gamma * npr.logit_real,
        fake: w.alpha * raw.logit_fake + w.beta * clip.logit_fake + w.gamma * npr.logit_fake,
    }
}
