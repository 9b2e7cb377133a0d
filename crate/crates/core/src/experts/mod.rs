//! The two visual experts (semantic and residual-based) and their
//! binary cross-entropy pre-training.

mod loss;
mod mlp;
mod npr;
mod semantic;
mod train;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::imaging::ImageTensor;

pub use loss::{bce_loss, mean_bce_loss};
pub use mlp::{MlpHead, MlpSpec};
pub use npr::{NprExpert, NPR_CHANNELS};
pub use semantic::{SemanticExpert, SemanticExtractor, SEMANTIC_DIM};
pub use train::{train_expert, TrainConfig, TrainOutcome};

/// Pre-softmax scores of the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExpertLogits {
    pub logit_real: f64,
    pub logit_fake: f64,
}

impl ExpertLogits {
    pub fn new(logit_real: f64, logit_fake: f64) -> Self {
        Self { logit_real, logit_fake }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.logit_real, self.logit_fake]
    }

    pub fn get(&self, label: Label) -> f64 {
        self.as_array()[label.index()]
    }

    /// `[p_real, p_fake]`.
    pub fn softmax(&self) -> [f64; 2] {
        let p = crate::nn::softmax(&self.as_array());
        [p[0], p[1]]
    }

    pub fn p_fake(&self) -> f64 {
        self.softmax()[1]
    }

    pub fn is_finite(&self) -> bool {
        self.logit_real.is_finite() && self.logit_fake.is_finite()
    }
}

impl From<[f64; 2]> for ExpertLogits {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExpertError {
    #[error("training set must contain both labels")]
    SingleClass,
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Checkpoint(#[from] crate::nn::CheckpointError),
}

/// A classifier with a flat trainable parameter vector.
pub trait Expert {
    /// What the trainable part consumes (features, residual maps, ...).
    type Input;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn logits(&self, input: &Self::Input) -> ExpertLogits;

    /// Adds `scale · ∂loss/∂θ` into `grad` and returns the BCE loss.
    fn accumulate_grad(&self, input: &Self::Input, label: Label, scale: f64, grad: &mut [f64]) -> f64;
}

/// An expert that runs directly on images through a frozen preprocessing step.
pub trait VisualExpert: Expert {
    fn prepare(&self, img: &ImageTensor) -> Self::Input;

    fn expert_logits(&self, img: &ImageTensor) -> ExpertLogits {
        self.logits(&self.prepare(img))
    }
}
