//! The toy multimodal policy: vocabulary, projector + next-token model,
//! supervised and preference losses, greedy decoding, and training loops.

mod decode;
mod loss;
mod model;
mod sequence;
mod train;
mod vocab;

pub use decode::{decode_with_verdict, greedy_decode, Decoded};
pub use loss::{dpo_loss, dpo_objective, mean_margin, sft_loss, DpoTerms, LossOutput};
pub use model::{ReferencePolicy, ToyPolicy, CONTEXT_DIM};
pub use sequence::{DpoExample, SftExample};
pub use train::{train_dpo, train_sft, DpoOutcome, SftOutcome, StageConfig};
pub use vocab::{Vocabulary, BOS, EOS, FAKE, REAL};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("unknown token index {0}")]
    UnknownToken(usize),
    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),
    #[error("invalid sequence: {0}")]
    BadSequence(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Checkpoint(#[from] crate::nn::CheckpointError),
}
