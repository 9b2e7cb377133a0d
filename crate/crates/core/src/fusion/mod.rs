//! Collaborative decoding, the detection verdict, and detection metrics.

mod detect;
mod fuse;
mod metrics;

pub use detect::{DetectionRecord, DetectionResult, Detector, ExpertPanel, FeatureNormalizer, PanelOutput};
pub use fuse::{fuse_logits, p_fake_of, verdict_of, FusedLogits, FusionWeights};
pub use metrics::{accuracy, average_precision, MetricsReport, ScoredSample, SourceMetrics};

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("no samples to score")]
    Empty,
    #[error("length mismatch: {0} predictions for {1} labels")]
    LengthMismatch(usize, usize),
    #[error("average precision needs at least one fake sample")]
    NoPositives,
    #[error("score {0} is not a probability")]
    BadScore(f64),
    #[error("feature normalizer: {0}")]
    Normalizer(String),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
}
