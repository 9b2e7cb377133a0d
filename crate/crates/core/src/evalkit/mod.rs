//! Explanation metrics, judge-score batches and ELO ratings.

mod elo;
mod judge;
mod text;

pub use elo::{elo_run, elo_update, EloConfig, EloTable, VoteRecord, Winner};
pub use judge::{judge_score_batch, JudgeBatchReport, JudgeItem};
pub use text::{bleu1, cider, lcs_len, meteor, rouge_l, text_metrics, tokenize, CiderScorer, SampleScores, TextMetricsReport};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unexpected vote: {0}")]
    UnexpectedVote(String),
    #[error("a model cannot play against itself ({0})")]
    SameModel(String),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("length mismatch: {0} hypotheses for {1} references")]
    LengthMismatch(usize, usize),
    #[error("invalid config: {0}")]
    Config(String),
}
