//! Domain records, JSONL persistence, dataset splitting and pipeline configuration.

mod config;
mod jsonl;
mod records;
mod split;
mod store;

use std::path::{Path, PathBuf};

pub use config::{JurorKind, JurorSpec, JuryConfig, PipelineConfig};
pub use jsonl::{append_jsonl, load_jsonl, save_jsonl};
pub use records::{DefectTag, DpoPair, ImageRecord, Label, Origin, PromptKind, Record, SftRecord};
pub use split::{split_dataset, Split, SplitFractions};
pub use store::DatasetStore;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("line {line}: duplicate id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("record {index}: serialization failed: {message}")]
    Serialize { index: usize, message: String },
    #[error("{0}")]
    Precondition(String),
    #[error("config: {0}")]
    Config(String),
    #[error("unknown id {id} in collection {collection}")]
    UnknownId { collection: String, id: String },
}

impl DataError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}
