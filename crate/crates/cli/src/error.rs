use std::path::{Path, PathBuf};

use holmes_core::data::DataError;
use holmes_core::evalkit::EvalError;
use holmes_core::experts::ExpertError;
use holmes_core::fusion::FusionError;
use holmes_core::imaging::ImagingError;
use holmes_core::jury::{ClientError, JuryError};
use holmes_core::nn::CheckpointError;
use holmes_core::pipeline::PipelineError;
use holmes_core::policy::PolicyError;

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

macro_rules! via_pipeline {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Pipeline(e.into())
            }
        })*
    };
}

via_pipeline!(DataError, ImagingError, ExpertError, PolicyError, FusionError, JuryError, CheckpointError);

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 2 for anything that failed to read, write or reach a peer, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        let io = match self {
            CliError::Io { .. } => true,
            CliError::Pipeline(p) => match p {
                PipelineError::Data(DataError::Io { .. }) => true,
                PipelineError::Imaging(ImagingError::Io(..)) => true,
                PipelineError::Checkpoint(CheckpointError::Io { .. }) => true,
                PipelineError::Expert(ExpertError::Checkpoint(CheckpointError::Io { .. })) => true,
                PipelineError::Policy(PolicyError::Io(..) | PolicyError::Checkpoint(CheckpointError::Io { .. })) => true,
                PipelineError::Jury(JuryError::Client(ClientError::Transport(_))) => true,
                _ => false,
            },
            CliError::Eval(_) | CliError::Invalid(_) => false,
        };
        if io {
            EXIT_IO
        } else {
            EXIT_VALIDATION
        }
    }
}
