//! Jury annotation, cross-evaluation, consensus filtering and preference-pair construction.

mod annotate;
mod client;
mod http;
mod log;
mod mock;
mod preference;
mod prompts;

pub use annotate::{
    cross_evaluate, filter_sft, run_annotation, AnnotatedImage, AnnotationOutcome, CrossEvaluation, JurorFailure,
    NegativeAnnotation, JUDGE_MAX, JUDGE_MIN,
};
pub use client::{
    AnnotateRequest, ClientError, ExpertClient, ImageRef, JudgeRequest, JuryOptions, RefineRequest, RenderedPrompt,
    RetryPolicy,
};
pub(crate) use client::fan_out;
pub use http::{api_key_var, parse_judge_score, HttpExpertClient};
pub use log::{LoggingClient, TrafficLog};
pub use mock::{AppendRefiner, MockJuror, Role, ScriptedJuror};
pub use preference::{apply_suggestions, build_d1, build_d2, D1Outcome, D2Outcome, SuggestionRecord, TaskStatus};
pub use prompts::PromptSet;

use std::time::Duration;

use crate::data::{JurorKind, JurorSpec};

#[derive(Debug, thiserror::Error)]
pub enum JuryError {
    #[error("at least one juror is required")]
    NoJurors,
    #[error("juror name {0} is used twice")]
    DuplicateJuror(String),
    #[error("{0}")]
    Precondition(String),
    #[error("task {id} is {status}, expected {expected}")]
    Status { id: String, status: TaskStatus, expected: TaskStatus },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("juror {0}: {1}")]
    Config(String, String),
}

/// Builds a client from its config entry.
pub fn client_from_spec(spec: &JurorSpec) -> Result<Box<dyn ExpertClient>, JuryError> {
    match spec.kind {
        JurorKind::Mock => Ok(Box::new(MockJuror::new(spec.name.clone()))),
        JurorKind::Http => {
            let endpoint = spec
                .endpoint
                .as_deref()
                .ok_or_else(|| JuryError::Config(spec.name.clone(), "http juror needs an endpoint".into()))?;
            let model = spec.model.as_deref().unwrap_or(&spec.name);
            Ok(Box::new(HttpExpertClient::new(&spec.name, endpoint, model, Duration::from_secs(120))))
        }
    }
}
