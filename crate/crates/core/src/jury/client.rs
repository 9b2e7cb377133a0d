use std::path::PathBuf;
use std::time::Duration;

use crate::data::{Label, PromptKind};

/// An image as seen by a juror: its dataset id and, for transports that
/// upload pixels, the file it lives in.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageRef {
    pub id: String,
    pub path: Option<PathBuf>,
}

impl ImageRef {
    pub fn new(id: impl Into<String>, path: Option<PathBuf>) -> Self {
        Self { id: id.into(), path }
    }
}

/// A prompt with the structured fields it was rendered from.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    /// Ground-truth label of the image (the hint given to annotators).
    pub label: Label,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotateRequest {
    pub image: ImageRef,
    pub prompt: RenderedPrompt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeRequest {
    pub image: ImageRef,
    pub label: Label,
    pub annotation: String,
    pub rubric: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineRequest {
    pub response: String,
    pub suggestions: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("bad reply: {0}")]
    Protocol(String),
    #[error("{0} is not supported by this client")]
    Unsupported(&'static str),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, ClientError::Unsupported(_))
    }
}

/// A model that can annotate images, judge annotations and refine text.
pub trait ExpertClient: Send + Sync {
    fn name(&self) -> &str;

    fn annotate(&self, req: &AnnotateRequest) -> Result<String, ClientError>;

    /// Raw judge score; callers clamp to the judge scale.
    fn judge(&self, req: &JudgeRequest) -> Result<f64, ClientError>;

    fn refine(&self, _req: &RefineRequest) -> Result<String, ClientError> {
        Err(ClientError::Unsupported("refine"))
    }
}

/// Exponential backoff: the wait before retry `i` (1-based) is
/// `initial_backoff · 2^(i−1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, initial_backoff: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: usize) -> Self {
        Self { attempts, initial_backoff: Duration::ZERO }
    }

    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, ClientError>) -> Result<T, ClientError> {
        let mut wait = self.initial_backoff;
        let mut attempt = 1;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < self.attempts.max(1) => {
                    tracing::debug!(attempt, error = %e, "retrying juror call");
                    if !wait.is_zero() {
                        std::thread::sleep(wait);
                    }
                    wait *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Options shared by the fan-out operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JuryOptions {
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl Default for JuryOptions {
    fn default() -> Self {
        Self { parallelism: 4, retry: RetryPolicy::default() }
    }
}

impl From<&crate::data::JuryConfig> for JuryOptions {
    fn from(c: &crate::data::JuryConfig) -> Self {
        Self {
            parallelism: c.parallelism.max(1),
            retry: RetryPolicy { attempts: c.retry_attempts.max(1), initial_backoff: Duration::from_millis(c.backoff_ms) },
        }
    }
}

/// Runs `f` over `items` on at most `parallelism` threads; output order
/// follows input order.
pub(crate) fn fan_out<T: Sync, R: Send>(items: &[T], parallelism: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}
