use std::collections::{HashMap, HashSet};

use super::client::{AnnotateRequest, ClientError, ExpertClient, JudgeRequest, RefineRequest};
use crate::data::{DefectTag, Label, PromptKind};

fn fnv1a(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in p.bytes().chain([0xff]) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

const REAL_TEXTS: [&str; 3] = [
    "real the image shows natural sensor noise and consistent edges",
    "real natural camera grain and consistent lighting with sharp edges",
    "real the photograph shows fine texture and plausible shadows",
];

const FAKE_TEXTS: [&str; 3] = [
    "fake the image shows periodic upsampling artifacts and a warm color cast",
    "fake periodic pixel blocks and a warm tint of the scene",
    "fake visible grid pattern of upsampling artifacts with warm color",
];

fn defect_word(d: DefectTag) -> &'static str {
    match d {
        DefectTag::Face => "face",
        DefectTag::Body => "anatomy",
        DefectTag::TextLogos => "text",
        DefectTag::ProjectiveGeometry => "perspective",
        DefectTag::CommonsensePhysics => "physics",
    }
}

/// Deterministic offline juror. Annotations are fixed sentences in the
/// default policy vocabulary; the variant depends on the juror name.
/// Judge scores fall in `[4, 5]` for explanations that open with the
/// correct verdict and in `[2, 3]` otherwise.
#[derive(Debug, Clone)]
pub struct MockJuror {
    name: String,
    variant: usize,
}

impl MockJuror {
    pub fn new(name: impl Into<String>) -> Self {
        let name = name.into();
        let variant = (fnv1a(&[&name]) % 3) as usize;
        Self { name, variant }
    }

    /// The sentence this juror writes when arguing for `label`.
    pub fn text_for(&self, label: Label, kind: PromptKind) -> String {
        match (label, kind) {
            (Label::Fake, PromptKind::Specialist(d)) => {
                format!("fake the {} is implausible with upsampling artifacts", defect_word(d))
            }
            (Label::Real, _) => REAL_TEXTS[self.variant].to_string(),
            (Label::Fake, _) => FAKE_TEXTS[self.variant].to_string(),
        }
    }
}

impl ExpertClient for MockJuror {
    fn name(&self) -> &str {
        &self.name
    }

    fn annotate(&self, req: &AnnotateRequest) -> Result<String, ClientError> {
        let argued = match req.prompt.kind {
            PromptKind::GeneralNegative => req.prompt.label.flipped(),
            _ => req.prompt.label,
        };
        Ok(self.text_for(argued, req.prompt.kind))
    }

    fn judge(&self, req: &JudgeRequest) -> Result<f64, ClientError> {
        let jitter = (fnv1a(&[&self.name, &req.image.id, &req.annotation]) % 11) as f64 / 10.0;
        let correct = req.annotation.split_whitespace().next() == Some(req.label.as_str());
        Ok(if correct { 4.0 + jitter } else { 2.0 + jitter })
    }

    fn refine(&self, req: &RefineRequest) -> Result<String, ClientError> {
        Ok(format!("{} {}", req.response, req.suggestions))
    }
}

/// Which side of the prompt pair an annotation answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Positive,
    Negative,
}

impl Role {
    pub fn of(kind: PromptKind) -> Role {
        match kind {
            PromptKind::GeneralNegative => Role::Negative,
            _ => Role::Positive,
        }
    }
}

/// Fixture juror answering from explicit tables, with failure injection.
#[derive(Debug, Clone, Default)]
pub struct ScriptedJuror {
    name: String,
    annotations: HashMap<(String, Role), String>,
    scores: HashMap<String, f64>,
    default_score: Option<f64>,
    failing_images: HashSet<String>,
    failing_judge: bool,
}

impl ScriptedJuror {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    pub fn annotation(mut self, image_id: &str, role: Role, text: &str) -> Self {
        self.annotations.insert((image_id.to_string(), role), text.to_string());
        self
    }

    /// The score this juror gives to `annotation` wherever it appears.
    pub fn score(mut self, annotation: &str, score: f64) -> Self {
        self.scores.insert(annotation.to_string(), score);
        self
    }

    pub fn default_score(mut self, score: f64) -> Self {
        self.default_score = Some(score);
        self
    }

    /// Every call about this image fails at the transport level.
    pub fn failing_on(mut self, image_id: &str) -> Self {
        self.failing_images.insert(image_id.to_string());
        self
    }

    /// Every judge call fails at the transport level.
    pub fn failing_judge(mut self) -> Self {
        self.failing_judge = true;
        self
    }
}

impl ExpertClient for ScriptedJuror {
    fn name(&self) -> &str {
        &self.name
    }

    fn annotate(&self, req: &AnnotateRequest) -> Result<String, ClientError> {
        if self.failing_images.contains(&req.image.id) {
            return Err(ClientError::Transport(format!("{} unreachable", self.name)));
        }
        self.annotations
            .get(&(req.image.id.clone(), Role::of(req.prompt.kind)))
            .cloned()
            .ok_or_else(|| ClientError::Protocol(format!("no scripted annotation for {}", req.image.id)))
    }

    fn judge(&self, req: &JudgeRequest) -> Result<f64, ClientError> {
        if self.failing_judge || self.failing_images.contains(&req.image.id) {
            return Err(ClientError::Transport(format!("{} unreachable", self.name)));
        }
        self.scores
            .get(&req.annotation)
            .copied()
            .or(self.default_score)
            .ok_or_else(|| ClientError::Protocol(format!("no scripted score for {:?}", req.annotation)))
    }
}

/// Refiner that appends a fixed suffix to the response.
#[derive(Debug, Clone)]
pub struct AppendRefiner {
    name: String,
    suffix: String,
}

impl AppendRefiner {
    pub fn new(suffix: impl Into<String>) -> Self {
        Self { name: "append-refiner".into(), suffix: suffix.into() }
    }
}

impl ExpertClient for AppendRefiner {
    fn name(&self) -> &str {
        &self.name
    }

    fn annotate(&self, _: &AnnotateRequest) -> Result<String, ClientError> {
        Err(ClientError::Unsupported("annotate"))
    }

    fn judge(&self, _: &JudgeRequest) -> Result<f64, ClientError> {
        Err(ClientError::Unsupported("judge"))
    }

    fn refine(&self, req: &RefineRequest) -> Result<String, ClientError> {
        Ok(format!("{}{}", req.response, self.suffix))
    }
}
