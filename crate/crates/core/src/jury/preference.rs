use std::fmt;

use serde::{Deserialize, Serialize};

use super::annotate::AnnotatedImage;
use super::client::{ExpertClient, RefineRequest, RetryPolicy};
use super::prompts::PromptSet;
use super::JuryError;
use crate::data::{DpoPair, Origin, Record};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct D1Outcome {
    pub pairs: Vec<DpoPair>,
    pub warnings: Vec<String>,
}

/// One pair per image: the kept positive annotation is chosen, the negative
/// annotation rejected. Every annotated image takes part, whether or not its
/// annotation passed the SFT filter.
pub fn build_d1(annotated: &[AnnotatedImage]) -> D1Outcome {
    let mut out = D1Outcome::default();
    for a in annotated {
        match &a.negative {
            None => out.warnings.push(format!("image {}: no negative annotation, skipped", a.image_id)),
            Some(neg) if neg.text == a.positive.annotation => {
                out.warnings.push(format!("image {}: negative equals positive annotation, skipped", a.image_id))
            }
            Some(neg) => out.pairs.push(DpoPair {
                id: format!("d1:{}", a.image_id),
                image_id: a.image_id.clone(),
                prompt: a.prompt.clone(),
                chosen: a.positive.annotation.clone(),
                rejected: neg.text.clone(),
                origin: Origin::D1,
            }),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Suggested,
    Revised,
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskStatus::Pending => "pending",
            TaskStatus::Suggested => "suggested",
            TaskStatus::Revised => "revised",
        })
    }
}

/// A retained SFT response travelling through human review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionRecord {
    pub item_id: String,
    #[serde(default)]
    pub image_id: String,
    #[serde(default)]
    pub prompt: String,
    pub sft_response: String,
    #[serde(default)]
    pub suggestions: String,
    #[serde(default)]
    pub revised_response: Option<String>,
    pub status: TaskStatus,
}

impl SuggestionRecord {
    pub fn pending(item_id: &str, image_id: &str, prompt: &str, sft_response: &str) -> Self {
        Self {
            item_id: item_id.into(),
            image_id: image_id.into(),
            prompt: prompt.into(),
            sft_response: sft_response.into(),
            suggestions: String::new(),
            revised_response: None,
            status: TaskStatus::Pending,
        }
    }

    /// pending → suggested.
    pub fn suggest(&mut self, text: &str) -> Result<(), JuryError> {
        if self.status != TaskStatus::Pending {
            return Err(JuryError::Status { id: self.item_id.clone(), status: self.status, expected: TaskStatus::Pending });
        }
        if text.trim().is_empty() {
            return Err(JuryError::Precondition("suggestion text is empty".into()));
        }
        self.suggestions = text.to_string();
        self.status = TaskStatus::Suggested;
        Ok(())
    }
}

impl Record for SuggestionRecord {
    fn id(&self) -> &str {
        &self.item_id
    }

    fn validate(&self, _: &std::path::Path) -> Result<(), String> {
        if self.item_id.trim().is_empty() || self.sft_response.trim().is_empty() {
            return Err("item_id and sft_response must be non-empty".into());
        }
        if self.status >= TaskStatus::Suggested && self.suggestions.trim().is_empty() {
            return Err(format!("{} task without suggestions", self.status));
        }
        if (self.status == TaskStatus::Revised) != self.revised_response.is_some() {
            return Err("revised_response is set exactly when the status is revised".into());
        }
        Ok(())
    }
}

/// Runs the refiner on a suggested record: chosen is the revision,
/// rejected the original response. On failure the record stays suggested.
pub fn apply_suggestions(
    record: &mut SuggestionRecord,
    refiner: &dyn ExpertClient,
    prompts: &PromptSet,
    retry: &RetryPolicy,
) -> Result<DpoPair, JuryError> {
    if record.status != TaskStatus::Suggested {
        return Err(JuryError::Status { id: record.item_id.clone(), status: record.status, expected: TaskStatus::Suggested });
    }
    if record.suggestions.trim().is_empty() {
        return Err(JuryError::Precondition(format!("task {} has no suggestions to apply", record.item_id)));
    }
    let req = RefineRequest {
        response: record.sft_response.clone(),
        suggestions: record.suggestions.clone(),
        prompt: prompts.refinement_for(&record.sft_response, &record.suggestions),
    };
    let revised = retry.run(|| refiner.refine(&req))?;
    if revised.trim().is_empty() || revised == record.sft_response {
        return Err(JuryError::Precondition(format!("refiner returned no change for task {}", record.item_id)));
    }
    record.revised_response = Some(revised.clone());
    record.status = TaskStatus::Revised;
    Ok(DpoPair {
        id: format!("d2:{}", record.item_id),
        image_id: record.image_id.clone(),
        prompt: record.prompt.clone(),
        chosen: revised,
        rejected: record.sft_response.clone(),
        origin: Origin::D2,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct D2Outcome {
    pub pairs: Vec<DpoPair>,
    /// `(item_id, message)` of suggested records the refiner could not revise.
    pub failures: Vec<(String, String)>,
}

/// Applies suggestions to every suggested record; other statuses are skipped.
pub fn build_d2(
    records: &mut [SuggestionRecord],
    refiner: &dyn ExpertClient,
    prompts: &PromptSet,
    retry: &RetryPolicy,
) -> D2Outcome {
    let mut out = D2Outcome::default();
    for r in records.iter_mut().filter(|r| r.status == TaskStatus::Suggested) {
        match apply_suggestions(r, refiner, prompts, retry) {
            Ok(p) => out.pairs.push(p),
            Err(e) => out.failures.push((r.item_id.clone(), e.to_string())),
        }
    }
    out
}
