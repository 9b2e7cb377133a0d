use serde::{Deserialize, Serialize};

use super::client::RenderedPrompt;
use crate::data::{DefectTag, ImageRecord, Label, PromptKind};

/// Annotation, judging and refinement templates.
///
/// Placeholders: `{label_hint}` and `{defect}` in annotation prompts,
/// `{label_hint}` and `{annotation}` in the rubric, `{response}` and
/// `{suggestions}` in the refinement prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSet {
    pub general_positive: String,
    pub general_negative: String,
    pub specialist: String,
    pub rubric: String,
    pub refinement: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            general_positive: "This image is {label_hint}. Explain the evidence for that verdict. Cover high-level \
                semantics (content, anatomy, text, perspective, physical plausibility) and low-level artifacts \
                (texture, noise, edges, color). Begin the answer with the word {label_hint}."
                .into(),
            general_negative: "Raise questions contradicting the authenticity of this image as it is usually judged. \
                Argue that it is {label_hint}, citing semantic and low-level cues that would support that claim. \
                Begin the answer with the word {label_hint}."
                .into(),
            specialist: "This image is {label_hint} and an expert filter flagged it for {defect}. Examine only \
                {defect} and describe each flaw there that reveals how the image was made. Begin the answer with \
                the word {label_hint}."
                .into(),
            rubric: "The image is {label_hint}. Rate the explanation below from 1 to 5 for relevance, accuracy and \
                comprehensiveness with respect to the image. Reply with a single number.\nExplanation: {annotation}"
                .into(),
            refinement: "Revise the response so that it follows every suggestion. Keep all content the suggestions \
                do not mention and reply with the revised response only.\nResponse: {response}\nSuggestions: \
                {suggestions}"
                .into(),
        }
    }
}

impl PromptSet {
    /// Specialist prompt when the image carries defect tags (the first tag
    /// is used), general positive otherwise.
    pub fn positive_kind(image: &ImageRecord) -> PromptKind {
        match image.defect_tags.first() {
            Some(&d) => PromptKind::Specialist(d),
            None => PromptKind::GeneralPositive,
        }
    }

    /// The negative prompt argues for the opposite of `label`.
    pub fn render(&self, kind: PromptKind, label: Label) -> RenderedPrompt {
        let text = match kind {
            PromptKind::GeneralPositive => fill(&self.general_positive, label, None),
            PromptKind::GeneralNegative => fill(&self.general_negative, label.flipped(), None),
            PromptKind::Specialist(d) => fill(&self.specialist, label, Some(d)),
        };
        RenderedPrompt { kind, label, text }
    }

    pub fn rubric_for(&self, label: Label, annotation: &str) -> String {
        self.rubric.replace("{label_hint}", label.as_str()).replace("{annotation}", annotation)
    }

    pub fn refinement_for(&self, response: &str, suggestions: &str) -> String {
        self.refinement.replace("{response}", response).replace("{suggestions}", suggestions)
    }
}

fn fill(template: &str, label: Label, defect: Option<DefectTag>) -> String {
    let t = template.replace("{label_hint}", label.as_str());
    match defect {
        Some(d) => t.replace("{defect}", d.describe()),
        None => t,
    }
}
