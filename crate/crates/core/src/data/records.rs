//! Record types persisted as JSONL.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Ground-truth authenticity of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// Class index used by every two-way logit pair: real = 0, fake = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Real),
            1 => Some(Label::Fake),
            _ => None,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Known generation defect categories routed to specialist prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectTag {
    Face,
    Body,
    TextLogos,
    ProjectiveGeometry,
    CommonsensePhysics,
}

impl DefectTag {
    pub const ALL: [DefectTag; 5] = [
        DefectTag::Face,
        DefectTag::Body,
        DefectTag::TextLogos,
        DefectTag::ProjectiveGeometry,
        DefectTag::CommonsensePhysics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DefectTag::Face => "face",
            DefectTag::Body => "body",
            DefectTag::TextLogos => "text_logos",
            DefectTag::ProjectiveGeometry => "projective_geometry",
            DefectTag::CommonsensePhysics => "commonsense_physics",
        }
    }

    /// Human-readable phrase used inside prompt bodies.
    pub fn describe(self) -> &'static str {
        match self {
            DefectTag::Face => "facial structure and expression",
            DefectTag::Body => "human body anatomy, hands and limbs",
            DefectTag::TextLogos => "rendered text, signs and logos",
            DefectTag::ProjectiveGeometry => "perspective, vanishing lines and projective geometry",
            DefectTag::CommonsensePhysics => "commonsense and physical plausibility",
        }
    }
}

impl fmt::Display for DefectTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One image of a dataset manifest. Only the path is stored, never pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: PathBuf,
    pub label: Label,
    pub source: String,
    #[serde(default)]
    pub defect_tags: Vec<DefectTag>,
}

impl ImageRecord {
    /// Path with relative entries resolved against `base_dir`.
    pub fn resolved_path(&self, base_dir: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            base_dir.join(&self.path)
        }
    }
}

/// Which of the annotation prompts produced a text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    GeneralPositive,
    GeneralNegative,
    Specialist(DefectTag),
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptKind::GeneralPositive => f.write_str("general_positive"),
            PromptKind::GeneralNegative => f.write_str("general_negative"),
            PromptKind::Specialist(d) => write!(f, "specialist({d})"),
        }
    }
}

/// An annotated explanation candidate for supervised fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub image_id: String,
    pub prompt_kind: PromptKind,
    pub annotation: String,
    pub annotator: String,
    pub judge_scores: BTreeMap<String, f64>,
    pub consensus_score: f64,
}

impl SftRecord {
    /// Arithmetic mean of the judge scores; `None` without any judge.
    pub fn mean_judge_score(&self) -> Option<f64> {
        if self.judge_scores.is_empty() {
            return None;
        }
        Some(self.judge_scores.values().sum::<f64>() / self.judge_scores.len() as f64)
    }
}

/// Provenance of a preference pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Positive-prompt annotation against negative-prompt annotation.
    D1,
    /// Refined response against the original response.
    D2,
}

/// A (chosen, rejected) preference pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpoPair {
    pub id: String,
    pub image_id: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub origin: Origin,
}

pub(crate) const CONSENSUS_TOLERANCE: f64 = 1e-9;

/// A JSONL-persistable record with a unique id and self-validation.
pub trait Record: Serialize + DeserializeOwned {
    fn id(&self) -> &str;

    /// Checks record invariants. `base_dir` is the directory of the file the
    /// record was read from (or is written to).
    fn validate(&self, _base_dir: &Path) -> Result<(), String> {
        Ok(())
    }
}

fn non_empty(field: &str, value: &str) -> Result<(), String> {
    if value.trim().is_empty() {
        Err(format!("field {field} must be non-empty"))
    } else {
        Ok(())
    }
}

impl Record for ImageRecord {
    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self, base_dir: &Path) -> Result<(), String> {
        non_empty("id", &self.id)?;
        let resolved = self.resolved_path(base_dir);
        if !resolved.exists() {
            return Err(format!("image path {} does not exist", resolved.display()));
        }
        Ok(())
    }
}

impl Record for SftRecord {
    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self, _base_dir: &Path) -> Result<(), String> {
        non_empty("id", &self.id)?;
        non_empty("annotation", &self.annotation)?;
        if let Some((name, s)) = self.judge_scores.iter().find(|(_, s)| !s.is_finite()) {
            return Err(format!("judge score of {name} is not finite ({s})"));
        }
        let mean = self
            .mean_judge_score()
            .ok_or_else(|| "judge_scores must not be empty".to_string())?;
        if (mean - self.consensus_score).abs() > CONSENSUS_TOLERANCE {
            return Err(format!(
                "consensus_score {} differs from judge mean {mean}",
                self.consensus_score
            ));
        }
        Ok(())
    }
}

impl Record for DpoPair {
    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self, _base_dir: &Path) -> Result<(), String> {
        non_empty("id", &self.id)?;
        if self.chosen == self.rejected {
            return Err("chosen and rejected must differ".into());
        }
        Ok(())
    }
}
