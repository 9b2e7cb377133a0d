use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::client::{fan_out, AnnotateRequest, ClientError, ExpertClient, ImageRef, JudgeRequest, JuryOptions, RetryPolicy};
use super::prompts::PromptSet;
use super::JuryError;
use crate::data::{ImageRecord, Label, PromptKind, Record, SftRecord};

pub const JUDGE_MIN: f64 = 1.0;
pub const JUDGE_MAX: f64 = 5.0;

/// A juror call that failed after retries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JurorFailure {
    pub image_id: String,
    pub juror: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEvaluation {
    pub judge_scores: BTreeMap<String, f64>,
    /// Mean over responding judges; `None` when nobody responded.
    pub consensus_score: Option<f64>,
    pub failures: Vec<JurorFailure>,
}

/// Every juror judges `annotation`; scores are clamped to `[1, 5]` and
/// failing jurors are left out of the mean.
pub fn cross_evaluate(
    image: &ImageRef,
    label: Label,
    annotation: &str,
    jurors: &[&dyn ExpertClient],
    prompts: &PromptSet,
    retry: &RetryPolicy,
) -> CrossEvaluation {
    let req = JudgeRequest {
        image: image.clone(),
        label,
        annotation: annotation.to_string(),
        rubric: prompts.rubric_for(label, annotation),
    };
    let mut judge_scores = BTreeMap::new();
    let mut failures = Vec::new();
    for j in jurors {
        let out = retry.run(|| j.judge(&req)).and_then(|s| {
            if s.is_finite() {
                Ok(s.clamp(JUDGE_MIN, JUDGE_MAX))
            } else {
                Err(ClientError::Protocol(format!("non-finite score {s}")))
            }
        });
        match out {
            Ok(s) => {
                judge_scores.insert(j.name().to_string(), s);
            }
            Err(e) => failures.push(JurorFailure {
                image_id: image.id.clone(),
                juror: j.name().to_string(),
                stage: "judge".into(),
                message: e.to_string(),
            }),
        }
    }
    let consensus_score =
        (!judge_scores.is_empty()).then(|| judge_scores.values().sum::<f64>() / judge_scores.len() as f64);
    CrossEvaluation { judge_scores, consensus_score, failures }
}

/// Negative-prompt annotation of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeAnnotation {
    pub annotator: String,
    pub text: String,
}

/// Jury output for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub image_id: String,
    pub label: Label,
    /// Rendered positive (or specialist) prompt.
    pub prompt: String,
    /// The kept positive annotation.
    pub positive: SftRecord,
    pub negative: Option<NegativeAnnotation>,
    /// Every scored positive annotation, best first.
    pub candidates: Vec<SftRecord>,
}

impl Record for AnnotatedImage {
    fn id(&self) -> &str {
        &self.image_id
    }

    fn validate(&self, base_dir: &Path) -> Result<(), String> {
        if self.positive.image_id != self.image_id {
            return Err(format!("positive annotation belongs to {}", self.positive.image_id));
        }
        self.positive.validate(base_dir)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationOutcome {
    /// Sorted by image id.
    pub annotated: Vec<AnnotatedImage>,
    pub failed_images: Vec<String>,
    pub failures: Vec<JurorFailure>,
}

fn sorted_jurors(jurors: &[Box<dyn ExpertClient>]) -> Result<Vec<&dyn ExpertClient>, JuryError> {
    if jurors.is_empty() {
        return Err(JuryError::NoJurors);
    }
    let mut v: Vec<&dyn ExpertClient> = jurors.iter().map(|b| b.as_ref()).collect();
    v.sort_by(|a, b| a.name().cmp(b.name()));
    if let Some(w) = v.windows(2).find(|w| w[0].name() == w[1].name()) {
        return Err(JuryError::DuplicateJuror(w[0].name().to_string()));
    }
    Ok(v)
}

/// Every juror annotates every image under the positive (or specialist)
/// and the negative prompt; every juror then judges every positive
/// annotation. The positive annotation with the highest consensus is kept,
/// ties going to the juror name that sorts first. The negative annotation
/// comes from the kept juror, or from the next best juror that produced one.
pub fn run_annotation(
    images: &[ImageRecord],
    base_dir: &Path,
    jurors: &[Box<dyn ExpertClient>],
    prompts: &PromptSet,
    opts: &JuryOptions,
) -> Result<AnnotationOutcome, JuryError> {
    let jurors = sorted_jurors(jurors)?;
    let mut images: Vec<&ImageRecord> = images.iter().collect();
    images.sort_by(|a, b| a.id.cmp(&b.id));

    // Stage 1: annotation calls.
    let mut jobs = Vec::new();
    for (ii, img) in images.iter().enumerate() {
        let image = ImageRef::new(img.id.clone(), Some(img.resolved_path(base_dir)));
        for kind in [PromptSet::positive_kind(img), PromptKind::GeneralNegative] {
            let prompt = prompts.render(kind, img.label);
            for (ji, _) in jurors.iter().enumerate() {
                jobs.push((ii, ji, AnnotateRequest { image: image.clone(), prompt: prompt.clone() }));
            }
        }
    }
    let texts = fan_out(&jobs, opts.parallelism, |(_, ji, req)| {
        opts.retry.run(|| jurors[*ji].annotate(req)).and_then(|t| {
            if t.trim().is_empty() {
                Err(ClientError::Protocol("empty annotation".into()))
            } else {
                Ok(t)
            }
        })
    });

    let mut failures = Vec::new();
    let mut positives: Vec<Vec<(usize, String)>> = vec![Vec::new(); images.len()];
    let mut negatives: Vec<Vec<(usize, String)>> = vec![Vec::new(); images.len()];
    for ((ii, ji, req), out) in jobs.iter().zip(texts) {
        match out {
            Ok(text) if req.prompt.kind == PromptKind::GeneralNegative => negatives[*ii].push((*ji, text)),
            Ok(text) => positives[*ii].push((*ji, text)),
            Err(e) => failures.push(JurorFailure {
                image_id: images[*ii].id.clone(),
                juror: jurors[*ji].name().to_string(),
                stage: "annotate".into(),
                message: e.to_string(),
            }),
        }
    }

    // Stage 2: cross-evaluation of positive annotations.
    let judge_jobs: Vec<(usize, usize, String)> = positives
        .iter()
        .enumerate()
        .flat_map(|(ii, v)| v.iter().map(move |(ji, t)| (ii, *ji, t.clone())))
        .collect();
    let evals = fan_out(&judge_jobs, opts.parallelism, |(ii, _, text)| {
        let img = images[*ii];
        let image = ImageRef::new(img.id.clone(), Some(img.resolved_path(base_dir)));
        cross_evaluate(&image, img.label, text, &jurors, prompts, &opts.retry)
    });

    let mut scored: Vec<Vec<SftRecord>> = vec![Vec::new(); images.len()];
    for ((ii, ji, text), eval) in judge_jobs.into_iter().zip(evals) {
        failures.extend(eval.failures);
        let Some(consensus_score) = eval.consensus_score else { continue };
        let img = images[ii];
        let annotator = jurors[ji].name().to_string();
        scored[ii].push(SftRecord {
            id: format!("{}/{}", img.id, annotator),
            image_id: img.id.clone(),
            prompt_kind: PromptSet::positive_kind(img),
            annotation: text,
            annotator,
            judge_scores: eval.judge_scores,
            consensus_score,
        });
    }

    let mut outcome = AnnotationOutcome { failures, ..Default::default() };
    for (ii, mut cands) in scored.into_iter().enumerate() {
        let img = images[ii];
        // Stable sort keeps the name order for equal consensus.
        cands.sort_by(|a, b| b.consensus_score.total_cmp(&a.consensus_score));
        let Some(best) = cands.first().cloned() else {
            outcome.failed_images.push(img.id.clone());
            continue;
        };
        let negative = cands.iter().find_map(|c| {
            negatives[ii]
                .iter()
                .find(|(ji, _)| jurors[*ji].name() == c.annotator)
                .map(|(ji, t)| NegativeAnnotation { annotator: jurors[*ji].name().to_string(), text: t.clone() })
        });
        outcome.annotated.push(AnnotatedImage {
            image_id: img.id.clone(),
            label: img.label,
            prompt: prompts.render(best.prompt_kind, img.label).text,
            positive: SftRecord { id: img.id.clone(), ..best },
            negative,
            candidates: cands,
        });
    }
    Ok(outcome)
}

/// Records whose consensus reaches the threshold, in input order.
pub fn filter_sft(candidates: &[SftRecord], threshold: f64) -> Vec<SftRecord> {
    candidates.iter().filter(|r| r.consensus_score >= threshold).cloned().collect()
}
