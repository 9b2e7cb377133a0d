use serde::{Deserialize, Serialize};

use super::fuse::{fuse_logits, FusedLogits, FusionWeights};
use super::FusionError;
use crate::data::{Label, Record};
use crate::experts::{Expert, ExpertLogits, NprExpert, SemanticExpert, VisualExpert};
use crate::imaging::ImageTensor;
use crate::policy::{decode_with_verdict, greedy_decode, Decoded, ToyPolicy, Vocabulary};

/// Per-dimension standardization fitted on training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, FusionError> {
        let first = rows.first().ok_or(FusionError::Empty)?;
        let dim = first.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(FusionError::Normalizer("rows differ in length".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        // Constant dimensions are centred but not scaled.
        let std = var.into_iter().map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

/// Both frozen visual experts plus the feature normalization feeding the policy.
#[derive(Debug, Clone)]
pub struct ExpertPanel {
    pub semantic: SemanticExpert,
    pub npr: NprExpert,
    pub normalizer: FeatureNormalizer,
}

/// Everything the detector needs from the experts for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelOutput {
    /// Normalized `[f_img; f_npr]`.
    pub features: Vec<f64>,
    pub clip: ExpertLogits,
    pub npr: ExpertLogits,
}

impl ExpertPanel {
    /// Unnormalized `[f_img; f_npr]`.
    pub fn raw_features(&self, img: &ImageTensor) -> Vec<f64> {
        let mut f = self.semantic.features(img);
        f.extend(self.npr.features(img));
        f
    }

    pub fn analyze(&self, img: &ImageTensor) -> PanelOutput {
        let sem = self.semantic.features(img);
        let clip = self.semantic.logits(&sem);
        let (npr_feat, npr) = self.npr.features_and_logits(&self.npr.prepare(img));
        let mut raw = sem;
        raw.extend(npr_feat);
        PanelOutput { features: self.normalizer.apply(&raw), clip, npr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub fused: FusedLogits,
    pub p_fake: f64,
    pub verdict: Label,
    pub explanation: String,
}

/// One line of a per-image results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub id: String,
    pub p_fake: f64,
    pub verdict: Label,
    pub explanation: String,
}

impl Record for DetectionRecord {
    fn id(&self) -> &str {
        &self.id
    }

    fn validate(&self, _: &std::path::Path) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.p_fake) {
            return Err(format!("p_fake {} outside [0, 1]", self.p_fake));
        }
        Ok(())
    }
}

/// Trained components assembled for inference.
#[derive(Debug, Clone)]
pub struct Detector {
    pub panel: ExpertPanel,
    pub policy: ToyPolicy,
    pub vocab: Vocabulary,
    pub weights: FusionWeights,
    pub max_len: usize,
}

impl Detector {
    /// Decodes with the fused logits deciding the verdict token.
    pub fn detect(&self, img: &ImageTensor) -> Result<DetectionResult, FusionError> {
        let out = self.panel.analyze(img);
        let (real, fake) = (self.vocab.real(), self.vocab.fake());
        let mut fused = None;
        let decoded = decode_with_verdict(&self.policy, &self.vocab, &out.features, self.max_len, |logits| {
            let f = fuse_logits(ExpertLogits::new(logits[real], logits[fake]), out.clip, out.npr, self.weights);
            fused = Some(f);
            f.verdict()
        })?;
        let fused = match fused {
            Some(f) => f,
            None => {
                let (r, f) = decoded.verdict_pair(&self.vocab);
                fuse_logits(ExpertLogits::new(r, f), out.clip, out.npr, self.weights)
            }
        };
        Ok(DetectionResult {
            fused,
            p_fake: fused.p_fake(),
            verdict: fused.verdict(),
            explanation: decoded.text(&self.vocab),
        })
    }

    /// Plain greedy decoding without expert logits.
    pub fn decode_policy_only(&self, img: &ImageTensor) -> Result<Decoded, FusionError> {
        let out = self.panel.analyze(img);
        Ok(greedy_decode(&self.policy, &self.vocab, &out.features, self.max_len)?)
    }
}
