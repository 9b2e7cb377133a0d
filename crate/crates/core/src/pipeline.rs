//! Stage runners shared by the CLI and the end-to-end run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{save_jsonl, DataError, DpoPair, ImageRecord, Label, PipelineConfig, SftRecord};
use crate::experts::{train_expert, ExpertError, NprExpert, SemanticExpert, VisualExpert};
use crate::fusion::{
    accuracy, Detector, ExpertPanel, FeatureNormalizer, FusionError, FusionWeights, MetricsReport, ScoredSample,
};
use crate::imaging::{perturb, save_image, synth_corpus, ImageTensor, ImagingError, PerturbationSpec};
use crate::jury::{build_d1, filter_sft, run_annotation, ExpertClient, JuryError, JuryOptions, MockJuror, PromptSet};
use crate::nn::{Checkpoint, CheckpointError};
use crate::policy::{train_dpo, train_sft, DpoExample, PolicyError, SftExample, ToyPolicy, Vocabulary};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Jury(#[from] JuryError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Precondition(String),
}

/// Source string recorded for synthetic images of each label.
pub fn synth_source(label: Label) -> &'static str {
    match label {
        Label::Real => "synthetic-camera",
        Label::Fake => "synthetic-upsampler",
    }
}

/// Writes a synthetic corpus as PNG files plus a `manifest.jsonl` in `dir`.
pub fn write_corpus(dir: &Path, n_real: usize, n_fake: usize, size: usize, seed: u64) -> Result<Vec<ImageRecord>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::Io { path: dir.to_path_buf(), source: e })?;
    let mut records = Vec::new();
    for s in synth_corpus(n_real, n_fake, size, seed)? {
        let id = format!("{}-{:05}", s.label, s.index);
        let file = format!("{id}.png");
        save_image(&s.image, &dir.join(&file))?;
        records.push(ImageRecord {
            id,
            path: PathBuf::from(file),
            label: s.label,
            source: synth_source(s.label).into(),
            defect_tags: vec![],
        });
    }
    save_jsonl(&records, &dir.join("manifest.jsonl"))?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertCurves {
    pub semantic: Vec<f64>,
    pub npr: Vec<f64>,
}

/// Trains both experts on labelled images and fits the policy feature
/// normalizer on the trained trunks.
pub fn train_experts(images: &[(ImageTensor, Label)], cfg: &PipelineConfig) -> Result<(ExpertPanel, ExpertCurves), PipelineError> {
    let semantic = SemanticExpert::new(cfg.seed);
    let sem_data: Vec<(Vec<f64>, Label)> = images.iter().map(|(img, l)| (semantic.prepare(img), *l)).collect();
    let sem = train_expert(semantic, &sem_data, &cfg.experts)?;

    let npr = NprExpert::with_factor(cfg.seed.wrapping_add(1), cfg.npr_factor);
    let npr_data: Vec<_> = images.iter().map(|(img, l)| (npr.prepare(img), *l)).collect();
    let npr = train_expert(npr, &npr_data, &cfg.experts)?;

    let mut panel = ExpertPanel {
        semantic: sem.expert,
        npr: npr.expert,
        normalizer: FeatureNormalizer::identity(0),
    };
    let raw: Vec<Vec<f64>> = images.iter().map(|(img, _)| panel.raw_features(img)).collect();
    panel.normalizer = FeatureNormalizer::fit(&raw)?;
    Ok((panel, ExpertCurves { semantic: sem.loss_curve, npr: npr.loss_curve }))
}

/// Accuracy of each expert's own verdict.
pub fn expert_accuracy(panel: &ExpertPanel, images: &[(ImageTensor, Label)]) -> Result<(f64, f64), PipelineError> {
    let labels: Vec<Label> = images.iter().map(|(_, l)| *l).collect();
    let verdict = |p: f64| if p > 0.5 { Label::Fake } else { Label::Real };
    let sem: Vec<Label> = images.iter().map(|(img, _)| verdict(panel.semantic.expert_logits(img).p_fake())).collect();
    let npr: Vec<Label> = images.iter().map(|(img, _)| verdict(panel.npr.expert_logits(img).p_fake())).collect();
    Ok((accuracy(&sem, &labels)?, accuracy(&npr, &labels)?))
}

/// Names of the default offline jury.
pub const MOCK_JURY: [&str; 4] = ["juror-a", "juror-b", "juror-c", "juror-d"];

pub fn mock_jury() -> Vec<Box<dyn ExpertClient>> {
    MOCK_JURY.iter().map(|n| Box::new(MockJuror::new(*n)) as Box<dyn ExpertClient>).collect()
}

/// Features of each image keyed by position.
fn policy_features(panel: &ExpertPanel, images: &[(ImageTensor, Label)]) -> Vec<Vec<f64>> {
    images.iter().map(|(img, _)| panel.analyze(img).features).collect()
}

/// Encodes records whose text fits the vocabulary; the rest are counted.
pub fn sft_examples(
    records: &[SftRecord],
    features_of: impl Fn(&str) -> Option<Vec<f64>>,
    vocab: &Vocabulary,
) -> (Vec<SftExample>, usize) {
    let mut skipped = 0;
    let mut out = Vec::new();
    for r in records {
        match features_of(&r.image_id).map(|f| SftExample::from_text(f, &r.annotation, vocab)) {
            Some(Ok(ex)) => out.push(ex),
            _ => skipped += 1,
        }
    }
    (out, skipped)
}

pub fn dpo_examples(
    pairs: &[DpoPair],
    features_of: impl Fn(&str) -> Option<Vec<f64>>,
    vocab: &Vocabulary,
) -> (Vec<DpoExample>, usize) {
    let mut skipped = 0;
    let mut out = Vec::new();
    for p in pairs {
        match features_of(&p.image_id).map(|f| DpoExample::from_text(f, &p.chosen, &p.rejected, vocab)) {
            Some(Ok(ex)) => out.push(ex),
            _ => skipped += 1,
        }
    }
    (out, skipped)
}

/// Initial policy for SFT.
pub fn initial_policy(vocab: &Vocabulary, feature_dim: usize, seed: u64) -> ToyPolicy {
    ToyPolicy::random(vocab.len(), feature_dim, 0.05, seed)
}

/// Detection results of a labelled set as metrics rows.
pub fn score_images(detector: &Detector, images: &[(ImageTensor, Label)]) -> Result<Vec<ScoredSample>, PipelineError> {
    images
        .iter()
        .map(|(img, l)| {
            let r = detector.detect(img)?;
            Ok(ScoredSample { source: synth_source(*l).into(), p_fake: r.p_fake, label: *l })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub perturbation: String,
    pub n: usize,
    pub accuracy: f64,
    pub average_precision: f64,
}

/// Detection metrics on perturbed copies of `images`, one row per spec.
pub fn robustness_report(
    detector: &Detector,
    images: &[(ImageTensor, Label)],
    suite: &[PerturbationSpec],
) -> Result<Vec<RobustnessRow>, PipelineError> {
    let mut rows = Vec::new();
    for spec in suite {
        let perturbed: Vec<(ImageTensor, Label)> =
            images.iter().map(|(img, l)| Ok((perturb(img, spec)?, *l))).collect::<Result<_, ImagingError>>()?;
        let m = MetricsReport::compute(&score_images(detector, &perturbed)?)?;
        rows.push(RobustnessRow { perturbation: spec.name(), n: m.n, accuracy: m.accuracy, average_precision: m.average_precision });
    }
    Ok(rows)
}

/// Sizes of the planted-signal run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self { n_train: 400, n_test: 200, size: 64, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub spec: RunSpec,
    pub expert_curves: ExpertCurves,
    /// `(semantic, npr)` accuracy on the test set.
    pub expert_test_accuracy: (f64, f64),
    pub annotated: usize,
    pub sft_retained: usize,
    pub d1_pairs: usize,
    pub sft_loss_curve: Vec<f64>,
    pub dpo_loss_curve: Vec<f64>,
    pub dpo_margin_curve: Vec<f64>,
    pub policy_only: MetricsReport,
    pub detection: MetricsReport,
    pub seconds: f64,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub detector: Detector,
    pub test: Vec<(ImageTensor, Label)>,
}

/// Synthetic corpus → experts → jury annotation → SFT → DPO → fused detection.
pub fn run_planted_signal(spec: &RunSpec, cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    let half = |n: usize| (n / 2, n - n / 2);
    let (tr, tf) = half(spec.n_train);
    let (er, ef) = half(spec.n_test);
    let train: Vec<(ImageTensor, Label)> =
        synth_corpus(tr, tf, spec.size, spec.seed)?.into_iter().map(|s| (s.image, s.label)).collect();
    let test: Vec<(ImageTensor, Label)> = synth_corpus(er, ef, spec.size, spec.seed.wrapping_add(0x7e57))?
        .into_iter()
        .map(|s| (s.image, s.label))
        .collect();

    let (panel, expert_curves) = train_experts(&train, cfg)?;
    let expert_test_accuracy = expert_accuracy(&panel, &test)?;
    tracing::info!(?expert_test_accuracy, "experts trained");

    let records: Vec<ImageRecord> = train
        .iter()
        .enumerate()
        .map(|(i, (_, l))| ImageRecord {
            id: format!("train-{i:05}"),
            path: PathBuf::from(format!("train-{i:05}.png")),
            label: *l,
            source: synth_source(*l).into(),
            defect_tags: vec![],
        })
        .collect();
    let jury = mock_jury();
    let opts = JuryOptions::from(&cfg.jury);
    let outcome = run_annotation(&records, Path::new("."), &jury, &PromptSet::default(), &opts)?;
    let positives: Vec<SftRecord> = outcome.annotated.iter().map(|a| a.positive.clone()).collect();
    let retained = filter_sft(&positives, cfg.consensus_threshold);
    let d1 = build_d1(&outcome.annotated);

    let features = policy_features(&panel, &train);
    let features_of = |id: &str| -> Option<Vec<f64>> {
        let i: usize = id.strip_prefix("train-")?.parse().ok()?;
        features.get(i).cloned()
    };
    let vocab = Vocabulary::default();
    let (sft_data, _) = sft_examples(&retained, features_of, &vocab);
    let (dpo_data, _) = dpo_examples(&d1.pairs, features_of, &vocab);
    if sft_data.is_empty() || dpo_data.is_empty() {
        return Err(PipelineError::Precondition("jury produced no usable SFT or DPO data".into()));
    }

    let policy = initial_policy(&vocab, panel.normalizer.dim(), cfg.seed);
    let sft = train_sft(policy, &sft_data, &cfg.sft)?;
    let dpo = train_dpo(sft.policy, &dpo_data, cfg.dpo_beta, &cfg.dpo)?;

    let mut detector =
        Detector { panel, policy: dpo.policy, vocab, weights: FusionWeights::policy_only(), max_len: cfg.decode_max_len };
    let policy_only = MetricsReport::compute(&score_images(&detector, &test)?)?;
    detector.weights = cfg.fusion;
    let detection = MetricsReport::compute(&score_images(&detector, &test)?)?;

    let report = RunReport {
        spec: *spec,
        expert_curves,
        expert_test_accuracy,
        annotated: outcome.annotated.len(),
        sft_retained: retained.len(),
        d1_pairs: d1.pairs.len(),
        sft_loss_curve: sft.loss_curve,
        dpo_loss_curve: dpo.loss_curve,
        dpo_margin_curve: dpo.margin_curve,
        policy_only,
        detection,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { report, detector, test })
}

/// On-disk layout of trained components.
pub struct ModelBundle;

impl ModelBundle {
    pub const SEMANTIC: &'static str = "semantic_expert.json";
    pub const NPR: &'static str = "npr_expert.json";
    pub const NORMALIZER: &'static str = "normalizer.json";
    pub const POLICY: &'static str = "policy.json";
    pub const VOCAB: &'static str = "vocab.txt";

    pub fn save_panel(panel: &ExpertPanel, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| DataError::Io { path: dir.to_path_buf(), source: e })?;
        panel.semantic.checkpoint().save(&dir.join(Self::SEMANTIC))?;
        panel.npr.checkpoint().save(&dir.join(Self::NPR))?;
        let p = dir.join(Self::NORMALIZER);
        let text = serde_json::to_string_pretty(&panel.normalizer).expect("normalizer serializes");
        std::fs::write(&p, text).map_err(|e| DataError::Io { path: p, source: e })?;
        Ok(())
    }

    pub fn load_panel(dir: &Path) -> Result<ExpertPanel, PipelineError> {
        let need = |name: &str| {
            let p = dir.join(name);
            if p.exists() {
                Ok(p)
            } else {
                Err(PipelineError::Precondition(format!("no checkpoint at {}", p.display())))
            }
        };
        let semantic = SemanticExpert::from_checkpoint(&Checkpoint::load(&need(Self::SEMANTIC)?)?)?;
        let npr = NprExpert::from_checkpoint(&Checkpoint::load(&need(Self::NPR)?)?)?;
        let p = need(Self::NORMALIZER)?;
        let text = std::fs::read_to_string(&p).map_err(|e| DataError::Io { path: p.clone(), source: e })?;
        let normalizer: FeatureNormalizer =
            serde_json::from_str(&text).map_err(|e| DataError::Config(format!("{}: {e}", p.display())))?;
        let expected = semantic.extractor().dim() + crate::experts::NPR_CHANNELS;
        if normalizer.dim() != expected {
            return Err(PipelineError::Precondition(format!("normalizer has {} dims, expected {expected}", normalizer.dim())));
        }
        Ok(ExpertPanel { semantic, npr, normalizer })
    }

    pub fn save_policy(policy: &ToyPolicy, vocab: &Vocabulary, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| DataError::Io { path: dir.to_path_buf(), source: e })?;
        policy.checkpoint().save(&dir.join(Self::POLICY))?;
        vocab.save(&dir.join(Self::VOCAB))?;
        Ok(())
    }

    pub fn load_policy(dir: &Path) -> Result<(ToyPolicy, Vocabulary), PipelineError> {
        let p = dir.join(Self::POLICY);
        if !p.exists() {
            return Err(PipelineError::Precondition(format!("no checkpoint at {}", p.display())));
        }
        let policy = ToyPolicy::from_checkpoint(&Checkpoint::load(&p)?)?;
        let v = dir.join(Self::VOCAB);
        let vocab = if v.exists() { Vocabulary::load(&v)? } else { Vocabulary::default() };
        if vocab.len() != policy.vocab_size() {
            return Err(PipelineError::Precondition("policy and vocabulary sizes differ".into()));
        }
        Ok((policy, vocab))
    }
}

