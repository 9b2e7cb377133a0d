use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use holmes_core::data::{load_jsonl, save_jsonl, DpoPair, ImageRecord, Label, PipelineConfig, SftRecord};
use holmes_core::evalkit::{elo_run, judge_score_batch, text_metrics, EloConfig, JudgeItem, VoteRecord};
use holmes_core::fusion::{DetectionRecord, Detector, MetricsReport, ScoredSample};
use holmes_core::imaging::{load_image, perturb, save_image, ImageTensor, PerturbationSpec};
use holmes_core::jury::{
    build_d1, build_d2, client_from_spec, filter_sft, run_annotation, AnnotatedImage, ExpertClient, ImageRef,
    JuryOptions, MockJuror, PromptSet, SuggestionRecord,
};
use holmes_core::pipeline::{
    dpo_examples, initial_policy, mock_jury, sft_examples, train_experts, write_corpus, ModelBundle, PipelineError,
};
use holmes_core::policy::{train_dpo, train_sft};
use holmes_service::{ArenaEntry, ServiceConfig};

use crate::error::CliError;
use crate::{Cli, Command, CorpusCmd, DatasetCmd, DetectArgs, EvalCmd, JuryCmd, PerturbArgs, ServeArgs, TrainCmd};

/// Shared token for the review service.
const TOKEN_VAR: &str = "HOLMES_SERVICE_TOKEN";

pub const MANIFEST: &str = "manifest.jsonl";
pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const SFT: &str = "sft.jsonl";
pub const D1: &str = "d1.jsonl";
pub const D2: &str = "d2.jsonl";
pub const DETECTIONS: &str = "detections.jsonl";

struct Ctx {
    cfg: PipelineConfig,
    out: Option<PathBuf>,
}

impl Ctx {
    /// Output directory, created on first use.
    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    fn models_dir(&self, models: Option<PathBuf>) -> PathBuf {
        models.or_else(|| self.out.clone()).unwrap_or_else(|| PathBuf::from("."))
    }

    fn jurors(&self) -> Result<Vec<Box<dyn ExpertClient>>, CliError> {
        if self.cfg.jury.jurors.is_empty() {
            tracing::info!("no jurors configured, using the offline mock jury");
            return Ok(mock_jury());
        }
        Ok(self.cfg.jury.jurors.iter().map(client_from_spec).collect::<Result<_, _>>()?)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let ctx = Ctx { cfg, out: cli.out };
    match cli.command {
        Command::Corpus(CorpusCmd::Synth { n_real, n_fake, size }) => {
            let dir = ctx.out_dir()?;
            let records = write_corpus(&dir, n_real, n_fake, size, ctx.cfg.seed)?;
            println!("wrote {} images to {}", records.len(), dir.join(MANIFEST).display());
            Ok(())
        }
        Command::Jury(JuryCmd::Annotate { manifest }) => annotate(&ctx, &manifest),
        Command::Jury(JuryCmd::Evaluate { manifest, explanations, references }) => {
            evaluate(&ctx, &manifest, &explanations, references.as_deref())
        }
        Command::Dataset(cmd) => dataset(&ctx, cmd),
        Command::Train(cmd) => train(&ctx, cmd),
        Command::Detect(args) => detect(&ctx, args),
        Command::Eval(cmd) => eval(&ctx, cmd),
        Command::Perturb(args) => perturb_cmd(&ctx, args),
        Command::Serve(args) => serve(args),
    }
}

fn load_manifest(path: &Path) -> Result<(Vec<ImageRecord>, PathBuf), CliError> {
    let records: Vec<ImageRecord> = load_jsonl(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    Ok((records, base))
}

fn load_images(records: &[ImageRecord], base: &Path) -> Result<Vec<(ImageTensor, Label)>, CliError> {
    records.iter().map(|r| Ok((load_image(&r.resolved_path(base))?, r.label))).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Invalid(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value).map_err(|e| CliError::Invalid(e.to_string()))?);
    Ok(())
}

#[derive(Serialize)]
struct AnnotateSummary<'a> {
    images: usize,
    annotated: usize,
    sft_retained: usize,
    consensus_threshold: f64,
    failed_images: &'a [String],
    failures: &'a [holmes_core::jury::JurorFailure],
}

fn annotate(ctx: &Ctx, manifest: &Path) -> Result<(), CliError> {
    let (records, base) = load_manifest(manifest)?;
    let jurors = ctx.jurors()?;
    let outcome = run_annotation(&records, &base, &jurors, &PromptSet::default(), &JuryOptions::from(&ctx.cfg.jury))?;
    let positives: Vec<SftRecord> = outcome.annotated.iter().map(|a| a.positive.clone()).collect();
    let retained = filter_sft(&positives, ctx.cfg.consensus_threshold);
    let dir = ctx.out_dir()?;
    save_jsonl(&outcome.annotated, &dir.join(ANNOTATIONS))?;
    save_jsonl(&retained, &dir.join(SFT))?;
    let summary = AnnotateSummary {
        images: records.len(),
        annotated: outcome.annotated.len(),
        sft_retained: retained.len(),
        consensus_threshold: ctx.cfg.consensus_threshold,
        failed_images: &outcome.failed_images,
        failures: &outcome.failures,
    };
    write_json(&dir.join("annotate_report.json"), &summary)?;
    println!(
        "annotated {}/{} images, {} retained for SFT, {} juror failures",
        summary.annotated,
        summary.images,
        summary.sft_retained,
        summary.failures.len()
    );
    Ok(())
}

/// Detection records of one file keyed by image id.
fn load_detections(path: &Path) -> Result<HashMap<String, DetectionRecord>, CliError> {
    let records: Vec<DetectionRecord> = load_jsonl(path)?;
    Ok(records.into_iter().map(|r| (r.id.clone(), r)).collect())
}

fn evaluate(
    ctx: &Ctx,
    manifest: &Path,
    explanations: &[(String, PathBuf)],
    references: Option<&Path>,
) -> Result<(), CliError> {
    let (records, base) = load_manifest(manifest)?;
    let refs: HashMap<String, String> = match references {
        Some(p) => load_jsonl::<SftRecord>(p)?.into_iter().map(|r| (r.image_id, r.annotation)).collect(),
        None => HashMap::new(),
    };
    let mut items = Vec::new();
    for (model, path) in explanations {
        let dets = load_detections(path)?;
        for r in &records {
            let d = dets
                .get(&r.id)
                .ok_or_else(|| CliError::Invalid(format!("{model}: no explanation for image {}", r.id)))?;
            items.push(JudgeItem {
                model: model.clone(),
                image: ImageRef::new(r.id.clone(), Some(r.resolved_path(&base))),
                label: r.label,
                explanation: d.explanation.clone(),
                reference: refs.get(&r.id).cloned(),
            });
        }
    }
    let report = judge_score_batch(&items, &ctx.jurors()?, &PromptSet::default(), &JuryOptions::from(&ctx.cfg.jury));
    write_json(&ctx.out_dir()?.join("judge_report.json"), &report)?;
    for (model, score) in &report.ranking {
        println!("{model}\t{score:.4}");
    }
    if !report.failures.is_empty() {
        println!("{} juror failures", report.failures.len());
    }
    Ok(())
}

fn dataset(ctx: &Ctx, cmd: DatasetCmd) -> Result<(), CliError> {
    match cmd {
        DatasetCmd::BuildD1 { annotations } => {
            let annotated: Vec<AnnotatedImage> = load_jsonl(&annotations)?;
            let d1 = build_d1(&annotated);
            for w in &d1.warnings {
                tracing::warn!("{w}");
            }
            save_jsonl(&d1.pairs, &ctx.out_dir()?.join(D1))?;
            println!("{} D1 pairs, {} images skipped", d1.pairs.len(), d1.warnings.len());
            Ok(())
        }
        DatasetCmd::BuildD2 { tasks } => {
            let mut records: Vec<SuggestionRecord> = load_jsonl(&tasks)?;
            let refiner: Box<dyn ExpertClient> = match &ctx.cfg.jury.refiner {
                Some(spec) => client_from_spec(spec)?,
                None => {
                    tracing::info!("no refiner configured, using the offline mock refiner");
                    Box::new(MockJuror::new("refiner"))
                }
            };
            let opts = JuryOptions::from(&ctx.cfg.jury);
            let d2 = build_d2(&mut records, refiner.as_ref(), &PromptSet::default(), &opts.retry);
            save_jsonl(&d2.pairs, &ctx.out_dir()?.join(D2))?;
            save_jsonl(&records, &tasks)?;
            for (id, msg) in &d2.failures {
                eprintln!("task {id}: {msg}");
            }
            println!("{} D2 pairs, {} tasks left suggested", d2.pairs.len(), d2.failures.len());
            Ok(())
        }
        DatasetCmd::Tasks { manifest, detections } => {
            let (records, _) = load_manifest(&manifest)?;
            let dets = load_detections(&detections)?;
            let prompts = PromptSet::default();
            let tasks: Vec<SuggestionRecord> = records
                .iter()
                .filter_map(|r| {
                    let d = dets.get(&r.id)?;
                    let prompt = prompts.render(PromptSet::positive_kind(r), r.label).text;
                    Some(SuggestionRecord::pending(&format!("task:{}", r.id), &r.id, &prompt, &d.explanation))
                })
                .filter(|t| !t.sft_response.trim().is_empty())
                .collect();
            let path = ctx.out_dir()?.join(holmes_service::TASKS_FILE);
            save_jsonl(&tasks, &path)?;
            println!("{} pending tasks in {}", tasks.len(), path.display());
            Ok(())
        }
        DatasetCmd::Arena { explanations } => {
            let mut entries = Vec::new();
            for (model, path) in &explanations {
                let mut dets: Vec<DetectionRecord> = load_jsonl(path)?;
                dets.sort_by(|a, b| a.id.cmp(&b.id));
                entries.extend(dets.iter().map(|d| ArenaEntry::new(&d.id, model, &d.explanation)));
            }
            let path = ctx.out_dir()?.join(holmes_service::ARENA_FILE);
            save_jsonl(&entries, &path)?;
            println!("{} arena entries in {}", entries.len(), path.display());
            Ok(())
        }
    }
}

/// Normalized policy features of every manifest image keyed by id.
fn feature_map(
    panel: &holmes_core::fusion::ExpertPanel,
    records: &[ImageRecord],
    base: &Path,
) -> Result<HashMap<String, Vec<f64>>, CliError> {
    records
        .iter()
        .map(|r| Ok((r.id.clone(), panel.analyze(&load_image(&r.resolved_path(base))?).features)))
        .collect()
}

#[derive(Serialize)]
struct StageSummary {
    examples: usize,
    skipped: usize,
    loss_curve: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    margin_curve: Option<Vec<f64>>,
}

fn train(ctx: &Ctx, cmd: TrainCmd) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    match cmd {
        TrainCmd::Experts { manifest } => {
            let (records, base) = load_manifest(&manifest)?;
            let images = load_images(&records, &base)?;
            let (panel, curves) = train_experts(&images, cfg)?;
            let dir = ctx.out_dir()?;
            ModelBundle::save_panel(&panel, &dir)?;
            write_json(&dir.join("expert_curves.json"), &curves)?;
            println!(
                "experts trained on {} images; final loss semantic {:.4}, npr {:.4}",
                images.len(),
                curves.semantic.last().copied().unwrap_or(f64::NAN),
                curves.npr.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        TrainCmd::Sft { manifest, sft, models } => {
            let dir = ctx.models_dir(models);
            let panel = ModelBundle::load_panel(&dir)?;
            let (records, base) = load_manifest(&manifest)?;
            let features = feature_map(&panel, &records, &base)?;
            let retained: Vec<SftRecord> = load_jsonl(&sft)?;
            let vocab = holmes_core::policy::Vocabulary::default();
            let (data, skipped) = sft_examples(&retained, |id| features.get(id).cloned(), &vocab);
            if data.is_empty() {
                return Err(PipelineError::Precondition("no usable SFT examples".into()).into());
            }
            let policy = initial_policy(&vocab, panel.normalizer.dim(), cfg.seed);
            let out = train_sft(policy, &data, &cfg.sft)?;
            ModelBundle::save_policy(&out.policy, &vocab, &dir)?;
            let summary = StageSummary { examples: data.len(), skipped, loss_curve: out.loss_curve, margin_curve: None };
            write_json(&dir.join("sft_report.json"), &summary)?;
            println!("SFT on {} examples ({} skipped)", summary.examples, skipped);
            Ok(())
        }
        TrainCmd::Dpo { manifest, pairs, models } => {
            let dir = ctx.models_dir(models);
            let panel = ModelBundle::load_panel(&dir)?;
            let (policy, vocab) = ModelBundle::load_policy(&dir)?;
            let (records, base) = load_manifest(&manifest)?;
            let features = feature_map(&panel, &records, &base)?;
            let mut all: Vec<DpoPair> = Vec::new();
            for p in &pairs {
                all.extend(load_jsonl::<DpoPair>(p)?);
            }
            let (data, skipped) = dpo_examples(&all, |id| features.get(id).cloned(), &vocab);
            if data.is_empty() {
                return Err(PipelineError::Precondition("no usable preference pairs".into()).into());
            }
            let out = train_dpo(policy, &data, cfg.dpo_beta, &cfg.dpo)?;
            ModelBundle::save_policy(&out.policy, &vocab, &dir)?;
            let summary = StageSummary {
                examples: data.len(),
                skipped,
                loss_curve: out.loss_curve,
                margin_curve: Some(out.margin_curve),
            };
            write_json(&dir.join("dpo_report.json"), &summary)?;
            println!("DPO on {} pairs ({} skipped)", summary.examples, skipped);
            Ok(())
        }
    }
}

fn load_detector(ctx: &Ctx, models: Option<PathBuf>) -> Result<Detector, CliError> {
    let dir = ctx.models_dir(models);
    let panel = ModelBundle::load_panel(&dir)?;
    let (policy, vocab) = ModelBundle::load_policy(&dir)?;
    Ok(Detector { panel, policy, vocab, weights: ctx.cfg.fusion, max_len: ctx.cfg.decode_max_len })
}

fn detect(ctx: &Ctx, args: DetectArgs) -> Result<(), CliError> {
    let detector = load_detector(ctx, args.models)?;
    if let Some(image) = args.image {
        let r = detector.detect(&load_image(&image)?)?;
        let id = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return print_json(&DetectionRecord { id, p_fake: r.p_fake, verdict: r.verdict, explanation: r.explanation });
    }
    let manifest = args.manifest.expect("clap requires --image or --manifest");
    let (records, base) = load_manifest(&manifest)?;
    let mut out = Vec::with_capacity(records.len());
    for rec in &records {
        let r = detector.detect(&load_image(&rec.resolved_path(&base))?)?;
        out.push(DetectionRecord { id: rec.id.clone(), p_fake: r.p_fake, verdict: r.verdict, explanation: r.explanation });
    }
    let path = ctx.out_dir()?.join(DETECTIONS);
    save_jsonl(&out, &path)?;
    let fakes = out.iter().filter(|d| d.verdict == Label::Fake).count();
    println!("{} images, {} judged fake; results in {}", out.len(), fakes, path.display());
    Ok(())
}

fn eval(ctx: &Ctx, cmd: EvalCmd) -> Result<(), CliError> {
    match cmd {
        EvalCmd::Text { detections, references } => {
            let dets: Vec<DetectionRecord> = load_jsonl(&detections)?;
            let refs: HashMap<String, String> =
                load_jsonl::<SftRecord>(&references)?.into_iter().map(|r| (r.image_id, r.annotation)).collect();
            let (hyps, gold): (Vec<String>, Vec<String>) =
                dets.iter().filter_map(|d| Some((d.explanation.clone(), refs.get(&d.id)?.clone()))).unzip();
            if hyps.is_empty() {
                return Err(CliError::Invalid("no detection shares an image with the references".into()));
            }
            let report = text_metrics(&hyps, &gold)?;
            if let Some(dir) = &ctx.out {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                write_json(&dir.join("text_metrics.json"), &report)?;
            }
            println!("pairs\t{}", hyps.len());
            println!("bleu1\t{:.6}", report.mean.bleu1);
            println!("rouge_l\t{:.6}", report.mean.rouge_l);
            println!("meteor\t{:.6}", report.mean.meteor);
            println!("cider\t{:.6}", report.mean.cider);
            Ok(())
        }
        EvalCmd::Elo { votes } => {
            let log: Vec<VoteRecord> = load_jsonl(&votes)?;
            let table = elo_run(&log, &EloConfig::default())?;
            if let Some(dir) = &ctx.out {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                write_json(&dir.join("elo.json"), &table)?;
            }
            println!("rank\tmodel\trating");
            for (i, (model, rating)) in table.ranking().iter().enumerate() {
                println!("{}\t{model}\t{rating}", i + 1);
            }
            Ok(())
        }
        EvalCmd::Detection { manifest, detections } => {
            let (records, _) = load_manifest(&manifest)?;
            let dets = load_detections(&detections)?;
            let samples: Vec<ScoredSample> = records
                .iter()
                .map(|r| {
                    let d = dets
                        .get(&r.id)
                        .ok_or_else(|| CliError::Invalid(format!("no detection for image {}", r.id)))?;
                    Ok(ScoredSample { source: r.source.clone(), p_fake: d.p_fake, label: r.label })
                })
                .collect::<Result<_, CliError>>()?;
            let report = MetricsReport::compute(&samples).map_err(PipelineError::from)?;
            if let Some(dir) = &ctx.out {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                write_json(&dir.join("detection_metrics.json"), &report)?;
            }
            print_json(&report)
        }
    }
}

/// Inverse of [`PerturbationSpec::name`].
fn parse_spec(s: &str) -> Result<PerturbationSpec, CliError> {
    let bad = || CliError::Invalid(format!("unknown perturbation {s:?}"));
    let spec = if let Some(v) = s.strip_prefix("blur_s") {
        PerturbationSpec::GaussianBlur { sigma: v.parse().map_err(|_| bad())? }
    } else if let Some(v) = s.strip_prefix("resize_x") {
        PerturbationSpec::Resize { scale: v.parse().map_err(|_| bad())? }
    } else if let Some(v) = s.strip_prefix("jpeg_q") {
        PerturbationSpec::JpegApprox { quality_factor: v.parse().map_err(|_| bad())? }
    } else {
        return Err(bad());
    };
    spec.validate()?;
    Ok(spec)
}

fn perturb_cmd(ctx: &Ctx, args: PerturbArgs) -> Result<(), CliError> {
    let specs = if args.specs.is_empty() {
        PerturbationSpec::robustness_suite()
    } else {
        args.specs.iter().map(|s| parse_spec(s)).collect::<Result<_, _>>()?
    };
    let dir = ctx.out_dir()?;
    if let Some(image) = args.image {
        let img = load_image(&image)?;
        let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
        for spec in &specs {
            let path = dir.join(format!("{stem}_{}.png", spec.name()));
            save_image(&perturb(&img, spec)?, &path)?;
            println!("{}", path.display());
        }
        return Ok(());
    }
    let manifest = args.manifest.expect("clap requires --image or --manifest");
    let (records, base) = load_manifest(&manifest)?;
    for spec in &specs {
        let sub = dir.join(spec.name());
        std::fs::create_dir_all(&sub).map_err(|e| CliError::io(&sub, e))?;
        let mut out = Vec::with_capacity(records.len());
        for r in &records {
            let file = PathBuf::from(format!("{}.png", r.id));
            save_image(&perturb(&load_image(&r.resolved_path(&base))?, spec)?, &sub.join(&file))?;
            out.push(ImageRecord { path: file, ..r.clone() });
        }
        save_jsonl(&out, &sub.join(MANIFEST))?;
        println!("{}", sub.join(MANIFEST).display());
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let mut cfg = ServiceConfig::new(&args.data);
    cfg.ui_dir = args.ui;
    cfg.image_dir = args.images;
    cfg.token = std::env::var(TOKEN_VAR).ok().filter(|t| !t.is_empty());
    std::fs::create_dir_all(&args.data).map_err(|e| CliError::io(&args.data, e))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::io(Path::new("tokio runtime"), e))?;
    rt.block_on(holmes_service::serve(args.listen, cfg)).map_err(|e| CliError::io(&args.data, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_names_round_trip() {
        for spec in PerturbationSpec::robustness_suite() {
            assert_eq!(parse_spec(&spec.name()).unwrap(), spec);
        }
        assert!(parse_spec("blur_s0").is_err());
        assert!(parse_spec("sharpen").is_err());
    }

    #[test]
    fn named_paths_need_both_halves() {
        assert_eq!(crate::parse_named_path("a=b.jsonl").unwrap(), ("a".to_string(), PathBuf::from("b.jsonl")));
        assert!(crate::parse_named_path("=b").is_err());
        assert!(crate::parse_named_path("ab").is_err());
    }

    #[test]
    fn io_errors_map_to_two() {
        let e: CliError = holmes_core::data::DataError::io(Path::new("x"), std::io::ErrorKind::NotFound.into()).into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = PipelineError::Precondition("no checkpoint".into()).into();
        assert_eq!(e.exit_code(), 1);
    }
}
