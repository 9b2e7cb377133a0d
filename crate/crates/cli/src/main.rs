//! `holmes`: one verb per pipeline stage, plus the review service.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::{CliError, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "holmes", version, about = "Explainable AI-generated image detection pipeline")]
pub struct Cli {
    /// Pipeline config (TOML, or JSON by extension). Defaults apply without one.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    #[command(subcommand)]
    Corpus(CorpusCmd),
    #[command(subcommand)]
    Jury(JuryCmd),
    #[command(subcommand)]
    Dataset(DatasetCmd),
    #[command(subcommand)]
    Train(TrainCmd),
    /// Runs the fused detector on one image or a manifest.
    Detect(DetectArgs),
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Writes degraded copies of an image or a manifest.
    Perturb(PerturbArgs),
    /// Serves the task queue, the arena and the UI bundle.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Writes synthetic camera and upsampled images plus `manifest.jsonl`.
    Synth {
        #[arg(long, default_value_t = 100)]
        n_real: usize,
        #[arg(long, default_value_t = 100)]
        n_fake: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum JuryCmd {
    /// Annotates, cross-evaluates and filters a manifest.
    Annotate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Scores model explanations with every juror.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// `model=detections.jsonl`, repeatable.
        #[arg(long = "explanations", required = true, value_parser = parse_named_path)]
        explanations: Vec<(String, PathBuf)>,
        /// SFT records whose annotations are shown to judges as references.
        #[arg(long)]
        references: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Positive against negative annotations.
    BuildD1 {
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Refined against original responses of suggested tasks; updates the task file.
    BuildD2 {
        #[arg(long)]
        tasks: PathBuf,
    },
    /// Pending review tasks from model explanations.
    Tasks {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        detections: PathBuf,
    },
    /// Arena entries from the explanations of several models.
    Arena {
        #[arg(long = "explanations", required = true, value_parser = parse_named_path)]
        explanations: Vec<(String, PathBuf)>,
    },
}

#[derive(Debug, Subcommand)]
pub enum TrainCmd {
    /// Trains both visual experts and fits the feature normalizer.
    Experts {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Supervised fine-tuning of the policy on filtered annotations.
    Sft {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        sft: PathBuf,
        /// Directory holding the expert checkpoints; defaults to `--out`.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Preference optimisation of the current policy.
    Dpo {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "pairs", required = true)]
        pairs: Vec<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub models: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// BLEU-1, ROUGE-L, METEOR and CIDEr of explanations against references.
    Text {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        references: PathBuf,
    },
    /// Replays a vote log and prints the rating table.
    Elo {
        #[arg(long)]
        votes: PathBuf,
    },
    /// Accuracy and average precision, overall and per source.
    Detection {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        detections: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// `blur_s<sigma>`, `resize_x<scale>` or `jpeg_q<quality>`; repeatable.
    /// Defaults to the robustness suite.
    #[arg(long = "spec")]
    pub specs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "HOLMES_LISTEN_ADDR", default_value = holmes_service::DEFAULT_LISTEN_ADDR)]
    pub listen: std::net::SocketAddr,
    /// Holds the task, vote and arena logs.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub ui: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
}

fn parse_named_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected model=path, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e))
        }
    }
}
