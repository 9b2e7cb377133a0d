use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::experts::TrainConfig;
use crate::fusion::FusionWeights;
use crate::policy::StageConfig;

/// How a juror is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JurorKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JurorSpec {
    pub name: String,
    pub kind: JurorKind,
    /// Full URL of the chat-completion endpoint; ignored for mocks.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JuryConfig {
    pub jurors: Vec<JurorSpec>,
    /// Text-only client used to apply human suggestions.
    pub refiner: Option<JurorSpec>,
    pub parallelism: usize,
    pub retry_attempts: usize,
    pub backoff_ms: u64,
}

impl Default for JuryConfig {
    fn default() -> Self {
        Self { jurors: Vec::new(), refiner: None, parallelism: 4, retry_attempts: 3, backoff_ms: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Minimum consensus judge score for an annotation to enter the SFT set.
    pub consensus_threshold: f64,
    pub fusion: FusionWeights,
    pub dpo_beta: f64,
    pub seed: u64,
    pub npr_factor: usize,
    pub experts: TrainConfig,
    pub sft: StageConfig,
    pub dpo: StageConfig,
    pub decode_max_len: usize,
    pub jury: JuryConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            consensus_threshold: 4.0,
            fusion: FusionWeights::default(),
            dpo_beta: 0.1,
            seed: 7,
            npr_factor: 2,
            experts: TrainConfig::default(),
            sft: StageConfig { lr: 0.02, epochs: 30, batch_size: 16, seed: 1 },
            dpo: StageConfig { lr: 0.001, epochs: 4, batch_size: 16, seed: 2 },
            decode_max_len: 20,
            jury: JuryConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads TOML or JSON, chosen by extension (`.json` is JSON, anything else TOML).
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| DataError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| DataError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(1.0..=5.0).contains(&self.consensus_threshold) {
            return Err(DataError::Config(format!(
                "consensus_threshold {} outside the judge scale [1, 5]",
                self.consensus_threshold
            )));
        }
        if !(self.dpo_beta > 0.0 && self.dpo_beta.is_finite()) {
            return Err(DataError::Config(format!("dpo_beta must be > 0, got {}", self.dpo_beta)));
        }
        if !self.fusion.is_finite() {
            return Err(DataError::Config("fusion weights must be finite".into()));
        }
        if self.npr_factor < 2 {
            return Err(DataError::Config("npr_factor must be at least 2".into()));
        }
        if self.decode_max_len < 2 {
            return Err(DataError::Config("decode_max_len must be at least 2".into()));
        }
        if self.jury.parallelism == 0 || self.jury.retry_attempts == 0 {
            return Err(DataError::Config("jury parallelism and retry_attempts must be at least 1".into()));
        }
        self.experts.check().map_err(|e| DataError::Config(e.to_string()))?;
        for (name, s) in [("sft", &self.sft), ("dpo", &self.dpo)] {
            if s.epochs == 0 || s.batch_size == 0 || !(s.lr >= 0.0) {
                return Err(DataError::Config(format!("{name}: epochs and batch_size must be >= 1 and lr >= 0")));
            }
        }
        Ok(())
    }
}
