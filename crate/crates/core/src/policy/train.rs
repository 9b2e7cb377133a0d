use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{dpo_loss, mean_margin, sft_loss};
use super::{DpoExample, PolicyError, ReferencePolicy, SftExample, ToyPolicy};
use crate::nn::{Adam, Optimizer};

/// Optimizer settings for one policy training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self { lr: 0.01, epochs: 10, batch_size: 16, seed: 0 }
    }
}

impl StageConfig {
    fn check(&self) -> Result<(), PolicyError> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(PolicyError::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(PolicyError::Config(format!("learning rate {} is invalid", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SftOutcome {
    pub policy: ToyPolicy,
    /// Full-dataset loss before training and after each epoch.
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DpoOutcome {
    pub policy: ToyPolicy,
    pub reference: ReferencePolicy,
    /// Full-dataset DPO loss before training and after each epoch.
    pub loss_curve: Vec<f64>,
    /// Mean `log π(y_w) − log π(y_l)` before training and after each epoch.
    pub margin_curve: Vec<f64>,
}

fn batches(n: usize, cfg: &StageConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
}

/// Supervised fine-tuning with Adam on the per-token cross-entropy.
pub fn train_sft(mut policy: ToyPolicy, data: &[SftExample], cfg: &StageConfig) -> Result<SftOutcome, PolicyError> {
    cfg.check()?;
    if data.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let mut opt = Adam::new(cfg.lr, policy.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut loss_curve = vec![sft_loss(&policy, data)?.loss];
    for epoch in 0..cfg.epochs {
        for idx in batches(data.len(), cfg, &mut rng) {
            let batch: Vec<SftExample> = idx.iter().map(|&i| data[i].clone()).collect();
            let out = sft_loss(&policy, &batch)?;
            opt.step(policy.params_mut(), &out.grad);
        }
        let loss = sft_loss(&policy, data)?.loss;
        tracing::debug!(epoch, loss, "sft epoch");
        loss_curve.push(loss);
    }
    Ok(SftOutcome { policy, loss_curve })
}

/// Preference optimization against a reference snapshot of the incoming policy.
pub fn train_dpo(policy: ToyPolicy, data: &[DpoExample], beta: f64, cfg: &StageConfig) -> Result<DpoOutcome, PolicyError> {
    cfg.check()?;
    if data.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let reference = ReferencePolicy::snapshot(&policy);
    let mut policy = policy;
    let mut opt = Adam::new(cfg.lr, policy.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut loss_curve = vec![dpo_loss(&policy, &reference, data, beta)?.loss];
    let mut margin_curve = vec![mean_margin(&policy, data)?];
    for epoch in 0..cfg.epochs {
        for idx in batches(data.len(), cfg, &mut rng) {
            let batch: Vec<DpoExample> = idx.iter().map(|&i| data[i].clone()).collect();
            let out = dpo_loss(&policy, &reference, &batch, beta)?;
            opt.step(policy.params_mut(), &out.grad);
        }
        let loss = dpo_loss(&policy, &reference, data, beta)?.loss;
        let margin = mean_margin(&policy, data)?;
        tracing::debug!(epoch, loss, margin, "dpo epoch");
        loss_curve.push(loss);
        margin_curve.push(margin);
    }
    Ok(DpoOutcome { policy, reference, loss_curve, margin_curve })
}
