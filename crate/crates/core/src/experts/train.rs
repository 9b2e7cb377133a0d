use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Expert, ExpertError};
use crate::data::Label;
use crate::nn::{Optimizer, Sgd};

/// Mini-batch SGD settings for expert pre-training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.05, epochs: 5, batch_size: 32, seed: 0, momentum: 0.9 }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), ExpertError> {
        if self.epochs < 1 {
            return Err(ExpertError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(ExpertError::Config("batch size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(ExpertError::Config(format!("learning rate {} is invalid", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<E> {
    pub expert: E,
    /// Mean loss over the full training set before training (entry 0) and
    /// after each epoch.
    pub loss_curve: Vec<f64>,
}

impl<E> TrainOutcome<E> {
    /// `epoch,loss` rows.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (i, l) in self.loss_curve.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

fn dataset_loss<E: Expert>(expert: &E, data: &[(E::Input, Label)]) -> f64 {
    let mut scratch = vec![0.0; expert.params().len()];
    data.iter().map(|(x, y)| expert.accumulate_grad(x, *y, 0.0, &mut scratch)).sum::<f64>() / data.len() as f64
}

/// Minimizes mean BCE over `data` with momentum SGD. Sample order is
/// reshuffled every epoch from `cfg.seed`, so runs are bitwise reproducible.
pub fn train_expert<E: Expert>(
    mut expert: E,
    data: &[(E::Input, Label)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<E>, ExpertError> {
    cfg.check()?;
    if data.is_empty() {
        return Err(ExpertError::EmptyDataset);
    }
    let has = |l| data.iter().any(|(_, y)| *y == l);
    if !(has(Label::Real) && has(Label::Fake)) {
        return Err(ExpertError::SingleClass);
    }

    let n_params = expert.params().len();
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, n_params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; n_params];
    let mut loss_curve = vec![dataset_loss(&expert, data)];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (x, y) = &data[i];
                expert.accumulate_grad(x, *y, scale, &mut grad);
            }
            opt.step(expert.params_mut(), &grad);
        }
        let loss = dataset_loss(&expert, data);
        tracing::debug!(epoch, loss, "expert epoch");
        loss_curve.push(loss);
    }
    Ok(TrainOutcome { expert, loss_curve })
}
