//! Flat parameter storage, optimizers, checkpoints and small numeric helpers
//! shared by the experts and the policy.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Named, shaped view into a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Layout {
    slots: Vec<Slot>,
    total: usize,
}

impl Layout {
    /// Appends a slot and returns its index.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> usize {
        let slot = Slot { name: name.into(), shape: shape.to_vec(), offset: self.total };
        self.total += slot.len();
        self.slots.push(slot);
        self.slots.len() - 1
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn slot(&self, i: usize) -> &Slot {
        &self.slots[i]
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.slots[i].range()
    }
}

/// One shape-tagged tensor of a checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// JSON checkpoint: a model kind, free-form metadata and flat tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: String,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
}

impl Checkpoint {
    pub fn from_params(kind: &str, meta: serde_json::Value, layout: &Layout, params: &[f64]) -> Self {
        let tensors = layout
            .slots()
            .iter()
            .map(|s| TensorEntry { name: s.name.clone(), shape: s.shape.clone(), data: params[s.range()].to_vec() })
            .collect();
        Checkpoint { kind: kind.to_string(), meta, tensors }
    }

    /// Copies tensors into `params`, checking names and shapes against `layout`.
    pub fn load_into(&self, kind: &str, layout: &Layout, params: &mut [f64]) -> Result<(), CheckpointError> {
        if self.kind != kind {
            return Err(CheckpointError::Mismatch(format!("expected kind {kind}, found {}", self.kind)));
        }
        if self.tensors.len() != layout.slots().len() {
            return Err(CheckpointError::Mismatch(format!(
                "expected {} tensors, found {}",
                layout.slots().len(),
                self.tensors.len()
            )));
        }
        for (slot, t) in layout.slots().iter().zip(&self.tensors) {
            if slot.name != t.name || slot.shape != t.shape || t.data.len() != slot.len() {
                return Err(CheckpointError::Mismatch(format!(
                    "tensor {} {:?} does not match {} {:?}",
                    t.name, t.shape, slot.name, slot.shape
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(CheckpointError::Mismatch(format!("tensor {} has non-finite values", t.name)));
            }
            params[slot.range()].copy_from_slice(&t.data);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let text = serde_json::to_string(self)
            .map_err(|source| CheckpointError::Json { path: path.display().to_string(), source })?;
        std::fs::write(path, text).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|source| CheckpointError::Json { path: path.display().to_string(), source })
    }
}

/// Kaiming-uniform fill: `U(-√(6/fan_in), √(6/fan_in))`.
pub fn kaiming_uniform(out: &mut [f64], fan_in: usize, rng: &mut impl Rng) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for v in out {
        *v = rng.random_range(-bound..bound);
    }
}

/// Gradient-descent update rule over a flat parameter vector.
pub trait Optimizer {
    fn step(&mut self, params: &mut [f64], grads: &[f64]);
}

/// SGD with heavy-ball momentum: `v ← μv + g; θ ← θ − ηv`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, n: usize) -> Self {
        Self { lr, momentum, velocity: vec![0.0; n] }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            *v = self.momentum * *v + g;
            *p -= self.lr * *v;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Numerically stable `ln Σ exp(x)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Relative error used by the gradient checks: `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
