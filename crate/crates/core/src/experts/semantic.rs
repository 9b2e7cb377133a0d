use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use super::mlp::MlpSpec;
use super::{bce_loss, Expert, ExpertError, ExpertLogits, VisualExpert};
use crate::data::Label;
use crate::imaging::{ImageTensor, CHANNELS};
use crate::nn::{Checkpoint, Layout};

pub const SEMANTIC_DIM: usize = 64;
const SEMANTIC_GRID: usize = 4;
const HEAD_HIDDEN: usize = 32;
const CHECKPOINT_KIND: &str = "semantic_expert";

/// Frozen trunk: patch-mean pooling to a `grid × grid × 3` vector followed
/// by a seed-determined Gaussian projection to `dim` features.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticExtractor {
    grid: usize,
    dim: usize,
    seed: u64,
    projection: Vec<f64>,
}

impl SemanticExtractor {
    pub fn new(grid: usize, dim: usize, seed: u64) -> Self {
        let n_in = grid * grid * CHANNELS;
        let dist = Normal::new(0.0, 1.0 / (n_in as f64).sqrt()).expect("positive std");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..dim * n_in).map(|_| dist.sample(&mut rng)).collect();
        Self { grid, dim, seed, projection }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Row-major `dim × (grid²·3)` projection matrix.
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    /// Mean of each grid cell per channel, cells ordered row-major.
    pub fn pool(&self, img: &ImageTensor) -> Vec<f64> {
        let (h, w, g) = (img.height(), img.width(), self.grid);
        let mut out = vec![0.0; g * g * CHANNELS];
        for gy in 0..g {
            let (y0, y1) = (gy * h / g, ((gy + 1) * h / g).max(gy * h / g + 1).min(h));
            for gx in 0..g {
                let (x0, x1) = (gx * w / g, ((gx + 1) * w / g).max(gx * w / g + 1).min(w));
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                for y in y0..y1 {
                    for x in x0..x1 {
                        for c in 0..CHANNELS {
                            out[(gy * g + gx) * CHANNELS + c] += img.get(y, x, c);
                        }
                    }
                }
                for c in 0..CHANNELS {
                    out[(gy * g + gx) * CHANNELS + c] /= n;
                }
            }
        }
        out
    }

    pub fn extract(&self, img: &ImageTensor) -> Vec<f64> {
        let pooled = self.pool(img);
        self.projection
            .chunks_exact(pooled.len())
            .map(|row| row.iter().zip(&pooled).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Frozen semantic trunk plus a trainable `64 → 32 → 2` head.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticExpert {
    extractor: SemanticExtractor,
    head: MlpSpec,
    layout: Layout,
    params: Vec<f64>,
}

impl SemanticExpert {
    pub fn new(seed: u64) -> Self {
        let extractor = SemanticExtractor::new(SEMANTIC_GRID, SEMANTIC_DIM, seed);
        let head = MlpSpec::new(&[SEMANTIC_DIM, HEAD_HIDDEN, 2]);
        let mut layout = Layout::default();
        head.register(&mut layout, "head");
        let mut params = vec![0.0; head.param_count()];
        // Distinct stream from the projection.
        head.init(&mut params, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_4ead));
        Self { extractor, head, layout, params }
    }

    pub fn extractor(&self) -> &SemanticExtractor {
        &self.extractor
    }

    pub fn head(&self) -> &MlpSpec {
        &self.head
    }

    pub fn zero_head(&mut self) {
        self.params.fill(0.0);
    }

    /// The trunk feature `f_img` fed to the policy projector.
    pub fn features(&self, img: &ImageTensor) -> Vec<f64> {
        self.extractor.extract(img)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let meta = json!({
            "grid": self.extractor.grid,
            "dim": self.extractor.dim,
            "seed": self.extractor.seed,
            // Recorded for provenance only; at this scale the head is the trainable part.
            "lora": { "rank": 4, "alpha": 8 },
        });
        Checkpoint::from_params(CHECKPOINT_KIND, meta, &self.layout, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ExpertError> {
        let seed = ck.meta.get("seed").and_then(|v| v.as_u64()).ok_or_else(|| {
            crate::nn::CheckpointError::Mismatch("semantic checkpoint lacks meta.seed".into())
        })?;
        let mut expert = Self::new(seed);
        ck.load_into(CHECKPOINT_KIND, &expert.layout, &mut expert.params)?;
        Ok(expert)
    }
}

impl Expert for SemanticExpert {
    type Input = Vec<f64>;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn logits(&self, features: &Vec<f64>) -> ExpertLogits {
        let out = self.head.forward(&self.params, features);
        ExpertLogits::new(out.output()[0], out.output()[1])
    }

    fn accumulate_grad(&self, features: &Vec<f64>, label: Label, scale: f64, grad: &mut [f64]) -> f64 {
        let cache = self.head.forward(&self.params, features);
        let (loss, dz) = bce_loss(ExpertLogits::new(cache.output()[0], cache.output()[1]), label);
        self.head.backward(&self.params, &cache, &[dz[0] * scale, dz[1] * scale], grad);
        loss
    }
}

impl VisualExpert for SemanticExpert {
    fn prepare(&self, img: &ImageTensor) -> Vec<f64> {
        self.features(img)
    }
}
