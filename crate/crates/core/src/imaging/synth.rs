use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::npr::upsample_nearest;
use super::tensor::CHANNELS;
use super::{ImageTensor, ImagingError};
use crate::data::Label;

/// Per-pixel sensor noise of camera ("real") images.
pub const REAL_NOISE_SIGMA: f64 = 0.03;
/// Noise added to generated images after upsampling.
pub const FAKE_POST_NOISE_SIGMA: f64 = 0.008;
/// Channel gains of the generator's colour cast.
const FAKE_TINT: [f64; 3] = [1.06, 1.0, 0.94];

/// One synthetic corpus entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub index: usize,
    pub image: ImageTensor,
    pub label: Label,
}

#[derive(Debug, Clone)]
enum Shape {
    Disc { cy: f64, cx: f64, r: f64, color: [f64; 3] },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64, color: [f64; 3] },
}

/// Resolution-independent scene description in unit coordinates.
#[derive(Debug, Clone)]
struct Scene {
    c0: [f64; 3],
    c1: [f64; 3],
    angle: f64,
    shapes: Vec<Shape>,
}

impl Scene {
    fn random(rng: &mut impl Rng) -> Self {
        let mut color = || [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        let c0 = color();
        let c1 = color();
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let n_shapes = rng.random_range(2..=4);
        let shapes = (0..n_shapes)
            .map(|_| {
                let color = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
                if rng.random::<bool>() {
                    Shape::Disc {
                        cy: rng.random(),
                        cx: rng.random(),
                        r: 0.08 + 0.2 * rng.random::<f64>(),
                        color,
                    }
                } else {
                    let (ya, yb) = (rng.random::<f64>(), rng.random::<f64>());
                    let (xa, xb) = (rng.random::<f64>(), rng.random::<f64>());
                    Shape::Rect { y0: ya.min(yb), x0: xa.min(xb), y1: ya.max(yb), x1: xa.max(xb), color }
                }
            })
            .collect();
        Scene { c0, c1, angle, shapes }
    }

    fn color_at(&self, v: f64, u: f64) -> [f64; 3] {
        let t = (0.5 + (u - 0.5) * self.angle.cos() + (v - 0.5) * self.angle.sin()).clamp(0.0, 1.0);
        let mut px = [0.0; 3];
        for c in 0..CHANNELS {
            px[c] = self.c0[c] + (self.c1[c] - self.c0[c]) * t;
        }
        for shape in &self.shapes {
            match *shape {
                Shape::Disc { cy, cx, r, color } => {
                    if (v - cy).powi(2) + (u - cx).powi(2) <= r * r {
                        px = color;
                    }
                }
                Shape::Rect { y0, x0, y1, x1, color } => {
                    if (y0..=y1).contains(&v) && (x0..=x1).contains(&u) {
                        px = color;
                    }
                }
            }
        }
        px
    }

    fn render(&self, size: usize, noise_sigma: f64, rng: &mut impl Rng) -> ImageTensor {
        let noise = Normal::new(0.0, noise_sigma).expect("positive sigma");
        let mut data = Vec::with_capacity(size * size * CHANNELS);
        for y in 0..size {
            for x in 0..size {
                let px = self.color_at((y as f64 + 0.5) / size as f64, (x as f64 + 0.5) / size as f64);
                for v in px {
                    data.push(v + noise.sample(rng));
                }
            }
        }
        ImageTensor::from_clamped(size, size, data).expect("square shape")
    }
}

fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Renders a labelled corpus: `n_real` camera-like images followed by
/// `n_fake` generated-like ones.
///
/// Real images are rendered at full resolution with per-pixel noise. Fake
/// images are rendered (noise included) at half resolution, nearest-upsampled,
/// tinted, and then receive weaker full-resolution noise. Image `i` depends
/// only on `(seed, i)`.
pub fn synth_corpus(n_real: usize, n_fake: usize, size: usize, seed: u64) -> Result<Vec<SynthImage>, ImagingError> {
    if size < 2 || !size.is_multiple_of(2) {
        return Err(ImagingError::Spec(format!("corpus image size must be even, got {size}")));
    }
    if n_real + n_fake == 0 {
        return Err(ImagingError::Spec("corpus must contain at least one image".into()));
    }
    let out = (0..n_real + n_fake)
        .map(|index| {
            let label = if index < n_real { Label::Real } else { Label::Fake };
            SynthImage { index, image: synth_image(label, size, seed, index), label }
        })
        .collect();
    Ok(out)
}

pub fn synth_image(label: Label, size: usize, seed: u64, index: usize) -> ImageTensor {
    let mut rng = image_rng(seed, index);
    let scene = Scene::random(&mut rng);
    match label {
        Label::Real => scene.render(size, REAL_NOISE_SIGMA, &mut rng),
        Label::Fake => {
            let half = scene.render(size / 2, REAL_NOISE_SIGMA, &mut rng);
            let up = upsample_nearest(&half, 2, size, size);
            let noise = Normal::new(0.0, FAKE_POST_NOISE_SIGMA).expect("positive sigma");
            let data = up
                .data()
                .iter()
                .enumerate()
                .map(|(i, v)| v * FAKE_TINT[i % CHANNELS] + noise.sample(&mut rng))
                .collect();
            ImageTensor::from_clamped(size, size, data).expect("square shape")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::npr_transform;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_corpus(3, 3, 16, 11).unwrap();
        let b = synth_corpus(3, 3, 16, 11).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(3, 3, 16, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn labels_balanced_by_construction() {
        let corpus = synth_corpus(5, 7, 8, 1).unwrap();
        assert_eq!(corpus.iter().filter(|s| s.label == Label::Real).count(), 5);
        assert_eq!(corpus.iter().filter(|s| s.label == Label::Fake).count(), 7);
    }

    #[test]
    fn odd_size_rejected() {
        assert!(synth_corpus(1, 1, 7, 0).is_err());
    }

    #[test]
    fn fakes_have_lower_residual_energy() {
        let corpus = synth_corpus(100, 100, 32, 7).unwrap();
        let energy = |label| {
            let v: Vec<f64> = corpus
                .iter()
                .filter(|s| s.label == label)
                .map(|s| npr_transform(&s.image).mean_abs())
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (real, fake) = (energy(Label::Real), energy(Label::Fake));
        assert!(fake < real, "fake {fake} vs real {real}");
    }
}
