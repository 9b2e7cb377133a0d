use serde::{Deserialize, Serialize};

use super::tensor::CHANNELS;
use super::{ImageTensor, ImagingError};

/// A robustness degradation applied to test images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationSpec {
    JpegApprox { quality_factor: u8 },
    GaussianBlur { sigma: f64 },
    Resize { scale: f64 },
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<(), ImagingError> {
        match *self {
            PerturbationSpec::JpegApprox { quality_factor } if !(1..=100).contains(&quality_factor) => {
                Err(ImagingError::Spec(format!("quality factor {quality_factor} outside [1, 100]")))
            }
            PerturbationSpec::GaussianBlur { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(ImagingError::Spec(format!("blur sigma must be positive, got {sigma}")))
            }
            PerturbationSpec::Resize { scale } if !(scale > 0.0 && scale <= 1.0) => {
                Err(ImagingError::Spec(format!("resize scale {scale} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Short stable name for reports, e.g. `blur_s1`, `jpeg_q75`.
    pub fn name(&self) -> String {
        match *self {
            PerturbationSpec::JpegApprox { quality_factor } => format!("jpeg_q{quality_factor}"),
            PerturbationSpec::GaussianBlur { sigma } => format!("blur_s{sigma}"),
            PerturbationSpec::Resize { scale } => format!("resize_x{scale}"),
        }
    }

    /// Blur σ=1,2; resize ×0.5; JPEG QF 75 and 70.
    pub fn robustness_suite() -> Vec<PerturbationSpec> {
        vec![
            PerturbationSpec::GaussianBlur { sigma: 1.0 },
            PerturbationSpec::GaussianBlur { sigma: 2.0 },
            PerturbationSpec::Resize { scale: 0.5 },
            PerturbationSpec::JpegApprox { quality_factor: 75 },
            PerturbationSpec::JpegApprox { quality_factor: 70 },
        ]
    }
}

pub fn perturb(img: &ImageTensor, spec: &PerturbationSpec) -> Result<ImageTensor, ImagingError> {
    spec.validate()?;
    match *spec {
        PerturbationSpec::GaussianBlur { sigma } => Ok(gaussian_blur(img, sigma)),
        PerturbationSpec::Resize { scale } => resize_bilinear(img, scale),
        PerturbationSpec::JpegApprox { quality_factor } => Ok(jpeg_approx(img, quality_factor)),
    }
}

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

fn gaussian_blur(img: &ImageTensor, sigma: f64) -> ImageTensor {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let (h, w) = (img.height() as i64, img.width() as i64);
    let idx = |y: i64, x: i64, c: usize| ((y * w + x) as usize) * CHANNELS + c;

    let src = img.data();
    let mut horiz = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                let mut acc = 0.0;
                for (k, t) in kernel.iter().enumerate() {
                    let sx = (x + k as i64 - r).clamp(0, w - 1);
                    acc += t * src[idx(y, sx, c)];
                }
                horiz[idx(y, x, c)] = acc;
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                let mut acc = 0.0;
                for (k, t) in kernel.iter().enumerate() {
                    let sy = (y + k as i64 - r).clamp(0, h - 1);
                    acc += t * horiz[idx(sy, x, c)];
                }
                out[idx(y, x, c)] = acc;
            }
        }
    }
    ImageTensor::from_clamped(img.height(), img.width(), out).expect("shape preserved")
}

/// Bilinear resampling to `(⌊H·s⌋, ⌊W·s⌋)` with pixel-centre alignment.
fn resize_bilinear(img: &ImageTensor, scale: f64) -> Result<ImageTensor, ImagingError> {
    let out_h = (img.height() as f64 * scale).floor() as usize;
    let out_w = (img.width() as f64 * scale).floor() as usize;
    if out_h < 1 || out_w < 1 {
        return Err(ImagingError::Shape(format!(
            "resize x{scale} of {}x{} leaves no pixels",
            img.height(),
            img.width()
        )));
    }
    resize_to(img, out_h, out_w)
}

pub(crate) fn resize_to(img: &ImageTensor, out_h: usize, out_w: usize) -> Result<ImageTensor, ImagingError> {
    let (h, w) = (img.height(), img.width());
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let coord = |dst: usize, s: f64, n: usize| {
        let p = ((dst as f64 + 0.5) * s - 0.5).clamp(0.0, (n - 1) as f64);
        let lo = p.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, p - lo as f64)
    };
    let mut data = Vec::with_capacity(out_h * out_w * CHANNELS);
    for y in 0..out_h {
        let (y0, y1, fy) = coord(y, sy, h);
        for x in 0..out_w {
            let (x0, x1, fx) = coord(x, sx, w);
            for c in 0..CHANNELS {
                let top = img.get(y0, x0, c) * (1.0 - fx) + img.get(y0, x1, c) * fx;
                let bottom = img.get(y1, x0, c) * (1.0 - fx) + img.get(y1, x1, c) * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    ImageTensor::from_clamped(out_h, out_w, data)
}

/// Standard JPEG luminance quantization table, row-major.
const LUMINANCE_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Luminance table scaled with the IJG quality formula.
pub fn quant_table(quality: u8) -> [f64; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0; 64];
    for (o, &t) in out.iter_mut().zip(LUMINANCE_QUANT.iter()) {
        *o = ((t as u32 * scale + 50) / 100).clamp(1, 255) as f64;
    }
    out
}

fn dct_basis() -> [[f64; 8]; 8] {
    // basis[u][x] = C(u)/2 · cos((2x+1)uπ/16), orthonormal.
    let mut b = [[0.0; 8]; 8];
    for (u, row) in b.iter_mut().enumerate() {
        let cu = if u == 0 { (0.5f64).sqrt() } else { 1.0 };
        for (x, v) in row.iter_mut().enumerate() {
            *v = 0.5 * cu * (((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI) / 16.0).cos();
        }
    }
    b
}

/// Block-DCT quantization round trip on each channel independently.
fn jpeg_approx(img: &ImageTensor, quality: u8) -> ImageTensor {
    let basis = dct_basis();
    let q = quant_table(quality);
    let (h, w) = (img.height(), img.width());
    let mut out = vec![0.0; h * w * CHANNELS];
    let mut block = [[0.0f64; 8]; 8];
    for c in 0..CHANNELS {
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                // Edge replication fills partial blocks.
                for (i, row) in block.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        let (y, x) = ((by + i).min(h - 1), (bx + j).min(w - 1));
                        *v = img.get(y, x, c) * 255.0 - 128.0;
                    }
                }
                let mut coeff = transform(&basis, &block, false);
                for u in 0..8 {
                    for v in 0..8 {
                        let step = q[u * 8 + v];
                        coeff[u][v] = (coeff[u][v] / step).round() * step;
                    }
                }
                let rec = transform(&basis, &coeff, true);
                for (i, row) in rec.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        let (y, x) = (by + i, bx + j);
                        if y < h && x < w {
                            out[(y * w + x) * CHANNELS + c] = (v + 128.0) / 255.0;
                        }
                    }
                }
            }
        }
    }
    ImageTensor::from_clamped(h, w, out).expect("shape preserved")
}

// Forward: B · X · Bᵀ. Inverse: Bᵀ · X · B.
fn transform(basis: &[[f64; 8]; 8], x: &[[f64; 8]; 8], inverse: bool) -> [[f64; 8]; 8] {
    let b = |r: usize, c: usize| if inverse { basis[c][r] } else { basis[r][c] };
    let mut tmp = [[0.0; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            tmp[i][j] = (0..8).map(|k| b(i, k) * x[k][j]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for i in 0..8 {
        for j in 0..8 {
            out[i][j] = (0..8).map(|k| tmp[i][k] * b(j, k)).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(h, w, |y, x, c| 0.1 + 0.8 * (y + x) as f64 / (h + w) as f64 + 0.02 * c as f64).unwrap()
    }

    #[test]
    fn blur_of_constant_is_identity() {
        let img = ImageTensor::filled(9, 13, 0.42).unwrap();
        for sigma in [0.5, 1.0, 2.0] {
            let out = perturb(&img, &PerturbationSpec::GaussianBlur { sigma }).unwrap();
            assert!(out.data().iter().all(|v| (v - 0.42).abs() < 1e-9));
        }
    }

    #[test]
    fn kernel_radius_and_normalization() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(gaussian_kernel(0.4).len(), 5);
    }

    #[test]
    fn blur_preserves_mean_on_interior_dominated_image() {
        let img = ImageTensor::from_fn(64, 64, |y, x, c| {
            let border = y < 8 || x < 8 || y >= 56 || x >= 56;
            if border { 0.5 } else { ((y * 7 + x * 13 + c * 5) % 17) as f64 / 16.0 }
        })
        .unwrap();
        let out = perturb(&img, &PerturbationSpec::GaussianBlur { sigma: 1.0 }).unwrap();
        assert!((out.mean() - img.mean()).abs() < 1e-3);
    }

    #[test]
    fn resize_half_of_64() {
        let out = perturb(&gradient(64, 64), &PerturbationSpec::Resize { scale: 0.5 }).unwrap();
        assert_eq!((out.height(), out.width()), (32, 32));
    }

    #[test]
    fn resize_to_nothing_fails() {
        assert!(perturb(&gradient(3, 3), &PerturbationSpec::Resize { scale: 0.2 }).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let img = gradient(8, 8);
        assert!(perturb(&img, &PerturbationSpec::JpegApprox { quality_factor: 0 }).is_err());
        assert!(perturb(&img, &PerturbationSpec::GaussianBlur { sigma: 0.0 }).is_err());
        assert!(perturb(&img, &PerturbationSpec::Resize { scale: 1.5 }).is_err());
    }

    #[test]
    fn quant_table_scaling() {
        assert!(quant_table(100).iter().all(|&q| q == 1.0));
        assert_eq!(quant_table(50)[0], 16.0);
        // QF 75 halves the table (scale 50): (16·50 + 50) / 100 = 8.
        assert_eq!(quant_table(75)[0], 8.0);
    }

    /// Direct quadruple-sum DCT, kept separate from the matrix form above.
    fn brute_dct_round_trip(block: &[[f64; 8]; 8], q: &[f64; 64]) -> [[f64; 8]; 8] {
        use std::f64::consts::PI;
        let c = |u: usize| if u == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
        let mut f = [[0.0; 8]; 8];
        for u in 0..8 {
            for v in 0..8 {
                let mut s = 0.0;
                for x in 0..8 {
                    for y in 0..8 {
                        s += block[x][y]
                            * (((2 * x + 1) as f64 * u as f64 * PI) / 16.0).cos()
                            * (((2 * y + 1) as f64 * v as f64 * PI) / 16.0).cos();
                    }
                }
                let raw = 0.25 * c(u) * c(v) * s;
                f[u][v] = (raw / q[u * 8 + v]).round() * q[u * 8 + v];
            }
        }
        let mut out = [[0.0; 8]; 8];
        for x in 0..8 {
            for y in 0..8 {
                let mut s = 0.0;
                for u in 0..8 {
                    for v in 0..8 {
                        s += c(u) * c(v) * f[u][v]
                            * (((2 * x + 1) as f64 * u as f64 * PI) / 16.0).cos()
                            * (((2 * y + 1) as f64 * v as f64 * PI) / 16.0).cos();
                    }
                }
                out[x][y] = 0.25 * s;
            }
        }
        out
    }

    #[test]
    fn jpeg_matches_brute_force_dct() {
        let img = ImageTensor::from_fn(8, 8, |y, x, c| ((y * 37 + x * 11 + c * 3) % 23) as f64 / 22.0).unwrap();
        let q = quant_table(70);
        let out = perturb(&img, &PerturbationSpec::JpegApprox { quality_factor: 70 }).unwrap();
        for c in 0..3 {
            let mut block = [[0.0; 8]; 8];
            for (y, row) in block.iter_mut().enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = img.get(y, x, c) * 255.0 - 128.0;
                }
            }
            let rec = brute_dct_round_trip(&block, &q);
            for y in 0..8 {
                for x in 0..8 {
                    let expect = ((rec[y][x] + 128.0) / 255.0).clamp(0.0, 1.0);
                    assert!((out.get(y, x, c) - expect).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn jpeg_q100_on_smooth_gradient_is_nearly_lossless() {
        let img = gradient(20, 27);
        let out = perturb(&img, &PerturbationSpec::JpegApprox { quality_factor: 100 }).unwrap();
        let max_err = img.data().iter().zip(out.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_err <= 0.02, "max error {max_err}");
    }

    #[test]
    fn perturbations_stay_in_range() {
        let img = ImageTensor::from_fn(17, 17, |y, x, _| if (y + x) % 2 == 0 { 0.0 } else { 1.0 }).unwrap();
        for spec in PerturbationSpec::robustness_suite() {
            let out = perturb(&img, &spec).unwrap();
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)), "{}", spec.name());
        }
    }
}
