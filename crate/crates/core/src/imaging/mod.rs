//! Image tensors, file I/O, the resampling residual, robustness perturbations
//! and the synthetic corpus.

mod io;
mod npr;
mod perturb;
mod synth;
mod tensor;

pub use io::{decode_image, encode_image, load_image, save_image};
pub use npr::{downsample_nearest, npr_transform, npr_transform_with, upsample_nearest, NprMap};
pub use perturb::{gaussian_kernel, perturb, quant_table, PerturbationSpec};
pub use synth::{synth_corpus, synth_image, SynthImage, FAKE_POST_NOISE_SIGMA, REAL_NOISE_SIGMA};
pub use tensor::{ImageTensor, CHANNELS};

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("unsupported image format {0:?} (expected png or ppm)")]
    UnsupportedFormat(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("encode error: {0}")]
    Encode(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("value {0} outside the allowed range")]
    Range(f64),
    #[error("invalid perturbation: {0}")]
    Spec(String),
}
