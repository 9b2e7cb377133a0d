use super::tensor::CHANNELS;
use super::{ImageTensor, ImagingError};

/// Signed down-up resampling residual, same shape as its source image.
#[derive(Debug, Clone, PartialEq)]
pub struct NprMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl NprMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImagingError> {
        if data.len() != height * width * CHANNELS || height == 0 || width == 0 {
            return Err(ImagingError::Shape(format!("bad residual shape {height}x{width}")));
        }
        if let Some(v) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(ImagingError::Range(*v));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width * CHANNELS] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    pub fn mean_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum::<f64>() / self.data.len() as f64
    }
}

/// Keeps the top-left pixel of every `factor × factor` block. Odd trailing
/// rows/columns form partial blocks, which is what edge-replication padding
/// to a multiple of `factor` would produce.
pub fn downsample_nearest(img: &ImageTensor, factor: usize) -> ImageTensor {
    assert!(factor >= 1, "resampling factor must be at least 1");
    let h = img.height().div_ceil(factor);
    let w = img.width().div_ceil(factor);
    let mut data = Vec::with_capacity(h * w * CHANNELS);
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                data.push(img.get(y * factor, x * factor, c));
            }
        }
    }
    ImageTensor::new(h, w, data).expect("subsampling keeps shape and range")
}

/// Nearest-neighbour upsampling by `factor`, cropped to `height × width`.
pub fn upsample_nearest(img: &ImageTensor, factor: usize, height: usize, width: usize) -> ImageTensor {
    assert!(factor >= 1, "resampling factor must be at least 1");
    let mut data = Vec::with_capacity(height * width * CHANNELS);
    for y in 0..height {
        for x in 0..width {
            let (sy, sx) = ((y / factor).min(img.height() - 1), (x / factor).min(img.width() - 1));
            for c in 0..CHANNELS {
                data.push(img.get(sy, sx, c));
            }
        }
    }
    ImageTensor::new(height, width, data).expect("replication keeps range")
}

/// `img − upsample(downsample(img))` with factor 2.
pub fn npr_transform(img: &ImageTensor) -> NprMap {
    npr_transform_with(img, 2)
}

pub fn npr_transform_with(img: &ImageTensor, factor: usize) -> NprMap {
    let (h, w) = (img.height(), img.width());
    let reconstructed = upsample_nearest(&downsample_nearest(img, factor), factor, h, w);
    let data = img
        .data()
        .iter()
        .zip(reconstructed.data())
        .map(|(a, b)| a - b)
        .collect();
    NprMap { height: h, width: w, data }
}
