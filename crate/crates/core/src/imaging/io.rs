use std::path::Path;

use image::{ImageFormat, RgbImage};

use super::{ImageTensor, ImagingError};

/// Decodes a PNG or binary PPM (P6) file, mapping 8-bit values `v` to `v / 255`.
pub fn load_image(path: &Path) -> Result<ImageTensor, ImagingError> {
    let format = format_for(path)?;
    let bytes = std::fs::read(path).map_err(|e| ImagingError::Io(path.display().to_string(), e))?;
    decode_image(&bytes, format)
}

pub fn decode_image(bytes: &[u8], format: ImageFormat) -> Result<ImageTensor, ImagingError> {
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| ImagingError::Decode(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    ImageTensor::new(h as usize, w as usize, data)
}

/// Encodes with `round(v * 255)`; the format follows the file extension.
pub fn save_image(img: &ImageTensor, path: &Path) -> Result<(), ImagingError> {
    let format = format_for(path)?;
    let bytes = encode_image(img, format)?;
    std::fs::write(path, bytes).map_err(|e| ImagingError::Io(path.display().to_string(), e))
}

pub fn encode_image(img: &ImageTensor, format: ImageFormat) -> Result<Vec<u8>, ImagingError> {
    let raw: Vec<u8> = img.data().iter().map(|v| (v * 255.0).round() as u8).collect();
    let rgb = RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .ok_or_else(|| ImagingError::Shape("buffer does not match dimensions".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    rgb.write_to(&mut out, format).map_err(|e| ImagingError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

fn format_for(path: &Path) -> Result<ImageFormat, ImagingError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "ppm" => Ok(ImageFormat::Pnm),
        other => Err(ImagingError::UnsupportedFormat(other.to_string())),
    }
}
