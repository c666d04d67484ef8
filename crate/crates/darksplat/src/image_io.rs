//! 16-bit RGB PNG storage of linear images (value / 65535).

use std::path::Path;

use darksplat_core::Image;
use image::{ImageBuffer, Rgb};

use crate::error::{DataError, Result};

/// Nearest 16-bit level of a value clamped to `[0, 1]`.
pub fn to_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0 + 0.5).floor() as u16
}

pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    let raw: Vec<u16> = img.data.iter().map(|v| to_u16(*v)).collect();
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width, img.height, raw).expect("buffer length matches dimensions");
    buf.save(path).map_err(|source| DataError::Image { path: path.to_path_buf(), source })
}

pub fn load_png(path: &Path) -> Result<Image> {
    let dynamic = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => DataError::io(path, e),
        source => DataError::Image { path: path.to_path_buf(), source },
    })?;
    let rgb = dynamic.into_rgb16();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
    Image::from_data(w, h, data).map_err(|e| DataError::core(path, e))
}
