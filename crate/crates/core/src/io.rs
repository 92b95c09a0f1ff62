//! 8-bit PNG input and output.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{invalid, Result};
use crate::grid::{Grid, ImageGrid};
use crate::scalar::Real;

/// Loads a PNG as values in `[0, 1]`: grayscale gives 1 channel, anything else 3 (alpha dropped).
pub fn load_png<T: Real>(path: impl AsRef<Path>) -> Result<ImageGrid<T>> {
    let img = image::open(path)?;
    let scale = T::lit(1.0 / 255.0);
    match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            let g = img.to_luma8();
            let (w, h) = g.dimensions();
            let data = g.into_raw().into_iter().map(|v| T::from_u8(v).unwrap() * scale).collect();
            Grid::image(h as usize, w as usize, 1, data)
        }
        _ => {
            let g = img.to_rgb8();
            let (w, h) = g.dimensions();
            let data = g.into_raw().into_iter().map(|v| T::from_u8(v).unwrap() * scale).collect();
            Grid::image(h as usize, w as usize, 3, data)
        }
    }
}

pub fn to_u8<T: Real>(v: T) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 1- or 3-channel image, clamping to `[0, 1]`.
pub fn save_png<T: Real>(image: &ImageGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    let (h, w, d) = image.dims();
    let bytes: Vec<u8> = image.as_slice().iter().map(|&v| to_u8(v)).collect();
    match d {
        1 => GrayImage::from_raw(w as u32, h as u32, bytes).unwrap().save(path)?,
        3 => RgbImage::from_raw(w as u32, h as u32, bytes).unwrap().save(path)?,
        _ => return Err(invalid(format!("PNG output needs 1 or 3 channels, got {d}"))),
    }
    Ok(())
}

/// Min-max normalizes a single-channel field and writes it as grayscale.
/// Returns the `(min, max)` used.
pub fn save_heatmap_png<T: Real>(field: &Grid<T>, path: impl AsRef<Path>) -> Result<(f64, f64)> {
    if field.depth() != 1 {
        return Err(invalid("heatmap must have one channel"));
    }
    let vals: Vec<f64> = field.as_slice().iter().map(|v| v.as_f64()).collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let norm: Vec<f64> = vals.iter().map(|v| (v - lo) / span).collect();
    let g = Grid::new(field.height(), field.width(), 1, norm)?;
    save_png(&g, path)?;
    Ok((lo, hi))
}
