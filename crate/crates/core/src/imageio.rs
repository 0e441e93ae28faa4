//! PNG/JPEG decode and PNG encode. Materialized dataset variants are always
//! PNG so lossless invariants survive a round trip.

use std::path::Path;

use image::{DynamicImage, RgbImage};

use crate::error::{Error, Result};
use crate::pipeline::ImageSample;
use crate::tensor::Tensor;

/// Decode to 8-bit RGB, then scale to [0,1] floats.
pub fn load_image(path: &Path, label: usize, source_id: &str) -> Result<ImageSample> {
    let decoded: DynamicImage = image::open(path)?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::InvalidImage(format!("{}: zero-sized image", path.display())));
    }
    let data: Vec<f32> = rgb.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
    let pixels = Tensor::from_vec(&[h as usize, w as usize, 3], data)?;
    ImageSample::new(pixels, label, source_id)
}

/// Encode as 8-bit RGB PNG. Grayscale tensors are replicated across channels.
pub fn save_png(img: &ImageSample, path: &Path) -> Result<()> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if c != 1 && c != 3 {
        return Err(Error::InvalidImage(format!("cannot encode {c}-channel image")));
    }
    let mut buf = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                let v = img.pixels.at3(y, x, if c == 1 { 0 } else { ch });
                buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let rgb = RgbImage::from_raw(w as u32, h as u32, buf)
        .ok_or_else(|| Error::InvalidImage("buffer size mismatch".into()))?;
    rgb.save(path)?;
    Ok(())
}
