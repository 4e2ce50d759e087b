use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::tomography::Mask;

/// Default display window in HU.
pub const DISPLAY_WINDOW_HU: (f32, f32) = (-200.0, 600.0);
/// Gray level reserved for metal pixels; the window maps onto `0..=254`.
pub const METAL_GRAY: u8 = 255;
const WINDOW_TOP: f32 = 254.0;

/// Maps an HU image to 8-bit gray levels through `window`, painting metal
/// pixels with [`METAL_GRAY`].
pub fn render_gray(img_hu: &Tensor, window: (f32, f32), metal: Option<&Mask>) -> Result<Vec<u8>> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::invalid(format!("display window [{lo}, {hi}] is empty")));
    }
    let s = img_hu.shape();
    if s.n != 1 || s.c != 1 {
        return Err(Error::shape("render", format!("expected one plane, got {s}")));
    }
    Ok(img_hu
        .data()
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if metal.is_some_and(|m| m.bits()[k]) {
                METAL_GRAY
            } else {
                ((v.clamp(lo, hi) - lo) / (hi - lo) * WINDOW_TOP).round() as u8
            }
        })
        .collect())
}

/// HU value at the centre of a gray level's quantization bin.
pub fn hu_from_gray(gray: u8, window: (f32, f32)) -> f32 {
    let (lo, hi) = window;
    lo + gray.min(WINDOW_TOP as u8) as f32 / WINDOW_TOP * (hi - lo)
}

/// Writes an 8-bit grayscale PNG of an HU image.
pub fn export_png(
    path: impl AsRef<Path>,
    img_hu: &Tensor,
    window: (f32, f32),
    metal: Option<&Mask>,
) -> Result<()> {
    let gray = render_gray(img_hu, window, metal)?;
    let s = img_hu.shape();
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, s.w as u32, s.h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::format("png", e.to_string()))?;
    writer
        .write_image_data(&gray)
        .map_err(|e| Error::format("png", e.to_string()))?;
    writer.finish().map_err(|e| Error::format("png", e.to_string()))
}
