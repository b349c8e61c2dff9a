use std::path::Path;

use super::ImagePlane;
use crate::error::{Error, Result};

/// Quantizes to 8 bits (`floor(clamp(v) * 255 + 0.5)`) and encodes as PNG.
///
/// With `clamp01 == false` values are still saturated to the 8-bit range, the
/// flag only controls whether out-of-range input is accepted silently.
pub fn to_png8(plane: &ImagePlane, clamp01: bool) -> Result<Vec<u8>> {
    let color = match plane.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        c => {
            return Err(Error::InvalidArgument(format!(
                "cannot export a {c}-channel plane as PNG"
            )))
        }
    };
    if !clamp01 {
        if let Some(v) = plane.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "value {v} outside [0, 1] with clamping disabled"
            )));
        }
    }
    let bytes: Vec<u8> = plane.data().iter().map(|&v| quantize(v)).collect();

    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, plane.width(), plane.height());
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(e.to_string()))?;
        writer
            .write_image_data(&bytes)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    Ok(out)
}

pub fn write_png8(path: impl AsRef<Path>, plane: &ImagePlane) -> Result<()> {
    std::fs::write(path, to_png8(plane, true)?)?;
    Ok(())
}

#[inline]
pub(crate) fn quantize(v: f32) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}
