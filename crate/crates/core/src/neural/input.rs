//! Network input: demodulated warped colour, hole mask, roughness,
//! metallic and the LBP texture code of the warped luma.

use super::tensor::Tensor;
use crate::error::Result;
use crate::image::ImagePlane;
use crate::scene::TargetGBuffer;

pub const INPUT_CHANNELS: usize = 7;

/// Channel layout of [`assemble_input`].
pub const INPUT_LAYOUT: [&str; INPUT_CHANNELS] = ["r", "g", "b", "hole_mask", "roughness", "metallic", "lbp"];

/// Clockwise from the top-left neighbour; bit 7 is the first neighbour.
const NEIGHBOURS: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];

/// 8-neighbour local binary pattern with clamped borders, scaled to [0, 1].
/// A neighbour sets its bit when it is at least as bright as the centre.
pub fn lbp_map(gray: &ImagePlane) -> Result<ImagePlane> {
    gray.check_channels(1, "lbp input")?;
    let (w, h) = (gray.width() as i64, gray.height() as i64);
    Ok(ImagePlane::from_fn(gray.width(), gray.height(), 1, |x, y, _| {
        let c = gray.get(x, y, 0);
        let mut code = 0u32;
        for (dx, dy) in NEIGHBOURS {
            let nx = (x as i64 + dx).clamp(0, w - 1) as u32;
            let ny = (y as i64 + dy).clamp(0, h - 1) as u32;
            code = (code << 1) | (gray.get(nx, ny, 0) >= c) as u32;
        }
        code as f32 / 255.0
    }))
}

/// The seven input channels as one interleaved plane, for cropping patches.
pub fn input_plane(demod_warped: &ImagePlane, hole_mask: &ImagePlane, target: TargetGBuffer<'_>) -> Result<ImagePlane> {
    demod_warped.check_channels(3, "warped colour")?;
    hole_mask.check_channels(1, "hole mask")?;
    demod_warped.check_same_size(hole_mask, "hole mask")?;
    demod_warped.check_same_size(target.roughness(), "target G-buffer")?;
    let lbp = lbp_map(&demod_warped.luma()?)?;
    ImagePlane::stack(&[
        demod_warped,
        hole_mask,
        target.roughness(),
        target.metallic(),
        &lbp,
    ])
}

/// Stacks the seven input channels into a batch-1 tensor.
pub fn assemble_input(
    demod_warped: &ImagePlane,
    hole_mask: &ImagePlane,
    target: TargetGBuffer<'_>,
) -> Result<Tensor<f32>> {
    Ok(Tensor::from_plane(&input_plane(demod_warped, hole_mask, target)?))
}
