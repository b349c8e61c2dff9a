//! Demodulation, region blending and final composition.

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::scene::{TargetGBuffer, SHADOW_ATTENUATION};
use crate::segment::RegionMasks;
use crate::shadow::shadow_apply;

/// `F / (albedo + specular * 0.08 * (1 - metallic))`, denominator guarded.
pub fn demodulate(color: &ImagePlane, g: TargetGBuffer<'_>) -> Result<ImagePlane> {
    color.check_channels(3, "demodulate colour")?;
    color.div_guarded(&g.material_response())
}

/// Inverse of [`demodulate`].
pub fn modulate(color: &ImagePlane, g: TargetGBuffer<'_>) -> Result<ImagePlane> {
    color.check_channels(3, "modulate colour")?;
    color.mul(&g.material_response())
}

/// Checks that the three masks are binary and cover every pixel exactly once.
pub fn check_partition(masks: &RegionMasks) -> Result<()> {
    let [a, b, c] = masks.as_array();
    a.check_channels(1, "region mask")?;
    a.check_same_size(b, "region masks")?;
    a.check_same_size(c, "region masks")?;
    for (p, ((&x, &y), &z)) in a.data().iter().zip(b.data()).zip(c.data()).enumerate() {
        let binary = [x, y, z].iter().all(|&v| v == 0.0 || v == 1.0);
        if !binary || x + y + z != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "region masks are not a partition at pixel {p}: ({x}, {y}, {z})"
            )));
        }
    }
    Ok(())
}

/// `M1 * F1 + M2 * F2 + M3 * F3` over an exact partition.
pub fn blend_regions(regions: [&ImagePlane; 3], masks: &RegionMasks) -> Result<ImagePlane> {
    check_partition(masks)?;
    let [f1, f2, f3] = regions;
    if !f1.same_size(&masks.fg) {
        return Err(size_err(f1, &masks.fg));
    }
    f1.check_same_size(f2, "region frames")?;
    f1.check_same_size(f3, "region frames")?;
    ensure_same_channels(f1, f2)?;
    ensure_same_channels(f1, f3)?;
    let c = f1.channels() as usize;
    let mut out = ImagePlane::new(f1.width(), f1.height(), f1.channels());
    let m = masks.as_array().map(|m| m.data());
    for (p, px) in out.data_mut().chunks_exact_mut(c).enumerate() {
        let src = if m[0][p] == 1.0 {
            f1
        } else if m[1][p] == 1.0 {
            f2
        } else {
            f3
        };
        px.copy_from_slice(src.pixel_at(p));
    }
    Ok(out)
}

fn size_err(f: &ImagePlane, m: &ImagePlane) -> Error {
    Error::Shape(format!(
        "region frame {}x{} vs masks {}x{}",
        f.width(),
        f.height(),
        m.width(),
        m.height()
    ))
}

fn ensure_same_channels(a: &ImagePlane, b: &ImagePlane) -> Result<()> {
    if a.channels() != b.channels() {
        return Err(Error::Shape(format!("region frames have {} and {} channels", a.channels(), b.channels())));
    }
    Ok(())
}

/// Blend the demodulated regions, apply the predicted shadow, modulate, and
/// clamp negatives (the only clamp in the pipeline).
pub fn compose_final(
    regions: [&ImagePlane; 3],
    masks: &RegionMasks,
    shadow: Option<&ImagePlane>,
    g: TargetGBuffer<'_>,
) -> Result<ImagePlane> {
    let mut merged = blend_regions(regions, masks)?;
    if let Some(s) = shadow {
        merged = shadow_apply(&merged, s, SHADOW_ATTENUATION)?;
    }
    Ok(modulate(&merged, g)?.map(|v| v.max(0.0)))
}
