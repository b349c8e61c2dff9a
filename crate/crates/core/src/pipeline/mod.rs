//! End-to-end extrapolation of half-step frames.
//!
//! For a rendered frame `t` the pipeline produces `t + 0.5` from frames
//! `t - 1` and `t` plus the target's G-buffer:
//!
//! 1. remove the shadow from `F_t` and demodulate it by its own material response,
//! 2. warp by half the target motion vectors (direct samples where the
//!    G-buffers agree, G-buffer guided gather elsewhere) and flag the rest,
//! 3. split the frame into foreground, near and far regions,
//! 4. run four independent tasks: foreground net, near-background net, far
//!    region (warped as is) and shadow extrapolation,
//! 5. blend, apply the predicted shadow, modulate.

mod bench;
mod config;
mod evaluate;
mod manifest;
mod run;
mod training;

pub use bench::{bench_resolution, run_bench, BenchReport, BenchRow};
pub use config::{Ablation, PipelineConfig};
pub use evaluate::{evaluate_sequence, summarize, EvalSummary, FrameEval};
pub use manifest::{sha256_hex, RunManifest};
pub use run::{run_extrapolate, ExtrapolationRun};
pub use training::{train_models, training_samples, Region, TrainOutcome};

use std::path::Path;

use crate::blend::{compose_final, demodulate};
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::metrics::{Stage, StageTimer, StageTimes};
use crate::neural::checkpoint;
use crate::neural::{input_plane, Architecture, Network, Tensor};
use crate::scene::{RenderedFrame, TargetGBuffer, SHADOW_ATTENUATION};
use crate::segment::{bounding_rect, segment_frame, BoundingRect, RegionMasks};
use crate::shadow::{extrapolate_shadow, farneback_flow, shadow_remove};
use crate::warp::{
    backward_warp, backward_warp_clamped, detect_invalid, gbuffer_guided_warp, mask_and, warp_attributes,
};

/// Half-step extrapolation distance in rendered-frame units.
pub const EXTRAPOLATION_SCALE: f32 = 0.5;

/// The two inpainting networks.
#[derive(Clone, Debug, PartialEq)]
pub struct Models {
    pub fg: Network<f32>,
    pub near: Network<f32>,
}

impl Models {
    /// Untrained networks with the standard architectures.
    pub fn fresh(seed: u64) -> Result<Self> {
        Ok(Self {
            fg: Network::new(Architecture::foreground(), seed)?,
            near: Network::new(Architecture::near_background(), seed.wrapping_add(1))?,
        })
    }

    pub fn load(fg: impl AsRef<Path>, near: impl AsRef<Path>) -> Result<Self> {
        Ok(Self {
            fg: checkpoint::load_expecting(fg, &Architecture::foreground())?,
            near: checkpoint::load_expecting(near, &Architecture::near_background())?,
        })
    }

    pub fn save(&self, fg: impl AsRef<Path>, near: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(&self.fg, fg)?;
        checkpoint::save(&self.near, near)
    }
}

/// Everything the extrapolation path may look at: two past rendered frames
/// and the target's geometry. The target's colour and shadow mask are out of
/// reach by construction.
#[derive(Clone, Copy, Debug)]
pub struct History<'a> {
    pub prev: &'a RenderedFrame,
    pub cur: &'a RenderedFrame,
    pub target: TargetGBuffer<'a>,
}

impl<'a> History<'a> {
    /// Frames `2k - 2`, `2k` and target `2k + 1` of an emitted sequence.
    pub fn from_sequence(seq: &'a [RenderedFrame], target_index: usize) -> Result<Self> {
        if target_index < 3 || target_index % 2 == 0 || target_index >= seq.len() {
            return Err(Error::InvalidArgument(format!(
                "target index {target_index} needs odd index >= 3 within {} frames",
                seq.len()
            )));
        }
        Ok(Self {
            prev: &seq[target_index - 3],
            cur: &seq[target_index - 1],
            target: seq[target_index].gbuffer.target_view(),
        })
    }
}

/// Odd indices that have a full history in a sequence of `n` frames.
pub fn target_indices(n: usize) -> impl Iterator<Item = usize> {
    (3..n).step_by(2)
}

/// Output of the shared front half of the pipeline.
#[derive(Clone, Debug)]
pub struct Prepared {
    /// Demodulated (and unless disabled, shadow-free) warped frame.
    pub warped: ImagePlane,
    /// `1 = trustworthy warped pixel`.
    pub valid: ImagePlane,
    pub masks: RegionMasks,
    pub rects: Vec<BoundingRect>,
    /// The seven network input channels over the whole frame.
    pub input: ImagePlane,
}

fn whole_frame_masks(w: u32, h: u32) -> RegionMasks {
    RegionMasks {
        fg: ImagePlane::new(w, h, 1),
        near: ImagePlane::filled(w, h, 1, 1.0),
        far: ImagePlane::new(w, h, 1),
    }
}

/// Direct bilinear samples where they agree with the target G-buffer, the
/// guided gather where only it does, holes elsewhere. The gather low-passes
/// texture even without motion, so it is kept for pixels the direct sample
/// cannot serve.
fn hybrid_warp(hist: &History<'_>, irr: &ImagePlane, cfg: &PipelineConfig) -> Result<(ImagePlane, ImagePlane)> {
    let (src_g, target, mv) = (&hist.cur.gbuffer, hist.target, hist.target.motion_vector());
    let direct = backward_warp(irr, mv, EXTRAPOLATION_SCALE)?;
    let direct_ok = mask_and(
        &direct.hole_mask,
        &detect_invalid(&warp_attributes(src_g, mv, EXTRAPOLATION_SCALE)?, target, &cfg.invalid)?,
    )?;
    let (guided, attrs) = gbuffer_guided_warp(irr, src_g, target, mv, EXTRAPOLATION_SCALE, &cfg.warp)?;
    let guided_ok = mask_and(&guided.hole_mask, &detect_invalid(&attrs, target, &cfg.invalid)?)?;
    let c = irr.channels() as usize;
    let mut color = ImagePlane::new(irr.width(), irr.height(), irr.channels());
    let mut valid = ImagePlane::new(irr.width(), irr.height(), 1);
    for p in 0..irr.pixel_count() {
        let src = if direct_ok.data()[p] == 1.0 {
            &direct.color
        } else if guided_ok.data()[p] == 1.0 {
            &guided.color
        } else {
            continue;
        };
        color.data_mut()[p * c..(p + 1) * c].copy_from_slice(src.pixel_at(p));
        valid.data_mut()[p] = 1.0;
    }
    Ok((color, valid))
}

/// Steps 1 to 3.
pub fn prepare(hist: &History<'_>, cfg: &PipelineConfig, timer: &mut StageTimer) -> Result<Prepared> {
    let cur = hist.cur;
    let (warped, valid) = timer.time(Stage::Warping, || -> Result<_> {
        let shadeless = if cfg.ablation.no_shadow_partition {
            cur.color.clone()
        } else {
            shadow_remove(&cur.color, &cur.gbuffer.shadow_mask, SHADOW_ATTENUATION)?
        };
        let irr = demodulate(&shadeless, cur.gbuffer.target_view())?;
        hybrid_warp(hist, &irr, cfg)
    })?;
    timer.time(Stage::Preprocessing, || {
        let (masks, rects) = if cfg.ablation.no_foveated {
            (whole_frame_masks(hist.target.width(), hist.target.height()), Vec::new())
        } else {
            segment_frame(hist.target.stencil(), hist.target.motion_vector(), &cfg.segmentation)?
        };
        let input = input_plane(&warped, &valid, hist.target)?;
        Ok(Prepared {
            warped,
            valid,
            masks,
            rects,
            input,
        })
    })
}

/// Bounding box of the invalid pixels of `region`, grown by `context` pixels.
pub fn region_patch(region: &ImagePlane, valid: &ImagePlane, context: u32) -> Option<BoundingRect> {
    let need = region.zip_map(valid, |m, v| if m == 1.0 && v != 1.0 { 1.0 } else { 0.0 }).ok()?;
    let r = bounding_rect(&need)?;
    let x0 = r.x.saturating_sub(context);
    let y0 = r.y.saturating_sub(context);
    let x1 = (r.x + r.w + context).min(region.width());
    let y1 = (r.y + r.h + context).min(region.height());
    Some(BoundingRect {
        x: x0,
        y: y0,
        w: x1 - x0,
        h: y1 - y0,
    })
}

/// Runs `net` on the patch around the region's invalid pixels and writes its
/// prediction into those pixels; everything else keeps the warped value.
pub fn inpaint_region(net: &Network<f32>, prep: &Prepared, region: &ImagePlane, context: u32) -> Result<ImagePlane> {
    let mut out = prep.warped.clone();
    let Some(r) = region_patch(region, &prep.valid, context) else {
        return Ok(out);
    };
    let patch = prep.input.crop(r.x, r.y, r.w, r.h)?;
    let pred = net.forward(&Tensor::from_plane(&patch))?.to_plane(0);
    if !pred.is_finite() {
        return Err(Error::Numeric(format!("network produced non-finite values in patch {r}")));
    }
    for y in 0..r.h {
        for x in 0..r.w {
            let (gx, gy) = (r.x + x, r.y + y);
            if region.get(gx, gy, 0) == 1.0 && prep.valid.get(gx, gy, 0) != 1.0 {
                out.pixel_mut(gx, gy).copy_from_slice(pred.pixel(x, y));
            }
        }
    }
    Ok(out)
}

/// Predicted mid-frame shadow from the shadow masks of `t - 1` and `t`.
pub fn predict_shadow(hist: &History<'_>, cfg: &PipelineConfig) -> Result<ImagePlane> {
    let (a, b) = (&hist.prev.gbuffer.shadow_mask, &hist.cur.gbuffer.shadow_mask);
    let flow = farneback_flow(a, b, &cfg.shadow)?;
    extrapolate_shadow(b, &flow, EXTRAPOLATION_SCALE)
}

#[derive(Clone, Debug)]
pub struct Extrapolated {
    pub color: ImagePlane,
    pub masks: RegionMasks,
    pub valid: ImagePlane,
    pub shadow: Option<ImagePlane>,
    pub times: StageTimes,
}

/// Full pipeline for one target frame. The four region/shadow tasks run
/// concurrently; their results are joined in a fixed order, so the output
/// does not depend on scheduling.
pub fn extrapolate_frame(hist: &History<'_>, models: &Models, cfg: &PipelineConfig) -> Result<Extrapolated> {
    let mut timer = StageTimer::new();
    let prep = prepare(hist, cfg, &mut timer)?;
    let ctx = cfg.context;
    let ((fg, near), (far, shadow)) = timer.time(Stage::Inference, || {
        rayon::join(
            || {
                rayon::join(
                    || inpaint_region(&models.fg, &prep, &prep.masks.fg, ctx),
                    || inpaint_region(&models.near, &prep, &prep.masks.near, ctx),
                )
            },
            || {
                rayon::join(
                    || prep.warped.clone(),
                    || (!cfg.ablation.no_shadow_partition).then(|| predict_shadow(hist, cfg)).transpose(),
                )
            },
        )
    });
    let (fg, near, shadow) = (fg?, near?, shadow?);
    let color = timer.time(Stage::Blending, || {
        compose_final([&fg, &near, &far], &prep.masks, shadow.as_ref(), hist.target)
    })?;
    Ok(Extrapolated {
        color,
        masks: prep.masks,
        valid: prep.valid,
        shadow,
        times: timer.finish(),
    })
}

/// Baseline: plain backward warp of `F_t` with edge clamping.
pub fn warp_only(hist: &History<'_>) -> Result<ImagePlane> {
    backward_warp_clamped(&hist.cur.color, hist.target.motion_vector(), EXTRAPOLATION_SCALE)
}

/// Demodulated mid-frame the networks are trained to reproduce.
pub fn truth_irradiance(truth: &RenderedFrame, cfg: &PipelineConfig) -> Result<ImagePlane> {
    let shadeless = if cfg.ablation.no_shadow_partition {
        truth.color.clone()
    } else {
        shadow_remove(&truth.color, &truth.gbuffer.shadow_mask, SHADOW_ATTENUATION)?
    };
    demodulate(&shadeless, truth.gbuffer.target_view())
}

/// Upper bound: ground-truth regions and shadow pushed through the same
/// segmentation and composition as the real pipeline.
pub fn oracle_frame(hist: &History<'_>, truth: &RenderedFrame, cfg: &PipelineConfig) -> Result<ImagePlane> {
    let irr = truth_irradiance(truth, cfg)?;
    let masks = if cfg.ablation.no_foveated {
        whole_frame_masks(truth.color.width(), truth.color.height())
    } else {
        segment_frame(hist.target.stencil(), hist.target.motion_vector(), &cfg.segmentation)?.0
    };
    let shadow = (!cfg.ablation.no_shadow_partition).then_some(&truth.gbuffer.shadow_mask);
    compose_final([&irr, &irr, &irr], &masks, shadow, hist.target)
}
