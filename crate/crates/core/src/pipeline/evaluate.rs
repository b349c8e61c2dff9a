//! Quality of the pipeline against the warp-only baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extrapolate_frame, target_indices, warp_only, History, Models, PipelineConfig};
use crate::error::Result;
use crate::metrics::{psnr, ssim, StageTimes};
use crate::scene::RenderedFrame;
use crate::shadow::iou;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub frame_index: usize,
    pub psnr_db: f64,
    pub ssim: f64,
    pub baseline_psnr_db: f64,
    pub baseline_ssim: f64,
    /// IoU of the predicted shadow with the true mid-frame shadow.
    pub shadow_iou: Option<f64>,
    /// IoU of the frame-`t` shadow (held over) with the true mid-frame shadow.
    pub hold_iou: f64,
    pub times: StageTimes,
}

/// Extrapolates every odd frame with a full history and scores it against
/// the rendered mid-frame. Ground truth is read only here, after the fact.
pub fn evaluate_sequence(seq: &[RenderedFrame], models: &Models, cfg: &PipelineConfig) -> Result<Vec<FrameEval>> {
    let targets: Vec<usize> = target_indices(seq.len()).collect();
    targets
        .par_iter()
        .map(|&t| {
            let hist = History::from_sequence(seq, t)?;
            let out = extrapolate_frame(&hist, models, cfg)?;
            let base = warp_only(&hist)?;
            let truth = &seq[t];
            let shadow_iou = out
                .shadow
                .as_ref()
                .map(|s| iou(s, &truth.gbuffer.shadow_mask))
                .transpose()?;
            Ok(FrameEval {
                frame_index: t,
                psnr_db: psnr(&out.color, &truth.color, 1.0)?,
                ssim: ssim(&out.color, &truth.color)?,
                baseline_psnr_db: psnr(&base, &truth.color, 1.0)?,
                baseline_ssim: ssim(&base, &truth.color)?,
                shadow_iou,
                hold_iou: iou(&hist.cur.gbuffer.shadow_mask, &truth.gbuffer.shadow_mask)?,
                times: out.times,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub frames: usize,
    pub mean_psnr_db: f64,
    pub mean_baseline_psnr_db: f64,
    pub mean_ssim: f64,
    pub mean_baseline_ssim: f64,
    pub mean_shadow_iou: Option<f64>,
    pub mean_hold_iou: f64,
}

impl EvalSummary {
    pub fn psnr_gain_db(&self) -> f64 {
        self.mean_psnr_db - self.mean_baseline_psnr_db
    }
}

/// Means over frames. Infinite PSNR (exact frames) is capped at 100 dB so a
/// single perfect frame does not swamp the mean.
pub fn summarize(rows: &[FrameEval]) -> EvalSummary {
    let n = rows.len().max(1) as f64;
    let cap = |v: f64| v.min(100.0);
    let mean = |f: &dyn Fn(&FrameEval) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let shadow: Vec<f64> = rows.iter().filter_map(|r| r.shadow_iou).collect();
    EvalSummary {
        frames: rows.len(),
        mean_psnr_db: mean(&|r| cap(r.psnr_db)),
        mean_baseline_psnr_db: mean(&|r| cap(r.baseline_psnr_db)),
        mean_ssim: mean(&|r| r.ssim),
        mean_baseline_ssim: mean(&|r| r.baseline_ssim),
        mean_shadow_iou: (!shadow.is_empty()).then(|| shadow.iter().sum::<f64>() / shadow.len() as f64),
        mean_hold_iou: mean(&|r| r.hold_iou),
    }
}
