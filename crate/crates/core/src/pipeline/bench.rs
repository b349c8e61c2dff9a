//! Per-stage timing across resolutions and whole-frame versus patch
//! inference.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{extrapolate_frame, inpaint_region, prepare, History, Models, PipelineConfig};
use crate::error::{Error, Result};
use crate::metrics::{fit_power_law, median, summarize_stages, PowerLaw, Stage, StageRow, StageTimer, StageTimes, MIN_TIMING_RUNS};
use crate::neural::Tensor;
use crate::scene::{presets, read_dataset, write_dataset, RenderedFrame, Renderer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub width: u32,
    pub height: u32,
    pub pixels: u64,
    pub stages: Vec<StageRow>,
    /// Foreground network over the whole frame, median ms.
    pub whole_frame_ms: f64,
    /// Foreground and near networks on their patches, run concurrently.
    pub patch_parallel_ms: f64,
    /// The same two patches one after the other.
    pub patch_sequential_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Whole-frame latency against pixel count.
    pub fit: Option<PowerLaw>,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Frames `prev`, `cur`, `target` of the disocclusion scene at `w x h`.
fn bench_frames(w: u32, h: u32, seed: u64) -> Result<Vec<RenderedFrame>> {
    let r = Renderer::new(presets::disocclusion_scene(w, h, seed))?;
    Ok([1.0, 2.0, 2.5].iter().map(|&t| r.render_frame(t)).collect())
}

/// Times `iterations` runs at one resolution. Frames are written to
/// `scratch` once and read back inside every timed run.
pub fn bench_resolution(
    w: u32,
    h: u32,
    models: &Models,
    cfg: &PipelineConfig,
    iterations: usize,
    scratch: &Path,
) -> Result<BenchRow> {
    if iterations < MIN_TIMING_RUNS {
        return Err(Error::InvalidArgument(format!("bench needs at least {MIN_TIMING_RUNS} iterations")));
    }
    let dir = scratch.join(format!("{w}x{h}"));
    write_dataset(&bench_frames(w, h, cfg.seed)?, &dir, true)?;

    let mut runs = Vec::with_capacity(iterations);
    let (mut whole, mut par, mut seq) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..iterations {
        let t0 = Instant::now();
        let frames = read_dataset(&dir)?.frames;
        let io_ms = ms_since(t0);
        let hist = History {
            prev: &frames[0],
            cur: &frames[1],
            target: frames[2].gbuffer.target_view(),
        };
        let out = extrapolate_frame(&hist, models, cfg)?;
        let mut times: StageTimes = out.times;
        times.ms[Stage::GbufferIo as usize] += io_ms;
        times.total_ms += io_ms;
        runs.push(times);

        let prep = prepare(&hist, cfg, &mut StageTimer::new())?;
        let full = Tensor::from_plane(&prep.input);
        let t = Instant::now();
        models.fg.forward(&full)?;
        whole.push(ms_since(t));

        let ctx = cfg.context;
        let t = Instant::now();
        let (a, b) = rayon::join(
            || inpaint_region(&models.fg, &prep, &prep.masks.fg, ctx),
            || inpaint_region(&models.near, &prep, &prep.masks.near, ctx),
        );
        a?;
        b?;
        par.push(ms_since(t));

        let t = Instant::now();
        inpaint_region(&models.fg, &prep, &prep.masks.fg, ctx)?;
        inpaint_region(&models.near, &prep, &prep.masks.near, ctx)?;
        seq.push(ms_since(t));
    }
    Ok(BenchRow {
        width: w,
        height: h,
        pixels: w as u64 * h as u64,
        stages: summarize_stages(&runs)?,
        whole_frame_ms: median(&whole),
        patch_parallel_ms: median(&par),
        patch_sequential_ms: median(&seq),
    })
}

/// Benchmarks every resolution and fits `latency = a * pixels^b` to the
/// whole-frame inference medians (needs at least three resolutions).
pub fn run_bench(
    resolutions: &[(u32, u32)],
    models: &Models,
    cfg: &PipelineConfig,
    iterations: usize,
    scratch: &Path,
) -> Result<BenchReport> {
    let rows = resolutions
        .iter()
        .map(|&(w, h)| {
            log::info!("bench {w}x{h}");
            bench_resolution(w, h, models, cfg, iterations, scratch)
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = if rows.len() >= 3 {
        Some(fit_power_law(
            &rows.iter().map(|r| (r.pixels as f64, r.whole_frame_ms)).collect::<Vec<_>>(),
        )?)
    } else {
        None
    };
    Ok(BenchReport { rows, fit })
}
