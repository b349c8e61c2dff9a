//! Extrapolation of a whole dataset directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::{extrapolate_frame, target_indices, History, Models, PipelineConfig};
use crate::error::{Error, Result};
use crate::image::{write_plane, write_png8};
use crate::metrics::{psnr, ssim, stage_table, summarize_stages, FrameQuality, Stage, StageTimes, MIN_TIMING_RUNS};
use crate::scene::{read_frame, read_manifest};

#[derive(Clone, Debug)]
pub struct ExtrapolationRun {
    pub quality: Vec<FrameQuality>,
    pub times: Vec<StageTimes>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<PathBuf>,
}

impl ExtrapolationRun {
    /// Stage summary when there are enough frames, per-frame rows otherwise.
    pub fn timing_table(&self) -> String {
        if self.times.len() >= MIN_TIMING_RUNS {
            if let Ok(rows) = summarize_stages(&self.times) {
                return stage_table(&rows);
            }
        }
        let mut s = format!("{:<6}", "frame");
        for st in Stage::ALL {
            s += &format!(" {:>14}", st.name());
        }
        s += &format!(" {:>10}\n", "total");
        for (q, t) in self.quality.iter().zip(&self.times) {
            s += &format!("{:<6}", q.frame_index);
            for v in t.ms {
                s += &format!(" {v:>14.3}");
            }
            s += &format!(" {:>10.3}\n", t.total_ms);
        }
        s
    }
}

#[derive(Serialize)]
struct TimingRow {
    frame_index: usize,
    gbuffer_io_ms: f64,
    warping_ms: f64,
    preprocessing_ms: f64,
    inference_ms: f64,
    blending_ms: f64,
    total_ms: f64,
}

/// Extrapolates every odd frame of the dataset at `dataset` into
/// `out/frames/frame_NNNNN.{pfex,png}`, and writes `quality.csv` (against the
/// rendered mid-frame, after the fact), `frame_times.csv` and `timing.txt`.
/// Each target reads only the three frames it needs; that read is the
/// G-buffer I/O stage.
pub fn run_extrapolate(dataset: &Path, models: &Models, cfg: &PipelineConfig, out: &Path) -> Result<ExtrapolationRun> {
    cfg.validate()?;
    let manifest = read_manifest(dataset)?;
    let targets: Vec<usize> = target_indices(manifest.frames).collect();
    if targets.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} frames, extrapolation needs at least 4",
            manifest.frames
        )));
    }
    fs::create_dir_all(out.join("frames"))?;
    let mut run = ExtrapolationRun {
        quality: Vec::new(),
        times: Vec::new(),
        outputs: Vec::new(),
    };
    for t in targets {
        let t0 = Instant::now();
        let prev = read_frame(dataset, &manifest, t - 3)?;
        let cur = read_frame(dataset, &manifest, t - 1)?;
        let target = read_frame(dataset, &manifest, t)?;
        let io_ms = t0.elapsed().as_secs_f64() * 1e3;
        let hist = History {
            prev: &prev,
            cur: &cur,
            target: target.gbuffer.target_view(),
        };
        let res = extrapolate_frame(&hist, models, cfg)?;
        let mut times = res.times;
        times.ms[Stage::GbufferIo as usize] += io_ms;
        times.total_ms += io_ms;

        for ext in ["pfex", "png"] {
            let rel = PathBuf::from("frames").join(format!("frame_{t:05}.{ext}"));
            if ext == "pfex" {
                write_plane(out.join(&rel), &res.color)?;
            } else {
                write_png8(out.join(&rel), &res.color)?;
            }
            run.outputs.push(rel);
        }
        run.quality.push(FrameQuality {
            frame_index: t,
            psnr_db: psnr(&res.color, &target.color, 1.0)?,
            ssim: ssim(&res.color, &target.color)?,
        });
        run.times.push(times);
    }

    crate::metrics::write_quality_csv(&run.quality, BufWriter::new(File::create(out.join("quality.csv"))?))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out.join("frame_times.csv"))?));
    for (q, t) in run.quality.iter().zip(&run.times) {
        w.serialize(TimingRow {
            frame_index: q.frame_index,
            gbuffer_io_ms: t.ms[0],
            warping_ms: t.ms[1],
            preprocessing_ms: t.ms[2],
            inference_ms: t.ms[3],
            blending_ms: t.ms[4],
            total_ms: t.total_ms,
        })
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    fs::write(out.join("timing.txt"), run.timing_table())?;
    run.outputs.extend(["quality.csv", "frame_times.csv", "timing.txt"].map(PathBuf::from));
    Ok(run)
}
