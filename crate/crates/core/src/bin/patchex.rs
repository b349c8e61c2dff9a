use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use patchex::image::write_plane;
use patchex::latency::{jnd_report, parse_render_trace, presentation_latency, write_latency_csv, Mode, TimingScenario};
use patchex::metrics::{stage_table, write_stage_csv};
use patchex::pipeline::{
    evaluate_sequence, run_bench, run_extrapolate, summarize, target_indices, train_models, Models, PipelineConfig,
    RunManifest,
};
use patchex::scene::{presets, read_dataset, render_sequence, write_dataset, RenderedFrame, SceneSpec};
use patchex::segment::{calibrate_k, calibration_samples, dynamic_coverage, offline_segment, segment_frame};
use patchex::{Error, Result};

#[derive(Parser)]
#[command(name = "patchex", version, about = "Patch-based frame extrapolation")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; gets a run.json. Defaults to runs/<command>.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    no_foveated: bool,
    #[arg(long, global = true)]
    no_shadow_partition: bool,
    #[arg(long, global = true)]
    no_perceptual_loss: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence with G-buffers.
    RenderDataset {
        /// `disocclusion`, `corpus:<i>`, `random:<seed>` or a scene TOML file.
        #[arg(long, default_value = "disocclusion")]
        scene: String,
        #[arg(long, default_value_t = 128)]
        width: u32,
        #[arg(long, default_value_t = 96)]
        height: u32,
        /// Emitted frames (half steps); preset default if omitted.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        overwrite: bool,
    },
    /// Real-time masks per target frame plus offline analysis.
    Segment {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train the foreground and near-background networks.
    Train {
        /// One or more dataset directories.
        #[arg(long, required = true, num_args = 1..)]
        dataset: Vec<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Wall-time cap per network, seconds.
        #[arg(long)]
        time_budget: Option<f64>,
    },
    /// Extrapolate every half-step frame of a dataset.
    Extrapolate {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory with fg.pxnn and near.pxnn; untrained networks if omitted.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Compare against the warp-only baseline.
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        dataset: Vec<PathBuf>,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Stage timings across resolutions.
    Bench {
        /// Comma separated WxH list.
        #[arg(long, default_value = "160x90,320x180,480x270,640x360")]
        resolutions: String,
        #[arg(long, default_value_t = 5)]
        iterations: usize,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Presentation latency of interpolation versus extrapolation.
    LatencyModel {
        #[arg(long, default_value_t = 90.0)]
        refresh_hz: f64,
        /// File of render times in ms.
        #[arg(long, conflicts_with = "render_ms")]
        render_trace: Option<PathBuf>,
        /// Comma separated render times in ms.
        #[arg(long, value_delimiter = ',')]
        render_ms: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        interp_ms: f64,
        #[arg(long, default_value_t = 2.0)]
        extrap_ms: f64,
        /// Just-noticeable delay threshold, ms.
        #[arg(long, default_value_t = 5.0)]
        jnd_ms: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::RenderDataset { .. } => "render-dataset",
            Command::Segment { .. } => "segment",
            Command::Train { .. } => "train",
            Command::Extrapolate { .. } => "extrapolate",
            Command::Evaluate { .. } => "evaluate",
            Command::Bench { .. } => "bench",
            Command::LatencyModel { .. } => "latency-model",
        }
    }
}

fn config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    cfg.ablation.no_foveated |= g.no_foveated;
    cfg.ablation.no_shadow_partition |= g.no_shadow_partition;
    cfg.ablation.no_perceptual_loss |= g.no_perceptual_loss;
    cfg.validate()?;
    Ok(cfg)
}

fn scene_spec(scene: &str, w: u32, h: u32, frames: Option<usize>) -> Result<SceneSpec> {
    let bad = |what: &str| Error::Config(format!("bad scene {scene:?}: {what}"));
    let mut spec = if scene == "disocclusion" {
        presets::disocclusion_scene(w, h, 1)
    } else if let Some(i) = scene.strip_prefix("corpus:") {
        presets::corpus_scene(i.parse().map_err(|_| bad("index"))?, w, h)
    } else if let Some(s) = scene.strip_prefix("random:") {
        presets::random_scene(s.parse().map_err(|_| bad("seed"))?, w, h, frames.unwrap_or(9))
    } else {
        SceneSpec::from_toml_str(&fs::read_to_string(scene)?)?
    };
    if let Some(n) = frames {
        spec.frames = n;
    }
    spec.validate()?;
    Ok(spec)
}

fn models(dir: Option<&Path>, cfg: &PipelineConfig) -> Result<Models> {
    match dir {
        Some(d) => Models::load(d.join("fg.pxnn"), d.join("near.pxnn")),
        None => {
            log::warn!("no checkpoints given, using untrained networks");
            Models::fresh(cfg.seed)
        }
    }
}

fn load_all(dirs: &[PathBuf]) -> Result<Vec<Vec<RenderedFrame>>> {
    dirs.iter().map(|d| Ok(read_dataset(d)?.frames)).collect()
}

fn csv_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn parse_resolutions(s: &str) -> Result<Vec<(u32, u32)>> {
    s.split(',')
        .map(|r| {
            let (w, h) = r.trim().split_once('x').ok_or_else(|| Error::Config(format!("bad resolution {r:?}")))?;
            let p = |v: &str| v.parse::<u32>().map_err(|_| Error::Config(format!("bad resolution {r:?}")));
            Ok((p(w)?, p(h)?))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let cfg = config(g)?;
    let name = cli.command.name();
    let dir = g.run_dir.clone().unwrap_or_else(|| Path::new("runs").join(name));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string())?;
    let mut manifest = RunManifest::new(name, cfg.seed, cfg.hash());
    manifest.outputs.push("config.toml".into());
    let mut out = |rel: &str| {
        manifest.outputs.push(rel.to_string());
        dir.join(rel)
    };

    let summary = match &cli.command {
        Command::RenderDataset { scene, width, height, frames, overwrite } => {
            let spec = scene_spec(scene, *width, *height, *frames)?;
            let seq = render_sequence(&spec)?;
            write_dataset(&seq, out("dataset"), *overwrite)?;
            fs::write(out("scene.toml"), spec.to_toml_string())?;
            println!("{} frames at {}x{} -> {}", seq.len(), spec.width(), spec.height(), dir.join("dataset").display());
            json!({ "frames": seq.len(), "width": spec.width(), "height": spec.height() })
        }

        Command::Segment { dataset } => {
            let seq = read_dataset(dataset)?.frames;
            let masks_dir = out("masks");
            fs::create_dir_all(&masks_dir)?;
            let mut frames = Vec::new();
            for (t, f) in seq.iter().enumerate() {
                let g = &f.gbuffer;
                let (m, rects) = segment_frame(&g.stencil, &g.motion_vector, &cfg.segmentation)?;
                for (region, plane) in ["fg", "near", "far"].iter().zip(m.as_array()) {
                    write_plane(masks_dir.join(format!("frame_{t:05}_{region}.pfex")), plane)?;
                }
                let [fg, near, far] = m.counts();
                frames.push(json!({
                    "frame": t,
                    "rects": rects.iter().map(|r| [r.x, r.y, r.w, r.h]).collect::<Vec<_>>(),
                    "pixels": { "fg": fg, "near": near, "far": far },
                }));
            }
            let colors: Vec<_> = seq.iter().map(|f| f.color.clone()).collect();
            let off = offline_segment(&colors)?;
            let stencils: Vec<_> = seq.iter().map(|f| &f.gbuffer.stencil).collect();
            let coverage = dynamic_coverage(&off.high_mask, &stencils)?;
            let calib = match calibrate_k(&calibration_samples(&seq, 3)) {
                Ok(c) => serde_json::to_value(c).expect("calibration serializes"),
                Err(e) => {
                    log::warn!("calibration skipped: {e}");
                    serde_json::Value::Null
                }
            };
            let report = json!({
                "frames": frames,
                "offline": { "threshold": off.threshold, "rect": [off.rect.x, off.rect.y, off.rect.w, off.rect.h] },
                "dynamic_coverage": coverage,
                "calibration": calib,
            });
            fs::write(out("segment.json"), serde_json::to_string_pretty(&report).expect("json") + "\n")?;
            println!("dynamic coverage {:.1}%", 100.0 * coverage);
            println!("calibration {calib}");
            json!({ "dynamic_coverage": coverage, "calibration": calib })
        }

        Command::Train { dataset, epochs, time_budget } => {
            let mut cfg = cfg.clone();
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if time_budget.is_some() {
                cfg.train.time_budget_secs = *time_budget;
            }
            let seqs = load_all(dataset)?;
            let res = train_models(&seqs, &cfg)?;
            res.models.save(out("fg.pxnn"), out("near.pxnn"))?;
            let report = json!({ "fg": res.fg, "near": res.near });
            fs::write(out("train.json"), serde_json::to_string_pretty(&report).expect("json") + "\n")?;
            let last = |r: &patchex::neural::TrainReport| r.train_loss.last().copied();
            println!("fg  final loss {:?}", res.fg.as_ref().and_then(last));
            println!("near final loss {:?}", last(&res.near));
            json!({
                "fg_steps": res.fg.as_ref().map(|r| r.steps),
                "near_steps": res.near.steps,
                "fg_final_loss": res.fg.as_ref().and_then(last),
                "near_final_loss": last(&res.near),
            })
        }

        Command::Extrapolate { dataset, checkpoints } => {
            let models = models(checkpoints.as_deref(), &cfg)?;
            let res = run_extrapolate(dataset, &models, &cfg, &dir)?;
            manifest.outputs.extend(res.outputs.iter().map(|p| p.display().to_string()));
            print!("{}", res.timing_table());
            let n = res.quality.len() as f64;
            let mean_psnr = res.quality.iter().map(|q| q.psnr_db.min(100.0)).sum::<f64>() / n;
            let mean_ssim = res.quality.iter().map(|q| q.ssim).sum::<f64>() / n;
            println!("{} frames, mean PSNR {mean_psnr:.2} dB, mean SSIM {mean_ssim:.4}", res.quality.len());
            json!({ "frames": res.quality.len(), "mean_psnr_db": mean_psnr, "mean_ssim": mean_ssim })
        }

        Command::Evaluate { dataset, checkpoints } => {
            let models = models(checkpoints.as_deref(), &cfg)?;
            let mut rows = Vec::new();
            for (d, seq) in dataset.iter().zip(load_all(dataset)?) {
                if target_indices(seq.len()).next().is_none() {
                    return Err(Error::InvalidArgument(format!("{} has too few frames", d.display())));
                }
                rows.extend(evaluate_sequence(&seq, &models, &cfg)?);
            }
            let mut w = csv::Writer::from_writer(csv_file(&out("eval.csv"))?);
            w.write_record(["frame_index", "psnr_db", "ssim", "baseline_psnr_db", "baseline_ssim", "shadow_iou", "hold_iou"])
                .map_err(|e| Error::Io(e.into()))?;
            for r in &rows {
                w.write_record([
                    r.frame_index.to_string(),
                    r.psnr_db.to_string(),
                    r.ssim.to_string(),
                    r.baseline_psnr_db.to_string(),
                    r.baseline_ssim.to_string(),
                    r.shadow_iou.map(|v| v.to_string()).unwrap_or_default(),
                    r.hold_iou.to_string(),
                ])
                .map_err(|e| Error::Io(e.into()))?;
            }
            w.flush()?;
            let s = summarize(&rows);
            println!(
                "PSNR {:.2} dB vs warp-only {:.2} dB ({:+.2} dB), SSIM {:.4} vs {:.4}",
                s.mean_psnr_db,
                s.mean_baseline_psnr_db,
                s.psnr_gain_db(),
                s.mean_ssim,
                s.mean_baseline_ssim
            );
            println!("shadow IoU {:?} vs hold-last {:.3}", s.mean_shadow_iou, s.mean_hold_iou);
            serde_json::to_value(&s).expect("summary serializes")
        }

        Command::Bench { resolutions, iterations, checkpoints } => {
            let models = models(checkpoints.as_deref(), &cfg)?;
            let res = parse_resolutions(resolutions)?;
            let scratch = dir.join("scratch");
            let rep = run_bench(&res, &models, &cfg, *iterations, &scratch)?;
            fs::remove_dir_all(&scratch)?;
            for r in &rep.rows {
                println!("{}x{}", r.width, r.height);
                print!("{}", stage_table(&r.stages));
                write_stage_csv(&r.stages, csv_file(&out(&format!("stages_{}x{}.csv", r.width, r.height)))?)?;
                println!(
                    "whole-frame {:.3} ms, patches parallel {:.3} ms, sequential {:.3} ms\n",
                    r.whole_frame_ms, r.patch_parallel_ms, r.patch_sequential_ms
                );
            }
            if let Some(f) = rep.fit {
                println!("whole-frame latency ~ {:.3e} * pixels^{:.3} (r2 {:.3})", f.a, f.b, f.r2);
            }
            fs::write(out("bench.json"), serde_json::to_string_pretty(&rep).expect("json") + "\n")?;
            serde_json::to_value(&rep).expect("report serializes")
        }

        Command::LatencyModel { refresh_hz, render_trace, render_ms, interp_ms, extrap_ms, jnd_ms } => {
            let render = match render_trace {
                Some(p) => parse_render_trace(&fs::read_to_string(p)?)?,
                None if !render_ms.is_empty() => render_ms.clone(),
                None => vec![1000.0 / refresh_hz * 1.5; 8],
            };
            let s = TimingScenario::from_refresh_hz(*refresh_hz, render, *interp_ms, *extrap_ms);
            write_latency_csv(&s, csv_file(&out("latency.csv"))?)?;
            let lat = |m| -> Result<Vec<f64>> { Ok(presentation_latency(&s, m)?.iter().map(|f| f.latency_ms).collect()) };
            let (i, e) = (lat(Mode::Interp)?, lat(Mode::Extrap)?);
            let (ji, je) = (jnd_report(&i, *jnd_ms), jnd_report(&e, *jnd_ms));
            println!("refresh interval {:.2} ms", s.refresh_ms);
            println!("interpolation: {:.1}% of frames over {jnd_ms} ms", 100.0 * ji);
            println!("extrapolation: {:.1}% of frames over {jnd_ms} ms", 100.0 * je);
            json!({ "refresh_ms": s.refresh_ms, "jnd_ms": jnd_ms, "interp_violation": ji, "extrap_violation": je })
        }
    };

    manifest.summary = summary;
    manifest.write(&dir)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
