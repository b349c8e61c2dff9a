//! The nine acceptance criteria as functions, shared by the acceptance
//! runner and the focused integration tests.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use patchex::blend::{blend_regions, compose_final, demodulate, modulate};
use patchex::image::{read_plane, read_plane_from, to_png8, write_plane, write_plane_to};
use patchex::latency::{jnd_report, presentation_latency, Mode, TimingScenario};
use patchex::metrics::{fit_power_law, psnr, ssim, summarize_stages, StageTimer, Stage, StageTimes};
use patchex::neural::checkpoint;
use patchex::neural::conv::Conv2d;
use patchex::neural::loss::gram;
use patchex::neural::{
    input_plane, lbp_map, loss, Architecture, FeatureExtractor, GatedConv, LossWeights, Network, Tensor, TrainConfig,
    TrainSample,
};
use patchex::pipeline::{
    evaluate_sequence, extrapolate_frame, run_bench, summarize, target_indices, train_models, Ablation, History,
    Models, PipelineConfig,
};
use patchex::scene::{presets, read_dataset, render_sequence, write_dataset, GBufferSet, RenderedFrame, SceneSpec};
use patchex::segment::{
    calibrate_k, dynamic_coverage, expand_rect, make_masks, offline_segment, otsu_threshold, temporal_variation,
    threshold_mask, BoundingRect, CalibrationSample, RegionMasks, SegmentationParams,
};
use patchex::shadow::{extrapolate_shadow, farneback_flow, shadow_apply, FarnebackParams};
use patchex::warp::{
    backward_warp, backward_warp_clamped, detect_invalid, forward_warp, gbuffer_guided_warp, mask_and,
    occlusion_motion_vectors, warp_attributes, GuidedWarpParams, InvalidThresholds,
};
use patchex::ImagePlane;
use rand::Rng;

use super::oracles::*;

pub type Check = Result<(), String>;

#[derive(Clone, Debug)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn of(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn ok<T>(r: patchex::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn field(w: u32, h: u32, v: [f32; 2]) -> ImagePlane {
    ImagePlane::from_fn(w, h, 2, |_, _, c| v[c as usize])
}

fn gradient(w: u32, h: u32) -> ImagePlane {
    ImagePlane::from_fn(w, h, 3, |x, y, c| (x * 10 + y * 3 + c) as f32 * 0.01)
}

fn flat_gbuffer(w: u32, h: u32, albedo: f32, spec: f32) -> GBufferSet {
    let one = ImagePlane::filled(w, h, 1, 1.0);
    GBufferSet {
        base_color: ImagePlane::filled(w, h, 3, albedo),
        metallic: ImagePlane::new(w, h, 1),
        specular: ImagePlane::filled(w, h, 1, spec),
        roughness: one.clone(),
        depth: ImagePlane::filled(w, h, 1, 10.0),
        world_normal: ImagePlane::from_fn(w, h, 3, |_, _, c| (c == 2) as u8 as f32),
        stencil: ImagePlane::new(w, h, 1),
        motion_vector: ImagePlane::new(w, h, 2),
        shadow_mask: ImagePlane::new(w, h, 1),
        nov: one,
    }
}

fn decode_png(bytes: &[u8]) -> Vec<u8> {
    let dec = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = dec.read_info().expect("png header");
    let mut buf = vec![0; reader.output_buffer_size().expect("png size")];
    let info = reader.next_frame(&mut buf).expect("png frame");
    buf.truncate(info.buffer_size());
    buf
}

/// A disocclusion scene whose sprite stands still.
pub fn static_scene(w: u32, h: u32) -> SceneSpec {
    let mut s = presets::disocclusion_scene(w, h, 2);
    s.sprites[0].x = vec![12.0];
    s
}

// ---------------------------------------------------------------- criterion 1

fn image_io() -> Check {
    let z = ImagePlane::new(2, 2, 3);
    let mut bytes = Vec::new();
    ok(write_plane_to(&mut bytes, &z))?;
    ensure!(ok(read_plane_from(&bytes[..]))? == z, "zero plane round trip");
    bytes[..4].copy_from_slice(b"XXXX");
    ensure!(matches!(read_plane_from(&bytes[..]), Err(patchex::Error::Format(_))), "bad magic accepted");
    Ok(())
}

fn png_quantization() -> Check {
    for (v, want) in [(0.0, 0u8), (1.0, 255), (0.5, 128)] {
        let px = decode_png(&ok(to_png8(&ImagePlane::filled(3, 2, 1, v), true))?);
        ensure!(px.iter().all(|&b| b == want), "{v} -> {:?}, want {want}", &px[..1]);
    }
    Ok(())
}

fn scene_motion() -> Check {
    let spec = SceneSpec {
        resolution: [40, 32],
        frames: 4,
        ..SceneSpec::default()
    };
    let seq = ok(render_sequence(&spec))?;
    ensure!(seq.iter().all(|f| f.gbuffer.motion_vector.data().iter().all(|&v| v == 0.0)), "static scene has motion");
    ensure!(seq.windows(2).all(|p| p[0].color == p[1].color), "static frames differ");

    let mut spec = presets::disocclusion_scene(64, 48, 1);
    spec.sprites[0].x[1] = 2.0;
    for f in &ok(render_sequence(&spec))?[1..] {
        let g = &f.gbuffer;
        for p in 0..g.stencil.pixel_count() {
            if g.stencil.data()[p] == 1.0 {
                ensure!(g.motion_vector.pixel_at(p) == [2.0, 0.0], "sprite mv {:?}", g.motion_vector.pixel_at(p));
            }
        }
    }
    Ok(())
}

fn dataset_layout() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut spec = presets::disocclusion_scene(40, 32, 1);
    spec.frames = 3;
    let seq = ok(render_sequence(&spec))?;
    ok(write_dataset(&seq, dir.path(), false))?;
    let dirs: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    ensure!(dirs.len() == 3, "{} frame directories", dirs.len());
    for d in &dirs {
        let n = fs::read_dir(d.path()).unwrap().count();
        ensure!(n == 11, "{} files in {}", n, d.path().display());
    }
    let back = ok(read_dataset(dir.path()))?;
    ensure!(back.manifest.frames == 3 && back.manifest.width == 40 && back.manifest.height == 32, "manifest fields");
    ensure!(back.frames.iter().zip(&seq).all(|(a, b)| a.color == b.color && a.gbuffer == b.gbuffer), "frames differ");
    Ok(())
}

fn warp_trivial() -> Check {
    let src = gradient(10, 4);
    let r = ok(backward_warp(&src, &field(10, 4, [0.0, 0.0]), 1.0))?;
    ensure!(r.color == src && r.valid_count() == 40, "zero mv not identity");
    let r = ok(backward_warp(&src, &field(10, 4, [2.0, 0.0]), 1.0))?;
    for y in 0..4 {
        ensure!(r.hole_mask.get(0, y, 0) == 0.0 && r.hole_mask.get(1, y, 0) == 0.0, "left columns not holes");
        for x in 2..10 {
            ensure!(r.color.pixel(x, y) == src.pixel(x - 2, y), "not shifted at ({x},{y})");
        }
    }
    let ones = ImagePlane::filled(10, 4, 1, 1.0);
    let f = ok(forward_warp(&src, &field(10, 4, [0.0, 0.0]), &ones, 1.0))?;
    ensure!(f.color == src && f.valid_count() == 40, "forward identity");
    let f = ok(forward_warp(&src, &field(10, 4, [3.0, 0.0]), &ones, 1.0))?;
    for y in 0..4 {
        ensure!((0..3).all(|x| f.hole_mask.get(x, y, 0) == 0.0) && f.hole_mask.get(3, y, 0) == 1.0, "3 hole columns");
    }
    let src = ImagePlane::from_vec(3, 1, 1, vec![10.0, 20.0, 30.0]).unwrap();
    let mv = ImagePlane::from_vec(3, 1, 2, vec![1.0, 0.0, 5.0, 0.0, -1.0, 0.0]).unwrap();
    let depth = ImagePlane::from_vec(3, 1, 1, vec![1.0, 1.5, 2.0]).unwrap();
    ensure!(ok(forward_warp(&src, &mv, &depth, 1.0))?.color.get(1, 0, 0) == 10.0, "nearer depth lost");
    Ok(())
}

fn warp_vs_oracle() -> Check {
    let mut rng = rng(31);
    for (w, h, scale) in [(17, 11, 1.0), (32, 24, 0.5), (9, 30, 0.25)] {
        let src = random_plane(w, h, 3, 0.0, 1.0, &mut rng);
        let mv = random_plane(w, h, 2, -6.0, 6.0, &mut rng);
        let r = ok(backward_warp(&src, &mv, scale))?;
        let (c, m) = warp_oracle(&src, &mv, scale);
        ensure!(r.hole_mask == m, "hole masks differ at {w}x{h}");
        ensure!(ok(r.color.max_abs_diff(&c))? == 0.0, "colours differ at {w}x{h}");
    }
    Ok(())
}

fn occlusion_mvs() -> Check {
    let (w, h) = (5, 5);
    let mut mv = field(w, h, [0.0, 0.0]);
    let flat = ImagePlane::filled(w, h, 1, 10.0);
    ensure!(ok(occlusion_motion_vectors(&mv, &flat, &flat, 1.0))? == mv, "no-hole field changed");
    mv.pixel_mut(3, 2).copy_from_slice(&[1.0, 1.0]);
    let mut target_depth = flat.clone();
    target_depth.set(3, 2, 0, 5.0);
    let mut source_depth = flat;
    source_depth.set(2, 2, 0, 5.0);
    let out = ok(occlusion_motion_vectors(&mv, &target_depth, &source_depth, 1.0))?;
    ensure!(out.pixel(2, 2) == [1.0, 1.0], "hole got {:?}", out.pixel(2, 2));
    Ok(())
}

fn guided_and_invalid() -> Check {
    let (w, h) = (11, 9);
    let mut rng = rng(11);
    let src = random_plane(w, h, 3, 0.0, 1.0, &mut rng);
    let g = flat_gbuffer(w, h, 0.5, 0.0);
    let zero = field(w, h, [0.0, 0.0]);
    let nearest = GuidedWarpParams {
        sigma_spatial: 0.0,
        ..GuidedWarpParams::default()
    };
    let (r, _) = ok(gbuffer_guided_warp(&src, &g, g.target_view(), &zero, 0.5, &nearest))?;
    ensure!(r.color == src, "nearest kernel is not identity");
    let wide = GuidedWarpParams {
        window: 3,
        sigma_spatial: 1e9,
        sigma_normal: 1e9,
        sigma_depth_rel: 1e9,
        sigma_albedo: 1e9,
        min_weight: 1e-4,
    };
    let (r, _) = ok(gbuffer_guided_warp(&src, &g, g.target_view(), &zero, 0.5, &wide))?;
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let (mut s, mut n) = (0.0f64, 0.0);
                for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        s += src.get(xx, yy, c) as f64;
                        n += 1.0;
                    }
                }
                ensure!((r.color.get(x, y, c) as f64 - s / n).abs() < 1e-6, "not a box filter at ({x},{y})");
            }
        }
    }
    let t = InvalidThresholds::default();
    let m = ok(detect_invalid(&ok(warp_attributes(&g, &zero, 1.0))?, g.target_view(), &t))?;
    ensure!(m.data().iter().all(|&v| v == 1.0), "consistent warp flagged");
    let m = ok(detect_invalid(&ok(warp_attributes(&g, &field(w, h, [1.0, 0.0]), 1.0))?, g.target_view(), &t))?;
    ensure!((0..h).all(|y| m.get(0, y, 0) == 0.0), "hole column not flagged");
    Ok(())
}

fn variation() -> Check {
    let c = ImagePlane::filled(4, 3, 1, 0.3);
    ensure!(ok(temporal_variation(&[c.clone(), c.clone(), c]))?.data().iter().all(|&v| v == 0.0), "constant");
    let frames: Vec<_> = (0..4).map(|i| ImagePlane::filled(2, 2, 1, (i % 2) as f32)).collect();
    ensure!(ok(temporal_variation(&frames))?.data().iter().all(|&v| v == 1.0), "alternating");
    let mut rng = rng(5);
    let stack: Vec<_> = (0..5).map(|_| random_plane(13, 7, 1, 0.0, 1.0, &mut rng)).collect();
    let t = ok(temporal_variation(&stack))?;
    for p in 0..t.pixel_count() {
        let s: f64 = (0..4).map(|i| (stack[i + 1].data()[p] as f64 - stack[i].data()[p] as f64).abs()).sum();
        ensure!((t.data()[p] as f64 - s / 4.0).abs() < 1e-7, "variation differs at {p}");
    }
    Ok(())
}

fn otsu_vs_exhaustive() -> Check {
    let mut rng = rng(8);
    let two = ImagePlane::from_vec(5, 1, 1, vec![0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
    let mix = ImagePlane::from_fn(40, 30, 1, |x, _, _| {
        let m = if x % 2 == 0 { 0.2 } else { 0.8 };
        let n: f32 = (0..12).map(|_| rng.random_range(0.0..1.0f32)).sum::<f32>() - 6.0;
        m + 0.05 * n
    });
    let mut rng2 = super::oracles::rng(9);
    let noise = random_plane(23, 19, 1, 0.0, 3.0, &mut rng2);
    for (name, plane) in [("two clusters", &two), ("bimodal", &mix), ("uniform", &noise)] {
        let t = ok(otsu_threshold(plane))?;
        let low = otsu_exhaustive(plane);
        let mask = threshold_mask(plane, t);
        for &v in plane.data() {
            ensure!((v > t) != low(v), "{name}: split disagrees at {v}");
        }
        ensure!(mask.data().iter().any(|&m| m == 1.0), "{name}: empty high class");
        if name == "bimodal" {
            ensure!(t > 0.3 && t < 0.7, "bimodal threshold {t}");
        }
    }
    ensure!(otsu_threshold(&ImagePlane::filled(4, 4, 1, 0.2)).is_err(), "constant accepted");
    let stat = ok(render_sequence(&static_scene(48, 32)))?;
    ensure!(offline_segment(&stat.iter().map(|f| f.color.clone()).collect::<Vec<_>>()).is_err(), "static scene segmented");
    Ok(())
}

fn rects_and_masks() -> Check {
    let (w, h) = (64, 64);
    let rect = BoundingRect { x: 10, y: 10, w: 20, h: 20 };
    let stencil = patchex::image::mask_from_fn(w, h, |x, y| rect.contains(x, y));
    let p = SegmentationParams { k_x: 2.0, k_y: 2.0 };
    let r = ok(expand_rect(rect, &field(w, h, [2.0, 3.0]), &stencil, &p))?.ok_or("empty")?;
    ensure!((r.w, r.h) == (24, 26), "expanded to {}x{}", r.w, r.h);
    let r = ok(expand_rect(rect, &field(w, h, [0.0, 0.0]), &stencil, &p))?.ok_or("empty")?;
    ensure!(r == rect, "zero motion changed the rect");

    let empty = ImagePlane::new(8, 6, 1);
    let r = BoundingRect { x: 1, y: 1, w: 3, h: 2 };
    let m = ok(make_masks(&empty, &[r]))?;
    ensure!(m.counts() == [0, 6, 42], "masks {:?}", m.counts());
    let m = ok(make_masks(&empty, &[BoundingRect { x: 0, y: 0, w: 8, h: 6 }]))?;
    ensure!(m.counts()[2] == 0, "far not empty");

    let samples: Vec<_> = (1..8)
        .map(|i| {
            let v = i as f64 * 0.7;
            CalibrationSample {
                mean_v: [v, 1.3 * v],
                growth: [2.0 * v, 3.0 * 1.3 * v],
            }
        })
        .collect();
    let c = ok(calibrate_k(&samples))?;
    ensure!((c.k_x - 2.0).abs() < 1e-6 && (c.k_y - 3.0).abs() < 1e-6, "k = ({}, {})", c.k_x, c.k_y);
    ensure!((c.pearson_x - 1.0).abs() < 1e-12, "r = {}", c.pearson_x);
    let flat: Vec<_> = samples
        .iter()
        .map(|s| CalibrationSample {
            mean_v: [1.0, s.mean_v[1]],
            ..*s
        })
        .collect();
    ensure!(calibrate_k(&flat).is_err(), "constant motion calibrated");
    Ok(())
}

fn gated_and_conv() -> Check {
    let mut rng = rng(1);
    let mut g = GatedConv::<f64>::new(3, 4, 1, &mut rng);
    let x = random_tensor([1, 3, 6, 6], &mut rng);
    let feature = Conv2d {
        out_ch: 4,
        weight: g.feature_weights().to_vec(),
        bias: g.conv.bias[..4].to_vec(),
        ..g.conv.clone()
    };
    let want = conv_naive(&feature, &x);
    g.gate_weights_mut().fill(0.0);
    g.gate_bias_mut().fill(20.0);
    let (y, _) = g.forward(&x);
    ensure!(y.data().iter().zip(want.data()).all(|(a, b)| (a - b).abs() < 1e-6), "saturated gate");
    g.gate_bias_mut().fill(0.0);
    let (y, _) = g.forward(&x);
    ensure!(y.data().iter().zip(want.data()).all(|(a, b)| (a - 0.5 * b).abs() < 1e-12), "half gate");

    for (stride, h, w) in [(1, 7, 9), (2, 8, 8), (2, 7, 5)] {
        let mut conv = Conv2d::<f64>::kaiming(3, 5, 3, stride, &mut rng);
        conv.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        let x = random_tensor([2, 3, h, w], &mut rng);
        let (y, _) = conv.forward(&x);
        let o = conv_naive(&conv, &x);
        ensure!(y.shape() == o.shape(), "conv shape {:?} vs {:?}", y.shape(), o.shape());
        let d = y.data().iter().zip(o.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure!(d < 1e-5, "conv differs by {d}");
    }
    Ok(())
}

fn lbp_and_input() -> Check {
    ensure!(ok(lbp_map(&ImagePlane::filled(5, 4, 1, 0.3)))?.data().iter().all(|&v| v == 1.0), "flat lbp");
    let mut spike = ImagePlane::new(3, 3, 1);
    spike.set(1, 1, 0, 1.0);
    ensure!(ok(lbp_map(&spike))?.get(1, 1, 0) == 0.0, "spike lbp");
    let mut rng = rng(12);
    let g = random_plane(16, 12, 1, 0.0, 1.0, &mut rng).map(|v| (v * 4.0).floor() / 4.0);
    let m = ok(lbp_map(&g))?;
    for y in 0..12 {
        for x in 0..16 {
            ensure!(m.get(x, y, 0) == lbp_oracle(&g, x, y) as f32 / 255.0, "lbp differs at ({x},{y})");
        }
    }
    let gb = flat_gbuffer(12, 10, 0.5, 0.2);
    let col = random_plane(12, 10, 3, 0.0, 1.0, &mut rng);
    let hole = patchex::image::mask_from_fn(12, 10, |x, _| x > 2);
    let inp = ok(input_plane(&col, &hole, gb.target_view()))?;
    ensure!(inp.channels() == 7, "{} channels", inp.channels());
    ensure!(inp.channel(3) == hole, "hole channel");
    let rgb = ok(ImagePlane::stack(&[&inp.channel(0), &inp.channel(1), &inp.channel(2)]))?;
    ensure!(rgb == col && inp.channel(4) == gb.roughness && inp.channel(5) == gb.metallic, "slicing back");
    Ok(())
}

fn network_and_loss() -> Check {
    let mut net = ok(Network::<f32>::new(Architecture::near_background(), 3))?;
    net.head.weight.fill(0.0);
    for (h, w) in [(16, 16), (32, 32), (13, 21)] {
        let y = ok(net.forward(&Tensor::from_vec([1, 7, h, w], vec![0.3; 7 * h * w]).unwrap()))?;
        ensure!(y.shape() == [1, 3, h, w] && y.data().iter().all(|&v| v == 0.0), "zero head at {h}x{w}");
    }
    let fg = ok(Network::<f32>::new(Architecture::foreground(), 0))?;
    let near = ok(Network::<f32>::new(Architecture::near_background(), 0))?;
    ensure!(fg.param_count() <= 150_000 && near.param_count() <= 60_000, "parameter budgets");

    let mut rng = rng(2);
    let p = random_tensor([2, 3, 8, 8], &mut rng);
    let t = random_tensor([2, 3, 8, 8], &mut rng);
    let m = random_tensor([2, 1, 8, 8], &mut rng).map(|v| (v > 0.0) as u8 as f64);
    let feat = FeatureExtractor::<f64>::frozen();
    let (parts, grad) = ok(loss(&p, &p, &m, &LossWeights::default(), &feat))?;
    ensure!(parts.total == 0.0 && grad.data().iter().all(|&v| v == 0.0), "self loss");
    let ones = Tensor::from_vec([2, 1, 8, 8], vec![1.0; 128]).unwrap();
    let w = LossWeights::default().without_perceptual();
    let (parts, _) = ok(loss(&p, &t, &ones, &w, &feat))?;
    let l1 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 384.0;
    ensure!((parts.total - (w.l1 + w.valid) * l1).abs() < 1e-12, "no-hole pixel loss");
    ensure!(feat.features(&p) == FeatureExtractor::<f64>::frozen().features(&p), "features not frozen");
    let f = &feat.features(&p)[1];
    let c = f.channels();
    for g in gram(f) {
        ensure!((0..c).all(|i| (0..c).all(|j| (g[i * c + j] - g[j * c + i]).abs() < 1e-12)), "gram asymmetric");
        for s in 0..5 {
            let v: Vec<f64> = (0..c).map(|i| ((i * 7 + s * 3) as f64).sin()).collect();
            let q: f64 = (0..c).map(|i| (0..c).map(|j| v[i] * g[i * c + j] * v[j]).sum::<f64>()).sum();
            ensure!(q >= -1e-12, "gram not PSD");
        }
    }
    let style = LossWeights { l1: 0.0, hole: 0.0, valid: 0.0, vgg: 0.0, style: 1.0 };
    ensure!(ok(loss(&p, &p, &m, &style, &feat))?.0.style == 0.0, "style of self");

    let mut cfg = PipelineConfig::default();
    cfg.ablation.no_perceptual_loss = true;
    let tw = cfg.effective_train().loss;
    ensure!(tw.vgg == 0.0 && tw.style == 0.0 && tw.l1 == cfg.train.loss.l1, "perceptual ablation");
    Ok(())
}

fn training_contract() -> Check {
    let mut rng = rng(4);
    let samples: Vec<TrainSample> = (0..10)
        .map(|_| TrainSample {
            input: random_tensor([1, 7, 8, 8], &mut rng).cast(),
            truth: random_tensor([1, 3, 8, 8], &mut rng).cast(),
            hole: Tensor::from_vec([1, 1, 8, 8], vec![0.0; 64]).unwrap(),
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 2,
        batch: 4,
        ..TrainConfig::default()
    };
    let run = || -> Result<(Vec<u8>, usize, usize), String> {
        let mut net = ok(Network::new(Architecture::near_background(), 5))?;
        let rep = ok(patchex::neural::train(&mut net, &samples, &cfg))?;
        Ok((checkpoint::to_bytes(&net), rep.train_size, rep.val_size))
    };
    let (a, tr, va) = run()?;
    ensure!(a == run()?.0, "training not deterministic");
    ensure!((tr, va) == (8, 2), "split {tr}/{va}");
    Ok(())
}

fn shadow_trivial() -> Check {
    let mask = patchex::image::mask_from_fn(32, 24, |x, y| (8..16).contains(&x) && (6..14).contains(&y));
    let flow = ok(farneback_flow(&mask, &mask, &FarnebackParams::default()))?;
    let mx = flow.data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    ensure!(mx < 0.1, "identical masks give flow {mx}");
    ensure!(ok(extrapolate_shadow(&mask, &field(32, 24, [0.0, 0.0]), 0.5))? == mask, "zero flow");
    let shifted = ok(extrapolate_shadow(&mask, &field(32, 24, [4.0, 0.0]), 0.5))?;
    let want = patchex::image::mask_from_fn(32, 24, |x, y| (10..18).contains(&x) && (6..14).contains(&y));
    ensure!(shifted == want, "(4,0) at 0.5 is not a 2 px shift");
    let s = gradient(6, 5);
    ensure!(ok(shadow_apply(&s, &ImagePlane::new(6, 5, 1), 0.5))? == s, "empty shadow");
    ensure!(ok(shadow_apply(&s, &ImagePlane::filled(6, 5, 1, 1.0), 0.5))? == s.scale(0.5), "full shadow");
    Ok(())
}

fn blend_checks() -> Check {
    let (w, h) = (32, 32);
    let f = ImagePlane::from_fn(w, h, 3, |x, y, c| 0.01 * (x * 7 + y * 3 + c) as f32);
    let g1 = flat_gbuffer(w, h, 1.0, 0.0);
    ensure!(ok(demodulate(&f, g1.target_view()))? == f && ok(modulate(&f, g1.target_view()))? == f, "unit response");
    let g5 = flat_gbuffer(w, h, 0.5, 0.0);
    let q = ImagePlane::filled(w, h, 3, 0.25);
    ensure!(ok(demodulate(&q, g5.target_view()))? == ImagePlane::filled(w, h, 3, 0.5), "0.25 / 0.5");
    ensure!(ok(modulate(&ImagePlane::filled(w, h, 3, 0.5), g5.target_view()))? == q, "0.5 * 0.5");

    let mut rng = rng(3);
    let fs: Vec<_> = (0..3).map(|_| random_plane(w, h, 3, 0.0, 1.0, &mut rng)).collect();
    let all_fg = RegionMasks {
        fg: ImagePlane::filled(w, h, 1, 1.0),
        near: ImagePlane::new(w, h, 1),
        far: ImagePlane::new(w, h, 1),
    };
    ensure!(ok(blend_regions([&fs[0], &fs[1], &fs[2]], &all_fg))? == fs[0], "M1 = 1");
    let pick: Vec<u32> = (0..w * h).map(|_| rng.random_range(0..3)).collect();
    let m = |k| patchex::image::mask_from_fn(w, h, |x, y| pick[(y * w + x) as usize] == k);
    let masks = RegionMasks { fg: m(0), near: m(1), far: m(2) };
    ensure!(ok(blend_regions([&fs[0], &fs[0], &fs[0]], &masks))? == fs[0], "equal regions");
    let b = ok(blend_regions([&fs[0], &fs[1], &fs[2]], &masks))?;
    ensure!(b == select_oracle([&fs[0], &fs[1], &fs[2]], [&masks.fg, &masks.near, &masks.far]), "select oracle");
    let c = ok(compose_final([&fs[0], &fs[1], &fs[2]], &masks, None, g5.target_view()))?;
    ensure!(c == ok(modulate(&b, g5.target_view()))?, "empty shadow composition");
    Ok(())
}

fn metric_checks() -> Check {
    let mut rng = rng(6);
    let x = random_plane(16, 16, 3, 0.0, 1.0, &mut rng);
    ensure!(ok(psnr(&x, &x, 1.0))? == f64::INFINITY, "psnr of self");
    let p = ok(psnr(&ImagePlane::new(4, 4, 1), &ImagePlane::filled(4, 4, 1, 1.0), 1.0))?;
    ensure!(p.abs() < 1e-12, "MSE = MAX^2 gives {p}");
    let p = ok(psnr(&ImagePlane::filled(4, 4, 1, 0.5), &ImagePlane::filled(4, 4, 1, 0.6), 1.0))?;
    ensure!((p - 20.0).abs() < 1e-4, "0.1 error gives {p}");
    ensure!((ok(ssim(&x, &x))? - 1.0).abs() < 1e-9, "ssim of self");

    ensure!(Stage::ALL.len() == 5, "stage count");
    let mut t = StageTimer::new();
    for s in Stage::ALL {
        t.time(s, || std::hint::black_box((0..20_000).sum::<u64>()));
    }
    let times = t.finish();
    ensure!(times.ms.iter().sum::<f64>() <= times.total_ms * 1.05, "stages exceed total");
    ensure!(summarize_stages(&vec![StageTimes::default(); 4]).is_err(), "4 runs accepted");

    let pts: Vec<(f64, f64)> = [1.0, 2.0, 5.0, 10.0, 40.0].iter().map(|&x| (x, 3.0 * f64::powf(x, 1.4))).collect();
    let fit = ok(fit_power_law(&pts))?;
    ensure!((fit.a - 3.0).abs() < 1e-6 && (fit.b - 1.4).abs() < 1e-6 && (fit.r2 - 1.0).abs() < 1e-9, "power law");
    let lin: Vec<(f64, f64)> = [1.0, 3.0, 9.0].iter().map(|&x| (x, 5.0 * x)).collect();
    ensure!((ok(fit_power_law(&lin))?.b - 1.0).abs() < 1e-6, "linear fit");
    ensure!(fit_power_law(&pts[..2]).is_err(), "two points accepted");
    Ok(())
}

fn latency_checks() -> Check {
    let s = TimingScenario::from_refresh_hz(90.0, vec![12.0, 15.0, 20.0], 2.0, 2.0);
    let e = ok(presentation_latency(&s, Mode::Extrap))?;
    ensure!(e.iter().all(|f| f.latency_ms == 0.0), "extrapolation latency");
    ensure!(jnd_report(&[0.0; 4], 3.0) == 0.0, "extrap JND");
    ensure!(jnd_report(&[12.0, 20.0], f64::INFINITY) == 0.0, "infinite threshold");
    let d = s.refresh_ms;
    let edge = TimingScenario { render_ms: vec![2.0 * d - 2.0 + 1e-6], ..s.clone() };
    ensure!(!ok(presentation_latency(&edge, Mode::Interp))?[0].feasible, "boundary frame feasible");
    Ok(())
}

fn pipeline_trivial() -> Check {
    let seq = ok(render_sequence(&static_scene(64, 48)))?;
    let models = ok(Models::fresh(1))?;
    let cfg = PipelineConfig::default();
    for t in target_indices(seq.len()) {
        let hist = ok(History::from_sequence(&seq, t))?;
        let out = ok(extrapolate_frame(&hist, &models, &cfg))?;
        let d = ok(out.color.max_abs_diff(&seq[t].color))?;
        ensure!(d <= 1e-3, "static frame {t} off by {d}");
    }
    let seq = ok(render_sequence(&presets::disocclusion_scene(64, 48, 4)))?;
    let hist = ok(History::from_sequence(&seq, 5))?;
    let mut cfg = PipelineConfig::default();
    cfg.ablation.no_foveated = true;
    let out = ok(extrapolate_frame(&hist, &models, &cfg))?;
    ensure!(out.masks.counts() == [0, 64 * 48, 0], "no-foveated masks {:?}", out.masks.counts());
    cfg.ablation = Ablation {
        no_foveated: true,
        no_shadow_partition: true,
        no_perceptual_loss: true,
    };
    let out = ok(extrapolate_frame(&hist, &models, &cfg))?;
    ensure!(out.shadow.is_none() && out.color.is_finite(), "all ablations");
    Ok(())
}

/// Named checks of criterion 1.
pub fn exactness_checks() -> Vec<(&'static str, fn() -> Check)> {
    vec![
        ("image io", image_io),
        ("png quantization", png_quantization),
        ("scene motion", scene_motion),
        ("dataset layout", dataset_layout),
        ("warp trivial", warp_trivial),
        ("warp vs double-loop oracle", warp_vs_oracle),
        ("occlusion motion vectors", occlusion_mvs),
        ("guided warp and invalid detection", guided_and_invalid),
        ("temporal variation", variation),
        ("otsu vs exhaustive search", otsu_vs_exhaustive),
        ("rects, masks, calibration", rects_and_masks),
        ("gated conv and conv vs naive oracle", gated_and_conv),
        ("lbp vs bitwise oracle and input", lbp_and_input),
        ("network and loss", network_and_loss),
        ("training contract", training_contract),
        ("shadow", shadow_trivial),
        ("blend vs per-pixel select", blend_checks),
        ("metrics", metric_checks),
        ("latency", latency_checks),
        ("pipeline", pipeline_trivial),
    ]
}

pub fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let checks = exactness_checks();
    let failed: Vec<String> = checks
        .iter()
        .filter_map(|(name, f)| f().err().map(|e| format!("{name}: {e}")))
        .collect();
    let secs = t0.elapsed().as_secs_f64();
    Outcome::of(
        failed.is_empty() && secs < 120.0,
        format!("{}/{} checks in {secs:.1}s {}", checks.len() - failed.len(), checks.len(), failed.join("; ")),
    )
}

// ---------------------------------------------------------------- criterion 2

/// Every parameter of a ~1.8k-parameter network against central
/// differences of the full loss, f64, eps = 1e-3. Returns (count, worst
/// relative error).
pub fn gradient_check() -> (usize, usize, f64) {
    let arch = Architecture {
        in_ch: 7,
        out_ch: 3,
        widths: vec![2, 3],
        bottleneck: true,
    };
    let net = Network::<f64>::new(arch, 6).unwrap();
    let mut rng = rng(106);
    let x = random_tensor([1, 7, 5, 5], &mut rng);
    let truth = random_tensor([1, 3, 5, 5], &mut rng);
    let hole = random_tensor([1, 1, 5, 5], &mut rng).map(|v| (v > 0.0) as u8 as f64);
    let w = LossWeights::default();
    let feat = FeatureExtractor::<f64>::frozen();
    let (pred, tape) = net.forward_tape(&x).unwrap();
    let (_, dpred) = loss(&pred, &truth, &hole, &w, &feat).unwrap();
    let grads = net.backward(&tape, &dpred);
    let eps = 1e-3;
    let mut checked = 0;
    let mut worst = 0.0f64;
    for (li, g) in grads.iter().enumerate() {
        for (bias, analytic) in [(false, &g.weight), (true, &g.bias)] {
            for (i, &an) in analytic.iter().enumerate() {
                let eval = |d: f64| {
                    let mut n = net.clone();
                    let conv = n.convs_mut().into_iter().nth(li).unwrap();
                    if bias {
                        conv.bias[i] += d;
                    } else {
                        conv.weight[i] += d;
                    }
                    loss(&n.forward(&x).unwrap(), &truth, &hole, &w, &feat).unwrap().0.total
                };
                let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
                worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-8));
                checked += 1;
            }
        }
    }
    (net.param_count(), checked, worst)
}

pub fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let (params, checked, worst) = gradient_check();
    let secs = t0.elapsed().as_secs_f64();
    Outcome::of(
        params <= 2000 && checked == params && worst < 1e-4 && secs < 60.0,
        format!("{checked}/{params} parameters, worst relative error {worst:.2e}, {secs:.1}s"),
    )
}

// ---------------------------------------------------------------- criterion 3

pub fn criterion_3() -> Outcome {
    let run = || -> Result<String, String> {
        let mut worst = 0.0f32;
        for i in 0..5 {
            let seq = ok(render_sequence(&presets::corpus_scene(i, 96, 64)))?;
            for f in &seq {
                let g = f.gbuffer.target_view();
                let (lo, _) = g.material_response().min_max();
                ensure!(lo > 1e-3, "response {lo} too small");
                let back = ok(modulate(&ok(demodulate(&f.color, g))?, g))?;
                worst = worst.max(ok(back.max_abs_diff(&f.color))?);
            }
        }
        ensure!(worst <= 1e-5, "demodulate/modulate off by {worst:e}");

        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut rng = rng(77);
        let big = random_plane(1920, 1080, 4, -10.0, 10.0, &mut rng);
        let (a, b) = (dir.path().join("a.pfex"), dir.path().join("b.pfex"));
        ok(write_plane(&a, &big))?;
        let back = ok(read_plane(&a))?;
        ok(write_plane(&b, &back))?;
        ensure!(back == big, "PFEX plane changed");
        ensure!(fs::read(&a).unwrap() == fs::read(&b).unwrap(), "PFEX bytes changed");

        for arch in [Architecture::foreground(), Architecture::near_background()] {
            let net = ok(Network::<f32>::new(arch, 21))?;
            let (a, b) = (dir.path().join("a.pxnn"), dir.path().join("b.pxnn"));
            ok(checkpoint::save(&net, &a))?;
            let back = ok(checkpoint::load(&a))?;
            ok(checkpoint::save(&back, &b))?;
            ensure!(back == net, "checkpoint network changed");
            ensure!(fs::read(&a).unwrap() == fs::read(&b).unwrap(), "checkpoint bytes changed");
        }
        Ok(format!("demod/mod max error {worst:.1e}; 1920x1080x4 PFEX and both checkpoints bit-exact"))
    };
    match run() {
        Ok(d) => Outcome::of(true, d),
        Err(e) => Outcome::of(false, e),
    }
}

// ---------------------------------------------------------------- criterion 4

/// Max error of warping frame `i` onto frame `i + 2` (one full interval)
/// with the true vectors on valid pixels, in a scene without shadows.
pub fn exact_warp_error() -> Result<(f32, usize), String> {
    let mut spec = presets::disocclusion_scene(96, 64, 1);
    spec.light.shadow_scale = 1e6;
    let seq = ok(render_sequence(&spec))?;
    let (mut worst, mut checked) = (0.0f32, 0);
    for i in 0..seq.len() - 2 {
        let (src, tgt) = (&seq[i], &seq[i + 2]);
        let mv = &tgt.gbuffer.motion_vector;
        let r = ok(backward_warp(&src.color, mv, 1.0))?;
        let attrs = ok(warp_attributes(&src.gbuffer, mv, 1.0))?;
        let ok_px = ok(mask_and(&r.hole_mask, &ok(detect_invalid(&attrs, tgt.gbuffer.target_view(), &InvalidThresholds::default()))?))?;
        for p in 0..ok_px.pixel_count() {
            if ok_px.data()[p] == 1.0 {
                checked += 1;
                for k in 0..3 {
                    worst = worst.max((r.color.data()[p * 3 + k] - tgt.color.data()[p * 3 + k]).abs());
                }
            }
        }
    }
    Ok((worst, checked))
}

/// Ghost region: stencils of `F_t` and the target, dilated by 4 px, minus
/// the target's stencil. Returns (plain, guided) mean L1 per target frame.
pub fn ghost_errors() -> Result<Vec<(f64, f64)>, String> {
    let seq = ok(render_sequence(&presets::disocclusion_scene(96, 64, 1)))?;
    let mut out = Vec::new();
    for t in target_indices(seq.len()) {
        let hist = ok(History::from_sequence(&seq, t))?;
        let truth = &seq[t];
        let both = ok(hist.cur.gbuffer.stencil.zip_map(&truth.gbuffer.stencil, f32::max))?;
        let ghost = ok(dilate(&both, 4).zip_map(&truth.gbuffer.stencil, |d, s| (d == 1.0 && s == 0.0) as u8 as f32))?;
        let mv = hist.target.motion_vector();
        let plain = ok(backward_warp_clamped(&hist.cur.color, mv, 0.5))?;
        let (guided, _) = ok(gbuffer_guided_warp(
            &hist.cur.color,
            &hist.cur.gbuffer,
            hist.target,
            mv,
            0.5,
            &GuidedWarpParams::default(),
        ))?;
        out.push((masked_l1(&plain, &truth.color, &ghost), masked_l1(&guided.color, &truth.color, &ghost)));
    }
    Ok(out)
}

pub fn criterion_4() -> Outcome {
    let run = || -> Result<(bool, String), String> {
        let (worst, n) = exact_warp_error()?;
        let ghosts = ghost_errors()?;
        let lower = ghosts.iter().all(|(p, g)| g < p);
        let desc: Vec<String> = ghosts.iter().map(|(p, g)| format!("{g:.4}<{p:.4}")).collect();
        Ok((
            worst <= 1e-4 && n > 0 && lower,
            format!("exact-mv max error {worst:.1e} on {n} px; ghost L1 guided<plain per frame: {}", desc.join(", ")),
        ))
    };
    match run() {
        Ok((p, d)) => Outcome::of(p, d),
        Err(e) => Outcome::of(false, e),
    }
}

// ---------------------------------------------------------------- criterion 5

/// Per corpus scene: (high-variation pixels, covered by object footprints,
/// covered by stencils dilated 3 px). An object's footprint is its stencil
/// plus its cast shadow, the area its movement changes.
pub fn corpus_coverage() -> Result<Vec<(usize, usize, usize)>, String> {
    let mut out = Vec::new();
    for i in 0..5 {
        let seq = ok(render_sequence(&presets::corpus_scene(i, 128, 96)))?;
        let colors: Vec<ImagePlane> = seq.iter().map(|f| f.color.clone()).collect();
        let off = ok(offline_segment(&colors))?;
        let high = off.high_mask.sum() as usize;
        let foot: Vec<ImagePlane> = seq
            .iter()
            .map(|f| f.gbuffer.stencil.zip_map(&f.gbuffer.shadow_mask, |s, d| (s == 1.0 || d > 0.0) as u8 as f32).unwrap())
            .collect();
        let dil: Vec<ImagePlane> = seq.iter().map(|f| dilate(&f.gbuffer.stencil, 3)).collect();
        let cov = |planes: &[ImagePlane]| -> Result<usize, String> {
            let refs: Vec<&ImagePlane> = planes.iter().collect();
            Ok((ok(dynamic_coverage(&off.high_mask, &refs))? * high as f64).round() as usize)
        };
        out.push((high, cov(&foot)?, cov(&dil)?));
    }
    Ok(out)
}

pub fn criterion_5() -> Outcome {
    let run = || -> Result<(bool, String), String> {
        let cov = corpus_coverage()?;
        let total: usize = cov.iter().map(|c| c.0).sum();
        let foot = cov.iter().map(|c| c.1).sum::<usize>() as f64 / total as f64;
        let dil = cov.iter().map(|c| c.2).sum::<usize>() as f64 / total as f64;
        let samples: Vec<_> = (1..10)
            .map(|i| {
                let v = 0.5 * i as f64;
                CalibrationSample { mean_v: [v, 0.3 * i as f64], growth: [2.0 * v, 2.0 * 0.3 * i as f64] }
            })
            .collect();
        let c = ok(calibrate_k(&samples))?;
        let k_ok = (c.k_x - 2.0).abs() < 1e-6 && (c.k_y - 2.0).abs() < 1e-6;
        let r_ok = (c.pearson_x - 1.0).abs() < 1e-12 && (c.pearson_y - 1.0).abs() < 1e-12;
        Ok((
            foot >= 0.9 && k_ok && r_ok,
            format!(
                "coverage {:.1}% of {total} high-variation px (stencils dilated 3 px: {:.1}%); k = ({:.7}, {:.7}), r = ({}, {})",
                100.0 * foot,
                100.0 * dil,
                c.k_x,
                c.k_y,
                c.pearson_x,
                c.pearson_y
            ),
        ))
    };
    match run() {
        Ok((p, d)) => Outcome::of(p, d),
        Err(e) => Outcome::of(false, e),
    }
}

// ---------------------------------------------------------------- criterion 6

pub const TRAIN_SCENES: u64 = 10;
pub const HELD_OUT_SCENES: u64 = 4;

pub fn corpus(seeds: std::ops::Range<u64>) -> Vec<Vec<RenderedFrame>> {
    seeds.map(|s| render_sequence(&presets::random_scene(s, 128, 96, 9)).unwrap()).collect()
}

/// Trains on random scenes with a wall-time budget per network, then scores
/// held-out scenes. Returns (summary, training seconds).
pub fn train_and_evaluate(budget_secs: f64) -> patchex::Result<(patchex::pipeline::EvalSummary, f64)> {
    let mut cfg = PipelineConfig::default();
    cfg.train.crop = 32;
    cfg.train.batch = 8;
    cfg.train.epochs = 400;
    cfg.train.time_budget_secs = Some(budget_secs);
    cfg.crops_per_frame = 6;
    let t0 = Instant::now();
    let trained = train_models(&corpus(0..TRAIN_SCENES), &cfg)?;
    let secs = t0.elapsed().as_secs_f64();
    let mut rows = Vec::new();
    for seq in corpus(1000..1000 + HELD_OUT_SCENES) {
        rows.extend(evaluate_sequence(&seq, &trained.models, &cfg)?);
    }
    Ok((summarize(&rows), secs))
}

pub fn criterion_6(budget_secs: f64) -> Outcome {
    match train_and_evaluate(budget_secs) {
        Ok((s, secs)) => {
            let shadow = s.mean_shadow_iou.unwrap_or(0.0);
            Outcome::of(
                s.psnr_gain_db() >= 0.5 && shadow > s.mean_hold_iou && secs <= 1800.0,
                format!(
                    "trained {secs:.0}s; held-out PSNR {:.2} dB vs warp-only {:.2} dB ({:+.2} dB) over {} frames; shadow IoU {shadow:.3} vs hold-last {:.3}",
                    s.mean_psnr_db,
                    s.mean_baseline_psnr_db,
                    s.psnr_gain_db(),
                    s.frames,
                    s.mean_hold_iou
                ),
            )
        }
        Err(e) => Outcome::of(false, e.to_string()),
    }
}

// ---------------------------------------------------------------- criterion 7

pub const BENCH_RESOLUTIONS: [(u32, u32); 5] = [(160, 90), (320, 180), (480, 270), (640, 360), (800, 450)];

pub fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let models = Models::fresh(0).unwrap();
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match run_bench(&BENCH_RESOLUTIONS, &models, &PipelineConfig::default(), 5, dir.path()) {
        Ok(rep) => {
            let b = rep.fit.map(|f| f.b).unwrap_or(f64::NAN);
            let r360 = rep.rows.iter().find(|r| r.height == 360).expect("360p row");
            let ratio = r360.patch_parallel_ms / r360.whole_frame_ms;
            Outcome::of(
                b > 1.05 && ratio < 0.9,
                format!(
                    "b = {b:.3} over {} resolutions; 360p patches parallel {:.2} ms vs whole frame {:.1} ms (ratio {ratio:.4}); host has {cores} core(s)",
                    rep.rows.len(),
                    r360.patch_parallel_ms,
                    r360.whole_frame_ms
                ),
            )
        }
        Err(e) => Outcome::of(false, e.to_string()),
    }
}

// ---------------------------------------------------------------- criterion 8

pub fn criterion_8() -> Outcome {
    let d = 1000.0 / 90.0;
    let mut rng = rng(90);
    let mut render: Vec<f64> = (0..200).map(|_| rng.random_range(d + 1e-9..2.0 * d - 2.0)).collect();
    render.extend([d + 1e-9, 2.0 * d - 2.0]);
    let s = TimingScenario::from_refresh_hz(90.0, render.clone(), 2.0, 2.0);
    let run = || -> patchex::Result<(bool, String)> {
        let i = presentation_latency(&s, Mode::Interp)?;
        let e = presentation_latency(&s, Mode::Extrap)?;
        let in_range = i.iter().all(|f| f.latency_ms >= d && f.latency_ms <= 2.0 * d);
        let exact = i.iter().zip(&render).all(|(f, r)| f.latency_ms == 3.0 * s.refresh_ms - r);
        let zero = e.iter().all(|f| f.latency_ms == 0.0);
        let il: Vec<f64> = i.iter().map(|f| f.latency_ms).collect();
        let jnd = jnd_report(&il, 5.0);
        let (lo, hi) = il.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        Ok((
            in_range && exact && zero && jnd == 1.0 && (s.refresh_ms - 11.11).abs() < 0.01,
            format!(
                "D = {:.2} ms; interpolation P in [{lo:.2}, {hi:.2}] ms over {} frames; extrapolation P = 0: {zero}; JND(5 ms) violation {:.0}%",
                s.refresh_ms,
                il.len(),
                100.0 * jnd
            ),
        ))
    };
    match run() {
        Ok((p, d)) => Outcome::of(p, d),
        Err(e) => Outcome::of(false, e.to_string()),
    }
}

// ---------------------------------------------------------------- criterion 9

fn patchex_cli(bin: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin).args(args).env("RUST_LOG", "warn").output().map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    Ok(())
}

fn frame_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir.join("frames"))
        .map(|it| {
            it.filter_map(|e| e.ok())
                .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

/// Renders a dataset, writes seeded checkpoints and runs `extrapolate`
/// twice with different thread counts. Returns (files compared, identical).
pub fn determinism(bin: &Path) -> Result<(usize, bool), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| dir.path().join(s).display().to_string();
    patchex_cli(bin, &["--run-dir", &p("data"), "render-dataset", "--scene", "random:1003", "--width", "96", "--height", "64"])?;
    let models = ok(Models::fresh(42))?;
    fs::create_dir_all(p("ckpt")).unwrap();
    ok(models.save(dir.path().join("ckpt/fg.pxnn"), dir.path().join("ckpt/near.pxnn")))?;
    let data = p("data/dataset");
    for (run, threads) in [("a", "1"), ("b", "3")] {
        patchex_cli(
            bin,
            &["--run-dir", &p(run), "--seed", "42", "--threads", threads, "extrapolate", "--dataset", &data, "--checkpoints", &p("ckpt")],
        )?;
    }
    let (a, b) = (frame_files(&dir.path().join("a")), frame_files(&dir.path().join("b")));
    Ok((a.len(), !a.is_empty() && a == b))
}

pub fn criterion_9(bin: &Path) -> Outcome {
    match determinism(bin) {
        Ok((n, same)) => Outcome::of(same, format!("{n} frame files, byte-identical at 1 and 3 threads: {same}")),
        Err(e) => Outcome::of(false, e),
    }
}
