//! Image quality metrics, stage timing and power-law fits.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// `10 log10(max^2 / MSE)` over all samples. Identical inputs give `+inf`.
pub fn psnr(x: &ImagePlane, y: &ImagePlane, max_val: f64) -> Result<f64> {
    x.check_same_size(y, "psnr")?;
    if x.channels() != y.channels() {
        return Err(Error::Shape("psnr inputs differ in channel count".into()));
    }
    let n = x.data().len() as f64;
    let mse = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum::<f64>()
        / n;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_val * max_val / mse).log10()
    })
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_L: f64 = 1.0;

fn gauss_1d(n: usize) -> Vec<f64> {
    // centred slice of the 11-tap window, renormalised
    let r = (SSIM_WINDOW / 2) as f64;
    let off = (SSIM_WINDOW - n) as f64 / 2.0;
    let k: Vec<f64> = (0..n)
        .map(|i| {
            let d = i as f64 + off - r;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over every fully contained 11x11 Gaussian window (sigma 1.5),
/// averaged over channels. Images smaller than the window use one window
/// cut down to the image.
pub fn ssim(x: &ImagePlane, y: &ImagePlane) -> Result<f64> {
    x.check_same_size(y, "ssim")?;
    if x.channels() != y.channels() {
        return Err(Error::Shape("ssim inputs differ in channel count".into()));
    }
    let (w, h, c) = (x.width() as usize, x.height() as usize, x.channels() as usize);
    let (ww, wh) = (SSIM_WINDOW.min(w), SSIM_WINDOW.min(h));
    let (kx, ky) = (gauss_1d(ww), gauss_1d(wh));
    let c1 = (0.01 * SSIM_L).powi(2);
    let c2 = (0.03 * SSIM_L).powi(2);
    let (xd, yd) = (x.data(), y.data());
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        for oy in 0..=h - wh {
            for ox in 0..=w - ww {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (j, &gy) in ky.iter().enumerate() {
                    for (i, &gx) in kx.iter().enumerate() {
                        let g = gx * gy;
                        let p = ((oy + j) * w + ox + i) * c + ch;
                        let (a, b) = (xd[p] as f64, yd[p] as f64);
                        mx += g * a;
                        my += g * b;
                        sxx += g * a * a;
                        syy += g * b * b;
                        sxy += g * a * b;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cov = sxy - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

/// Pipeline stages reported by the timing table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    GbufferIo,
    Warping,
    Preprocessing,
    Inference,
    Blending,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::GbufferIo,
        Stage::Warping,
        Stage::Preprocessing,
        Stage::Inference,
        Stage::Blending,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GbufferIo => "gbuffer_io",
            Stage::Warping => "warping",
            Stage::Preprocessing => "preprocessing",
            Stage::Inference => "inference",
            Stage::Blending => "blending",
        }
    }
}

/// Wall time of one pipeline run, per stage, in milliseconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub ms: [f64; 5],
    pub total_ms: f64,
}

impl StageTimes {
    pub fn get(&self, s: Stage) -> f64 {
        self.ms[s as usize]
    }

    /// Running sum of stage times in pipeline order.
    pub fn cumulative(&self) -> [f64; 5] {
        let mut acc = 0.0;
        self.ms.map(|v| {
            acc += v;
            acc
        })
    }
}

/// Accumulates stage times for a single run.
pub struct StageTimer {
    start: Instant,
    times: StageTimes,
}

impl Default for StageTimer {
    fn default() -> Self {
        Self::new()
    }
}

impl StageTimer {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            times: StageTimes::default(),
        }
    }

    pub fn time<R>(&mut self, stage: Stage, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        self.times.ms[stage as usize] += t.elapsed().as_secs_f64() * 1e3;
        r
    }

    pub fn finish(mut self) -> StageTimes {
        self.times.total_ms = self.start.elapsed().as_secs_f64() * 1e3;
        self.times
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub median_ms: f64,
    pub p90_ms: f64,
}

/// Nearest-rank percentile of an unsorted sample, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Minimum iterations behind a reported timing table.
pub const MIN_TIMING_RUNS: usize = 5;

/// Median and p90 per stage, plus a `total` row.
pub fn summarize_stages(runs: &[StageTimes]) -> Result<Vec<StageRow>> {
    if runs.len() < MIN_TIMING_RUNS {
        return Err(Error::InvalidArgument(format!(
            "timing needs at least {MIN_TIMING_RUNS} runs, got {}",
            runs.len()
        )));
    }
    let mut rows: Vec<StageRow> = Stage::ALL
        .iter()
        .map(|&s| {
            let v: Vec<f64> = runs.iter().map(|r| r.get(s)).collect();
            StageRow {
                stage: s.name().to_string(),
                median_ms: median(&v),
                p90_ms: percentile(&v, 0.9),
            }
        })
        .collect();
    let totals: Vec<f64> = runs.iter().map(|r| r.total_ms).collect();
    rows.push(StageRow {
        stage: "total".into(),
        median_ms: median(&totals),
        p90_ms: percentile(&totals, 0.9),
    });
    Ok(rows)
}

pub fn write_stage_csv(rows: &[StageRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned text table of a stage summary.
pub fn stage_table(rows: &[StageRow]) -> String {
    let mut s = format!("{:<14} {:>10} {:>10}\n", "stage", "median_ms", "p90_ms");
    for r in rows {
        s += &format!("{:<14} {:>10.3} {:>10.3}\n", r.stage, r.median_ms, r.p90_ms);
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameQuality {
    pub frame_index: usize,
    pub psnr_db: f64,
    pub ssim: f64,
}

pub fn write_quality_csv(rows: &[FrameQuality], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub a: f64,
    pub b: f64,
    pub r2: f64,
}

impl PowerLaw {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * x.powf(self.b)
    }
}

/// Least-squares fit of `y = a x^b` on log-log axes.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLaw> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("power-law fit needs 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidArgument("power-law fit needs positive finite points".into()));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("power-law fit needs distinct x values".into()));
    }
    let b = sxy / sxx;
    let a = (my - b * mx).exp();
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - (my + b * (x - mx))).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(PowerLaw { a, b, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: u32, h: u32, c: u32, seed: u64) -> ImagePlane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImagePlane::from_fn(w, h, c, |_, _, _| rng.random())
    }

    #[test]
    fn psnr_reference_values() {
        let x = noise(8, 6, 3, 1);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        let zero = ImagePlane::new(4, 4, 1);
        let one = ImagePlane::filled(4, 4, 1, 1.0);
        assert!(psnr(&zero, &one, 1.0).unwrap().abs() < 1e-12);
        let y = ImagePlane::filled(4, 4, 1, 0.5);
        let z = ImagePlane::filled(4, 4, 1, 0.6);
        assert!((psnr(&y, &z, 1.0).unwrap() - 20.0).abs() < 1e-5);
    }

    #[test]
    fn ssim_reference_values() {
        let x = noise(24, 20, 3, 2);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        let checker = ImagePlane::from_fn(16, 16, 1, |x, y, _| ((x + y) % 2) as f32);
        let inv = checker.map(|v| 1.0 - v);
        assert!(ssim(&checker, &inv).unwrap() < 0.0);
        for (a, b) in [(0.2f32, 0.7f32), (0.5, 0.5), (0.0, 1.0)] {
            let pa = ImagePlane::filled(8, 8, 1, a);
            let pb = ImagePlane::filled(8, 8, 1, b);
            let (a, b) = (a as f64, b as f64);
            let c1 = 1e-4;
            let closed = (2.0 * a * b + c1) / (a * a + b * b + c1);
            assert!((ssim(&pa, &pb).unwrap() - closed).abs() < 1e-9);
        }
    }

    #[test]
    fn power_law_reference_fits() {
        let xs = [100.0, 400.0, 1600.0, 6400.0, 25600.0];
        let p = fit_power_law(&xs.map(|x| (x, 3.0 * f64::powf(x, 1.4)))).unwrap();
        assert!((p.a - 3.0).abs() < 1e-6 && (p.b - 1.4).abs() < 1e-6 && (p.r2 - 1.0).abs() < 1e-12);
        let p = fit_power_law(&xs.map(|x| (x, 5.0 * x))).unwrap();
        assert!((p.b - 1.0).abs() < 1e-6);
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn stage_summary() {
        let runs: Vec<StageTimes> = (0..7)
            .map(|i| StageTimes {
                ms: [1.0, 2.0, 3.0, 4.0 + i as f64, 5.0],
                total_ms: 16.0 + i as f64,
            })
            .collect();
        let rows = summarize_stages(&runs).unwrap();
        assert_eq!(rows.len(), Stage::ALL.len() + 1);
        assert_eq!(rows[3].median_ms, 7.0);
        assert_eq!(rows[3].p90_ms, 10.0);
        assert!(summarize_stages(&runs[..4]).is_err());
        let c = runs[0].cumulative();
        assert!(c.windows(2).all(|w| w[0] <= w[1]));
        let mut buf = Vec::new();
        write_stage_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("stage,median_ms,p90_ms\ngbuffer_io,1.0,1.0\n"), "{text}");
    }

    #[test]
    fn timer_accounts_within_total() {
        let mut t = StageTimer::new();
        for s in Stage::ALL {
            t.time(s, || std::thread::sleep(std::time::Duration::from_millis(2)));
        }
        let r = t.finish();
        assert!(r.ms.iter().sum::<f64>() <= r.total_ms * 1.05);
    }

    #[test]
    fn quality_csv_header() {
        let mut buf = Vec::new();
        write_quality_csv(
            &[FrameQuality {
                frame_index: 3,
                psnr_db: 31.5,
                ssim: 0.9,
            }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "frame_index,psnr_db,ssim\n3,31.5,0.9\n");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn metrics_are_symmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
            let (x, y) = (noise(13, 12, 3, s1), noise(13, 12, 3, s2));
            prop_assert_eq!(psnr(&x, &y, 1.0).unwrap(), psnr(&y, &x, 1.0).unwrap());
            prop_assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() < 1e-12);
            let v = ssim(&x, &y).unwrap();
            prop_assert!((-1.0..=1.0).contains(&v));
        }

        #[test]
        fn exponent_is_scale_invariant(c in 0.01f64..100.0, b in 0.5f64..2.0) {
            let pts: Vec<(f64, f64)> = [10.0, 30.0, 90.0, 270.0].iter().map(|&x| (x, 2.0 * f64::powf(x, b) * (1.0 + 0.01 * x.sin()))).collect();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (c * x, y)).collect();
            let (p, q) = (fit_power_law(&pts).unwrap(), fit_power_law(&scaled).unwrap());
            prop_assert!((p.b - q.b).abs() < 1e-9);
        }
    }
}
