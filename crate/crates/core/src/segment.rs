//! Foveated segmentation into a foreground, a near background band around
//! moving objects, and the far background.
//!
//! Offline, per-pixel temporal variation is thresholded with Otsu's method and
//! boxed; the box growth is regressed against mean motion to calibrate the
//! scaling factors used by the real-time expansion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_shape, Error, Result};
use crate::image::{mask_from_fn, ImagePlane};
use crate::scene::RenderedFrame;

#[derive(Clone, Debug, PartialEq)]
pub struct RegionMasks {
    pub fg: ImagePlane,
    pub near: ImagePlane,
    pub far: ImagePlane,
}

impl RegionMasks {
    pub fn as_array(&self) -> [&ImagePlane; 3] {
        [&self.fg, &self.near, &self.far]
    }

    pub fn counts(&self) -> [usize; 3] {
        self.as_array().map(|m| m.data().iter().filter(|&&v| v == 1.0).count())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    pub k_x: f64,
    pub k_y: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self { k_x: 2.0, k_y: 2.0 }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_x > 0.0 && self.k_y > 0.0 && self.k_x.is_finite() && self.k_y.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scaling factors must be positive, got ({}, {})",
                self.k_x, self.k_y
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingRect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn union(&self, o: &BoundingRect) -> BoundingRect {
        let (x0, y0) = (self.x.min(o.x), self.y.min(o.y));
        let x1 = (self.x + self.w).max(o.x + o.w);
        let y1 = (self.y + self.h).max(o.y + o.h);
        BoundingRect { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }
}

impl std::fmt::Display for BoundingRect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}x{})", self.x, self.y, self.w, self.h)
    }
}

/// Intensity used for variation analysis: 1-channel planes pass through,
/// colour planes are converted to luma.
pub fn intensity(plane: &ImagePlane) -> Result<ImagePlane> {
    if plane.channels() == 1 {
        Ok(plane.clone())
    } else {
        plane.luma()
    }
}

/// Mean absolute frame-to-frame change per pixel, `sum |I(t+1) - I(t)| / (N - 1)`.
pub fn temporal_variation(frames: &[ImagePlane]) -> Result<ImagePlane> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "temporal variation needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let first = &frames[0];
    first.check_channels(1, "intensity frame")?;
    for f in frames {
        ensure_shape!(first.same_shape(f), "intensity frames differ in shape");
    }
    let n = (frames.len() - 1) as f64;
    let data = (0..first.pixel_count())
        .into_par_iter()
        .map(|p| {
            let s: f64 = frames
                .windows(2)
                .map(|w| (w[1].data()[p] as f64 - w[0].data()[p] as f64).abs())
                .sum();
            (s / n) as f32
        })
        .collect();
    ImagePlane::from_vec(first.width(), first.height(), 1, data)
}

pub const OTSU_BINS: usize = 256;

/// Otsu threshold over a 256-bin histogram spanning the plane's value range.
///
/// Returns the upper edge of the last bin of the low class; values strictly
/// above it form the high class. Ties go to the lower threshold.
pub fn otsu_threshold(plane: &ImagePlane) -> Result<f32> {
    let (lo, hi) = plane.min_max();
    if !(hi > lo) {
        return Err(Error::Degenerate(
            "Otsu threshold needs at least two distinct values".into(),
        ));
    }
    let width = (hi - lo) as f64 / OTSU_BINS as f64;
    let hist = histogram(plane.data(), lo, width);
    let (t, _) = best_split(&hist);
    Ok((lo as f64 + (t + 1) as f64 * width) as f32)
}

fn bin_of(v: f32, lo: f32, width: f64) -> usize {
    (((v - lo) as f64 / width) as usize).min(OTSU_BINS - 1)
}

fn histogram(data: &[f32], lo: f32, width: f64) -> [u64; OTSU_BINS] {
    let mut hist = [0u64; OTSU_BINS];
    for &v in data {
        hist[bin_of(v, lo, width)] += 1;
    }
    hist
}

/// Index `t` maximizing between-class variance for classes `[0, t]` and
/// `(t, 255]`.
fn best_split(hist: &[u64; OTSU_BINS]) -> (usize, f64) {
    let total: f64 = hist.iter().map(|&c| c as f64).sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (0, -1.0);
    for t in 0..OTSU_BINS - 1 {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best.1 {
            best = (t, var);
        }
    }
    best
}

pub fn threshold_mask(plane: &ImagePlane, threshold: f32) -> ImagePlane {
    plane.map(|v| if v > threshold { 1.0 } else { 0.0 })
}

/// 3x3 majority vote; at borders the vote is over the in-frame neighbours.
pub fn majority_filter(mask: &ImagePlane) -> ImagePlane {
    let (w, h) = (mask.width(), mask.height());
    mask_from_fn(w, h, |x, y| {
        let (mut ones, mut n) = (0, 0);
        for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                n += 1;
                ones += (mask.get(xx, yy, 0) == 1.0) as u32;
            }
        }
        2 * ones > n
    })
}

/// Tight box around the set pixels of a binary mask.
pub fn bounding_rect(mask: &ImagePlane) -> Option<BoundingRect> {
    let w = mask.width();
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for (p, &v) in mask.data().iter().enumerate() {
        if v == 1.0 {
            let (x, y) = (p as u32 % w, p as u32 / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
    }
    (x0 != u32::MAX).then(|| BoundingRect { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1 })
}

#[derive(Clone, Debug)]
pub struct OfflineSegmentation {
    pub variation: ImagePlane,
    pub threshold: f32,
    /// High-variation pixels after the majority filter.
    pub high_mask: ImagePlane,
    pub rect: BoundingRect,
}

/// Variation analysis of a frame sequence (colour or intensity planes).
pub fn offline_segment(frames: &[ImagePlane]) -> Result<OfflineSegmentation> {
    let lum = frames.iter().map(intensity).collect::<Result<Vec<_>>>()?;
    let variation = temporal_variation(&lum)?;
    let threshold = otsu_threshold(&variation)?;
    let high_mask = majority_filter(&threshold_mask(&variation, threshold));
    let rect = bounding_rect(&high_mask)
        .ok_or_else(|| Error::Degenerate("high-variation mask is empty after filtering".into()))?;
    Ok(OfflineSegmentation {
        variation,
        threshold,
        high_mask,
        rect,
    })
}

/// Mean absolute motion over the set pixels of `stencil`.
pub fn mean_abs_motion(mv: &ImagePlane, stencil: &ImagePlane) -> Option<[f64; 2]> {
    let mut s = [0.0f64; 2];
    let mut n = 0usize;
    for (p, &m) in stencil.data().iter().enumerate() {
        if m == 1.0 {
            let v = mv.pixel_at(p);
            s[0] += v[0].abs() as f64;
            s[1] += v[1].abs() as f64;
            n += 1;
        }
    }
    (n > 0).then(|| [s[0] / n as f64, s[1] / n as f64])
}

/// Grows `rect` by `k * mean |mv|` over the stencil, centred, clamped to the
/// frame. Returns `None` for an empty stencil.
pub fn expand_rect(
    rect: BoundingRect,
    mv: &ImagePlane,
    stencil: &ImagePlane,
    params: &SegmentationParams,
) -> Result<Option<BoundingRect>> {
    params.validate()?;
    mv.check_same_size(stencil, "expand_rect")?;
    mv.check_channels(2, "motion field")?;
    let Some(v) = mean_abs_motion(mv, stencil) else {
        return Ok(None);
    };
    Ok(Some(grow(rect, params.k_x * v[0], params.k_y * v[1], stencil.width(), stencil.height())))
}

fn grow(rect: BoundingRect, wb: f64, hb: f64, fw: u32, fh: u32) -> BoundingRect {
    let x0 = (rect.x as f64 - wb / 2.0).round();
    let y0 = (rect.y as f64 - hb / 2.0).round();
    let x1 = (rect.x as f64 + rect.w as f64 + wb / 2.0).round();
    let y1 = (rect.y as f64 + rect.h as f64 + hb / 2.0).round();
    let cx0 = x0.clamp(0.0, fw as f64 - 1.0);
    let cy0 = y0.clamp(0.0, fh as f64 - 1.0);
    let cx1 = x1.clamp(cx0 + 1.0, fw as f64);
    let cy1 = y1.clamp(cy0 + 1.0, fh as f64);
    BoundingRect {
        x: cx0 as u32,
        y: cy0 as u32,
        w: (cx1 - cx0) as u32,
        h: (cy1 - cy0) as u32,
    }
}

/// 8-connected components of a binary mask, each as its own mask, in scan
/// order of their first pixel.
pub fn connected_components(mask: &ImagePlane) -> Vec<ImagePlane> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut label = vec![usize::MAX; mask.pixel_count()];
    let mut comps = Vec::new();
    for start in 0..mask.pixel_count() {
        if mask.data()[start] != 1.0 || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut comp = ImagePlane::new(mask.width(), mask.height(), 1);
        let mut stack = vec![start];
        label[start] = id;
        while let Some(p) = stack.pop() {
            comp.data_mut()[p] = 1.0;
            let (x, y) = (p as i64 % w, p as i64 / w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let q = (ny * w + nx) as usize;
                    if mask.data()[q] == 1.0 && label[q] == usize::MAX {
                        label[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        comps.push(comp);
    }
    comps
}

/// `fg = stencil`, `near = union(rects) - stencil`, `far = rest`.
pub fn make_masks(stencil: &ImagePlane, rects: &[BoundingRect]) -> Result<RegionMasks> {
    stencil.check_channels(1, "stencil")?;
    let (w, h) = (stencil.width(), stencil.height());
    let fg = mask_from_fn(w, h, |x, y| stencil.get(x, y, 0) == 1.0);
    let near = mask_from_fn(w, h, |x, y| {
        stencil.get(x, y, 0) != 1.0 && rects.iter().any(|r| r.contains(x, y))
    });
    let far = mask_from_fn(w, h, |x, y| fg.get(x, y, 0) == 0.0 && near.get(x, y, 0) == 0.0);
    Ok(RegionMasks { fg, near, far })
}

/// Real-time segmentation of one frame: one expanded rectangle per connected
/// stencil component.
pub fn segment_frame(
    stencil: &ImagePlane,
    mv: &ImagePlane,
    params: &SegmentationParams,
) -> Result<(RegionMasks, Vec<BoundingRect>)> {
    let mut rects = Vec::new();
    for comp in connected_components(stencil) {
        let tight = bounding_rect(&comp).expect("component is non-empty");
        if let Some(r) = expand_rect(tight, mv, &comp, params)? {
            rects.push(r);
        }
    }
    Ok((make_masks(stencil, &rects)?, rects))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationSample {
    pub mean_v: [f64; 2],
    /// Offline rectangle size minus stencil rectangle size.
    pub growth: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub k_x: f64,
    pub k_y: f64,
    pub pearson_x: f64,
    pub pearson_y: f64,
}

/// Correlations below this are reported as weak.
pub const WEAK_CORRELATION: f64 = 0.5;

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn fit_axis(v: &[f64], g: &[f64], axis: &str) -> Result<(f64, f64)> {
    let svv: f64 = v.iter().map(|x| x * x).sum();
    let degenerate = v.len() < 2 || v.iter().all(|x| (x - v[0]).abs() < 1e-12);
    if degenerate || svv == 0.0 {
        return Err(Error::Degenerate(format!(
            "cannot calibrate k_{axis}: motion does not vary across samples"
        )));
    }
    let k = v.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / svv;
    let r = pearson(v, g).unwrap_or(0.0);
    if r.abs() < WEAK_CORRELATION {
        log::warn!("weak correlation for k_{axis}: r = {r:.3}");
    }
    Ok((k, r))
}

/// Least-squares slope through the origin of growth against mean motion, per
/// axis, with the Pearson correlation of each fit.
pub fn calibrate_k(samples: &[CalibrationSample]) -> Result<Calibration> {
    let axis = |i: usize| -> (Vec<f64>, Vec<f64>) {
        samples.iter().map(|s| (s.mean_v[i], s.growth[i])).unzip()
    };
    let (vx, gx) = axis(0);
    let (vy, gy) = axis(1);
    let (k_x, pearson_x) = fit_axis(&vx, &gx, "x")?;
    let (k_y, pearson_y) = fit_axis(&vy, &gy, "y")?;
    Ok(Calibration { k_x, k_y, pearson_x, pearson_y })
}

/// Calibration samples from sliding windows of `window` frames. Each window
/// contributes the growth of its offline rectangle over the middle frame's
/// stencil rectangle, against that frame's mean stencil motion. Windows with
/// no stencil or more than one moving object are skipped.
pub fn calibration_samples(seq: &[RenderedFrame], window: usize) -> Vec<CalibrationSample> {
    if window < 2 || seq.len() < window {
        return Vec::new();
    }
    seq.windows(window)
        .filter_map(|win| {
            let mid = &win[window / 2].gbuffer;
            let comps = connected_components(&mid.stencil);
            if comps.len() != 1 {
                return None;
            }
            let tight = bounding_rect(&mid.stencil)?;
            let v = mean_abs_motion(&mid.motion_vector, &mid.stencil)?;
            let colors: Vec<ImagePlane> = win.iter().map(|f| f.color.clone()).collect();
            let off = offline_segment(&colors).ok()?;
            Some(CalibrationSample {
                mean_v: v,
                growth: [
                    off.rect.w as f64 - tight.w as f64,
                    off.rect.h as f64 - tight.h as f64,
                ],
            })
        })
        .collect()
}

/// Fraction of high-variation pixels that lie on a moving object (union of
/// stencils over the analysed frames).
pub fn dynamic_coverage(high_mask: &ImagePlane, stencils: &[&ImagePlane]) -> Result<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (p, &v) in high_mask.data().iter().enumerate() {
        if v == 1.0 {
            total += 1;
            if stencils.iter().any(|s| s.data()[p] == 1.0) {
                hit += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Degenerate("no high-variation pixels".into()));
    }
    Ok(hit as f64 / total as f64)
}
