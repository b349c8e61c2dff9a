//! Motion-vector warping.
//!
//! Motion fields are 2-channel planes in the backward convention: the value at
//! a target pixel is the displacement that surface underwent over one frame
//! interval, so the source position is `p - scale * mv(p)`. Sample positions
//! are in pixel-index coordinates (pixel `(i, j)` sits at `(i, j)`).
//!
//! Hole masks are binary with `1 = valid` and `0 = hole`; hole pixels carry a
//! `0.0` placeholder in the warped color.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_shape, Error, Result};
use crate::image::ImagePlane;
use crate::scene::{GBufferSet, TargetGBuffer};

pub type MotionField = ImagePlane;

/// Tolerance for sample positions that land a hair outside the frame.
const EDGE_EPS: f32 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct WarpResult {
    pub color: ImagePlane,
    pub hole_mask: ImagePlane,
}

impl WarpResult {
    pub fn valid_count(&self) -> usize {
        self.hole_mask.data().iter().filter(|&&m| m == 1.0).count()
    }
}

/// Geometry carried along by a warp, used to judge which pixels are trustworthy.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedAttrs {
    pub depth: ImagePlane,
    pub normal: ImagePlane,
    /// 1 where the warp produced a value at all.
    pub filled: ImagePlane,
}

fn check_field(source: &ImagePlane, mv: &MotionField) -> Result<()> {
    ensure_shape!(
        source.same_size(mv),
        "source {}x{} vs motion field {}x{}",
        source.width(),
        source.height(),
        mv.width(),
        mv.height()
    );
    mv.check_channels(2, "motion field")
}

#[inline]
fn in_frame(sx: f32, sy: f32, w: u32, h: u32) -> Option<(f32, f32)> {
    let (wm, hm) = ((w - 1) as f32, (h - 1) as f32);
    if sx < -EDGE_EPS || sy < -EDGE_EPS || sx > wm + EDGE_EPS || sy > hm + EDGE_EPS {
        None
    } else {
        Some((sx.clamp(0.0, wm), sy.clamp(0.0, hm)))
    }
}

/// Bilinear sample at an in-frame position (see [`in_frame`]).
#[inline]
fn bilinear(src: &ImagePlane, sx: f32, sy: f32, out: &mut [f32]) {
    let (w, h) = (src.width(), src.height());
    let x0 = sx.floor() as u32;
    let y0 = sy.floor() as u32;
    let fx = sx - x0 as f32;
    let fy = sy - y0 as f32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (a, b, c, d) = (src.pixel(x0, y0), src.pixel(x1, y0), src.pixel(x0, y1), src.pixel(x1, y1));
    for k in 0..out.len() {
        out[k] = (1.0 - fx) * (1.0 - fy) * a[k]
            + fx * (1.0 - fy) * b[k]
            + (1.0 - fx) * fy * c[k]
            + fx * fy * d[k];
    }
}

/// Bilinear sample with clamp-to-edge addressing; never fails.
pub fn sample_clamped(src: &ImagePlane, sx: f32, sy: f32, out: &mut [f32]) {
    let sx = sx.clamp(0.0, (src.width() - 1) as f32);
    let sy = sy.clamp(0.0, (src.height() - 1) as f32);
    bilinear(src, sx, sy, out)
}

/// `target(p) = source(p - scale * mv(p))`, bilinear; out-of-frame samples
/// become holes.
pub fn backward_warp(source: &ImagePlane, mv: &MotionField, scale: f32) -> Result<WarpResult> {
    check_field(source, mv)?;
    let (w, h, c) = (source.width(), source.height(), source.channels() as usize);
    let mut color = ImagePlane::new(w, h, source.channels());
    let mut mask = ImagePlane::new(w, h, 1);
    color
        .rows_mut()
        .zip(mask.rows_mut())
        .enumerate()
        .par_bridge()
        .for_each(|(y, (crow, mrow))| {
            for x in 0..w as usize {
                let v = mv.pixel(x as u32, y as u32);
                let sx = x as f32 - scale * v[0];
                let sy = y as f32 - scale * v[1];
                if let Some((sx, sy)) = in_frame(sx, sy, w, h) {
                    bilinear(source, sx, sy, &mut crow[x * c..(x + 1) * c]);
                    mrow[x] = 1.0;
                }
            }
        });
    Ok(WarpResult {
        color,
        hole_mask: mask,
    })
}

/// Plain backward warp that clamps out-of-frame samples to the border instead
/// of reporting holes. This is the warp-only baseline.
pub fn backward_warp_clamped(source: &ImagePlane, mv: &MotionField, scale: f32) -> Result<ImagePlane> {
    check_field(source, mv)?;
    let (w, c) = (source.width(), source.channels() as usize);
    let mut out = ImagePlane::new(source.width(), source.height(), source.channels());
    out.rows_mut().enumerate().par_bridge().for_each(|(y, row)| {
        for x in 0..w as usize {
            let v = mv.pixel(x as u32, y as u32);
            sample_clamped(
                source,
                x as f32 - scale * v[0],
                y as f32 - scale * v[1],
                &mut row[x * c..(x + 1) * c],
            );
        }
    });
    Ok(out)
}

/// Nearest-neighbour backward warp, for binary planes and integer labels.
pub fn backward_warp_nearest(source: &ImagePlane, mv: &MotionField, scale: f32) -> Result<WarpResult> {
    check_field(source, mv)?;
    let (w, h) = (source.width(), source.height());
    let mut color = ImagePlane::new(w, h, source.channels());
    let mut mask = ImagePlane::new(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let v = mv.pixel(x, y);
            let sx = (x as f32 - scale * v[0]).round();
            let sy = (y as f32 - scale * v[1]).round();
            if sx >= 0.0 && sy >= 0.0 && sx < w as f32 && sy < h as f32 {
                color
                    .pixel_mut(x, y)
                    .copy_from_slice(source.pixel(sx as u32, sy as u32));
                mask.set(x, y, 0, 1.0);
            }
        }
    }
    Ok(WarpResult {
        color,
        hole_mask: mask,
    })
}

/// Splats every source pixel to `round(p + scale * mv(p))`. Here `mv` is
/// located at the source pixels. When several pixels land on one target the
/// nearer `depth` wins (first in scan order on ties); unreached targets are
/// holes.
pub fn forward_warp(
    source: &ImagePlane,
    mv: &MotionField,
    depth: &ImagePlane,
    scale: f32,
) -> Result<WarpResult> {
    check_field(source, mv)?;
    source.check_same_size(depth, "forward warp depth")?;
    depth.check_channels(1, "forward warp depth")?;
    let (w, h) = (source.width(), source.height());
    let mut color = ImagePlane::new(w, h, source.channels());
    let mut mask = ImagePlane::new(w, h, 1);
    let mut zbuf = vec![f32::INFINITY; source.pixel_count()];
    for y in 0..h {
        for x in 0..w {
            let v = mv.pixel(x, y);
            let tx = (x as f32 + scale * v[0]).round();
            let ty = (y as f32 + scale * v[1]).round();
            if tx < 0.0 || ty < 0.0 || tx >= w as f32 || ty >= h as f32 {
                continue;
            }
            let (tx, ty) = (tx as u32, ty as u32);
            let t = ty as usize * w as usize + tx as usize;
            let d = depth.get(x, y, 0);
            if d < zbuf[t] {
                zbuf[t] = d;
                color.pixel_mut(tx, ty).copy_from_slice(source.pixel(x, y));
                mask.set(tx, ty, 0, 1.0);
            }
        }
    }
    Ok(WarpResult {
        color,
        hole_mask: mask,
    })
}

/// Synchronous iterative dilation.
///
/// Every pixel with `holes[p] == false` is a potential donor. In each round a
/// still-unassigned hole takes the value of the first assigned neighbour
/// (4-neighbours, then diagonals) whose originating donor `d` satisfies
/// `eligible(p, d)`. Returns the filled plane and which holes were reached.
pub fn dilate_fill(
    values: &ImagePlane,
    holes: &[bool],
    eligible: impl Fn(usize, usize) -> bool,
) -> (ImagePlane, Vec<bool>) {
    let (w, h) = (values.width() as i64, values.height() as i64);
    assert_eq!(holes.len(), values.pixel_count());
    let c = values.channels() as usize;
    let mut origin: Vec<Option<usize>> = holes
        .iter()
        .enumerate()
        .map(|(p, &hole)| (!hole).then_some(p))
        .collect();
    let mut out = values.clone();
    const NEIGHBOURS: [(i64, i64); 8] = [(0, -1), (-1, 0), (1, 0), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1)];
    let mut pending: Vec<usize> = (0..holes.len()).filter(|&p| holes[p]).collect();
    while !pending.is_empty() {
        let mut updates = Vec::new();
        for &p in &pending {
            let (x, y) = (p as i64 % w, p as i64 / w);
            for (dx, dy) in NEIGHBOURS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let q = (ny * w + nx) as usize;
                if let Some(d) = origin[q] {
                    if eligible(p, d) {
                        updates.push((p, q, d));
                        break;
                    }
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        let data = out.data_mut();
        for &(p, q, d) in &updates {
            for k in 0..c {
                data[p * c + k] = data[q * c + k];
            }
            origin[p] = Some(d);
        }
        pending.retain(|&p| origin[p].is_none());
    }
    let reached = holes
        .iter()
        .zip(&origin)
        .map(|(&hole, o)| hole && o.is_some())
        .collect();
    (out, reached)
}

/// Relative depth difference above which a sample counts as a different surface.
pub const DISOCCLUSION_TOLERANCE: f32 = 0.02;

/// Target pixels whose backward source is out of frame or covered by a nearer
/// surface in the source frame.
pub fn disocclusion_holes(
    mv: &MotionField,
    target_depth: &ImagePlane,
    source_depth: &ImagePlane,
    scale: f32,
) -> Result<Vec<bool>> {
    check_field(target_depth, mv)?;
    target_depth.check_same_size(source_depth, "source depth")?;
    let (w, h) = (mv.width(), mv.height());
    let mut holes = vec![false; mv.pixel_count()];
    for y in 0..h {
        for x in 0..w {
            let v = mv.pixel(x, y);
            let sx = (x as f32 - scale * v[0]).round();
            let sy = (y as f32 - scale * v[1]).round();
            let p = y as usize * w as usize + x as usize;
            holes[p] = if sx < 0.0 || sy < 0.0 || sx >= w as f32 || sy >= h as f32 {
                true
            } else {
                let ds = source_depth.get(sx as u32, sy as u32, 0);
                let dt = target_depth.get(x, y, 0);
                ds < dt * (1.0 - DISOCCLUSION_TOLERANCE)
            };
        }
    }
    Ok(holes)
}

/// Replaces the motion of disoccluded pixels with that of the nearest
/// occluder, found by iterative dilation. Warping along the occluder's motion
/// lands the sample just behind the occluder's trailing edge in the source,
/// where the uncovered surface was still visible, instead of on the occluder
/// itself (which is what produces ghosting). Pixels that are not holes keep
/// their vectors; holes with no nearer surface in reach keep theirs too.
pub fn occlusion_motion_vectors(
    mv: &MotionField,
    target_depth: &ImagePlane,
    source_depth: &ImagePlane,
    scale: f32,
) -> Result<MotionField> {
    let holes = disocclusion_holes(mv, target_depth, source_depth, scale)?;
    let td = target_depth.data();
    let (filled, _) = dilate_fill(mv, &holes, |hole, donor| td[donor] < td[hole]);
    Ok(filled)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidedWarpParams {
    /// Odd window size `k` of the candidate neighbourhood.
    pub window: u32,
    /// Spatial sigma in pixels; 0 selects the nearest candidate only.
    pub sigma_spatial: f32,
    pub sigma_normal: f32,
    /// Depth sigma as a fraction of the target frame's depth range.
    pub sigma_depth_rel: f32,
    pub sigma_albedo: f32,
    /// Minimum accumulated weight for a pixel to count as filled.
    pub min_weight: f32,
}

impl Default for GuidedWarpParams {
    fn default() -> Self {
        Self {
            window: 7,
            sigma_spatial: 2.0,
            sigma_normal: 0.3,
            sigma_depth_rel: 0.05,
            sigma_albedo: 0.2,
            min_weight: 1e-4,
        }
    }
}

impl GuidedWarpParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "guided warp window must be odd and >= 3, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

fn depth_sigma(depth: &ImagePlane, rel: f32) -> f32 {
    let (lo, hi) = depth.min_max();
    let range = hi - lo;
    let scale = if range > 1e-6 { range } else { hi.abs().max(1.0) };
    rel * scale
}

/// G-buffer guided warp: a joint bilateral gather around the backward-warped
/// position, weighted by agreement of the source candidates' normal, depth
/// and albedo with the target pixel's G-buffer.
///
/// ```text
/// w(q) = exp(-|q - c|^2 / 2 s_s^2) * exp(-|n_t - n_q|^2 / 2 s_n^2)
///      * exp(-(d_t - d_q)^2 / 2 s_d^2) * exp(-|a_t - a_q|^2 / 2 s_a^2)
/// ```
///
/// The output is `sum(w * color) / sum(w)`; pixels with `sum(w) < min_weight`
/// are holes. The same weights blend the candidates' depth and normal into
/// the returned [`WarpedAttrs`].
pub fn gbuffer_guided_warp(
    source_color: &ImagePlane,
    source_g: &GBufferSet,
    target_g: TargetGBuffer<'_>,
    mv: &MotionField,
    scale: f32,
    params: &GuidedWarpParams,
) -> Result<(WarpResult, WarpedAttrs)> {
    params.validate()?;
    check_field(source_color, mv)?;
    source_color.check_same_size(&source_g.depth, "source G-buffer")?;
    source_color.check_same_size(target_g.depth(), "target G-buffer")?;

    let (w, h) = (source_color.width(), source_color.height());
    let c = source_color.channels() as usize;
    let r = (params.window / 2) as i64;
    let sigma_d = depth_sigma(target_g.depth(), params.sigma_depth_rel);
    let inv = |s: f32| if s > 0.0 { 1.0 / (2.0 * s * s) } else { f32::INFINITY };
    let (k_s, k_n, k_d, k_a) = (
        inv(params.sigma_spatial),
        inv(params.sigma_normal),
        inv(sigma_d),
        inv(params.sigma_albedo),
    );
    let nearest_only = params.sigma_spatial <= 0.0;

    let (sd, sn, sa) = (&source_g.depth, &source_g.world_normal, &source_g.base_color);
    let (td, tn, ta) = (target_g.depth(), target_g.world_normal(), target_g.base_color());

    struct Row {
        color: Vec<f32>,
        mask: Vec<f32>,
        depth: Vec<f32>,
        normal: Vec<f32>,
    }

    let rows: Vec<Row> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Row {
                color: vec![0.0; w as usize * c],
                mask: vec![0.0; w as usize],
                depth: vec![0.0; w as usize],
                normal: vec![0.0; w as usize * 3],
            };
            let mut acc = vec![0f64; c];
            for x in 0..w {
                let v = mv.pixel(x, y);
                let cx = x as f32 - scale * v[0];
                let cy = y as f32 - scale * v[1];
                let (qx0, qy0) = (cx.round() as i64, cy.round() as i64);
                let (dt, nt, at) = (td.get(x, y, 0), tn.pixel(x, y), ta.pixel(x, y));

                acc.iter_mut().for_each(|a| *a = 0.0);
                let mut wsum = 0f64;
                let mut dsum = 0f64;
                let mut nsum = [0f64; 3];
                for qy in qy0 - r..=qy0 + r {
                    if qy < 0 || qy >= h as i64 {
                        continue;
                    }
                    for qx in qx0 - r..=qx0 + r {
                        if qx < 0 || qx >= w as i64 {
                            continue;
                        }
                        let spatial = if nearest_only {
                            if qx == qx0 && qy == qy0 { 0.0 } else { continue }
                        } else {
                            let (dx, dy) = (qx as f32 - cx, qy as f32 - cy);
                            (dx * dx + dy * dy) * k_s
                        };
                        let (qx, qy) = (qx as u32, qy as u32);
                        let nq = sn.pixel(qx, qy);
                        let aq = sa.pixel(qx, qy);
                        let dq = sd.get(qx, qy, 0);
                        let dn = sq3(nt, nq);
                        let da = sq3(at, aq);
                        let dd = (dt - dq) * (dt - dq);
                        let e = spatial + guarded(dn, k_n) + guarded(dd, k_d) + guarded(da, k_a);
                        let wq = (-e as f64).exp();
                        if wq == 0.0 {
                            continue;
                        }
                        wsum += wq;
                        for (a, s) in acc.iter_mut().zip(source_color.pixel(qx, qy)) {
                            *a += wq * *s as f64;
                        }
                        dsum += wq * dq as f64;
                        for k in 0..3 {
                            nsum[k] += wq * nq[k] as f64;
                        }
                    }
                }
                let xi = x as usize;
                if wsum >= params.min_weight as f64 && wsum > 0.0 {
                    for k in 0..c {
                        row.color[xi * c + k] = (acc[k] / wsum) as f32;
                    }
                    row.mask[xi] = 1.0;
                    row.depth[xi] = (dsum / wsum) as f32;
                    let len = (nsum[0] * nsum[0] + nsum[1] * nsum[1] + nsum[2] * nsum[2]).sqrt();
                    if len > 0.0 {
                        for k in 0..3 {
                            row.normal[xi * 3 + k] = (nsum[k] / len) as f32;
                        }
                    }
                }
            }
            row
        })
        .collect();

    let mut color = Vec::with_capacity(source_color.data().len());
    let mut mask = Vec::with_capacity(source_color.pixel_count());
    let mut depth = Vec::with_capacity(source_color.pixel_count());
    let mut normal = Vec::with_capacity(source_color.pixel_count() * 3);
    for row in rows {
        color.extend(row.color);
        mask.extend(row.mask);
        depth.extend(row.depth);
        normal.extend(row.normal);
    }
    let hole_mask = ImagePlane::from_vec(w, h, 1, mask)?;
    Ok((
        WarpResult {
            color: ImagePlane::from_vec(w, h, source_color.channels(), color)?,
            hole_mask: hole_mask.clone(),
        },
        WarpedAttrs {
            depth: ImagePlane::from_vec(w, h, 1, depth)?,
            normal: ImagePlane::from_vec(w, h, 3, normal)?,
            filled: hole_mask,
        },
    ))
}

#[inline]
fn sq3(a: &[f32], b: &[f32]) -> f32 {
    let (x, y, z) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    x * x + y * y + z * z
}

/// `d * k` where an infinite `k` (zero sigma) only admits exact matches.
#[inline]
fn guarded(d: f32, k: f32) -> f32 {
    if k.is_infinite() {
        if d == 0.0 { 0.0 } else { f32::INFINITY }
    } else {
        d * k
    }
}

/// Depth and normal carried by a nearest-neighbour backward warp.
pub fn warp_attributes(source_g: &GBufferSet, mv: &MotionField, scale: f32) -> Result<WarpedAttrs> {
    let d = backward_warp_nearest(&source_g.depth, mv, scale)?;
    let n = backward_warp_nearest(&source_g.world_normal, mv, scale)?;
    Ok(WarpedAttrs {
        depth: d.color,
        normal: n.color,
        filled: d.hole_mask,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvalidThresholds {
    /// Maximum relative depth difference.
    pub depth_rel: f32,
    /// Minimum dot product between warped and target normals.
    pub normal_dot: f32,
}

impl Default for InvalidThresholds {
    fn default() -> Self {
        Self {
            depth_rel: 0.02,
            normal_dot: 0.9,
        }
    }
}

/// Marks warped pixels whose carried geometry disagrees with the target
/// G-buffer, or which the warp left unfilled. Returns a hole mask
/// (`1 = valid`).
pub fn detect_invalid(
    warped: &WarpedAttrs,
    target: TargetGBuffer<'_>,
    thresholds: &InvalidThresholds,
) -> Result<ImagePlane> {
    warped.depth.check_same_size(target.depth(), "detect_invalid")?;
    let (td, tn) = (target.depth().data(), target.world_normal().data());
    let (wd, wn, filled) = (warped.depth.data(), warped.normal.data(), warped.filled.data());
    let mask = (0..warped.depth.pixel_count())
        .map(|p| {
            let dot = wn[p * 3] * tn[p * 3] + wn[p * 3 + 1] * tn[p * 3 + 1] + wn[p * 3 + 2] * tn[p * 3 + 2];
            let ok = filled[p] == 1.0
                && (wd[p] - td[p]).abs() <= thresholds.depth_rel * td[p].abs()
                && dot >= thresholds.normal_dot;
            if ok { 1.0 } else { 0.0 }
        })
        .collect();
    ImagePlane::from_vec(warped.depth.width(), warped.depth.height(), 1, mask)
}

/// Logical AND of two binary masks.
pub fn mask_and(a: &ImagePlane, b: &ImagePlane) -> Result<ImagePlane> {
    a.zip_map(b, |x, y| if x == 1.0 && y == 1.0 { 1.0 } else { 0.0 })
}
