//! Shadow motion and extrapolation.
//!
//! Shadow masks of two past frames give a dense flow (Farneback's two-frame
//! polynomial-expansion method); the newest mask is then pushed half a step
//! further along that flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::warp::{dilate_fill, MotionField};

/// Dense displacement `mask_prev(x) ~ mask_curr(x + flow(x))`, 2 channels.
pub type FlowField = ImagePlane;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FarnebackParams {
    pub levels: u32,
    pub pyr_scale: f32,
    /// Side of the box window over which the displacement equations are pooled.
    pub window: u32,
    pub iterations: u32,
    pub poly_n: u32,
    pub poly_sigma: f32,
    /// Gaussian applied to the masks before anything else.
    pub pre_sigma: f32,
}

impl Default for FarnebackParams {
    fn default() -> Self {
        Self {
            levels: 3,
            pyr_scale: 0.5,
            window: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.1,
            pre_sigma: 1.0,
        }
    }
}

impl FarnebackParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.iterations == 0 || self.window == 0 {
            return Err(Error::Config("farneback levels, iterations and window must be positive".into()));
        }
        if !(self.pyr_scale > 0.0 && self.pyr_scale < 1.0) {
            return Err(Error::Config(format!("pyramid scale {} not in (0, 1)", self.pyr_scale)));
        }
        if self.poly_n < 3 || self.poly_n % 2 == 0 || !(self.poly_sigma > 0.0) {
            return Err(Error::Config("poly_n must be odd and >= 3 with positive sigma".into()));
        }
        Ok(())
    }
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let r = (3.0 * sigma).ceil().max(1.0) as i64;
    let k: Vec<f32> = (-r..=r).map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f32 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

fn convolve_separable(src: &ImagePlane, k: &[f32]) -> ImagePlane {
    let (w, h, c) = (src.width() as i64, src.height() as i64, src.channels());
    let r = (k.len() / 2) as i64;
    let pass = |img: &ImagePlane, horizontal: bool| {
        ImagePlane::from_fn(img.width(), img.height(), c, |x, y, ch| {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                let o = i as i64 - r;
                let (sx, sy) = if horizontal {
                    ((x as i64 + o).clamp(0, w - 1), y as i64)
                } else {
                    (x as i64, (y as i64 + o).clamp(0, h - 1))
                };
                acc += kv * img.get(sx as u32, sy as u32, ch);
            }
            acc
        })
    };
    pass(&pass(src, true), false)
}

/// Separable Gaussian blur with clamped borders. `sigma <= 0` is the identity.
pub fn gaussian_blur(src: &ImagePlane, sigma: f32) -> ImagePlane {
    if sigma <= 0.0 {
        return src.clone();
    }
    convolve_separable(src, &gaussian_kernel(sigma))
}

fn box_blur(src: &ImagePlane, size: u32) -> ImagePlane {
    let n = size.max(1) as usize;
    convolve_separable(src, &vec![1.0 / n as f32; n | 1])
}

fn bilinear(src: &ImagePlane, x: f32, y: f32, out: &mut [f32]) {
    let (wm, hm) = ((src.width() - 1) as f32, (src.height() - 1) as f32);
    let (x, y) = (x.clamp(0.0, wm), y.clamp(0.0, hm));
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as u32, y0 as u32);
    let (x1, y1) = ((x0 + 1).min(src.width() - 1), (y0 + 1).min(src.height() - 1));
    for (c, o) in out.iter_mut().enumerate() {
        let c = c as u32;
        let top = src.get(x0, y0, c) * (1.0 - fx) + src.get(x1, y0, c) * fx;
        let bot = src.get(x0, y1, c) * (1.0 - fx) + src.get(x1, y1, c) * fx;
        *o = top * (1.0 - fy) + bot * fy;
    }
}

fn resize(src: &ImagePlane, w: u32, h: u32) -> ImagePlane {
    let sx = src.width() as f32 / w as f32;
    let sy = src.height() as f32 / h as f32;
    let c = src.channels() as usize;
    let mut out = ImagePlane::new(w, h, src.channels());
    let mut px = vec![0f32; c];
    for y in 0..h {
        for x in 0..w {
            bilinear(src, (x as f32 + 0.5) * sx - 0.5, (y as f32 + 0.5) * sy - 0.5, &mut px);
            out.pixel_mut(x, y).copy_from_slice(&px);
        }
    }
    out
}

/// Per-pixel quadratic fit `f(x) ~ x'Ax + b'x + c` under a Gaussian
/// applicability window. Output channels: `c, bx, by, axx, ayy, axy`.
fn poly_expansion(img: &ImagePlane, n: u32, sigma: f32) -> ImagePlane {
    let r = (n / 2) as i64;
    let mut offs = Vec::new();
    let mut gram = [[0f64; 6]; 6];
    for dy in -r..=r {
        for dx in -r..=r {
            let g = (-((dx * dx + dy * dy) as f64) / (2.0 * (sigma as f64).powi(2))).exp();
            let (x, y) = (dx as f64, dy as f64);
            let basis = [1.0, x, y, x * x, y * y, x * y];
            for i in 0..6 {
                for j in 0..6 {
                    gram[i][j] += g * basis[i] * basis[j];
                }
            }
            offs.push((dx, dy, g, basis));
        }
    }
    let inv = invert6(gram);
    // Row i of `proj` maps the windowed samples to coefficient i.
    let proj: Vec<[f32; 6]> = offs
        .iter()
        .map(|&(_, _, g, b)| {
            let mut row = [0f32; 6];
            for (i, r) in row.iter_mut().enumerate() {
                *r = (g * (0..6).map(|j| inv[i][j] * b[j]).sum::<f64>()) as f32;
            }
            row
        })
        .collect();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut out = ImagePlane::new(img.width(), img.height(), 6);
    for y in 0..h {
        for x in 0..w {
            let mut coef = [0f32; 6];
            for (&(dx, dy, _, _), row) in offs.iter().zip(&proj) {
                let v = img.get((x + dx).clamp(0, w - 1) as u32, (y + dy).clamp(0, h - 1) as u32, 0);
                for i in 0..6 {
                    coef[i] += row[i] * v;
                }
            }
            out.pixel_mut(x as u32, y as u32).copy_from_slice(&coef);
        }
    }
    out
}

fn invert6(m: [[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut a = m;
    let mut inv = [[0f64; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let piv = (col..6).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for j in 0..6 {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..6 {
            if i != col {
                let f = a[i][col];
                for j in 0..6 {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

/// One refinement pass: pooled least squares for the displacement given the
/// current estimate `flow`.
fn update_flow(p1: &ImagePlane, p2: &ImagePlane, flow: &FlowField, window: u32) -> FlowField {
    let (w, h) = (p1.width(), p1.height());
    // Per-pixel terms of G = A'A and h = A'db, packed g11 g12 g22 h1 h2.
    let mut terms = ImagePlane::new(w, h, 5);
    let mut r2 = [0f32; 6];
    for y in 0..h {
        for x in 0..w {
            let d = flow.pixel(x, y);
            let (dx, dy) = (d[0], d[1]);
            bilinear(p2, x as f32 + dx, y as f32 + dy, &mut r2);
            let r1 = p1.pixel(x, y);
            let a11 = 0.5 * (r1[3] + r2[3]);
            let a22 = 0.5 * (r1[4] + r2[4]);
            let a12 = 0.25 * (r1[5] + r2[5]);
            let b1 = -0.5 * (r2[1] - r1[1]) + a11 * dx + a12 * dy;
            let b2 = -0.5 * (r2[2] - r1[2]) + a12 * dx + a22 * dy;
            terms.pixel_mut(x, y).copy_from_slice(&[
                a11 * a11 + a12 * a12,
                a12 * (a11 + a22),
                a12 * a12 + a22 * a22,
                a11 * b1 + a12 * b2,
                a12 * b1 + a22 * b2,
            ]);
        }
    }
    let pooled = box_blur(&terms, window);
    ImagePlane::from_fn(w, h, 2, |x, y, c| {
        let t = pooled.pixel(x, y);
        let (g11, g12, g22, h1, h2) = (t[0], t[1], t[2], t[3], t[4]);
        // Small ridge keeps textureless neighbourhoods at zero motion.
        let reg = 1e-6 + 1e-3 * (g11 + g22);
        let (g11, g22) = (g11 + reg, g22 + reg);
        let det = g11 * g22 - g12 * g12;
        if c == 0 {
            (g22 * h1 - g12 * h2) / det
        } else {
            (g11 * h2 - g12 * h1) / det
        }
    })
}

/// Dense flow from `mask_prev` to `mask_curr` (single-channel planes).
pub fn farneback_flow(mask_prev: &ImagePlane, mask_curr: &ImagePlane, params: &FarnebackParams) -> Result<FlowField> {
    params.validate()?;
    mask_prev.check_channels(1, "previous shadow mask")?;
    mask_curr.check_channels(1, "current shadow mask")?;
    mask_prev.check_same_size(mask_curr, "shadow masks")?;
    let (w, h) = (mask_prev.width(), mask_prev.height());
    if mask_prev.sum() == 0.0 && mask_curr.sum() == 0.0 {
        return Ok(ImagePlane::new(w, h, 2));
    }
    let f1 = gaussian_blur(mask_prev, params.pre_sigma);
    let f2 = gaussian_blur(mask_curr, params.pre_sigma);

    // Pyramid, finest first; stop before a level gets smaller than the fit window.
    let mut pyr = vec![(f1, f2)];
    let down_sigma = (1.0 / params.pyr_scale - 1.0) * 0.5;
    for _ in 1..params.levels {
        let (a, b) = pyr.last().unwrap();
        let nw = (a.width() as f32 * params.pyr_scale).round() as u32;
        let nh = (a.height() as f32 * params.pyr_scale).round() as u32;
        if nw < params.poly_n || nh < params.poly_n {
            break;
        }
        let shrink = |p: &ImagePlane| resize(&gaussian_blur(p, down_sigma), nw, nh);
        let next = (shrink(a), shrink(b));
        pyr.push(next);
    }

    let mut flow: Option<FlowField> = None;
    for (a, b) in pyr.iter().rev() {
        let (lw, lh) = (a.width(), a.height());
        let mut cur = match flow.take() {
            None => ImagePlane::new(lw, lh, 2),
            Some(f) => {
                let up = 1.0 / params.pyr_scale;
                resize(&f, lw, lh).map(|v| v * up)
            }
        };
        let p1 = poly_expansion(a, params.poly_n, params.poly_sigma);
        let p2 = poly_expansion(b, params.poly_n, params.poly_sigma);
        for _ in 0..params.iterations {
            cur = update_flow(&p1, &p2, &cur, params.window);
        }
        flow = Some(cur);
    }
    let flow = flow.unwrap();
    if !flow.is_finite() {
        return Err(Error::Numeric("shadow flow is not finite".into()));
    }
    Ok(flow)
}

/// Pushes `mask_t` forward by `scale * flow`. Flow is trusted only on shadow
/// pixels; every other pixel takes the flow of the nearest shadow pixel by
/// dilation, so the leading edge moves with the shadow instead of staying put.
pub fn extrapolate_shadow(mask_t: &ImagePlane, flow: &FlowField, scale: f32) -> Result<ImagePlane> {
    mask_t.check_channels(1, "shadow mask")?;
    flow.check_channels(2, "shadow flow")?;
    mask_t.check_same_size(flow, "shadow flow")?;
    let holes: Vec<bool> = mask_t.data().iter().map(|&m| m <= 0.0).collect();
    if holes.iter().all(|&h| h) {
        return Ok(mask_t.clone());
    }
    let (mv, _): (MotionField, _) = dilate_fill(flow, &holes, |_, _| true);
    let (w, h) = (mask_t.width(), mask_t.height());
    let mut px = [0f32];
    Ok(ImagePlane::from_fn(w, h, 1, |x, y, _| {
        let v = mv.pixel(x, y);
        let (sx, sy) = (x as f32 - scale * v[0], y as f32 - scale * v[1]);
        if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f32 || sy > (h - 1) as f32 {
            return 0.0;
        }
        bilinear(mask_t, sx, sy, &mut px);
        px[0].clamp(0.0, 1.0)
    }))
}

/// Adds the signed shadow layer `-attenuation * shadow * shadeless`.
pub fn shadow_apply(shadeless: &ImagePlane, shadow: &ImagePlane, attenuation: f32) -> Result<ImagePlane> {
    shadow.check_channels(1, "shadow")?;
    shadeless.check_same_size(shadow, "shadow")?;
    let c = shadeless.channels() as usize;
    let mut out = shadeless.clone();
    for (px, &s) in out.data_mut().chunks_exact_mut(c).zip(shadow.data()) {
        let s = s.clamp(0.0, 1.0);
        for v in px {
            *v -= attenuation * s * *v;
        }
    }
    Ok(out)
}

/// Inverse of [`shadow_apply`].
pub fn shadow_remove(shaded: &ImagePlane, shadow: &ImagePlane, attenuation: f32) -> Result<ImagePlane> {
    shadow.check_channels(1, "shadow")?;
    shaded.check_same_size(shadow, "shadow")?;
    let c = shaded.channels() as usize;
    let mut out = shaded.clone();
    for (px, &s) in out.data_mut().chunks_exact_mut(c).zip(shadow.data()) {
        let k = crate::image::guarded_div(1.0, 1.0 - attenuation * s.clamp(0.0, 1.0));
        for v in px {
            *v *= k;
        }
    }
    Ok(out)
}

/// Intersection over union of two masks thresholded at 0.5. Two empty masks score 1.
pub fn iou(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    a.check_channels(1, "iou mask")?;
    a.check_same_size(b, "iou masks")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x >= 0.5, y >= 0.5);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
