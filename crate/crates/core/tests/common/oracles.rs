//! Slow, obvious reimplementations used to check the library.

use patchex::neural::conv::Conv2d;
use patchex::neural::Tensor;
use patchex::ImagePlane;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_plane(w: u32, h: u32, c: u32, lo: f32, hi: f32, rng: &mut ChaCha8Rng) -> ImagePlane {
    let data = (0..w * h * c).map(|_| rng.random_range(lo..hi)).collect();
    ImagePlane::from_vec(w, h, c, data).unwrap()
}

pub fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Backward bilinear warp, one scalar at a time. Positions within 1e-4 of
/// the border are pulled onto it, anything further out is a hole.
pub fn warp_oracle(src: &ImagePlane, mv: &ImagePlane, scale: f32) -> (ImagePlane, ImagePlane) {
    let (w, h, c) = (src.width(), src.height(), src.channels());
    let mut out = ImagePlane::new(w, h, c);
    let mut mask = ImagePlane::new(w, h, 1);
    let (wm, hm) = ((w - 1) as f32, (h - 1) as f32);
    for y in 0..h {
        for x in 0..w {
            let sx = x as f32 - scale * mv.get(x, y, 0);
            let sy = y as f32 - scale * mv.get(x, y, 1);
            if sx < -1e-4 || sy < -1e-4 || sx > wm + 1e-4 || sy > hm + 1e-4 {
                continue;
            }
            let (sx, sy) = (sx.clamp(0.0, wm), sy.clamp(0.0, hm));
            let (x0, y0) = (sx.floor() as u32, sy.floor() as u32);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f32, sy - y0 as f32);
            for k in 0..c {
                let v = (1.0 - fx) * (1.0 - fy) * src.get(x0, y0, k)
                    + fx * (1.0 - fy) * src.get(x1, y0, k)
                    + (1.0 - fx) * fy * src.get(x0, y1, k)
                    + fx * fy * src.get(x1, y1, k);
                out.set(x, y, k, v);
            }
            mask.set(x, y, 0, 1.0);
        }
    }
    (out, mask)
}

/// Between-class variance of a two-way split of `values`.
fn between_class(values: &[f64], low: impl Fn(f64) -> bool) -> f64 {
    let (a, b): (Vec<f64>, Vec<f64>) = values.iter().partition(|&&v| low(v));
    if a.is_empty() || b.is_empty() {
        return -1.0;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (w0, w1) = (a.len() as f64, b.len() as f64);
    w0 * w1 * (mean(&a) - mean(&b)).powi(2)
}

/// Tries every split between the 256 equal-width bins over the value range
/// and returns the low-class test of the best one (ties to the lowest bin).
/// Variances are computed from bin indices, matching a histogram method.
pub fn otsu_exhaustive(plane: &ImagePlane) -> impl Fn(f32) -> bool {
    let (lo, hi) = plane.min_max();
    let width = (hi - lo) as f64 / 256.0;
    let bin = move |v: f32| (((v - lo) as f64 / width) as usize).min(255);
    let bins: Vec<f64> = plane.data().iter().map(|&v| bin(v) as f64).collect();
    let mut best = (0usize, -1.0);
    for t in 0..255 {
        let var = between_class(&bins, |b| b <= t as f64);
        if var > best.1 {
            best = (t, var);
        }
    }
    let t = best.0;
    move |v: f32| bin(v) <= t
}

/// LBP code of one pixel, one comparison per bit, clockwise from the
/// top-left neighbour with the first neighbour in the most significant bit.
pub fn lbp_oracle(gray: &ImagePlane, x: u32, y: u32) -> u8 {
    let (w, h) = (gray.width() as i64, gray.height() as i64);
    let at = |dx: i64, dy: i64| {
        let nx = (x as i64 + dx).clamp(0, w - 1) as u32;
        let ny = (y as i64 + dy).clamp(0, h - 1) as u32;
        gray.get(nx, ny, 0)
    };
    let c = gray.get(x, y, 0);
    let ring = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];
    let mut code = 0u8;
    for (bit, (dx, dy)) in ring.iter().enumerate() {
        if at(*dx, *dy) >= c {
            code |= 1 << (7 - bit);
        }
    }
    code
}

/// Direct six-loop convolution with zero padding.
pub fn conv_naive(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let [n, c, h, w] = x.shape();
    let (k, s, p) = (conv.k, conv.stride, conv.pad as isize);
    let oh = (h + 2 * conv.pad - k) / s + 1;
    let ow = (w + 2 * conv.pad - k) / s + 1;
    let mut out = Tensor::zeros([n, conv.out_ch, oh, ow]);
    for b in 0..n {
        for o in 0..conv.out_ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias[o];
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * s) as isize - p + ky as isize;
                                let ix = (ox * s) as isize - p + kx as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let wv = conv.weight[((o * c + ci) * k + ky) * k + kx];
                                acc += wv * x.data()[((b * c + ci) * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    out.data_mut()[((b * conv.out_ch + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

/// Per pixel: copy the pixel of whichever region's mask is set.
pub fn select_oracle(regions: [&ImagePlane; 3], masks: [&ImagePlane; 3]) -> ImagePlane {
    let f = regions[0];
    ImagePlane::from_fn(f.width(), f.height(), f.channels(), |x, y, c| {
        let r = (0..3).find(|&i| masks[i].get(x, y, 0) == 1.0).expect("partition");
        regions[r].get(x, y, c)
    })
}

/// Mean absolute difference over the pixels where `mask` is set.
pub fn masked_l1(a: &ImagePlane, b: &ImagePlane, mask: &ImagePlane) -> f64 {
    let c = a.channels() as usize;
    let (mut s, mut n) = (0.0, 0usize);
    for p in 0..mask.pixel_count() {
        if mask.data()[p] == 1.0 {
            for k in 0..c {
                s += (a.data()[p * c + k] - b.data()[p * c + k]).abs() as f64;
            }
            n += c;
        }
    }
    s / n.max(1) as f64
}

/// Binary dilation with a square of radius `r`.
pub fn dilate(mask: &ImagePlane, r: u32) -> ImagePlane {
    let (w, h) = (mask.width(), mask.height());
    ImagePlane::from_fn(w, h, 1, |x, y, _| {
        let hit = (y.saturating_sub(r)..=(y + r).min(h - 1))
            .any(|yy| (x.saturating_sub(r)..=(x + r).min(w - 1)).any(|xx| mask.get(xx, yy, 0) == 1.0));
        hit as u8 as f32
    })
}
