//! Float rasters shared by every stage of the pipeline.
//!
//! An [`ImagePlane`] is a row-major, channel-interleaved `f32` buffer. Color
//! frames, G-buffer channels, masks and motion fields are all planes; only the
//! channel count differs.

mod io;
mod preview;

pub use io::{read_plane, read_plane_from, write_plane, write_plane_to, PFEX_MAGIC, PFEX_VERSION};
pub use preview::{to_png8, write_png8};

use crate::error::{ensure_shape, Error, Result};

/// Denominator floor used by [`ImagePlane::div_guarded`].
pub const DIV_EPSILON: f32 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    width: u32,
    height: u32,
    channels: u32,
    data: Vec<f32>,
}

impl ImagePlane {
    pub fn new(width: u32, height: u32, channels: u32) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: u32, height: u32, channels: u32, value: f32) -> Self {
        let len = width as usize * height as usize * channels as usize;
        Self {
            width,
            height,
            channels,
            data: vec![value; len],
        }
    }

    pub fn from_vec(width: u32, height: u32, channels: u32, data: Vec<f32>) -> Result<Self> {
        let expected = (width as usize)
            .checked_mul(height as usize)
            .and_then(|n| n.checked_mul(channels as usize))
            .ok_or_else(|| Error::Shape(format!("{width}x{height}x{channels} overflows")))?;
        ensure_shape!(
            data.len() == expected,
            "buffer of {} values does not match {width}x{height}x{channels}",
            data.len()
        );
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a plane by evaluating `f(x, y, c)` at every sample.
    pub fn from_fn(
        width: u32,
        height: u32,
        channels: u32,
        mut f: impl FnMut(u32, u32, u32) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * channels as usize);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> u32 {
        self.channels
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn same_size(&self, other: &ImagePlane) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn same_shape(&self, other: &ImagePlane) -> bool {
        self.same_size(other) && self.channels == other.channels
    }

    pub fn check_same_size(&self, other: &ImagePlane, what: &str) -> Result<()> {
        ensure_shape!(
            self.same_size(other),
            "{what}: {}x{} vs {}x{}",
            self.width,
            self.height,
            other.width,
            other.height
        );
        Ok(())
    }

    pub fn check_channels(&self, channels: u32, what: &str) -> Result<()> {
        ensure_shape!(
            self.channels == channels,
            "{what}: expected {channels} channels, got {}",
            self.channels
        );
        Ok(())
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32, c: u32) -> usize {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        ((y as usize * self.width as usize) + x as usize) * self.channels as usize + c as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: u32) -> f32 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: u32, v: f32) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    /// All channels of pixel `(x, y)`.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[f32] {
        let i = self.index(x, y, 0);
        &self.data[i..i + self.channels as usize]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [f32] {
        let i = self.index(x, y, 0);
        let c = self.channels as usize;
        &mut self.data[i..i + c]
    }

    /// Pixel `p` in flat pixel order (`y * width + x`).
    #[inline]
    pub fn pixel_at(&self, p: usize) -> &[f32] {
        let c = self.channels as usize;
        &self.data[p * c..(p + 1) * c]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data
            .chunks_exact(self.width as usize * self.channels as usize)
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, f32> {
        let stride = self.width as usize * self.channels as usize;
        self.data.chunks_exact_mut(stride)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn zip_map(&self, other: &ImagePlane, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        ensure_shape!(
            self.same_shape(other),
            "elementwise op on {}x{}x{} and {}x{}x{}",
            self.width,
            self.height,
            self.channels,
            other.width,
            other.height,
            other.channels
        );
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..*self
        })
    }

    pub fn add(&self, other: &ImagePlane) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ImagePlane) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ImagePlane) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f32) -> Self {
        self.map(|v| v * s)
    }

    /// Elementwise `self / d` with the denominator's magnitude floored at
    /// [`DIV_EPSILON`] (sign preserved, zero treated as positive).
    pub fn div_guarded(&self, d: &ImagePlane) -> Result<Self> {
        self.zip_map(d, guarded_div)
    }

    /// Multiplies every channel of each pixel by the matching pixel of a
    /// single-channel plane.
    pub fn mul_broadcast(&self, mono: &ImagePlane) -> Result<Self> {
        self.check_same_size(mono, "broadcast multiply")?;
        mono.check_channels(1, "broadcast multiply")?;
        let c = self.channels as usize;
        let mut out = self.clone();
        for (px, &m) in out.data.chunks_exact_mut(c).zip(&mono.data) {
            px.iter_mut().for_each(|v| *v *= m);
        }
        Ok(out)
    }

    pub fn channel(&self, c: u32) -> ImagePlane {
        assert!(c < self.channels, "channel {c} out of range");
        let n = self.channels as usize;
        ImagePlane {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self
                .data
                .iter()
                .skip(c as usize)
                .step_by(n)
                .copied()
                .collect(),
        }
    }

    /// Interleaves several planes into one, in argument order.
    pub fn stack(planes: &[&ImagePlane]) -> Result<ImagePlane> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidArgument("stack of zero planes".into()))?;
        for p in planes {
            first.check_same_size(p, "stack")?;
        }
        let channels: u32 = planes.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(first.pixel_count() * channels as usize);
        for i in 0..first.pixel_count() {
            for p in planes {
                data.extend_from_slice(p.pixel_at(i));
            }
        }
        ImagePlane::from_vec(first.width, first.height, channels, data)
    }

    /// Rec. 601 luma of an RGB (or RGBA) plane.
    pub fn luma(&self) -> Result<ImagePlane> {
        ensure_shape!(self.channels >= 3, "luma of a {}-channel plane", self.channels);
        let c = self.channels as usize;
        Ok(ImagePlane {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self
                .data
                .chunks_exact(c)
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect(),
        })
    }

    /// Copies the window `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Result<ImagePlane> {
        ensure_shape!(
            x0 + w <= self.width && y0 + h <= self.height,
            "crop {w}x{h}+{x0}+{y0} outside {}x{}",
            self.width,
            self.height
        );
        let c = self.channels as usize;
        let mut data = Vec::with_capacity(w as usize * h as usize * c);
        for y in y0..y0 + h {
            let start = self.index(x0, y, 0);
            data.extend_from_slice(&self.data[start..start + w as usize * c]);
        }
        ImagePlane::from_vec(w, h, self.channels, data)
    }

    /// Writes `patch` into this plane with its top-left corner at `(x0, y0)`.
    pub fn paste(&mut self, patch: &ImagePlane, x0: u32, y0: u32) -> Result<()> {
        ensure_shape!(
            patch.channels == self.channels
                && x0 + patch.width <= self.width
                && y0 + patch.height <= self.height,
            "paste {}x{}x{} at ({x0},{y0}) into {}x{}x{}",
            patch.width,
            patch.height,
            patch.channels,
            self.width,
            self.height,
            self.channels
        );
        let c = self.channels as usize;
        for (row, src) in patch.rows().enumerate() {
            let start = self.index(x0, y0 + row as u32, 0);
            self.data[start..start + patch.width as usize * c].copy_from_slice(src);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn max_abs_diff(&self, other: &ImagePlane) -> Result<f32> {
        ensure_shape!(self.same_shape(other), "max_abs_diff shape mismatch");
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }
}

#[inline]
pub fn guarded_div(n: f32, d: f32) -> f32 {
    if d.abs() >= DIV_EPSILON {
        n / d
    } else if d < 0.0 {
        n / -DIV_EPSILON
    } else {
        n / DIV_EPSILON
    }
}

/// Binary single-channel plane from a predicate over pixel indices.
pub fn mask_from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> ImagePlane {
    ImagePlane::from_fn(width, height, 1, |x, y, _| if f(x, y) { 1.0 } else { 0.0 })
}
