use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

use crate::error::{ensure_shape, Result};
use crate::image::ImagePlane;

/// Element type of tensors: `f32` for production, `f64` for gradient checks.
pub trait Scalar: Float + FromPrimitive + Default + Debug + Sum + Send + Sync + 'static {
    /// `C = alpha * A * B + beta * C` on strided row/column layouts.
    ///
    /// # Safety
    /// Strides and dimensions must describe valid regions of the three buffers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of_f32(v: f32) -> Self;
    fn as_f32(self) -> f32;
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("representable")
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
    fn of_f32(v: f32) -> Self {
        v
    }
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
    fn of_f32(v: f32) -> Self {
        v as f64
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
}

/// `C (m x n) = op(A) (m x k) * op(B) (k x n) [+ C]`, row-major. With
/// `trans_a`, `a` is stored as `k x m`; with `trans_b`, `b` is stored `n x k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: the assertion above bounds every access implied by the strides.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Dense `(batch, channels, height, width)` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        ensure_shape!(
            data.len() == shape.iter().product::<usize>(),
            "tensor {:?} needs {} values, got {}",
            shape,
            shape.iter().product::<usize>(),
            data.len()
        );
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }
    pub fn batch(&self) -> usize {
        self.shape[0]
    }
    pub fn channels(&self) -> usize {
        self.shape[1]
    }
    pub fn height(&self) -> usize {
        self.shape[2]
    }
    pub fn width(&self) -> usize {
        self.shape[3]
    }
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }
    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let l = self.sample_len();
        &self.data[n * l..(n + 1) * l]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let l = self.sample_len();
        &mut self.data[n * l..(n + 1) * l]
    }

    /// Sample `n` as its own batch-1 tensor.
    pub fn slice_batch(&self, n: usize) -> Tensor<T> {
        Tensor {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.sample(n).to_vec(),
        }
    }

    /// Stacks batch-1 (or larger) tensors of equal per-sample shape.
    pub fn cat_batch(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts.first().ok_or_else(|| crate::Error::Shape("empty batch".into()))?;
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            ensure_shape!(p.shape[1..] == first.shape[1..], "batch members differ in shape");
            data.extend_from_slice(&p.data);
            n += p.shape[0];
        }
        Ok(Tensor {
            shape: [n, first.shape[1], first.shape[2], first.shape[3]],
            data,
        })
    }

    /// Channel concatenation.
    pub fn cat_channels(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        ensure_shape!(
            a.shape[0] == b.shape[0] && a.shape[2..] == b.shape[2..],
            "cannot concatenate {:?} and {:?}",
            a.shape,
            b.shape
        );
        let mut out = Tensor::zeros([a.shape[0], a.shape[1] + b.shape[1], a.shape[2], a.shape[3]]);
        for n in 0..a.shape[0] {
            let dst = out.sample_mut(n);
            let la = a.sample_len();
            dst[..la].copy_from_slice(a.sample(n));
            dst[la..].copy_from_slice(b.sample(n));
        }
        Ok(out)
    }

    /// Splits channels `[0, c)` and `[c, C)`.
    pub fn split_channels(&self, c: usize) -> (Tensor<T>, Tensor<T>) {
        let [n, ch, h, w] = self.shape;
        let mut a = Tensor::zeros([n, c, h, w]);
        let mut b = Tensor::zeros([n, ch - c, h, w]);
        for i in 0..n {
            let s = self.sample(i);
            a.sample_mut(i).copy_from_slice(&s[..c * h * w]);
            b.sample_mut(i).copy_from_slice(&s[c * h * w..]);
        }
        (a, b)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::lit(v.to_f64().unwrap())).collect(),
        }
    }

    /// Batch-1 tensor from an interleaved image plane.
    pub fn from_plane(plane: &ImagePlane) -> Tensor<T> {
        let (w, h, c) = (plane.width() as usize, plane.height() as usize, plane.channels() as usize);
        let mut data = vec![T::zero(); w * h * c];
        for (p, px) in plane.data().chunks_exact(c).enumerate() {
            for (k, &v) in px.iter().enumerate() {
                data[k * w * h + p] = T::of_f32(v);
            }
        }
        Tensor {
            shape: [1, c, h, w],
            data,
        }
    }

    /// Sample `n` back to an interleaved image plane.
    pub fn to_plane(&self, n: usize) -> ImagePlane {
        let [_, c, h, w] = self.shape;
        let s = self.sample(n);
        let mut data = vec![0f32; w * h * c];
        for k in 0..c {
            for p in 0..w * h {
                data[p * c + k] = s[k * w * h + p].as_f32();
            }
        }
        ImagePlane::from_vec(w as u32, h as u32, c as u32, data).expect("sized")
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
