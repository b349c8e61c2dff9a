//! 2-D convolution via im2col and GEMM, with the backward pass.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{gemm, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T = f32> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// `out_ch x (in_ch * k * k)`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// What the backward pass needs from the forward pass.
#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    in_shape: [usize; 4],
    /// One column matrix per sample, `(in_ch * k * k) x (oh * ow)`.
    cols: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvGrad<T> {
    pub fn zeros_like(conv: &Conv2d<T>) -> Self {
        Self {
            weight: vec![T::zero(); conv.weight.len()],
            bias: vec![T::zero(); conv.bias.len()],
        }
    }
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_ch: usize, out_ch: usize, k: usize, stride: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            k,
            stride,
            pad: k / 2,
            weight: vec![T::zero(); out_ch * in_ch * k * k],
            bias: vec![T::zero(); out_ch],
        }
    }

    /// Kaiming-uniform over fan-in, zero biases.
    pub fn kaiming(in_ch: usize, out_ch: usize, k: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut c = Self::zeros(in_ch, out_ch, k, stride);
        let bound = (6.0 / (in_ch * k * k) as f64).sqrt();
        for w in &mut c.weight {
            *w = T::lit(rng.random_range(-bound..bound));
        }
        c
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let f = |n: usize| (n + 2 * self.pad - self.k) / self.stride + 1;
        (f(h), f(w))
    }

    fn col_rows(&self) -> usize {
        self.in_ch * self.k * self.k
    }

    fn im2col(&self, x: &[T], h: usize, w: usize, cols: &mut [T]) {
        let (oh, ow) = self.out_size(h, w);
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        for c in 0..self.in_ch {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = (oy * s) as isize - p + ky as isize;
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            drow.fill(T::zero());
                            continue;
                        }
                        let src = &x[c * h * w + iy as usize * w..][..w];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * s) as isize - p + kx as isize;
                            *d = if ix < 0 || ix >= w as isize { T::zero() } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], h: usize, w: usize, dx: &mut [T]) {
        let (oh, ow) = self.out_size(h, w);
        let (k, s, p) = (self.k, self.stride, self.pad as isize);
        for c in 0..self.in_ch {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = (oy * s) as isize - p + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut dx[c * h * w + iy as usize * w..][..w];
                        for ox in 0..ow {
                            let ix = (ox * s) as isize - p + kx as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] = dst[ix as usize] + src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, ConvCache<T>) {
        let [n, c, h, w] = x.shape();
        assert_eq!(c, self.in_ch, "conv expects {} input channels", self.in_ch);
        let (oh, ow) = self.out_size(h, w);
        let mut out = Tensor::zeros([n, self.out_ch, oh, ow]);
        let mut cache = ConvCache {
            in_shape: x.shape(),
            cols: Vec::with_capacity(n),
        };
        for i in 0..n {
            let mut cols = vec![T::zero(); self.col_rows() * oh * ow];
            self.im2col(x.sample(i), h, w, &mut cols);
            let o = out.sample_mut(i);
            for (oc, b) in self.bias.iter().enumerate() {
                o[oc * oh * ow..(oc + 1) * oh * ow].fill(*b);
            }
            gemm(self.out_ch, self.col_rows(), oh * ow, &self.weight, false, &cols, false, o, true);
            cache.cols.push(cols);
        }
        (out, cache)
    }

    /// Accumulates parameter gradients into `grad` and returns the input
    /// gradient when `need_input` is set.
    pub fn backward(
        &self,
        cache: &ConvCache<T>,
        dout: &Tensor<T>,
        grad: Option<&mut ConvGrad<T>>,
        need_input: bool,
    ) -> Option<Tensor<T>> {
        let [n, _, h, w] = cache.in_shape;
        let (oh, ow) = self.out_size(h, w);
        let hw = oh * ow;
        if let Some(g) = grad {
            for i in 0..n {
                let d = dout.sample(i);
                for oc in 0..self.out_ch {
                    g.bias[oc] = g.bias[oc] + d[oc * hw..(oc + 1) * hw].iter().copied().sum::<T>();
                }
                gemm(self.out_ch, hw, self.col_rows(), d, false, &cache.cols[i], true, &mut g.weight, true);
            }
        }
        need_input.then(|| {
            let mut dx = Tensor::zeros(cache.in_shape);
            let mut dcols = vec![T::zero(); self.col_rows() * hw];
            for i in 0..n {
                gemm(self.col_rows(), self.out_ch, hw, &self.weight, true, dout.sample(i), false, &mut dcols, false);
                self.col2im(&dcols, h, w, dx.sample_mut(i));
            }
            dx
        })
    }
}
