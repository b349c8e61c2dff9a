//! Gated-convolution encoder/decoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{Conv2d, ConvCache, ConvGrad};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `O = sigmoid(Conv(W_g, I)) * Conv(W_f, I)`.
///
/// Both kernels live in one convolution with `2 * out_ch` outputs: rows
/// `[0, out_ch)` are `W_f`, rows `[out_ch, 2 * out_ch)` are `W_g`.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedConv<T = f32> {
    pub out_ch: usize,
    pub conv: Conv2d<T>,
}

pub struct GatedCache<T> {
    conv: ConvCache<T>,
    features: Tensor<T>,
    gate: Tensor<T>,
}

impl<T: Scalar> GatedConv<T> {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            out_ch,
            conv: Conv2d::kaiming(in_ch, 2 * out_ch, 3, stride, rng),
        }
    }

    fn split(&self) -> usize {
        self.out_ch * self.conv.in_ch * self.conv.k * self.conv.k
    }

    pub fn feature_weights(&self) -> &[T] {
        &self.conv.weight[..self.split()]
    }
    pub fn gate_weights(&self) -> &[T] {
        &self.conv.weight[self.split()..]
    }
    pub fn feature_weights_mut(&mut self) -> &mut [T] {
        let s = self.split();
        &mut self.conv.weight[..s]
    }
    pub fn gate_weights_mut(&mut self) -> &mut [T] {
        let s = self.split();
        &mut self.conv.weight[s..]
    }
    pub fn feature_bias_mut(&mut self) -> &mut [T] {
        &mut self.conv.bias[..self.out_ch]
    }
    pub fn gate_bias_mut(&mut self) -> &mut [T] {
        let o = self.out_ch;
        &mut self.conv.bias[o..]
    }

    /// Returns the output plus the gate tensor (kept for inspection).
    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, GatedCache<T>) {
        let (z, conv) = self.conv.forward(x);
        let (features, pre_gate) = z.split_channels(self.out_ch);
        let gate = pre_gate.map(sigmoid);
        let mut out = features.clone();
        for (o, g) in out.data_mut().iter_mut().zip(gate.data()) {
            *o = *o * *g;
        }
        (out, GatedCache { conv, features, gate })
    }

    pub fn backward(
        &self,
        cache: &GatedCache<T>,
        dout: &Tensor<T>,
        grad: &mut ConvGrad<T>,
        need_input: bool,
    ) -> Option<Tensor<T>> {
        let mut df = dout.clone();
        let mut dg = dout.clone();
        let (f, g) = (cache.features.data(), cache.gate.data());
        for i in 0..df.data().len() {
            let d = dout.data()[i];
            df.data_mut()[i] = d * g[i];
            dg.data_mut()[i] = d * f[i] * g[i] * (T::one() - g[i]);
        }
        let dz = Tensor::cat_channels(&df, &dg).expect("same layout");
        self.conv.backward(&cache.conv, &dz, Some(grad), need_input)
    }

    pub fn gate_of(cache: &GatedCache<T>) -> &Tensor<T> {
        &cache.gate
    }
}

/// Nearest-neighbour 2x upsampling cropped to `(h, w)`.
pub fn upsample_to<T: Scalar>(x: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let [n, c, ih, iw] = x.shape();
    let mut out = Tensor::zeros([n, c, h, w]);
    for i in 0..n * c {
        let src = &x.data()[i * ih * iw..(i + 1) * ih * iw];
        let dst = &mut out.data_mut()[i * h * w..(i + 1) * h * w];
        for y in 0..h {
            for xx in 0..w {
                dst[y * w + xx] = src[(y / 2).min(ih - 1) * iw + (xx / 2).min(iw - 1)];
            }
        }
    }
    out
}

pub fn upsample_backward<T: Scalar>(dout: &Tensor<T>, ih: usize, iw: usize) -> Tensor<T> {
    let [n, c, h, w] = dout.shape();
    let mut dx = Tensor::zeros([n, c, ih, iw]);
    for i in 0..n * c {
        let src = &dout.data()[i * h * w..(i + 1) * h * w];
        let dst = &mut dx.data_mut()[i * ih * iw..(i + 1) * ih * iw];
        for y in 0..h {
            for xx in 0..w {
                let t = (y / 2).min(ih - 1) * iw + (xx / 2).min(iw - 1);
                dst[t] = dst[t] + src[y * w + xx];
            }
        }
    }
    dx
}

/// Encoder/decoder topology.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub in_ch: usize,
    pub out_ch: usize,
    /// Channel width per level; levels after the first downsample by 2.
    pub widths: Vec<usize>,
    /// Extra same-resolution gated layer at the deepest level.
    pub bottleneck: bool,
}

impl Architecture {
    /// Foreground network: three levels, 16/32/64 channels.
    pub fn foreground() -> Self {
        Self {
            in_ch: super::INPUT_CHANNELS,
            out_ch: 3,
            widths: vec![16, 32, 64],
            bottleneck: false,
        }
    }

    /// Near-background network: two levels, 8/16 channels.
    pub fn near_background() -> Self {
        Self {
            in_ch: super::INPUT_CHANNELS,
            out_ch: 3,
            widths: vec![8, 16],
            bottleneck: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) || self.in_ch == 0 || self.out_ch == 0 {
            return Err(Error::InvalidArgument(format!("invalid architecture {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    pub arch: Architecture,
    pub encoder: Vec<GatedConv<T>>,
    pub bottleneck: Option<GatedConv<T>>,
    /// `decoder[i]` produces level `i` from level `i + 1` and the level-`i` skip.
    pub decoder: Vec<GatedConv<T>>,
    pub head: Conv2d<T>,
}

pub struct Tape<T> {
    enc: Vec<GatedCache<T>>,
    enc_shapes: Vec<[usize; 4]>,
    bottleneck: Option<GatedCache<T>>,
    dec: Vec<GatedCache<T>>,
    /// Shape of the deeper tensor fed to each decoder's upsample.
    up_shapes: Vec<[usize; 4]>,
    head: ConvCache<T>,
}

impl<T> Tape<T> {
    pub fn gates(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.enc
            .iter()
            .chain(self.bottleneck.iter())
            .chain(self.dec.iter())
            .map(|c| &c.gate)
    }
}

/// Parameter gradients, in the order of [`Network::params`].
pub type Grads<T> = Vec<ConvGrad<T>>;

impl<T: Scalar> Network<T> {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = &arch.widths;
        let mut encoder = vec![GatedConv::new(arch.in_ch, w[0], 1, &mut rng)];
        for i in 1..w.len() {
            encoder.push(GatedConv::new(w[i - 1], w[i], 2, &mut rng));
        }
        let deepest = *w.last().unwrap();
        let bottleneck = arch.bottleneck.then(|| GatedConv::new(deepest, deepest, 1, &mut rng));
        let decoder = (0..w.len() - 1)
            .map(|i| GatedConv::new(w[i + 1] + w[i], w[i], 1, &mut rng))
            .collect();
        let head = Conv2d::kaiming(w[0], arch.out_ch, 3, 1, &mut rng);
        Ok(Self {
            arch,
            encoder,
            bottleneck,
            decoder,
            head,
        })
    }

    /// Convolutions in canonical order: encoder, bottleneck, decoder
    /// (shallowest first), head.
    pub fn convs(&self) -> Vec<&Conv2d<T>> {
        let mut v: Vec<&Conv2d<T>> = self.encoder.iter().map(|g| &g.conv).collect();
        v.extend(self.bottleneck.iter().map(|g| &g.conv));
        v.extend(self.decoder.iter().map(|g| &g.conv));
        v.push(&self.head);
        v
    }

    pub fn convs_mut(&mut self) -> Vec<&mut Conv2d<T>> {
        let mut v: Vec<&mut Conv2d<T>> = self.encoder.iter_mut().map(|g| &mut g.conv).collect();
        v.extend(self.bottleneck.iter_mut().map(|g| &mut g.conv));
        v.extend(self.decoder.iter_mut().map(|g| &mut g.conv));
        v.push(&mut self.head);
        v
    }

    pub fn param_count(&self) -> usize {
        self.convs().iter().map(|c| c.param_count()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        self.convs().into_iter().map(ConvGrad::zeros_like).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let cc = |c: &Conv2d<T>| Conv2d {
            in_ch: c.in_ch,
            out_ch: c.out_ch,
            k: c.k,
            stride: c.stride,
            pad: c.pad,
            weight: c.weight.iter().map(|v| U::lit(v.to_f64().unwrap())).collect(),
            bias: c.bias.iter().map(|v| U::lit(v.to_f64().unwrap())).collect(),
        };
        let cg = |g: &GatedConv<T>| GatedConv {
            out_ch: g.out_ch,
            conv: cc(&g.conv),
        };
        Network {
            arch: self.arch.clone(),
            encoder: self.encoder.iter().map(cg).collect(),
            bottleneck: self.bottleneck.as_ref().map(cg),
            decoder: self.decoder.iter().map(cg).collect(),
            head: cc(&self.head),
        }
    }

    pub fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.arch.in_ch {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {}",
                self.arch.in_ch,
                x.channels()
            )));
        }
        if x.height() == 0 || x.width() == 0 {
            return Err(Error::Shape("empty network input".into()));
        }
        Ok(())
    }

    /// Inference without a tape: each layer's im2col buffer is freed as soon
    /// as the layer is done, so peak memory is one layer's worth.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut cur = x.clone();
        for layer in &self.encoder {
            cur = layer.forward(&cur).0;
            skips.push(cur.clone());
        }
        if let Some(b) = &self.bottleneck {
            cur = b.forward(&cur).0;
        }
        for i in (0..self.decoder.len()).rev() {
            let skip = &skips[i];
            let cat = Tensor::cat_channels(&upsample_to(&cur, skip.height(), skip.width()), skip)?;
            cur = self.decoder[i].forward(&cat).0;
        }
        Ok(self.head.forward(&cur).0)
    }

    pub fn forward_tape(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut enc = Vec::new();
        let mut cur = x.clone();
        for layer in &self.encoder {
            let (y, c) = layer.forward(&cur);
            enc.push(c);
            skips.push(y.clone());
            cur = y;
        }
        let enc_shapes = skips.iter().map(|s| s.shape()).collect();
        let bottleneck = self.bottleneck.as_ref().map(|b| {
            let (y, c) = b.forward(&cur);
            cur = y;
            c
        });
        let mut dec: Vec<GatedCache<T>> = Vec::new();
        let mut up_shapes = Vec::new();
        for i in (0..self.decoder.len()).rev() {
            let skip = &skips[i];
            up_shapes.push(cur.shape());
            let up = upsample_to(&cur, skip.height(), skip.width());
            let cat = Tensor::cat_channels(&up, skip)?;
            let (y, c) = self.decoder[i].forward(&cat);
            dec.push(c);
            cur = y;
        }
        dec.reverse();
        up_shapes.reverse();
        let (out, head) = self.head.forward(&cur);
        Ok((
            out,
            Tape {
                enc,
                enc_shapes,
                bottleneck,
                dec,
                up_shapes,
                head,
            },
        ))
    }

    /// Backpropagates `dout` and returns parameter gradients.
    pub fn backward(&self, tape: &Tape<T>, dout: &Tensor<T>) -> Grads<T> {
        let mut grads = self.zero_grads();
        let n_enc = self.encoder.len();
        let n_bot = self.bottleneck.is_some() as usize;
        let head_idx = grads.len() - 1;
        let mut d = self.head.backward(&tape.head, dout, Some(&mut grads[head_idx]), true).unwrap();

        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; n_enc];
        for i in 0..self.decoder.len() {
            let gi = n_enc + n_bot + i;
            let dcat = self.decoder[i]
                .backward(&tape.dec[i], &d, &mut grads[gi], true)
                .unwrap();
            let deeper = tape.up_shapes[i];
            let (dup, dskip) = dcat.split_channels(deeper[1]);
            skip_grads[i] = Some(dskip);
            d = upsample_backward(&dup, deeper[2], deeper[3]);
        }
        if let (Some(b), Some(c)) = (&self.bottleneck, &tape.bottleneck) {
            d = b.backward(c, &d, &mut grads[n_enc], true).unwrap();
        }
        for i in (0..n_enc).rev() {
            if i < n_enc - 1 {
                if let Some(s) = skip_grads[i].take() {
                    for (a, b) in d.data_mut().iter_mut().zip(s.data()) {
                        *a = *a + *b;
                    }
                }
            }
            debug_assert_eq!(d.shape(), tape.enc_shapes[i]);
            let need = i > 0;
            match self.encoder[i].backward(&tape.enc[i], &d, &mut grads[i], need) {
                Some(dx) => d = dx,
                None => break,
            }
        }
        grads
    }
}
