//! Training objective: masked L1 terms plus perceptual and style terms on a
//! frozen feature extractor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{Conv2d, ConvCache};
use super::tensor::{gemm, Scalar, Tensor};
use crate::error::{Error, Result};

pub const FEATURE_SEED: u64 = 0xFEED;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub l1: f64,
    pub hole: f64,
    pub valid: f64,
    pub vgg: f64,
    pub style: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 1.0,
            hole: 0.5,
            valid: 0.5,
            vgg: 0.1,
            style: 0.01,
        }
    }
}

impl LossWeights {
    pub fn without_perceptual(&self) -> Self {
        Self {
            vgg: 0.0,
            style: 0.0,
            ..self.clone()
        }
    }

    pub fn uses_features(&self) -> bool {
        self.vgg != 0.0 || self.style != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.l1, self.hole, self.valid, self.vgg, self.style];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be nonnegative: {self:?}")));
        }
        Ok(())
    }
}

/// Frozen three-stage convolutional feature extractor (8, 16, 32 channels,
/// stride 2 between stages, ReLU), standing in for a pretrained VGG-16.
#[derive(Clone, Debug)]
pub struct FeatureExtractor<T = f32> {
    pub stages: [Conv2d<T>; 3],
}

pub struct FeatureTape<T> {
    convs: Vec<ConvCache<T>>,
    pub features: Vec<Tensor<T>>,
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn frozen() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(FEATURE_SEED);
        Self {
            stages: [
                Conv2d::kaiming(3, 8, 3, 1, &mut rng),
                Conv2d::kaiming(8, 16, 3, 2, &mut rng),
                Conv2d::kaiming(16, 32, 3, 2, &mut rng),
            ],
        }
    }

    pub fn features(&self, img: &Tensor<T>) -> Vec<Tensor<T>> {
        self.forward(img).features
    }

    pub fn forward(&self, img: &Tensor<T>) -> FeatureTape<T> {
        let mut convs = Vec::new();
        let mut features = Vec::new();
        let mut cur = img.clone();
        for st in &self.stages {
            let (z, c) = st.forward(&cur);
            convs.push(c);
            cur = z.map(|v| v.max(T::zero()));
            features.push(cur.clone());
        }
        FeatureTape { convs, features }
    }

    /// Input gradient given one gradient per feature map.
    pub fn backward(&self, tape: &FeatureTape<T>, dfeat: &[Tensor<T>]) -> Tensor<T> {
        let mut d: Option<Tensor<T>> = None;
        for i in (0..3).rev() {
            let mut g = dfeat[i].clone();
            if let Some(up) = d.take() {
                for (a, b) in g.data_mut().iter_mut().zip(up.data()) {
                    *a = *a + *b;
                }
            }
            for (gv, f) in g.data_mut().iter_mut().zip(tape.features[i].data()) {
                if *f <= T::zero() {
                    *gv = T::zero();
                }
            }
            d = self.stages[i].backward(&tape.convs[i], &g, None, true);
        }
        d.expect("three stages")
    }
}

/// `G = F F^T / (C * H * W)` for each sample of a feature tensor; returns
/// `n` row-major `C x C` matrices.
pub fn gram<T: Scalar>(f: &Tensor<T>) -> Vec<Vec<T>> {
    let [n, c, h, w] = f.shape();
    let norm = T::lit((c * h * w) as f64);
    (0..n)
        .map(|i| {
            let mut g = vec![T::zero(); c * c];
            let s = f.sample(i);
            gemm(c, h * w, c, s, false, s, true, &mut g, false);
            g.iter_mut().for_each(|v| *v = *v / norm);
            g
        })
        .collect()
}

#[inline]
fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub l1: f64,
    pub hole: f64,
    pub valid: f64,
    pub vgg: f64,
    pub style: f64,
    pub total: f64,
}

/// Loss of a batch (mean over samples) and its gradient with respect to
/// `pred`.
///
/// Each norm is averaged over its elements, so the terms are comparable across
/// patch sizes. `hole` is the hole mask with `1 = valid`, one channel.
pub fn loss<T: Scalar>(
    pred: &Tensor<T>,
    truth: &Tensor<T>,
    hole: &Tensor<T>,
    weights: &LossWeights,
    feat: &FeatureExtractor<T>,
) -> Result<(LossParts, Tensor<T>)> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!("pred {:?} vs truth {:?}", pred.shape(), truth.shape())));
    }
    let [n, c, h, w] = pred.shape();
    if hole.shape() != [n, 1, h, w] {
        return Err(Error::Shape(format!("hole mask {:?} for prediction {:?}", hole.shape(), pred.shape())));
    }
    let mut parts = LossParts::default();
    let mut grad = Tensor::zeros(pred.shape());
    let per = T::lit(1.0 / (n * c * h * w) as f64);
    let (wl1, wh, wv) = (T::lit(weights.l1), T::lit(weights.hole), T::lit(weights.valid));
    let (mut s_l1, mut s_h, mut s_v) = (T::zero(), T::zero(), T::zero());
    for b in 0..n {
        let (p, t, m) = (pred.sample(b), truth.sample(b), hole.sample(b));
        let g = grad.sample_mut(b);
        for ch in 0..c {
            for q in 0..h * w {
                let i = ch * h * w + q;
                let d = p[i] - t[i];
                let a = d.abs();
                let mv = m[q];
                s_l1 = s_l1 + a;
                s_h = s_h + a * (T::one() - mv);
                s_v = s_v + a * mv;
                g[i] = sign(d) * (wl1 + wh * (T::one() - mv) + wv * mv) * per;
            }
        }
    }
    parts.l1 = (s_l1 * per).to_f64().unwrap();
    parts.hole = (s_h * per).to_f64().unwrap();
    parts.valid = (s_v * per).to_f64().unwrap();

    if weights.uses_features() {
        let tp = feat.forward(pred);
        let tt = feat.forward(truth);
        let mut dfeat = Vec::with_capacity(3);
        let (wvgg, wsty) = (T::lit(weights.vgg), T::lit(weights.style));
        for (fp, ft) in tp.features.iter().zip(&tt.features) {
            let mut df = Tensor::zeros(fp.shape());
            let k = T::lit(1.0 / fp.data().len() as f64);
            let mut s = T::zero();
            for ((d, a), b) in df.data_mut().iter_mut().zip(fp.data()).zip(ft.data()) {
                s = s + (*a - *b).abs();
                *d = wvgg * sign(*a - *b) * k;
            }
            parts.vgg += (s * k).to_f64().unwrap();

            let [_, fc, fh, fw] = fp.shape();
            let (gp, gt) = (gram(fp), gram(ft));
            let gk = T::lit(1.0 / (n * fc * fc) as f64);
            let norm = T::lit(1.0 / (fc * fh * fw) as f64);
            for b in 0..n {
                // dL/dG, then dG/dF: dF = (S + S^T) F / (C H W)
                let mut sgn = vec![T::zero(); fc * fc];
                let mut s_sty = T::zero();
                for i in 0..fc * fc {
                    let d = gp[b][i] - gt[b][i];
                    s_sty = s_sty + d.abs();
                    sgn[i] = sign(d) * gk * wsty;
                }
                parts.style += (s_sty * gk).to_f64().unwrap();
                let mut sym = vec![T::zero(); fc * fc];
                for i in 0..fc {
                    for j in 0..fc {
                        sym[i * fc + j] = (sgn[i * fc + j] + sgn[j * fc + i]) * norm;
                    }
                }
                gemm(fc, fc, fh * fw, &sym, false, fp.sample(b), false, df.sample_mut(b), true);
            }
            dfeat.push(df);
        }
        let dimg = feat.backward(&tp, &dfeat);
        for (g, d) in grad.data_mut().iter_mut().zip(dimg.data()) {
            *g = *g + *d;
        }
    }

    parts.total = weights.l1 * parts.l1
        + weights.hole * parts.hole
        + weights.valid * parts.valid
        + weights.vgg * parts.vgg
        + weights.style * parts.style;
    Ok((parts, grad))
}
