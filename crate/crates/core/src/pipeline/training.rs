//! Training data from rendered sequences and the two-network training run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{prepare, target_indices, truth_irradiance, History, Models, PipelineConfig};
use crate::error::{Error, Result};
use crate::metrics::StageTimer;
use crate::neural::{train, Tensor, TrainReport, TrainSample};
use crate::scene::RenderedFrame;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Fg,
    Near,
    /// Anywhere in the frame (single-network ablation).
    Whole,
}

impl Region {
    fn tag(self) -> u64 {
        match self {
            Region::Fg => 0xF6,
            Region::Near => 0x4E,
            Region::Whole => 0x3A,
        }
    }
}

/// Square crops around pixels the network will have to fill: invalid pixels
/// of the region where there are any, otherwise any pixel of the region.
/// Frames without region pixels contribute nothing.
pub fn training_samples(seqs: &[Vec<RenderedFrame>], cfg: &PipelineConfig, region: Region) -> Result<Vec<TrainSample>> {
    let mut out = Vec::new();
    for (si, seq) in seqs.iter().enumerate() {
        for t in target_indices(seq.len()) {
            let hist = History::from_sequence(seq, t)?;
            let prep = prepare(&hist, cfg, &mut StageTimer::new())?;
            let truth = truth_irradiance(&seq[t], cfg)?;
            let mask = match region {
                Region::Fg => &prep.masks.fg,
                Region::Near => &prep.masks.near,
                Region::Whole => &prep.valid,
            };
            let (w, h) = (mask.width(), mask.height());
            let in_region = |p: usize| region == Region::Whole || mask.data()[p] == 1.0;
            let holes: Vec<usize> = (0..mask.pixel_count())
                .filter(|&p| in_region(p) && prep.valid.data()[p] != 1.0)
                .collect();
            let pool: Vec<usize> = if holes.is_empty() {
                (0..mask.pixel_count()).filter(|&p| in_region(p)).collect()
            } else {
                holes
            };
            if pool.is_empty() {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.seed ^ (region.tag() << 56) ^ ((si as u64) << 24) ^ t as u64,
            );
            let s = cfg.train.crop.min(w).min(h);
            for _ in 0..cfg.crops_per_frame {
                let p = pool[rng.random_range(0..pool.len())];
                let (cx, cy) = ((p as u32) % w, (p as u32) / w);
                let x0 = cx.saturating_sub(s / 2).min(w - s);
                let y0 = cy.saturating_sub(s / 2).min(h - s);
                out.push(TrainSample {
                    input: Tensor::from_plane(&prep.input.crop(x0, y0, s, s)?),
                    truth: Tensor::from_plane(&truth.crop(x0, y0, s, s)?),
                    hole: Tensor::from_plane(&prep.valid.crop(x0, y0, s, s)?),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub models: Models,
    pub fg: Option<TrainReport>,
    pub near: TrainReport,
}

/// Trains the foreground and near-background networks one after the other.
/// `train.time_budget_secs` applies to each network separately. With the
/// foveation ablation only the near network is trained, on whole-frame crops.
pub fn train_models(seqs: &[Vec<RenderedFrame>], cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let tcfg = cfg.effective_train();
    let mut models = Models::fresh(cfg.seed)?;
    let fit = |net: &mut crate::neural::Network<f32>, region: Region| -> Result<TrainReport> {
        let samples = training_samples(seqs, cfg, region)?;
        if samples.is_empty() {
            return Err(Error::Degenerate(format!("no {region:?} training crops in the data")));
        }
        log::info!("training {region:?} net on {} crops", samples.len());
        train(net, &samples, &tcfg)
    };
    if cfg.ablation.no_foveated {
        let near = fit(&mut models.near, Region::Whole)?;
        return Ok(TrainOutcome { models, fg: None, near });
    }
    let fg = fit(&mut models.fg, Region::Fg)?;
    let near = fit(&mut models.near, Region::Near)?;
    Ok(TrainOutcome {
        models,
        fg: Some(fg),
        near,
    })
}
