use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::TrainConfig;
use crate::segment::SegmentationParams;
use crate::shadow::FarnebackParams;
use crate::warp::{GuidedWarpParams, InvalidThresholds};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// One network over the whole frame instead of foveated regions.
    pub no_foveated: bool,
    /// Keep shadows inside the frames and skip the shadow task.
    pub no_shadow_partition: bool,
    /// Train with pixel losses only.
    pub no_perceptual_loss: bool,
}

/// Everything that shapes a run, loadable from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Extra pixels of context around each inference patch.
    pub context: u32,
    /// Training crops drawn per frame and region.
    pub crops_per_frame: usize,
    pub segmentation: SegmentationParams,
    pub warp: GuidedWarpParams,
    pub invalid: InvalidThresholds,
    pub shadow: FarnebackParams,
    pub train: TrainConfig,
    pub ablation: Ablation,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            context: 8,
            crops_per_frame: 4,
            segmentation: SegmentationParams::default(),
            warp: GuidedWarpParams::default(),
            invalid: InvalidThresholds::default(),
            shadow: FarnebackParams::default(),
            train: TrainConfig::default(),
            ablation: Ablation::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        super::sha256_hex(self.to_toml_string().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(m) | Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        };
        self.segmentation.validate().map_err(cfg_err)?;
        self.warp.validate().map_err(cfg_err)?;
        self.shadow.validate().map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        if self.crops_per_frame == 0 {
            return Err(Error::Config("crops_per_frame must be positive".into()));
        }
        Ok(())
    }

    /// Training settings with the loss ablation applied.
    pub fn effective_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        if self.ablation.no_perceptual_loss {
            t.loss = t.loss.without_perceptual();
        }
        t
    }
}
