use serde::{Deserialize, Serialize};

use crate::data::AugmentationPolicy;
use crate::error::{Error, Result};
use crate::kernel::AdamConfig;
use crate::losses::LossConfig;
use crate::model::ModelConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Two augmented multi-modal views, unified head, consistency plus VC.
    Baseline,
    /// Fused pass with modality-aware heads plus one uni-modal pass per modality.
    #[default]
    Umurl,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(TrainMode::Baseline),
            "umurl" => Ok(TrainMode::Umurl),
            other => Err(Error::usage(format!("unknown mode '{other}' (baseline or umurl)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub batch_size: usize,
    /// First epoch trained at the decayed rate.
    pub decay_epoch: usize,
    pub decay_factor: f64,
    pub seed: u64,
    /// One set of augmentation draws per view, applied to every modality.
    pub shared_aug: bool,
    pub augmentation: AugmentationPolicy,
    pub optimizer: AdamConfig,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Umurl,
            epochs: 30,
            batch_size: 64,
            decay_epoch: 24,
            decay_factor: 0.1,
            seed: 0,
            shared_aug: false,
            augmentation: AugmentationPolicy::standard(),
            optimizer: AdamConfig::default(),
            loss: LossConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// 450 epochs, decay at 350, batch 512, full-width network.
    pub fn full_scale() -> Self {
        TrainConfig {
            epochs: 450,
            decay_epoch: 350,
            batch_size: 512,
            model: ModelConfig::full_scale(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::usage("batch size must be at least 2"));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) || !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return Err(Error::usage("learning rate and decay factor must be positive"));
        }
        if o.weight_decay < 0.0 || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.eps <= 0.0 {
            return Err(Error::usage("invalid optimizer constants"));
        }
        self.augmentation.validate()?;
        self.loss.validate()?;
        self.model.validate()
    }
}

/// Single step decay: the initial rate before `decay_epoch`, scaled by `decay_factor` from it on.
pub fn lr_at_epoch(epoch: usize, config: &TrainConfig) -> f64 {
    if epoch >= config.decay_epoch {
        config.optimizer.lr * config.decay_factor
    } else {
        config.optimizer.lr
    }
}
