use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::schedule::{PlateauConfig, Scheduler};
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::models::Variant;

/// Optimisation protocol. [`TrainConfig::for_variant`] gives the defaults
/// for each architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Hard cap on the number of epochs.
    pub epochs: usize,
    /// Stop after this many epochs without a better validation Dice.
    pub early_stop_patience: Option<usize>,
    pub scheduler: Scheduler,
    pub plateau: PlateauConfig,
    pub weight_decay: f64,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub master_seed: u64,
    pub threshold: f64,
    /// Momentum for normalisation running statistics.
    pub bn_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 32,
            epochs: 50,
            early_stop_patience: None,
            scheduler: Scheduler::ReduceOnPlateau,
            plateau: PlateauConfig::default(),
            weight_decay: 0.0,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            master_seed: 0,
            threshold: 0.5,
            bn_momentum: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn for_variant(variant: Variant) -> Self {
        let base = TrainConfig::default();
        if variant.is_3d() {
            TrainConfig { batch_size: 4, epochs: 100, scheduler: Scheduler::CosineAnnealing, weight_decay: 1e-4, ..base }
        } else if variant == Variant::Unettransformer2d {
            TrainConfig { batch_size: 16, ..base }
        } else {
            base
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.weight_decay < 0.0 || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(Error::Invalid(format!(
                "lr {} must be > 0, batch size {} >= 1, weight decay {} >= 0",
                self.lr, self.batch_size, self.weight_decay
            )));
        }
        self.loss.validate()
    }
}
