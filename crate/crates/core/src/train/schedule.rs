use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    ReduceOnPlateau,
    CosineAnnealing,
    /// The initial rate throughout.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    /// A loss counts as an improvement only when it beats the best by more than this.
    pub threshold: f64,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig { factor: 0.1, patience: 5, threshold: 1e-4, min_lr: 1e-7 }
    }
}

/// Reduce-on-plateau state. Once `patience` consecutive epochs pass without
/// improvement the rate is multiplied by `factor` and the wait restarts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauState {
    pub config: PlateauConfig,
    pub lr: f64,
    pub best: Option<f64>,
    pub wait: usize,
}

impl PlateauState {
    pub fn new(lr: f64, config: PlateauConfig) -> Self {
        PlateauState { config, lr, best: None, wait: 0 }
    }

    /// Feeds one epoch's validation loss and returns the rate for the next epoch.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        let improved = match self.best {
            None => true,
            Some(best) => val_loss < best - self.config.threshold,
        };
        if improved {
            self.best = Some(val_loss);
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.config.patience {
                self.lr = (self.lr * self.config.factor).max(self.config.min_lr);
                self.wait = 0;
            }
        }
        self.lr
    }
}

/// `0.5 * lr0 * (1 + cos(pi * epoch / total))`.
pub fn cosine_annealing(epoch: usize, total: usize, lr0: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    let e = epoch.min(total) as f64;
    0.5 * lr0 * (1.0 + (PI * e / total as f64).cos())
}
