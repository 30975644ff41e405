//! Soft Dice, binary cross-entropy and their weighted combination, computed
//! over every element of the prediction tensor.

use serde::{Deserialize, Serialize};
use strokeseg_tensor::{Element, Var};

use crate::error::{dim_error, Error, Result};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before logs.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the Dice term; BCE gets `1 - gamma`.
    pub gamma: f64,
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { gamma: 0.9, eps: 1e-6 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(self.eps >= 0.0) {
            return Err(Error::Invalid(format!("loss gamma {} must lie in [0, 1] and eps {} be >= 0", self.gamma, self.eps)));
        }
        Ok(())
    }
}

fn check_pair<T: Element>(p: &Var<T>, g: &Var<T>) -> Result<()> {
    if p.shape() != g.shape() {
        return Err(dim_error(format!("prediction {:?} vs target {:?}", p.shape(), g.shape())));
    }
    Ok(())
}

/// `1 - (2 Σ p g + eps) / (Σ p² + Σ g² + eps)`.
pub fn dice_loss<T: Element>(p: &Var<T>, g: &Var<T>, eps: f64) -> Result<Var<T>> {
    check_pair(p, g)?;
    let inter = p.mul(g)?.sum().mul_scalar(2.0).add_scalar(eps);
    let denom = p.square().sum().add(&g.square().sum())?.add_scalar(eps);
    Ok(inter.div(&denom)?.neg().add_scalar(1.0))
}

/// Mean of `-(g ln p + (1 - g) ln(1 - p))` with clamped `p`.
pub fn bce_loss<T: Element>(p: &Var<T>, g: &Var<T>) -> Result<Var<T>> {
    check_pair(p, g)?;
    let pc = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    let pos = g.mul(&pc.ln())?;
    let not_g = g.neg().add_scalar(1.0);
    let neg = not_g.mul(&pc.neg().add_scalar(1.0).ln())?;
    Ok(pos.add(&neg)?.mean().neg())
}

/// `gamma * dice + (1 - gamma) * bce`.
pub fn combined_loss<T: Element>(p: &Var<T>, g: &Var<T>, cfg: &LossConfig) -> Result<Var<T>> {
    cfg.validate()?;
    let dice = dice_loss(p, g, cfg.eps)?.mul_scalar(cfg.gamma);
    let bce = bce_loss(p, g)?.mul_scalar(1.0 - cfg.gamma);
    Ok(dice.add(&bce)?)
}
