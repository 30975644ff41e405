use serde::{Deserialize, Serialize};
use strokeseg_tensor::{Element, Tensor};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for every parameter plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Element> AdamState<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|(_, _, t)| Tensor::zeros(t.shape().to_vec()).expect("parameter shape")).collect();
        AdamState { config, step: 0, m: zeros(), v: zeros() }
    }
}

/// One bias-corrected Adam update. Weight decay is added to the gradient
/// (`g + wd * theta`). A missing gradient counts as zero.
pub fn adam_step<T: Element>(
    store: &mut ParamStore<T>,
    grads: &[Option<Tensor<T>>],
    state: &mut AdamState<T>,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::Invalid(format!("{} gradients / {} moments for {} parameters", grads.len(), state.m.len(), store.len())));
    }
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            if !g.all_finite() {
                let id = store.ids().nth(i).expect("parameter index");
                return Err(Error::Numeric(format!("non-finite gradient for {}", store.name(id))));
            }
        }
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let ids: Vec<_> = store.ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let grad = grads[i].as_ref();
        if let Some(g) = grad {
            if g.shape() != store.get(id).shape() {
                return Err(Error::Invalid(format!("gradient shape {:?} for {}", g.shape(), store.name(id))));
            }
        }
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        let theta = store.get_mut(id).data_mut();
        for k in 0..theta.len() {
            let p = theta[k].to_f64();
            let g = grad.map_or(0.0, |g| g.data()[k].to_f64()) + weight_decay * p;
            let mk = beta1 * m[k].to_f64() + (1.0 - beta1) * g;
            let vk = beta2 * v[k].to_f64() + (1.0 - beta2) * g * g;
            m[k] = T::from_f64(mk);
            v[k] = T::from_f64(vk);
            theta[k] = T::from_f64(p - lr * (mk / c1) / ((vk / c2).sqrt() + eps));
        }
    }
    Ok(())
}
