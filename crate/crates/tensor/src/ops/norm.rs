use std::sync::Arc;

use crate::element::Element;
use crate::error::{dim_err, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Per-channel batch statistics observed during a training-mode forward.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance over batch and spatial positions.
    pub var: Vec<T>,
    /// Number of values each channel's statistics were computed over.
    pub count: usize,
}

fn check<T: Element>(x: &Var<T>, gamma: &Var<T>, beta: &Var<T>) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(dim_err!("batch_norm needs (B, C, ...), got {:?}", s));
    }
    let c = s[1];
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(dim_err!("batch_norm affine params {:?}/{:?} for {c} channels", gamma.shape(), beta.shape()));
    }
    Ok((s[0], c, s[2..].iter().product()))
}

impl<T: Element> Var<T> {
    /// Normalises each channel with statistics of the current batch, then
    /// applies the affine map `gamma * x_hat + beta`.
    pub fn batch_norm_train(&self, gamma: &Var<T>, beta: &Var<T>, eps: f64) -> Result<(Var<T>, BatchStats<T>)> {
        let (b, c, sp) = check(self, gamma, beta)?;
        let n = b * sp;
        let nt = T::from_f64(n as f64);
        let x = self.value().data();
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ch in 0..c {
            let mut s = T::zero();
            for bi in 0..b {
                s += x[(bi * c + ch) * sp..(bi * c + ch + 1) * sp].iter().copied().sum::<T>();
            }
            let m = s / nt;
            let mut q = T::zero();
            for bi in 0..b {
                q += x[(bi * c + ch) * sp..(bi * c + ch + 1) * sp].iter().map(|&v| (v - m) * (v - m)).sum::<T>();
            }
            mean[ch] = m;
            var[ch] = q / nt;
        }
        let eps = T::from_f64(eps);
        let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let (gd, bd) = (gamma.value().data(), beta.value().data());
        let mut xhat = vec![T::zero(); x.len()];
        let mut y = vec![T::zero(); x.len()];
        for bi in 0..b {
            for ch in 0..c {
                for i in (bi * c + ch) * sp..(bi * c + ch + 1) * sp {
                    xhat[i] = (x[i] - mean[ch]) * inv[ch];
                    y[i] = gd[ch] * xhat[i] + bd[ch];
                }
            }
        }
        let shape = self.shape().to_vec();
        let y = Tensor::from_parts_unchecked(shape.clone(), y);
        let gamma_v = gamma.shared_value();
        let xhat = Arc::new(xhat);
        let out = self.record(y, &[gamma, beta], move |g, need| {
            let gdat = g.data();
            let mut sum_g = vec![T::zero(); c];
            let mut sum_gx = vec![T::zero(); c];
            for bi in 0..b {
                for ch in 0..c {
                    for i in (bi * c + ch) * sp..(bi * c + ch + 1) * sp {
                        sum_g[ch] += gdat[i];
                        sum_gx[ch] += gdat[i] * xhat[i];
                    }
                }
            }
            let dx = need[0].then(|| {
                let gam = gamma_v.data();
                let mut dx = vec![T::zero(); gdat.len()];
                for bi in 0..b {
                    for ch in 0..c {
                        let k = gam[ch] * inv[ch] / nt;
                        for i in (bi * c + ch) * sp..(bi * c + ch + 1) * sp {
                            dx[i] = k * (nt * gdat[i] - sum_g[ch] - xhat[i] * sum_gx[ch]);
                        }
                    }
                }
                Tensor::from_parts_unchecked(shape.clone(), dx)
            });
            vec![
                dx,
                need[1].then(|| Tensor::from_parts_unchecked(vec![c], sum_gx.clone())),
                need[2].then(|| Tensor::from_parts_unchecked(vec![c], sum_g.clone())),
            ]
        });
        Ok((out, BatchStats { mean, var, count: n }))
    }

    /// Normalises with fixed per-channel statistics (inference mode).
    pub fn batch_norm_eval(&self, gamma: &Var<T>, beta: &Var<T>, mean: &[T], var: &[T], eps: f64) -> Result<Var<T>> {
        let (b, c, sp) = check(self, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(dim_err!("running statistics sized {}/{} for {c} channels", mean.len(), var.len()));
        }
        let eps = T::from_f64(eps);
        let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mean = mean.to_vec();
        let x = self.value().data();
        let (gd, bd) = (gamma.value().data(), beta.value().data());
        let mut y = vec![T::zero(); x.len()];
        for bi in 0..b {
            for ch in 0..c {
                for i in (bi * c + ch) * sp..(bi * c + ch + 1) * sp {
                    y[i] = gd[ch] * ((x[i] - mean[ch]) * inv[ch]) + bd[ch];
                }
            }
        }
        let shape = self.shape().to_vec();
        let y = Tensor::from_parts_unchecked(shape.clone(), y);
        let (xv, gamma_v) = (self.shared_value(), gamma.shared_value());
        Ok(self.record(y, &[gamma, beta], move |g, need| {
            let (gdat, x, gam) = (g.data(), xv.data(), gamma_v.data());
            let mut dx = vec![T::zero(); gdat.len()];
            let mut dgamma = vec![T::zero(); c];
            let mut dbeta = vec![T::zero(); c];
            for bi in 0..b {
                for ch in 0..c {
                    for i in (bi * c + ch) * sp..(bi * c + ch + 1) * sp {
                        dx[i] = gdat[i] * gam[ch] * inv[ch];
                        dgamma[ch] += gdat[i] * (x[i] - mean[ch]) * inv[ch];
                        dbeta[ch] += gdat[i];
                    }
                }
            }
            vec![
                need[0].then(|| Tensor::from_parts_unchecked(shape.clone(), dx)),
                need[1].then(|| Tensor::from_parts_unchecked(vec![c], dgamma)),
                need[2].then(|| Tensor::from_parts_unchecked(vec![c], dbeta)),
            ]
        }))
    }
}
