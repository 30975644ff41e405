//! Central finite-difference comparison against reverse-mode gradients.

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Largest `|analytic - numeric| / max(1, |analytic|, |numeric|)` over every
/// element of every input, for a scalar-valued `f`.
pub fn gradient_check_many<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&[Var<f64>]) -> Result<Var<f64>>,
{
    let tape = Tape::new();
    let leaves: Vec<Var<f64>> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&leaves)?;
    if out.value().numel() != 1 {
        return Err(TensorError::Contract(format!("gradient_check needs a scalar function, got {:?}", out.shape())));
    }
    let grads = tape.backward(&out)?;
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::inference();
        let vars: Vec<Var<f64>> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        Ok(f(&vars)?.value().data()[0])
    };
    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (slot, leaf) in leaves.iter().enumerate() {
        let zeros;
        let analytic = match grads.get(leaf) {
            Some(g) => g,
            None => {
                zeros = Tensor::zeros(leaf.shape().to_vec())?;
                &zeros
            }
        };
        for i in 0..inputs[slot].numel() {
            let x0 = inputs[slot].data()[i];
            probe[slot].data_mut()[i] = x0 + eps;
            let up = eval(&probe)?;
            probe[slot].data_mut()[i] = x0 - eps;
            let down = eval(&probe)?;
            probe[slot].data_mut()[i] = x0;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Single-input form of [`gradient_check_many`].
pub fn gradient_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&Var<f64>) -> Result<Var<f64>>,
{
    gradient_check_many(|v| f(&v[0]), std::slice::from_ref(x), eps)
}
