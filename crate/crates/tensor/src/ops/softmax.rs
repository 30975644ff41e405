use crate::element::Element;
use crate::error::{dim_err, Result, TensorError};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Splits `shape` around `axis` into (outer, len, inner) run lengths.
fn axis_runs(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (shape[..axis].iter().product(), shape[axis], shape[axis + 1..].iter().product())
}

impl<T: Element> Var<T> {
    /// Softmax along `axis`, computed after subtracting the per-slice maximum.
    pub fn softmax(&self, axis: usize) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(dim_err!("softmax axis {axis} on shape {:?}", shape));
        }
        let x = self.value().data();
        if x.iter().any(|v| v.is_nan()) {
            return Err(TensorError::Numeric("softmax input contains NaN".into()));
        }
        let (outer, len, inner) = axis_runs(&shape, axis);
        let mut y = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |r: usize| (o * len + r) * inner + i;
                let mut m = T::neg_infinity();
                for r in 0..len {
                    m = m.max(x[at(r)]);
                }
                let mut s = T::zero();
                for r in 0..len {
                    let e = (x[at(r)] - m).exp();
                    y[at(r)] = e;
                    s += e;
                }
                for r in 0..len {
                    y[at(r)] /= s;
                }
            }
        }
        let y = Tensor::from_parts_unchecked(shape, y);
        let saved = std::sync::Arc::new(y.clone());
        Ok(self.record(y, &[], move |g, _| {
            let (gd, yd) = (g.data(), saved.data());
            let mut dx = vec![T::zero(); gd.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |r: usize| (o * len + r) * inner + i;
                    let dot: T = (0..len).map(|r| gd[at(r)] * yd[at(r)]).sum();
                    for r in 0..len {
                        dx[at(r)] = yd[at(r)] * (gd[at(r)] - dot);
                    }
                }
            }
            vec![Some(Tensor::from_parts_unchecked(g.shape().to_vec(), dx))]
        }))
    }
}
