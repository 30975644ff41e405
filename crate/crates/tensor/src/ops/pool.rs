use crate::element::Element;
use crate::error::{dim_err, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

impl<T: Element> Var<T> {
    /// Max pooling over the spatial axes of a (B, C, S...) tensor. Output
    /// extents are `(S - window) / stride + 1` (trailing remainders dropped).
    /// The gradient goes to the first maximum in row-major window order.
    pub fn max_pool(&self, window: &[usize], stride: &[usize]) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        let rank = shape.len().checked_sub(2).filter(|r| (1..=3).contains(r)).ok_or_else(|| {
            dim_err!("max_pool input must be (B, C, 1-3 spatial axes), got {:?}", shape)
        })?;
        if window.len() != rank || stride.len() != rank || stride.contains(&0) || window.contains(&0) {
            return Err(dim_err!("max_pool window {:?} / stride {:?} for rank {rank}", window, stride));
        }
        let mut sp = [1usize; 3];
        let mut win = [1usize; 3];
        let mut st = [1usize; 3];
        sp[3 - rank..].copy_from_slice(&shape[2..]);
        win[3 - rank..].copy_from_slice(window);
        st[3 - rank..].copy_from_slice(stride);
        let mut out_sp = [1usize; 3];
        for a in 0..3 {
            if win[a] > sp[a] {
                return Err(dim_err!("pool window {:?} larger than input {:?}", window, &shape[2..]));
            }
            out_sp[a] = (sp[a] - win[a]) / st[a] + 1;
        }
        let planes = shape[0] * shape[1];
        let in_size: usize = sp.iter().product();
        let out_size: usize = out_sp.iter().product();
        let x = self.value().data();
        let mut y = Vec::with_capacity(planes * out_size);
        let mut arg = Vec::with_capacity(planes * out_size);
        for p in 0..planes {
            let base = p * in_size;
            for od in 0..out_sp[0] {
                for oh in 0..out_sp[1] {
                    for ow in 0..out_sp[2] {
                        let mut best = T::neg_infinity();
                        let mut best_i = usize::MAX;
                        for kd in 0..win[0] {
                            for kh in 0..win[1] {
                                let row = base + ((od * st[0] + kd) * sp[1] + oh * st[1] + kh) * sp[2] + ow * st[2];
                                for kw in 0..win[2] {
                                    let v = x[row + kw];
                                    if best_i == usize::MAX || v > best {
                                        best = v;
                                        best_i = row + kw;
                                    }
                                }
                            }
                        }
                        y.push(best);
                        arg.push(best_i);
                    }
                }
            }
        }
        let mut out_shape = shape[..2].to_vec();
        out_shape.extend_from_slice(&out_sp[3 - rank..]);
        let y = Tensor::from_parts_unchecked(out_shape, y);
        let n_in = self.value().numel();
        Ok(self.record(y, &[], move |g, _| {
            let mut dx = vec![T::zero(); n_in];
            for (&i, &gv) in arg.iter().zip(g.data()) {
                dx[i] += gv;
            }
            vec![Some(Tensor::from_parts_unchecked(shape.clone(), dx))]
        }))
    }
}
