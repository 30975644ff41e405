use crate::element::Element;
use crate::error::{dim_err, Result};
use crate::tape::Var;
use crate::tensor::{strides_of, Tensor};

/// Broadcast batch shape of two leading-dimension lists.
fn broadcast_batch(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let r = a.len().max(b.len());
    let mut out = vec![0; r];
    for i in 0..r {
        let da = if i + a.len() >= r { a[i + a.len() - r] } else { 1 };
        let db = if i + b.len() >= r { b[i + b.len() - r] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every batch index of `out`, the matching batch index of `src`.
fn batch_map(src: &[usize], out: &[usize]) -> Vec<usize> {
    let lead = out.len() - src.len();
    let ss = strides_of(src);
    let n: usize = out.iter().product();
    let os = strides_of(out);
    (0..n)
        .map(|flat| {
            let mut idx = 0;
            for (i, &d) in src.iter().enumerate() {
                let c = flat / os[lead + i] % out[lead + i];
                if d != 1 {
                    idx += c * ss[i];
                }
            }
            idx
        })
        .collect()
}

impl<T: Element> Var<T> {
    /// Batched matrix product `(..., m, k) x (..., k, n)` with broadcasting
    /// over the leading axes.
    pub fn matmul(&self, other: &Var<T>) -> Result<Var<T>> {
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        if sa.len() < 2 || sb.len() < 2 {
            return Err(dim_err!("matmul needs rank >= 2, got {:?} and {:?}", sa, sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(dim_err!("matmul inner extents differ: {:?} x {:?}", sa, sb));
        }
        let (ba, bb) = (&sa[..sa.len() - 2], &sb[..sb.len() - 2]);
        let batch = broadcast_batch(ba, bb).ok_or_else(|| dim_err!("matmul batch {:?} vs {:?}", ba, bb))?;
        let map_a = batch_map(ba, &batch);
        let map_b = batch_map(bb, &batch);
        let mut out = vec![T::zero(); map_a.len() * m * n];
        let (a, b) = (self.value().data(), other.value().data());
        for (i, (&ia, &ib)) in map_a.iter().zip(&map_b).enumerate() {
            crate::element::matmul_into(
                m,
                k,
                n,
                &a[ia * m * k..(ia + 1) * m * k],
                &b[ib * k * n..(ib + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let mut out_shape = batch;
        out_shape.extend([m, n]);
        let y = Tensor::from_parts_unchecked(out_shape, out);
        let (av, bv) = (self.shared_value(), other.shared_value());
        Ok(self.record(y, &[other], move |g, need| {
            let gd = g.data();
            let (a, b) = (av.data(), bv.data());
            let da = need[0].then(|| {
                let mut da = vec![T::zero(); a.len()];
                for (i, (&ia, &ib)) in map_a.iter().zip(&map_b).enumerate() {
                    // da = g * b^T
                    T::gemm_raw(
                        m,
                        n,
                        k,
                        T::one(),
                        &gd[i * m * n..(i + 1) * m * n],
                        n as isize,
                        1,
                        &b[ib * k * n..(ib + 1) * k * n],
                        1,
                        n as isize,
                        T::one(),
                        &mut da[ia * m * k..(ia + 1) * m * k],
                        k as isize,
                        1,
                    );
                }
                Tensor::from_parts_unchecked(sa.clone(), da)
            });
            let db = need[1].then(|| {
                let mut db = vec![T::zero(); b.len()];
                for (i, (&ia, &ib)) in map_a.iter().zip(&map_b).enumerate() {
                    // db = a^T * g
                    T::gemm_raw(
                        k,
                        m,
                        n,
                        T::one(),
                        &a[ia * m * k..(ia + 1) * m * k],
                        1,
                        k as isize,
                        &gd[i * m * n..(i + 1) * m * n],
                        n as isize,
                        1,
                        T::one(),
                        &mut db[ib * k * n..(ib + 1) * k * n],
                        n as isize,
                        1,
                    );
                }
                Tensor::from_parts_unchecked(sb.clone(), db)
            });
            vec![da, db]
        }))
    }
}
