//! Scaled dot-product attention evaluated in query blocks so the full
//! query-by-key weight matrix is never materialised.

use std::sync::Arc;

use crate::element::Element;
use crate::error::{dim_err, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Upper bound on elements in one block of attention logits.
const BLOCK_BUDGET: usize = 1 << 20;

struct Dims {
    groups: usize,
    nq: usize,
    nk: usize,
    d: usize,
    dv: usize,
}

fn dims(q: &[usize], k: &[usize], v: &[usize]) -> Result<Dims> {
    let ok = q.len() == 3
        && k.len() == 3
        && v.len() == 3
        && q[0] == k[0]
        && k[0] == v[0]
        && q[2] == k[2]
        && k[1] == v[1];
    if !ok {
        return Err(dim_err!("attention expects q (G,nq,d), k (G,nk,d), v (G,nk,dv); got {:?} {:?} {:?}", q, k, v));
    }
    Ok(Dims { groups: q[0], nq: q[1], nk: k[1], d: q[2], dv: v[2] })
}

fn block_rows(nq: usize, nk: usize) -> usize {
    (BLOCK_BUDGET / nk.max(1)).clamp(1, nq)
}

/// `s = scale * q_blk * k^T` for a block of `rows` queries.
fn logits<T: Element>(q_blk: &[T], k: &[T], rows: usize, nk: usize, d: usize, scale: T, s: &mut [T]) {
    T::gemm_raw(rows, d, nk, scale, q_blk, d as isize, 1, k, 1, d as isize, T::zero(), s, nk as isize, 1);
}

/// Dense attention weights `softmax(scale * q k^T)` over keys, shape (G, nq, nk).
pub fn attention_weights<T: Element>(q: &Tensor<T>, k: &Tensor<T>, scale: f64) -> Result<Tensor<T>> {
    let dm = dims(q.shape(), k.shape(), k.shape())?;
    let (nq, nk, d) = (dm.nq, dm.nk, dm.d);
    let mut w = vec![T::zero(); dm.groups * nq * nk];
    for g in 0..dm.groups {
        let s = &mut w[g * nq * nk..(g + 1) * nq * nk];
        logits(&q.data()[g * nq * d..(g + 1) * nq * d], &k.data()[g * nk * d..(g + 1) * nk * d], nq, nk, d, T::from_f64(scale), s);
        for row in s.chunks_exact_mut(nk) {
            let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut total = T::zero();
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![dm.groups, nq, nk], w))
}

/// `softmax(scale * q k^T) v` for q (G, nq, d), k (G, nk, d), v (G, nk, dv).
///
/// The softmax runs over keys, so each query's weights sum to one.
pub fn attention<T: Element>(q: &Var<T>, k: &Var<T>, v: &Var<T>, scale: f64) -> Result<Var<T>> {
    let dm = dims(q.shape(), k.shape(), v.shape())?;
    let Dims { groups, nq, nk, d, dv } = dm;
    let sc = T::from_f64(scale);
    let rows = block_rows(nq, nk);
    let (qd, kd, vd) = (q.value().data(), k.value().data(), v.value().data());
    let mut out = vec![T::zero(); groups * nq * dv];
    let mut lse = vec![T::zero(); groups * nq];
    let mut s = vec![T::zero(); rows * nk];
    for g in 0..groups {
        let kg = &kd[g * nk * d..(g + 1) * nk * d];
        let vg = &vd[g * nk * dv..(g + 1) * nk * dv];
        for r0 in (0..nq).step_by(rows) {
            let r = rows.min(nq - r0);
            let q_blk = &qd[(g * nq + r0) * d..(g * nq + r0 + r) * d];
            let s = &mut s[..r * nk];
            logits(q_blk, kg, r, nk, d, sc, s);
            for (i, row) in s.chunks_exact_mut(nk).enumerate() {
                let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
                let mut total = T::zero();
                for x in row.iter_mut() {
                    *x = (*x - m).exp();
                    total += *x;
                }
                for x in row.iter_mut() {
                    *x /= total;
                }
                lse[g * nq + r0 + i] = m + total.ln();
            }
            let o = &mut out[(g * nq + r0) * dv..(g * nq + r0 + r) * dv];
            crate::element::matmul_into(r, nk, dv, s, vg, o, false);
        }
    }
    let y = Tensor::from_parts_unchecked(vec![groups, nq, dv], out);
    let (qv, kv, vv) = (q.shared_value(), k.shared_value(), v.shared_value());
    let saved_out = Arc::new(y.clone());
    Ok(q.record(y, &[k, v], move |go, need| {
        let (qd, kd, vd) = (qv.data(), kv.data(), vv.data());
        let (god, od) = (go.data(), saved_out.data());
        let mut dq = vec![T::zero(); qd.len()];
        let mut dk = vec![T::zero(); kd.len()];
        let mut dvv = vec![T::zero(); vd.len()];
        let mut p = vec![T::zero(); rows * nk];
        let mut dp = vec![T::zero(); rows * nk];
        for g in 0..groups {
            let kg = &kd[g * nk * d..(g + 1) * nk * d];
            let vg = &vd[g * nk * dv..(g + 1) * nk * dv];
            for r0 in (0..nq).step_by(rows) {
                let r = rows.min(nq - r0);
                let qrange = (g * nq + r0) * d..(g * nq + r0 + r) * d;
                let orange = (g * nq + r0) * dv..(g * nq + r0 + r) * dv;
                let (p, dp) = (&mut p[..r * nk], &mut dp[..r * nk]);
                logits(&qd[qrange.clone()], kg, r, nk, d, sc, p);
                for (i, row) in p.chunks_exact_mut(nk).enumerate() {
                    let l = lse[g * nq + r0 + i];
                    for x in row.iter_mut() {
                        *x = (*x - l).exp();
                    }
                }
                let go_blk = &god[orange.clone()];
                if need[2] {
                    // dv += p^T go
                    T::gemm_raw(
                        nk, r, dv, T::one(), p, 1, nk as isize, go_blk, dv as isize, 1, T::one(),
                        &mut dvv[g * nk * dv..(g + 1) * nk * dv], dv as isize, 1,
                    );
                }
                if !(need[0] || need[1]) {
                    continue;
                }
                // dp = go v^T
                T::gemm_raw(r, dv, nk, T::one(), go_blk, dv as isize, 1, vg, 1, dv as isize, T::zero(), dp, nk as isize, 1);
                let o_blk = &od[orange];
                for i in 0..r {
                    let delta: T = (0..dv).map(|c| go_blk[i * dv + c] * o_blk[i * dv + c]).sum();
                    for j in 0..nk {
                        dp[i * nk + j] = p[i * nk + j] * (dp[i * nk + j] - delta);
                    }
                }
                if need[0] {
                    crate::element::matmul_into(r, nk, d, dp, kg, &mut dq[qrange.clone()], true);
                }
                if need[1] {
                    // dk += ds^T q
                    T::gemm_raw(
                        nk, r, d, T::one(), dp, 1, nk as isize, &qd[qrange], d as isize, 1, T::one(),
                        &mut dk[g * nk * d..(g + 1) * nk * d], d as isize, 1,
                    );
                }
            }
        }
        let scale_all = |mut v: Vec<T>| {
            v.iter_mut().for_each(|x| *x *= sc);
            v
        };
        vec![
            need[0].then(|| Tensor::from_parts_unchecked(qv.shape().to_vec(), scale_all(dq))),
            need[1].then(|| Tensor::from_parts_unchecked(kv.shape().to_vec(), scale_all(dk))),
            need[2].then(|| Tensor::from_parts_unchecked(vv.shape().to_vec(), dvv)),
        ]
    }))
}
