//! Separable linear (bilinear/trilinear) resampling with the half-pixel
//! (align-corners = false) convention, plus nearest-neighbour index maps.

use crate::element::Element;
use crate::error::{dim_err, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Source taps for one output coordinate: `out = x[lo] + frac * (x[hi] - x[lo])`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearTap {
    pub lo: usize,
    pub hi: usize,
    pub frac: f64,
}

/// Taps mapping an axis of length `in_len` onto `out_len` samples.
///
/// Output sample `j` sits at source coordinate `(j + 0.5) * in_len / out_len - 0.5`,
/// clamped below at zero; the upper neighbour is clamped to the last sample.
pub fn linear_taps(in_len: usize, out_len: usize) -> Vec<LinearTap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|j| {
            let src = ((j as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            LinearTap { lo, hi, frac: src - lo as f64 }
        })
        .collect()
}

/// Nearest source index for output sample `j` (half-pixel centres).
pub fn nearest_index(in_len: usize, out_len: usize, j: usize) -> usize {
    let src = ((j as f64 + 0.5) * in_len as f64 / out_len as f64).floor() as usize;
    src.min(in_len - 1)
}

/// Linearly resamples `axis` of a row-major array to `out_len`.
pub fn resample_axis<T: Element>(data: &[T], shape: &[usize], axis: usize, out_len: usize) -> Vec<T> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let in_len = shape[axis];
    let taps = linear_taps(in_len, out_len);
    let mut out = vec![T::zero(); outer * out_len * inner];
    for o in 0..outer {
        let src = &data[o * in_len * inner..(o + 1) * in_len * inner];
        let dst = &mut out[o * out_len * inner..(o + 1) * out_len * inner];
        for (j, tap) in taps.iter().enumerate() {
            let f = T::from_f64(tap.frac);
            let (a, b) = (&src[tap.lo * inner..(tap.lo + 1) * inner], &src[tap.hi * inner..(tap.hi + 1) * inner]);
            for ((d, &a), &b) in dst[j * inner..(j + 1) * inner].iter_mut().zip(a).zip(b) {
                *d = a + f * (b - a);
            }
        }
    }
    out
}

fn resample_axis_backward<T: Element>(g: &[T], in_shape: &[usize], axis: usize, out_len: usize) -> Vec<T> {
    let outer: usize = in_shape[..axis].iter().product();
    let inner: usize = in_shape[axis + 1..].iter().product();
    let in_len = in_shape[axis];
    let taps = linear_taps(in_len, out_len);
    let mut dx = vec![T::zero(); outer * in_len * inner];
    for o in 0..outer {
        let gs = &g[o * out_len * inner..(o + 1) * out_len * inner];
        let dst = &mut dx[o * in_len * inner..(o + 1) * in_len * inner];
        for (j, tap) in taps.iter().enumerate() {
            let f = T::from_f64(tap.frac);
            let keep = T::one() - f;
            for i in 0..inner {
                let gv = gs[j * inner + i];
                dst[tap.lo * inner + i] += keep * gv;
                dst[tap.hi * inner + i] += f * gv;
            }
        }
    }
    dx
}

impl<T: Element> Var<T> {
    fn resample_one_axis(&self, axis: usize, out_len: usize) -> Var<T> {
        let in_shape = self.shape().to_vec();
        let mut out_shape = in_shape.clone();
        out_shape[axis] = out_len;
        let y = Tensor::from_parts_unchecked(out_shape, resample_axis(self.value().data(), &in_shape, axis, out_len));
        self.record(y, &[], move |g, _| {
            vec![Some(Tensor::from_parts_unchecked(
                in_shape.clone(),
                resample_axis_backward(g.data(), &in_shape, axis, out_len),
            ))]
        })
    }

    /// Bilinear (2D) or trilinear (3D) resize of a (B, C, S...) tensor to the
    /// given spatial extents.
    pub fn resize_linear(&self, extents: &[usize]) -> Result<Var<T>> {
        let shape = self.shape();
        if shape.len() != extents.len() + 2 || extents.contains(&0) {
            return Err(dim_err!("resize to {:?} on shape {:?}", extents, shape));
        }
        let mut out = self.clone();
        for (i, &e) in extents.iter().enumerate() {
            if out.shape()[2 + i] != e {
                out = out.resample_one_axis(2 + i, e);
            }
        }
        Ok(out)
    }

    /// Resize by an integer factor on every spatial axis.
    pub fn upsample_linear(&self, factor: usize) -> Result<Var<T>> {
        if factor == 0 {
            return Err(dim_err!("upsample factor must be >= 1"));
        }
        let extents: Vec<usize> = self.shape()[2..].iter().map(|&e| e * factor).collect();
        self.resize_linear(&extents)
    }
}
