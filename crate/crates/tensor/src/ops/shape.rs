use crate::element::Element;
use crate::error::{dim_err, Result};
use crate::tape::Var;
use crate::tensor::{check_shape, strides_of, Tensor};

/// Copies the origin-anchored box `extent` from `src` into `dst`.
fn copy_box<T: Copy>(src: &[T], src_shape: &[usize], dst: &mut [T], dst_shape: &[usize], extent: &[usize]) {
    let rank = extent.len();
    if rank == 0 {
        dst[0] = src[0];
        return;
    }
    let ss = strides_of(src_shape);
    let ds = strides_of(dst_shape);
    let run = extent[rank - 1];
    let outer: usize = extent[..rank - 1].iter().product();
    let mut coords = vec![0usize; rank - 1];
    for _ in 0..outer {
        let so: usize = coords.iter().zip(&ss).map(|(c, s)| c * s).sum();
        let d0: usize = coords.iter().zip(&ds).map(|(c, s)| c * s).sum();
        dst[d0..d0 + run].copy_from_slice(&src[so..so + run]);
        for axis in (0..rank - 1).rev() {
            coords[axis] += 1;
            if coords[axis] < extent[axis] {
                break;
            }
            coords[axis] = 0;
        }
    }
}

impl<T: Element> Var<T> {
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<T>> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        if n != self.value().numel() {
            return Err(dim_err!("cannot reshape {:?} into {:?}", self.shape(), shape));
        }
        let y = Tensor::from_parts_unchecked(shape, self.value().data().to_vec());
        let src_shape = self.shape().to_vec();
        Ok(self.record(y, &[], move |g, _| {
            vec![Some(Tensor::from_parts_unchecked(src_shape.clone(), g.data().to_vec()))]
        }))
    }

    /// Swaps the two innermost axes.
    pub fn transpose_last2(&self) -> Result<Var<T>> {
        let shape = self.shape();
        let r = shape.len();
        if r < 2 {
            return Err(dim_err!("transpose_last2 needs rank >= 2, got {:?}", shape));
        }
        let (m, n) = (shape[r - 2], shape[r - 1]);
        let mut out_shape = shape.to_vec();
        out_shape.swap(r - 2, r - 1);
        let y = Tensor::from_parts_unchecked(out_shape, transpose_blocks(self.value().data(), m, n));
        let in_shape = shape.to_vec();
        Ok(self.record(y, &[], move |g, _| {
            vec![Some(Tensor::from_parts_unchecked(in_shape.clone(), transpose_blocks(g.data(), n, m)))]
        }))
    }

    /// Broadcasts size-1 (or missing leading) axes up to `target`.
    pub fn broadcast_to(&self, target: &[usize]) -> Result<Var<T>> {
        let src = self.shape().to_vec();
        if src == target {
            return Ok(self.clone());
        }
        if src.len() > target.len() {
            return Err(dim_err!("cannot broadcast {:?} to {:?}", src, target));
        }
        let lead = target.len() - src.len();
        let src_strides = strides_of(&src);
        let mut bstrides = vec![0usize; target.len()];
        for (i, &d) in src.iter().enumerate() {
            let t = target[lead + i];
            if d == t {
                bstrides[lead + i] = src_strides[i];
            } else if d != 1 {
                return Err(dim_err!("cannot broadcast {:?} to {:?}", src, target));
            }
        }
        check_shape(target)?;
        let n: usize = target.iter().product();
        let map = broadcast_index_map(target, &bstrides, n);
        let x = self.value().data();
        let y = Tensor::from_parts_unchecked(target.to_vec(), map.iter().map(|&i| x[i]).collect());
        let src_n = self.value().numel();
        Ok(self.record(y, &[], move |g, _| {
            let mut acc = vec![T::zero(); src_n];
            for (&i, &v) in map.iter().zip(g.data()) {
                acc[i] += v;
            }
            vec![Some(Tensor::from_parts_unchecked(src.clone(), acc))]
        }))
    }

    /// Adds `other` after broadcasting it to this variable's shape.
    pub fn add_broadcast(&self, other: &Var<T>) -> Result<Var<T>> {
        self.add(&other.broadcast_to(self.shape())?)
    }

    pub fn mul_broadcast(&self, other: &Var<T>) -> Result<Var<T>> {
        self.mul(&other.broadcast_to(self.shape())?)
    }

    /// Zero-pads or crops the trailing spatial axes (everything after batch and
    /// channel) to `extents`, anchored at the origin.
    pub fn pad_to(&self, extents: &[usize]) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        if shape.len() != extents.len() + 2 {
            return Err(dim_err!("pad_to {:?} on shape {:?}", extents, shape));
        }
        if &shape[2..] == extents {
            return Ok(self.clone());
        }
        let mut out_shape = shape[..2].to_vec();
        out_shape.extend_from_slice(extents);
        check_shape(&out_shape)?;
        let common: Vec<usize> = shape.iter().zip(&out_shape).map(|(&a, &b)| a.min(b)).collect();
        let mut out = vec![T::zero(); out_shape.iter().product()];
        copy_box(self.value().data(), &shape, &mut out, &out_shape, &common);
        let y = Tensor::from_parts_unchecked(out_shape.clone(), out);
        Ok(self.record(y, &[], move |g, _| {
            let mut dx = vec![T::zero(); shape.iter().product()];
            copy_box(g.data(), &out_shape, &mut dx, &shape, &common);
            vec![Some(Tensor::from_parts_unchecked(shape.clone(), dx))]
        }))
    }
}

fn transpose_blocks<T: Copy>(data: &[T], m: usize, n: usize) -> Vec<T> {
    let block = m * n;
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks_exact(block) {
        for j in 0..n {
            for i in 0..m {
                out.push(chunk[i * n + j]);
            }
        }
    }
    out
}

fn broadcast_index_map(target: &[usize], bstrides: &[usize], n: usize) -> Vec<usize> {
    let mut map = Vec::with_capacity(n);
    let mut coords = vec![0usize; target.len()];
    let mut src = 0usize;
    for _ in 0..n {
        map.push(src);
        for axis in (0..target.len()).rev() {
            coords[axis] += 1;
            src += bstrides[axis];
            if coords[axis] < target[axis] {
                break;
            }
            src -= bstrides[axis] * coords[axis];
            coords[axis] = 0;
        }
    }
    map
}

/// Concatenates along `axis`; all other extents must agree.
pub fn concat<T: Element>(vars: &[&Var<T>], axis: usize) -> Result<Var<T>> {
    let first = vars.first().ok_or_else(|| dim_err!("concat of zero tensors"))?;
    if vars.len() == 1 {
        return Ok((*first).clone());
    }
    let base = first.shape();
    if axis >= base.len() {
        return Err(dim_err!("concat axis {axis} on rank {}", base.len()));
    }
    for v in vars {
        let s = v.shape();
        let ok = s.len() == base.len()
            && s.iter().zip(base).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(dim_err!("concat: shape {:?} incompatible with {:?} on axis {axis}", s, base));
        }
    }
    let outer: usize = base[..axis].iter().product();
    let inner: usize = base[axis + 1..].iter().product();
    let lens: Vec<usize> = vars.iter().map(|v| v.shape()[axis]).collect();
    let total: usize = lens.iter().sum();
    let mut out_shape = base.to_vec();
    out_shape[axis] = total;
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for (v, &l) in vars.iter().zip(&lens) {
            let run = l * inner;
            out.extend_from_slice(&v.value().data()[o * run..(o + 1) * run]);
        }
    }
    let y = Tensor::from_parts_unchecked(out_shape, out);
    let shapes: Vec<Vec<usize>> = vars.iter().map(|v| v.shape().to_vec()).collect();
    Ok(vars[0].tape().record(y, vars, move |g, need| {
        let gd = g.data();
        let mut offset = 0;
        let mut grads = Vec::with_capacity(lens.len());
        for (k, &l) in lens.iter().enumerate() {
            let run = l * inner;
            if need[k] {
                let mut part = Vec::with_capacity(outer * run);
                for o in 0..outer {
                    let start = o * total * inner + offset;
                    part.extend_from_slice(&gd[start..start + run]);
                }
                grads.push(Some(Tensor::from_parts_unchecked(shapes[k].clone(), part)));
            } else {
                grads.push(None);
            }
            offset += run;
        }
        grads
    }))
}
