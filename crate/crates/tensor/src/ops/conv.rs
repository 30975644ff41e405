//! N-dimensional (1D/2D/3D) cross-correlation via chunked im2col + GEMM.
//!
//! Every spatial rank is handled as 3D with leading unit axes. Output
//! positions are processed in chunks of whole output rows so the column
//! buffer stays bounded regardless of volume size.

use crate::element::Element;
use crate::error::{dim_err, Result};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Upper bound on column-buffer elements per chunk.
const COL_BUDGET: usize = 1 << 21;

/// Stride and zero-padding per spatial axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvOptions {
    pub stride: Vec<usize>,
    pub padding: Vec<usize>,
}

impl ConvOptions {
    pub fn new(stride: Vec<usize>, padding: Vec<usize>) -> Self {
        Self { stride, padding }
    }

    /// Stride 1 with padding `k / 2` on every axis: output extents equal input
    /// extents for odd kernels.
    pub fn same(kernel: &[usize]) -> Self {
        Self { stride: vec![1; kernel.len()], padding: kernel.iter().map(|k| k / 2).collect() }
    }

    pub fn valid(rank: usize) -> Self {
        Self { stride: vec![1; rank], padding: vec![0; rank] }
    }

    pub fn strided(rank: usize, stride: usize) -> Self {
        Self { stride: vec![stride; rank], padding: vec![0; rank] }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Geometry {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub in_sp: [usize; 3],
    pub k: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub out_sp: [usize; 3],
    pub rank: usize,
}

fn lift(v: &[usize], fill: usize) -> [usize; 3] {
    let mut out = [fill; 3];
    out[3 - v.len()..].copy_from_slice(v);
    out
}

impl Geometry {
    fn in_size(&self) -> usize {
        self.in_sp.iter().product()
    }

    fn out_size(&self) -> usize {
        self.out_sp.iter().product()
    }

    fn ksize(&self) -> usize {
        self.k.iter().product()
    }

    fn pointwise(&self) -> bool {
        self.ksize() == 1 && self.stride == [1; 3] && self.pad == [0; 3]
    }

    fn out_shape(&self) -> Vec<usize> {
        let mut s = vec![self.batch, self.cout];
        s.extend_from_slice(&self.out_sp[3 - self.rank..]);
        s
    }

    fn in_shape(&self) -> Vec<usize> {
        let mut s = vec![self.batch, self.cin];
        s.extend_from_slice(&self.in_sp[3 - self.rank..]);
        s
    }

    /// Geometry of a forward convolution of `input` (B, Cin, S...) with a
    /// kernel (Cout, Cin, K...).
    pub fn conv(input: &[usize], kernel: &[usize], opts: &ConvOptions) -> Result<Self> {
        let rank = input.len().checked_sub(2).filter(|r| (1..=3).contains(r)).ok_or_else(|| {
            dim_err!("convolution input must be (B, C, 1-3 spatial axes), got {:?}", input)
        })?;
        if kernel.len() != rank + 2 {
            return Err(dim_err!("kernel {:?} does not match input {:?}", kernel, input));
        }
        if kernel[1] != input[1] {
            return Err(dim_err!(
                "kernel expects {} input channels but input has {}",
                kernel[1],
                input[1]
            ));
        }
        if opts.stride.len() != rank || opts.padding.len() != rank {
            return Err(dim_err!("stride/padding rank mismatch for spatial rank {rank}"));
        }
        if opts.stride.iter().any(|&s| s == 0) {
            return Err(dim_err!("stride must be >= 1"));
        }
        let in_sp = lift(&input[2..], 1);
        let k = lift(&kernel[2..], 1);
        let stride = lift(&opts.stride, 1);
        let pad = lift(&opts.padding, 0);
        let mut out_sp = [1; 3];
        for a in 0..3 {
            let padded = in_sp[a] + 2 * pad[a];
            if k[a] > padded {
                return Err(dim_err!("kernel {:?} larger than padded input {:?}", kernel, input));
            }
            out_sp[a] = (padded - k[a]) / stride[a] + 1;
        }
        Ok(Self { batch: input[0], cin: input[1], cout: kernel[0], in_sp, k, stride, pad, out_sp, rank })
    }

    /// Geometry of the convolution whose data-gradient is the transposed
    /// convolution of `input` (B, Cin_t, S...) with kernel (Cin_t, Cout_t, K...).
    pub fn transposed(input: &[usize], kernel: &[usize], opts: &ConvOptions) -> Result<Self> {
        let rank = input.len().checked_sub(2).filter(|r| (1..=3).contains(r)).ok_or_else(|| {
            dim_err!("transposed convolution input must be (B, C, 1-3 spatial axes), got {:?}", input)
        })?;
        if kernel.len() != rank + 2 || kernel[0] != input[1] {
            return Err(dim_err!("transposed kernel {:?} does not match input {:?}", kernel, input));
        }
        if opts.stride.len() != rank || opts.padding.len() != rank || opts.stride.contains(&0) {
            return Err(dim_err!("bad stride/padding for spatial rank {rank}"));
        }
        let mut out = vec![input[0], kernel[1]];
        for a in 0..rank {
            let full = (input[2 + a] - 1) * opts.stride[a] + kernel[2 + a];
            if full <= 2 * opts.padding[a] {
                return Err(dim_err!("transposed convolution output would be empty"));
            }
            out.push(full - 2 * opts.padding[a]);
        }
        let g = Self::conv(&out, kernel, opts)?;
        debug_assert_eq!(&g.out_sp[3 - rank..], &input[2..]);
        Ok(g)
    }

    fn lines_per_chunk(&self) -> usize {
        let rows = self.cin * self.ksize();
        let ow = self.out_sp[2];
        (COL_BUDGET / (rows * ow).max(1)).max(1)
    }

    /// Valid output range along one axis for kernel tap `kk`.
    fn valid_range(out: usize, inp: usize, stride: usize, pad: usize, kk: usize) -> (usize, usize) {
        // need 0 <= o*stride + kk - pad < inp
        let lo = if pad > kk { (pad - kk).div_ceil(stride) } else { 0 };
        let hi_num = inp as isize - 1 + pad as isize - kk as isize;
        let hi = if hi_num < 0 { 0 } else { (hi_num as usize / stride + 1).min(out) };
        (lo.min(hi), hi)
    }

    fn im2col<T: Element>(&self, x: &[T], l0: usize, l1: usize, col: &mut [T]) {
        let [_, oh_n, ow_n] = self.out_sp;
        let [id_n, ih_n, iw_n] = self.in_sp;
        let [kd_n, kh_n, kw_n] = self.k;
        let np = (l1 - l0) * ow_n;
        let in_size = self.in_size();
        let mut row = 0;
        for ci in 0..self.cin {
            let xc = &x[ci * in_size..(ci + 1) * in_size];
            for kd in 0..kd_n {
                for kh in 0..kh_n {
                    for kw in 0..kw_n {
                        let dst = &mut col[row * np..(row + 1) * np];
                        let (lo, hi) = Self::valid_range(ow_n, iw_n, self.stride[2], self.pad[2], kw);
                        for l in l0..l1 {
                            let (od, oh) = (l / oh_n, l % oh_n);
                            let seg = &mut dst[(l - l0) * ow_n..(l - l0 + 1) * ow_n];
                            let id = (od * self.stride[0] + kd) as isize - self.pad[0] as isize;
                            let ih = (oh * self.stride[1] + kh) as isize - self.pad[1] as isize;
                            if id < 0 || id >= id_n as isize || ih < 0 || ih >= ih_n as isize || lo >= hi {
                                seg.fill(T::zero());
                                continue;
                            }
                            let base = (id as usize * ih_n + ih as usize) * iw_n;
                            seg[..lo].fill(T::zero());
                            seg[hi..].fill(T::zero());
                            let iw0 = lo * self.stride[2] + kw - self.pad[2];
                            if self.stride[2] == 1 {
                                seg[lo..hi].copy_from_slice(&xc[base + iw0..base + iw0 + (hi - lo)]);
                            } else {
                                for (j, o) in (lo..hi).enumerate() {
                                    seg[o] = xc[base + iw0 + j * self.stride[2]];
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    fn col2im<T: Element>(&self, col: &[T], l0: usize, l1: usize, dx: &mut [T]) {
        let [_, oh_n, ow_n] = self.out_sp;
        let [id_n, ih_n, iw_n] = self.in_sp;
        let [kd_n, kh_n, kw_n] = self.k;
        let np = (l1 - l0) * ow_n;
        let in_size = self.in_size();
        let mut row = 0;
        for ci in 0..self.cin {
            let xc = &mut dx[ci * in_size..(ci + 1) * in_size];
            for kd in 0..kd_n {
                for kh in 0..kh_n {
                    for kw in 0..kw_n {
                        let src = &col[row * np..(row + 1) * np];
                        row += 1;
                        let (lo, hi) = Self::valid_range(ow_n, iw_n, self.stride[2], self.pad[2], kw);
                        if lo >= hi {
                            continue;
                        }
                        for l in l0..l1 {
                            let (od, oh) = (l / oh_n, l % oh_n);
                            let id = (od * self.stride[0] + kd) as isize - self.pad[0] as isize;
                            let ih = (oh * self.stride[1] + kh) as isize - self.pad[1] as isize;
                            if id < 0 || id >= id_n as isize || ih < 0 || ih >= ih_n as isize {
                                continue;
                            }
                            let seg = &src[(l - l0) * ow_n..(l - l0 + 1) * ow_n];
                            let base = (id as usize * ih_n + ih as usize) * iw_n;
                            let iw0 = lo * self.stride[2] + kw - self.pad[2];
                            for (j, o) in (lo..hi).enumerate() {
                                xc[base + iw0 + j * self.stride[2]] += seg[o];
                            }
                        }
                    }
                }
            }
        }
    }

    fn chunks(&self) -> impl Iterator<Item = (usize, usize)> {
        let lines = self.out_sp[0] * self.out_sp[1];
        let step = self.lines_per_chunk();
        (0..lines).step_by(step).map(move |l0| (l0, (l0 + step).min(lines)))
    }

    /// y = conv(x, w); `w` is (Cout, Cin*K) row-major.
    pub fn forward<T: Element>(&self, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
        let (is, os, ck) = (self.in_size(), self.out_size(), self.cin * self.ksize());
        let mut y = vec![T::zero(); self.batch * self.cout * os];
        let mut col = Vec::new();
        for b in 0..self.batch {
            let xb = &x[b * self.cin * is..(b + 1) * self.cin * is];
            let yb = &mut y[b * self.cout * os..(b + 1) * self.cout * os];
            if self.pointwise() {
                T::gemm_raw(self.cout, self.cin, os, T::one(), w, ck as isize, 1, xb, is as isize, 1, T::zero(), yb, os as isize, 1);
            } else {
                for (l0, l1) in self.chunks() {
                    let np = (l1 - l0) * self.out_sp[2];
                    col.resize(ck * np, T::zero());
                    self.im2col(xb, l0, l1, &mut col);
                    let start = l0 * self.out_sp[2];
                    T::gemm_raw(
                        self.cout, ck, np, T::one(), w, ck as isize, 1, &col, np as isize, 1, T::zero(),
                        &mut yb[start..], os as isize, 1,
                    );
                }
            }
            if let Some(bias) = bias {
                for (co, &bv) in bias.iter().enumerate() {
                    for v in &mut yb[co * os..(co + 1) * os] {
                        *v += bv;
                    }
                }
            }
        }
        y
    }

    /// dx from dy for the forward convolution.
    pub fn backward_data<T: Element>(&self, dy: &[T], w: &[T]) -> Vec<T> {
        let (is, os, ck) = (self.in_size(), self.out_size(), self.cin * self.ksize());
        let mut dx = vec![T::zero(); self.batch * self.cin * is];
        let mut col = Vec::new();
        for b in 0..self.batch {
            let dyb = &dy[b * self.cout * os..(b + 1) * self.cout * os];
            let dxb = &mut dx[b * self.cin * is..(b + 1) * self.cin * is];
            if self.pointwise() {
                T::gemm_raw(self.cin, self.cout, is, T::one(), w, 1, ck as isize, dyb, os as isize, 1, T::zero(), dxb, is as isize, 1);
            } else {
                for (l0, l1) in self.chunks() {
                    let np = (l1 - l0) * self.out_sp[2];
                    col.resize(ck * np, T::zero());
                    let start = l0 * self.out_sp[2];
                    T::gemm_raw(
                        ck, self.cout, np, T::one(), w, 1, ck as isize, &dyb[start..], os as isize, 1, T::zero(),
                        &mut col, np as isize, 1,
                    );
                    self.col2im(&col, l0, l1, dxb);
                }
            }
        }
        dx
    }

    /// dw (Cout, Cin*K) from x and dy.
    pub fn backward_weight<T: Element>(&self, x: &[T], dy: &[T]) -> Vec<T> {
        let (is, os, ck) = (self.in_size(), self.out_size(), self.cin * self.ksize());
        let mut dw = vec![T::zero(); self.cout * ck];
        let mut col = Vec::new();
        for b in 0..self.batch {
            let xb = &x[b * self.cin * is..(b + 1) * self.cin * is];
            let dyb = &dy[b * self.cout * os..(b + 1) * self.cout * os];
            if self.pointwise() {
                T::gemm_raw(self.cout, is, self.cin, T::one(), dyb, os as isize, 1, xb, 1, is as isize, T::one(), &mut dw, ck as isize, 1);
            } else {
                for (l0, l1) in self.chunks() {
                    let np = (l1 - l0) * self.out_sp[2];
                    col.resize(ck * np, T::zero());
                    self.im2col(xb, l0, l1, &mut col);
                    let start = l0 * self.out_sp[2];
                    T::gemm_raw(
                        self.cout, np, ck, T::one(), &dyb[start..], os as isize, 1, &col, 1, np as isize, T::one(),
                        &mut dw, ck as isize, 1,
                    );
                }
            }
        }
        dw
    }

    fn channel_sums<T: Element>(&self, dy: &[T], channels: usize, size: usize) -> Vec<T> {
        let mut db = vec![T::zero(); channels];
        for b in 0..self.batch {
            for (c, acc) in db.iter_mut().enumerate() {
                let start = (b * channels + c) * size;
                *acc += dy[start..start + size].iter().copied().sum::<T>();
            }
        }
        db
    }
}

fn check_bias<T: Element>(bias: Option<&Var<T>>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [channels] {
            return Err(dim_err!("bias shape {:?}, expected [{channels}]", b.shape()));
        }
    }
    Ok(())
}

impl<T: Element> Var<T> {
    /// Cross-correlation of a (B, Cin, S...) input with a (Cout, Cin, K...) kernel.
    pub fn conv(&self, weight: &Var<T>, bias: Option<&Var<T>>, opts: &ConvOptions) -> Result<Var<T>> {
        let g = Geometry::conv(self.shape(), weight.shape(), opts)?;
        check_bias(bias, g.cout)?;
        let y = g.forward(self.value().data(), weight.value().data(), bias.map(|b| b.value().data()));
        let y = Tensor::from_parts_unchecked(g.out_shape(), y);
        let (x, w) = (self.shared_value(), weight.shared_value());
        let mut others = vec![weight];
        if let Some(b) = bias {
            others.push(b);
        }
        let (w_shape, x_shape) = (weight.shape().to_vec(), g.in_shape());
        Ok(self.record(y, &others, move |dy, need| {
            let mut out = vec![
                need[0].then(|| Tensor::from_parts_unchecked(x_shape.clone(), g.backward_data(dy.data(), w.data()))),
                need[1].then(|| Tensor::from_parts_unchecked(w_shape.clone(), g.backward_weight(x.data(), dy.data()))),
            ];
            if need.len() > 2 {
                out.push(need[2].then(|| {
                    Tensor::from_parts_unchecked(vec![g.cout], g.channel_sums(dy.data(), g.cout, g.out_size()))
                }));
            }
            out
        }))
    }

    /// Transposed convolution (the data-gradient of `conv`) of a
    /// (B, Cin, S...) input with a (Cin, Cout, K...) kernel.
    pub fn conv_transpose(&self, weight: &Var<T>, bias: Option<&Var<T>>, opts: &ConvOptions) -> Result<Var<T>> {
        let g = Geometry::transposed(self.shape(), weight.shape(), opts)?;
        // In `g`, "input" is this op's output and "output" is this op's input.
        check_bias(bias, g.cin)?;
        let mut y = g.backward_data(self.value().data(), weight.value().data());
        let size = g.in_size();
        if let Some(b) = bias {
            for bi in 0..g.batch {
                for (c, &bv) in b.value().data().iter().enumerate() {
                    let start = (bi * g.cin + c) * size;
                    for v in &mut y[start..start + size] {
                        *v += bv;
                    }
                }
            }
        }
        let y = Tensor::from_parts_unchecked(g.in_shape(), y);
        let (x, w) = (self.shared_value(), weight.shared_value());
        let mut others = vec![weight];
        if let Some(b) = bias {
            others.push(b);
        }
        let (w_shape, x_shape) = (weight.shape().to_vec(), g.out_shape());
        Ok(self.record(y, &others, move |dy, need| {
            let mut out = vec![
                need[0].then(|| Tensor::from_parts_unchecked(x_shape.clone(), g.forward(dy.data(), w.data(), None))),
                need[1].then(|| Tensor::from_parts_unchecked(w_shape.clone(), g.backward_weight(dy.data(), x.data()))),
            ];
            if need.len() > 2 {
                out.push(need[2].then(|| {
                    Tensor::from_parts_unchecked(vec![g.cin], g.channel_sums(dy.data(), g.cin, g.in_size()))
                }));
            }
            out
        }))
    }
}
