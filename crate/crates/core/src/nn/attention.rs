//! Attention gate, global spatial attention, transformer self-attention,
//! their learnable-scale fusion, and multi-head self/cross attention.

use strokeseg_tensor::{attention, attention_weights, concat, Element, Tensor, Var};

use super::layers::Conv;
use super::params::{Forward, Init, ParamId};
use crate::error::{dim_error, Error, Result};

/// Fixed sinusoidal encoding of flattened positions, shape (channels, positions).
pub fn positional_encoding<T: Element>(channels: usize, positions: usize) -> Tensor<T> {
    Tensor::from_fn(vec![channels, positions], |ix| {
        let (c, pos) = (ix[0], ix[1] as f64);
        let freq = 10000f64.powf(-((c / 2 * 2) as f64) / channels as f64);
        T::from_f64(if c % 2 == 0 { (pos * freq).sin() } else { (pos * freq).cos() })
    })
    .expect("non-empty encoding")
}

fn flat_positions(shape: &[usize]) -> usize {
    shape[2..].iter().product()
}

/// `x + PE` for a (B, C, S...) feature map.
pub fn add_positional<T: Element>(x: &Var<T>) -> Result<Var<T>> {
    let s = x.shape().to_vec();
    let n = flat_positions(&s);
    let pe = x.tape().constant(positional_encoding(s[1], n));
    Ok(x.reshape(vec![s[0], s[1], n])?.add_broadcast(&pe)?.reshape(s)?)
}

/// (B, C, S...) -> (B * heads, n, C / heads).
fn split_heads<T: Element>(x: &Var<T>, heads: usize) -> Result<Var<T>> {
    let s = x.shape();
    let n = flat_positions(s);
    Ok(x.reshape(vec![s[0] * heads, s[1] / heads, n])?.transpose_last2()?)
}

/// Inverse of [`split_heads`] back to the given (B, C, S...) shape.
fn merge_heads<T: Element>(x: &Var<T>, shape: &[usize]) -> Result<Var<T>> {
    Ok(x.transpose_last2()?.reshape(shape.to_vec())?)
}

/// Multi-head scaled dot-product attention between projected maps. Queries
/// come from `q` (B, C, Sq); keys and values from `k`, `v` (B, C, Sk).
fn multi_head<T: Element>(q: &Var<T>, k: &Var<T>, v: &Var<T>, heads: usize, scale: f64) -> Result<Var<T>> {
    let out_shape = q.shape().to_vec();
    let y = attention(&split_heads(q, heads)?, &split_heads(k, heads)?, &split_heads(v, heads)?, scale)?;
    merge_heads(&y, &out_shape)
}

fn head_weights<T: Element>(q: &Var<T>, k: &Var<T>, heads: usize, scale: f64) -> Result<Tensor<T>> {
    Ok(attention_weights(split_heads(q, heads)?.value(), split_heads(k, heads)?.value(), scale)?)
}

fn check_channels<T: Element>(x: &Var<T>, rank: usize, channels: usize, what: &str) -> Result<()> {
    if x.shape().len() != rank + 2 || x.shape()[1] != channels {
        return Err(dim_error(format!("{what} expects {channels} channels over {rank} axes, got {:?}", x.shape())));
    }
    Ok(())
}

/// Additive attention gate: the coarser gating signal, projected and
/// resampled to the skip extents, produces a sigmoid coefficient per skip
/// position that multiplies every skip channel.
#[derive(Clone, Debug)]
pub struct AttentionGate {
    pub gate_proj: Conv,
    pub skip_proj: Conv,
    pub psi: Conv,
    rank: usize,
}

impl AttentionGate {
    pub fn new<T: Element>(init: &mut Init<'_, T>, name: &str, rank: usize, skip_ch: usize, gate_ch: usize) -> Result<Self> {
        let inter = (skip_ch / 2).max(1);
        Ok(AttentionGate {
            gate_proj: Conv::new(init, &format!("{name}.gate"), rank, gate_ch, inter, 1, true)?,
            skip_proj: Conv::new(init, &format!("{name}.skip"), rank, skip_ch, inter, 1, true)?,
            psi: Conv::new(init, &format!("{name}.psi"), rank, inter, 1, 1, true)?,
            rank,
        })
    }

    /// Coefficient map (B, 1, S_skip) with values in (0, 1).
    pub fn coefficients<T: Element>(&self, f: &Forward<'_, T>, skip: &Var<T>, gate: &Var<T>) -> Result<Var<T>> {
        check_channels(skip, self.rank, self.skip_proj.cin, "attention gate skip")?;
        check_channels(gate, self.rank, self.gate_proj.cin, "attention gate signal")?;
        let extents = &skip.shape()[2..];
        let halved = gate.shape()[2..].iter().zip(extents).all(|(&g, &s)| g == s / 2 || g == s.div_ceil(2));
        if gate.shape()[0] != skip.shape()[0] || !halved {
            return Err(dim_error(format!(
                "gating signal {:?} is not at half the skip extents {:?}",
                gate.shape(),
                skip.shape()
            )));
        }
        let g = self.gate_proj.forward(f, gate)?.resize_linear(extents)?;
        let x = self.skip_proj.forward(f, skip)?;
        Ok(self.psi.forward(f, &x.add(&g)?.relu())?.sigmoid())
    }

    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, skip: &Var<T>, gate: &Var<T>) -> Result<Var<T>> {
        let alpha = self.coefficients(f, skip, gate)?;
        Ok(skip.mul_broadcast(&alpha.broadcast_to(skip.shape())?)?)
    }
}

/// Global spatial attention: query and key maps projected to a reduced
/// width, softmax over positions of their affinity, weighting a value map.
#[derive(Clone, Debug)]
pub struct Gsa {
    pub key: Conv,
    pub query: Conv,
    pub value: Conv,
    rank: usize,
}

impl Gsa {
    pub fn new<T: Element>(init: &mut Init<'_, T>, name: &str, rank: usize, channels: usize, reduction: usize) -> Result<Self> {
        let reduced = (channels / reduction.max(1)).max(1);
        Ok(Gsa {
            key: Conv::new(init, &format!("{name}.key"), rank, channels, reduced, 1, true)?,
            query: Conv::new(init, &format!("{name}.query"), rank, channels, reduced, 1, true)?,
            value: Conv::new(init, &format!("{name}.value"), rank, channels, channels, 1, true)?,
            rank,
        })
    }

    fn projections<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<(Var<T>, Var<T>)> {
        check_channels(x, self.rank, self.value.cin, "global spatial attention")?;
        Ok((self.query.forward(f, x)?, self.key.forward(f, x)?))
    }

    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let (q, k) = self.projections(f, x)?;
        let out_shape = x.shape().to_vec();
        let v = split_heads(&self.value.forward(f, x)?, 1)?;
        let y = attention(&split_heads(&q, 1)?, &split_heads(&k, 1)?, &v, 1.0)?;
        merge_heads(&y, &out_shape)
    }

    /// Dense weights (B, n, n); entry (i, j) is the share of position j in the output at i.
    pub fn attention_map<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Tensor<T>> {
        let (q, k) = self.projections(f, x)?;
        head_weights(&q, &k, 1, 1.0)
    }
}

/// Transformer self-attention over flattened positions with additive
/// sinusoidal position encoding and `1 / sqrt(d_k)` scaling.
#[derive(Clone, Debug)]
pub struct Tsa {
    pub inner: Mhsa,
}

impl Tsa {
    pub fn new<T: Element>(init: &mut Init<'_, T>, name: &str, rank: usize, channels: usize) -> Result<Self> {
        Ok(Tsa { inner: Mhsa::build(init, name, rank, channels, 1, false)? })
    }

    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        self.inner.forward(f, x)
    }

    pub fn attention_map<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Tensor<T>> {
        self.inner.attention_maps(f, x)
    }
}

/// `psi1 * tsa + psi2 * gsa + base` with learnable scalars starting at zero.
#[derive(Clone, Debug)]
pub struct Saa {
    pub psi1: ParamId,
    pub psi2: ParamId,
}

impl Saa {
    pub fn new<T: Element>(init: &mut Init<'_, T>, name: &str) -> Result<Self> {
        Ok(Saa {
            psi1: init.constant(format!("{name}.psi1"), vec![1], 0.0)?,
            psi2: init.constant(format!("{name}.psi2"), vec![1], 0.0)?,
        })
    }

    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, tsa: &Var<T>, gsa: &Var<T>, base: &Var<T>) -> Result<Var<T>> {
        if tsa.shape() != base.shape() || gsa.shape() != base.shape() {
            return Err(dim_error(format!(
                "fusion inputs differ in shape: {:?} {:?} {:?}",
                tsa.shape(),
                gsa.shape(),
                base.shape()
            )));
        }
        let attended = tsa.scale_by(&f.param(self.psi1))?.add(&gsa.scale_by(&f.param(self.psi2))?)?;
        Ok(base.add(&attended)?)
    }
}

/// Multi-head self-attention with position encoding added before the
/// query/key/value projections.
#[derive(Clone, Debug)]
pub struct Mhsa {
    pub query: Conv,
    pub key: Conv,
    pub value: Conv,
    pub output: Option<Conv>,
    pub heads: usize,
    rank: usize,
}

impl Mhsa {
    pub fn new<T: Element>(init: &mut Init<'_, T>, name: &str, rank: usize, channels: usize, heads: usize) -> Result<Self> {
        Self::build(init, name, rank, channels, heads, true)
    }

    fn build<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        rank: usize,
        channels: usize,
        heads: usize,
        output: bool,
    ) -> Result<Self> {
        if heads == 0 || channels % heads != 0 {
            return Err(Error::Invalid(format!("{channels} channels cannot be split into {heads} heads")));
        }
        Ok(Mhsa {
            query: Conv::new(init, &format!("{name}.query"), rank, channels, channels, 1, true)?,
            key: Conv::new(init, &format!("{name}.key"), rank, channels, channels, 1, true)?,
            value: Conv::new(init, &format!("{name}.value"), rank, channels, channels, 1, true)?,
            output: if output { Some(Conv::new(init, &format!("{name}.out"), rank, channels, channels, 1, true)?) } else { None },
            heads,
            rank,
        })
    }

    fn scale(&self) -> f64 {
        1.0 / ((self.query.cout / self.heads) as f64).sqrt()
    }

    fn qk<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<(Var<T>, Var<T>, Var<T>)> {
        check_channels(x, self.rank, self.query.cin, "self-attention")?;
        let xp = add_positional(x)?;
        Ok((self.query.forward(f, &xp)?, self.key.forward(f, &xp)?, xp))
    }

    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let (q, k, xp) = self.qk(f, x)?;
        let v = self.value.forward(f, &xp)?;
        let y = multi_head(&q, &k, &v, self.heads, self.scale())?;
        match &self.output {
            Some(o) => o.forward(f, &y),
            None => Ok(y),
        }
    }

    /// Dense per-head weights, shape (B * heads, n, n).
    pub fn attention_maps<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Tensor<T>> {
        let (q, k, _) = self.qk(f, x)?;
        head_weights(&q, &k, self.heads, self.scale())
    }
}

/// Multi-head cross attention between a skip connection and decoder
/// features: decoder queries attend over skip keys/values, the attended map
/// is added back onto the skip, and the sum is concatenated with the decoder
/// features along channels.
#[derive(Clone, Debug)]
pub struct Mhca {
    pub query: Conv,
    pub key: Conv,
    pub value: Conv,
    pub output: Conv,
    pub heads: usize,
    rank: usize,
}

impl Mhca {
    pub fn new<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        rank: usize,
        skip_ch: usize,
        decoder_ch: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || skip_ch % heads != 0 {
            return Err(Error::Invalid(format!("{skip_ch} channels cannot be split into {heads} heads")));
        }
        Ok(Mhca {
            query: Conv::new(init, &format!("{name}.query"), rank, decoder_ch, skip_ch, 1, true)?,
            key: Conv::new(init, &format!("{name}.key"), rank, skip_ch, skip_ch, 1, true)?,
            value: Conv::new(init, &format!("{name}.value"), rank, skip_ch, skip_ch, 1, true)?,
            output: Conv::new(init, &format!("{name}.out"), rank, skip_ch, skip_ch, 1, true)?,
            heads,
            rank,
        })
    }

    fn scale(&self) -> f64 {
        1.0 / ((self.key.cout / self.heads) as f64).sqrt()
    }

    /// Decoder features resampled to the skip extents when they differ.
    fn reconcile<T: Element>(&self, skip: &Var<T>, decoder: &Var<T>) -> Result<Var<T>> {
        check_channels(skip, self.rank, self.key.cin, "cross-attention skip")?;
        check_channels(decoder, self.rank, self.query.cin, "cross-attention decoder")?;
        if skip.shape()[0] != decoder.shape()[0] {
            return Err(dim_error(format!("batch mismatch {:?} vs {:?}", skip.shape(), decoder.shape())));
        }
        Ok(decoder.resize_linear(&skip.shape()[2..])?)
    }

    /// The attended skip features (B, C_skip, S) before concatenation.
    pub fn attend<T: Element>(&self, f: &Forward<'_, T>, skip: &Var<T>, decoder: &Var<T>) -> Result<Var<T>> {
        let dec = self.reconcile(skip, decoder)?;
        let (sp, dp) = (add_positional(skip)?, add_positional(&dec)?);
        let q = self.query.forward(f, &dp)?;
        let k = self.key.forward(f, &sp)?;
        let v = self.value.forward(f, &sp)?;
        self.output.forward(f, &multi_head(&q, &k, &v, self.heads, self.scale())?)
    }

    /// `[skip + attended skip, decoder]` along channels: C_skip + C_decoder channels.
    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, skip: &Var<T>, decoder: &Var<T>) -> Result<Var<T>> {
        let attended = skip.add(&self.attend(f, skip, decoder)?)?;
        let dec = self.reconcile(skip, decoder)?;
        Ok(concat(&[&attended, &dec], 1)?)
    }

    pub fn attention_maps<T: Element>(&self, f: &Forward<'_, T>, skip: &Var<T>, decoder: &Var<T>) -> Result<Tensor<T>> {
        let dec = self.reconcile(skip, decoder)?;
        let q = self.query.forward(f, &add_positional(&dec)?)?;
        let k = self.key.forward(f, &add_positional(skip)?)?;
        head_weights(&q, &k, self.heads, self.scale())
    }
}
