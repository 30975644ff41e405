use strokeseg_tensor::{ConvOptions, Element, Var};

use super::params::{BatchNormUpdate, BufferId, Forward, Init, ParamId};
use crate::error::{dim_error, Error, Result};

pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ConvKind {
    /// Stride 1, padding `k / 2`: spatial extents preserved.
    Same,
    /// Stride equal to the kernel size, weight laid out Cin x Cout x K.
    Transposed,
}

/// Convolution with optional bias over 1-3 spatial axes.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub cin: usize,
    pub cout: usize,
    kernel: usize,
    rank: usize,
    kind: ConvKind,
}

impl Conv {
    /// Same-padded convolution with an odd cubic kernel.
    pub fn new<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        rank: usize,
        cin: usize,
        cout: usize,
        kernel: usize,
        bias: bool,
    ) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::Invalid(format!("{name}: same padding needs an odd kernel, got {kernel}")));
        }
        let kvol = kernel.pow(rank as u32);
        let mut shape = vec![cout, cin];
        shape.extend(std::iter::repeat(kernel).take(rank));
        let weight = init.he_uniform(format!("{name}.weight"), shape, cin * kvol)?;
        let bias = if bias { Some(init.constant(format!("{name}.bias"), vec![cout], 0.0)?) } else { None };
        Ok(Conv { weight, bias, cin, cout, kernel, rank, kind: ConvKind::Same })
    }

    /// Transposed convolution that multiplies every spatial extent by `factor`.
    pub fn transposed<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        rank: usize,
        cin: usize,
        cout: usize,
        factor: usize,
    ) -> Result<Self> {
        let kvol = factor.pow(rank as u32);
        let mut shape = vec![cin, cout];
        shape.extend(std::iter::repeat(factor).take(rank));
        let weight = init.he_uniform(format!("{name}.weight"), shape, cout * kvol)?;
        let bias = Some(init.constant(format!("{name}.bias"), vec![cout], 0.0)?);
        Ok(Conv { weight, bias, cin, cout, kernel: factor, rank, kind: ConvKind::Transposed })
    }

    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        if x.shape().len() != self.rank + 2 || x.shape()[1] != self.cin {
            return Err(dim_error(format!(
                "conv expects {} input channels over {} spatial axes, got {:?}",
                self.cin,
                self.rank,
                x.shape()
            )));
        }
        let w = f.param(self.weight);
        let b = self.bias.map(|id| f.param(id));
        Ok(match self.kind {
            ConvKind::Same => x.conv(&w, b.as_ref(), &ConvOptions::same(&vec![self.kernel; self.rank]))?,
            ConvKind::Transposed => x.conv_transpose(&w, b.as_ref(), &ConvOptions::strided(self.rank, self.kernel))?,
        })
    }
}

/// Per-channel batch normalisation with running statistics for inference.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
}

impl BatchNorm {
    pub fn new<T: Element>(init: &mut Init<'_, T>, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: init.constant(format!("{name}.gamma"), vec![channels], 1.0)?,
            beta: init.constant(format!("{name}.beta"), vec![channels], 0.0)?,
            running_mean: init.buffer(format!("{name}.running_mean"), vec![channels], 0.0)?,
            running_var: init.buffer(format!("{name}.running_var"), vec![channels], 1.0)?,
        })
    }

    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let (g, b) = (f.param(self.gamma), f.param(self.beta));
        if f.training() {
            let (y, stats) = x.batch_norm_train(&g, &b, BN_EPS)?;
            f.push_bn_update(BatchNormUpdate { mean: self.running_mean, var: self.running_var, stats });
            Ok(y)
        } else {
            let (m, v) = (f.buffer(self.running_mean).data(), f.buffer(self.running_var).data());
            Ok(x.batch_norm_eval(&g, &b, m, v, BN_EPS)?)
        }
    }
}

/// Convolution, optional batch normalisation, optional ReLU.
#[derive(Clone, Debug)]
pub struct ConvUnit {
    pub conv: Conv,
    pub norm: Option<BatchNorm>,
}

impl ConvUnit {
    pub fn new<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        rank: usize,
        cin: usize,
        cout: usize,
        batch_norm: bool,
    ) -> Result<Self> {
        let conv = Conv::new(init, &format!("{name}.conv"), rank, cin, cout, 3, true)?;
        let norm = if batch_norm { Some(BatchNorm::new(init, &format!("{name}.bn"), cout)?) } else { None };
        Ok(ConvUnit { conv, norm })
    }

    /// Convolution and normalisation without the activation.
    pub fn linear<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let y = self.conv.forward(f, x)?;
        match &self.norm {
            Some(bn) => bn.forward(f, &y),
            None => Ok(y),
        }
    }

    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        Ok(self.linear(f, x)?.relu())
    }
}

/// Block configuration shared by every convolution block of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockConfig {
    pub rank: usize,
    pub batch_norm: bool,
}

/// Two 3x3(x3) convolution units: `cin -> mid -> cout`.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub first: ConvUnit,
    pub second: ConvUnit,
}

impl ConvBlock {
    pub fn new<T: Element>(init: &mut Init<'_, T>, name: &str, cfg: BlockConfig, cin: usize, cout: usize) -> Result<Self> {
        Self::with_mid(init, name, cfg, cin, cout, cout)
    }

    pub fn with_mid<T: Element>(
        init: &mut Init<'_, T>,
        name: &str,
        cfg: BlockConfig,
        cin: usize,
        cout: usize,
        mid: usize,
    ) -> Result<Self> {
        Ok(ConvBlock {
            first: ConvUnit::new(init, &format!("{name}.0"), cfg.rank, cin, mid, cfg.batch_norm)?,
            second: ConvUnit::new(init, &format!("{name}.1"), cfg.rank, mid, cout, cfg.batch_norm)?,
        })
    }

    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        self.second.forward(f, &self.first.forward(f, x)?)
    }
}

/// Two convolution units on the main path plus a shortcut (identity, or a
/// 1x1 projection when the channel count changes); `relu(main + shortcut)`.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub first: ConvUnit,
    pub second: ConvUnit,
    pub projection: Option<Conv>,
}

impl ResidualBlock {
    pub fn new<T: Element>(init: &mut Init<'_, T>, name: &str, cfg: BlockConfig, cin: usize, cout: usize) -> Result<Self> {
        let first = ConvUnit::new(init, &format!("{name}.0"), cfg.rank, cin, cout, cfg.batch_norm)?;
        let second = ConvUnit::new(init, &format!("{name}.1"), cfg.rank, cout, cout, cfg.batch_norm)?;
        let projection = if cin != cout {
            Some(Conv::new(init, &format!("{name}.shortcut"), cfg.rank, cin, cout, 1, true)?)
        } else {
            None
        };
        Ok(ResidualBlock { first, second, projection })
    }

    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let main = self.second.linear(f, &self.first.forward(f, x)?)?;
        let shortcut = match &self.projection {
            Some(p) => p.forward(f, x)?,
            None => x.clone(),
        };
        Ok(main.add(&shortcut)?.relu())
    }
}

/// Either block kind, as used at each encoder/decoder level.
#[derive(Clone, Debug)]
pub enum Block {
    Plain(ConvBlock),
    Residual(ResidualBlock),
}

impl Block {
    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        match self {
            Block::Plain(b) => b.forward(f, x),
            Block::Residual(b) => b.forward(f, x),
        }
    }
}
