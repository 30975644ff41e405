use strokeseg_tensor::{concat, Element, Tensor, Var};

use super::spec::{ModelSpec, Variant};
use crate::error::{dim_error, Result};
use crate::nn::{
    AttentionGate, Block, BlockConfig, Conv, ConvBlock, ConvUnit, Forward, Gsa, Init, Mhca, Mhsa, ParamStore,
    ResidualBlock, Saa, Tsa,
};

/// Extra processing of the base (lowest-resolution) features.
#[derive(Clone, Debug)]
pub enum BaseAttention {
    None,
    /// Transformer and global spatial attention fused by learnable scales,
    /// followed by a convolution block.
    SelfAware { tsa: Tsa, gsa: Gsa, saa: Saa, fusion: ConvBlock },
    /// Residual multi-head self-attention followed by a residual pointwise
    /// feed-forward layer.
    Transformer { mhsa: Mhsa, ffn_in: Conv, ffn_out: Conv },
}

#[derive(Clone, Debug)]
pub enum Upsample {
    Transposed(Conv),
    /// Linear resize followed by a 3x3 convolution unit.
    ResizeConv(ConvUnit),
    /// Linear resize only.
    Resize,
}

#[derive(Clone, Debug)]
pub enum SkipFusion {
    Concat,
    Gated(AttentionGate),
    Cross(Mhca),
}

#[derive(Clone, Debug)]
pub struct DecoderLevel {
    pub up: Upsample,
    pub skip: SkipFusion,
    pub block: Block,
}

/// Encoder-decoder topology shared by all eight variants.
#[derive(Clone, Debug)]
pub struct Network {
    pub encoder: Vec<Block>,
    pub base: Block,
    pub base_attention: BaseAttention,
    /// Indexed by level; evaluated deepest first.
    pub decoder: Vec<DecoderLevel>,
    pub head: Conv,
}

impl Network {
    pub fn build<T: Element>(spec: &ModelSpec, init: &mut Init<'_, T>) -> Result<Self> {
        spec.validate()?;
        let v = spec.variant;
        let cfg = BlockConfig { rank: spec.rank(), batch_norm: spec.batch_norm };
        let rank = cfg.rank;
        let ch = &spec.channels;
        let levels = spec.levels;
        let residual = matches!(v, Variant::Resunet2d | Variant::Resunet3d);
        let block = |init: &mut Init<'_, T>, name: &str, cin: usize, cout: usize| -> Result<Block> {
            Ok(if residual {
                Block::Residual(ResidualBlock::new(init, name, cfg, cin, cout)?)
            } else {
                Block::Plain(ConvBlock::new(init, name, cfg, cin, cout)?)
            })
        };

        let mut encoder = Vec::with_capacity(levels);
        let mut prev = 1;
        for (l, &c) in ch[..levels].iter().enumerate() {
            encoder.push(block(init, &format!("enc{l}"), prev, c)?);
            prev = c;
        }
        let base_width = if v == Variant::Transattn2d { ch[levels] / 2 } else { ch[levels] };
        let base = block(init, "base", prev, base_width)?;
        let base_attention = match v {
            Variant::Transattn2d => BaseAttention::SelfAware {
                tsa: Tsa::new(init, "base.tsa", rank, base_width)?,
                gsa: Gsa::new(init, "base.gsa", rank, base_width, spec.gsa_reduction)?,
                saa: Saa::new(init, "base.saa")?,
                fusion: ConvBlock::new(init, "base.fusion", cfg, base_width, base_width)?,
            },
            Variant::Unettransformer2d => BaseAttention::Transformer {
                mhsa: Mhsa::new(init, "base.mhsa", rank, base_width, spec.heads)?,
                ffn_in: Conv::new(init, "base.ffn_in", rank, base_width, 4 * base_width, 1, true)?,
                ffn_out: Conv::new(init, "base.ffn_out", rank, 4 * base_width, base_width, 1, true)?,
            },
            _ => BaseAttention::None,
        };

        let mut decoder: Vec<Option<DecoderLevel>> = (0..levels).map(|_| None).collect();
        let mut deeper = base_width;
        for l in (0..levels).rev() {
            let c = ch[l];
            let name = format!("dec{l}");
            let level = match v {
                Variant::Attnunet2d | Variant::Attnunet3d => DecoderLevel {
                    up: Upsample::ResizeConv(ConvUnit::new(init, &format!("{name}.up"), rank, deeper, c, spec.batch_norm)?),
                    skip: SkipFusion::Gated(AttentionGate::new(init, &format!("{name}.gate"), rank, c, deeper)?),
                    block: block(init, &format!("{name}.block"), 2 * c, c)?,
                },
                Variant::Transattn2d => {
                    let cin = deeper + c;
                    let cout = if l > 0 { ch[l - 1] } else { ch[0] };
                    DecoderLevel {
                        up: Upsample::Resize,
                        skip: SkipFusion::Concat,
                        block: Block::Plain(ConvBlock::with_mid(init, &format!("{name}.block"), cfg, cin, cout, cin / 2)?),
                    }
                }
                Variant::Unettransformer2d => DecoderLevel {
                    up: Upsample::Transposed(Conv::transposed(init, &format!("{name}.up"), rank, deeper, c, 2)?),
                    skip: SkipFusion::Cross(Mhca::new(init, &format!("{name}.cross"), rank, c, c, spec.heads)?),
                    block: block(init, &format!("{name}.block"), 2 * c, c)?,
                },
                _ => DecoderLevel {
                    up: Upsample::Transposed(Conv::transposed(init, &format!("{name}.up"), rank, deeper, c, 2)?),
                    skip: SkipFusion::Concat,
                    block: block(init, &format!("{name}.block"), 2 * c, c)?,
                },
            };
            deeper = match &level.block {
                Block::Plain(b) => b.second.conv.cout,
                Block::Residual(b) => b.second.conv.cout,
            };
            decoder[l] = Some(level);
        }
        let head = Conv::new(init, "head", rank, deeper, 1, 1, true)?;
        Ok(Network { encoder, base, base_attention, decoder: decoder.into_iter().map(Option::unwrap).collect(), head })
    }

    /// Sigmoid probabilities, same spatial extents as the input.
    pub fn forward<T: Element>(&self, f: &Forward<'_, T>, x: &Var<T>, dropout: f64) -> Result<Var<T>> {
        let rank = x.shape().len() - 2;
        let window = vec![2; rank];
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut h = x.clone();
        for block in &self.encoder {
            let s = f.dropout(&block.forward(f, &h)?, dropout)?;
            h = s.max_pool(&window, &window)?;
            skips.push(s);
        }
        h = f.dropout(&self.base.forward(f, &h)?, dropout)?;
        h = match &self.base_attention {
            BaseAttention::None => h,
            BaseAttention::SelfAware { tsa, gsa, saa, fusion } => {
                let fused = saa.forward(f, &tsa.forward(f, &h)?, &gsa.forward(f, &h)?, &h)?;
                fusion.forward(f, &fused)?
            }
            BaseAttention::Transformer { mhsa, ffn_in, ffn_out } => {
                let h = h.add(&mhsa.forward(f, &h)?)?;
                h.add(&ffn_out.forward(f, &ffn_in.forward(f, &h)?.relu())?)?
            }
        };
        for (level, skip) in self.decoder.iter().zip(&skips).rev() {
            let extents = &skip.shape()[2..];
            let up = match &level.up {
                Upsample::Transposed(conv) => conv.forward(f, &h)?.pad_to(extents)?,
                Upsample::ResizeConv(unit) => unit.forward(f, &h.resize_linear(extents)?)?,
                Upsample::Resize => h.resize_linear(extents)?,
            };
            let merged = match &level.skip {
                SkipFusion::Concat => concat(&[skip, &up], 1)?,
                SkipFusion::Gated(gate) => concat(&[&gate.forward(f, skip, &h)?, &up], 1)?,
                SkipFusion::Cross(cross) => cross.forward(f, skip, &up)?,
            };
            h = level.block.forward(f, &merged)?;
        }
        Ok(self.head.forward(f, &h)?.sigmoid())
    }
}

/// A built architecture: its spec, the seed it was initialised from, the
/// topology and the parameter store.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub spec: ModelSpec,
    pub seed: u64,
    pub network: Network,
    pub store: ParamStore<T>,
}

impl<T: Element> Model<T> {
    /// He-uniform convolution weights, zero biases, unit/zero normalisation
    /// affine parameters, all drawn from a stream seeded by `seed`.
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let network = Network::build(&spec, &mut Init::new(&mut store, seed))?;
        Ok(Model { spec, seed, network, store })
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    /// Checks a (B, 1, extents...) batch against the spec.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let ok = shape.len() == self.spec.rank() + 2 && shape[1] == 1 && shape[2..] == self.spec.input_extents[..];
        if !ok {
            let mut want = vec![1];
            want.extend(&self.spec.input_extents);
            return Err(dim_error(format!("{} expects input (B, {:?}), got {:?}", self.spec.variant, want, shape)));
        }
        Ok(())
    }

    pub fn forward(&self, f: &Forward<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        self.check_input(x.shape())?;
        self.network.forward(f, x, self.spec.dropout)
    }

    /// Inference-mode probabilities for a batch.
    pub fn predict(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        let f = Forward::eval(&self.store);
        let y = self.forward(&f, &f.input(x))?.shared_value();
        drop(f);
        Ok(std::sync::Arc::try_unwrap(y).unwrap_or_else(|shared| (*shared).clone()))
    }
}
