//! Parameter storage, evaluation context and the network building blocks.

mod attention;
mod layers;
mod params;

pub use attention::{add_positional, positional_encoding, AttentionGate, Gsa, Mhca, Mhsa, Saa, Tsa};
pub use layers::{BatchNorm, Block, BlockConfig, Conv, ConvBlock, ConvUnit, ResidualBlock, BN_EPS};
pub use params::{BatchNormUpdate, BufferId, Forward, Init, ParamId, ParamStore};
