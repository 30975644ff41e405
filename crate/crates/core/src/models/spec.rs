use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The eight benchmarked architectures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Unet2d,
    Resunet2d,
    Attnunet2d,
    Transattn2d,
    Unettransformer2d,
    Unet3d,
    Resunet3d,
    Attnunet3d,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Unet2d,
        Variant::Resunet2d,
        Variant::Attnunet2d,
        Variant::Transattn2d,
        Variant::Unettransformer2d,
        Variant::Unet3d,
        Variant::Resunet3d,
        Variant::Attnunet3d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Unet2d => "unet2d",
            Variant::Resunet2d => "resunet2d",
            Variant::Attnunet2d => "attnunet2d",
            Variant::Transattn2d => "transattn2d",
            Variant::Unettransformer2d => "unettransformer2d",
            Variant::Unet3d => "unet3d",
            Variant::Resunet3d => "resunet3d",
            Variant::Attnunet3d => "attnunet3d",
        }
    }

    /// Display name used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            Variant::Unet2d => "U-Net 2D",
            Variant::Resunet2d => "Res U-Net 2D",
            Variant::Attnunet2d => "Attention U-Net 2D",
            Variant::Transattn2d => "TransAttn U-Net 2D",
            Variant::Unettransformer2d => "U-Net Transformer 2D",
            Variant::Unet3d => "U-Net 3D",
            Variant::Resunet3d => "Res U-Net 3D",
            Variant::Attnunet3d => "Attention U-Net 3D",
        }
    }

    pub fn is_3d(self) -> bool {
        matches!(self, Variant::Unet3d | Variant::Resunet3d | Variant::Attnunet3d)
    }

    /// Number of spatial axes.
    pub fn rank(self) -> usize {
        if self.is_3d() {
            3
        } else {
            2
        }
    }

    pub fn full_channels(self) -> Vec<usize> {
        match self {
            Variant::Unettransformer2d => vec![64, 128, 256, 512],
            v if v.is_3d() => vec![16, 32, 64, 128],
            _ => vec![64, 128, 256, 512, 1024],
        }
    }

    /// Input extents the full-size models are specified for.
    pub fn full_input_extents(self) -> Vec<usize> {
        match self {
            Variant::Attnunet3d => vec![144, 176, 128],
            v if v.is_3d() => vec![144, 172, 128],
            _ => vec![192, 192],
        }
    }

    /// Reference learnable-parameter count of the full-width model.
    pub fn reference_param_count(self) -> usize {
        match self {
            Variant::Unet2d => 31_000_000,
            Variant::Resunet2d => 32_000_000,
            Variant::Attnunet2d => 34_000_000,
            Variant::Transattn2d => 25_000_000,
            Variant::Unettransformer2d => 11_000_000,
            Variant::Unet3d => 1_400_000,
            Variant::Resunet3d => 1_420_000,
            Variant::Attnunet3d => 1_610_000,
        }
    }

    pub fn names() -> String {
        Variant::ALL.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown model '{s}'; expected one of: {}", Variant::names())))
    }
}

/// Declarative description of one architecture instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Encoder widths, one per level plus the base.
    pub channels: Vec<usize>,
    /// Number of pooling / upsampling steps.
    pub levels: usize,
    pub dropout: f64,
    /// Integer divisor applied to the full widths.
    pub width_scale: usize,
    pub batch_norm: bool,
    /// Head count of multi-head self/cross attention.
    pub heads: usize,
    /// Channel reduction of the spatial-attention query/key projections.
    pub gsa_reduction: usize,
    /// Spatial extents the model accepts.
    pub input_extents: Vec<usize>,
}

impl ModelSpec {
    /// Full-width model at the full input extents.
    pub fn new(variant: Variant) -> Self {
        let channels = variant.full_channels();
        ModelSpec {
            variant,
            levels: channels.len() - 1,
            channels,
            dropout: 0.2,
            width_scale: 1,
            batch_norm: true,
            heads: 4,
            gsa_reduction: 8,
            input_extents: variant.full_input_extents(),
        }
    }

    /// Divides every full width by `scale`.
    pub fn with_width_scale(mut self, scale: usize) -> Result<Self> {
        if scale == 0 {
            return Err(Error::Invalid("width_scale must be >= 1".into()));
        }
        let full = self.variant.full_channels();
        if let Some(c) = full.iter().find(|&&c| c % scale != 0) {
            return Err(Error::Invalid(format!("width {c} of {} is not divisible by {scale}", self.variant)));
        }
        self.channels = full.iter().map(|c| c / scale).collect();
        self.width_scale = scale;
        Ok(self)
    }

    pub fn with_input_extents(mut self, extents: Vec<usize>) -> Self {
        self.input_extents = extents;
        self
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout = p;
        self
    }

    pub fn rank(&self) -> usize {
        self.variant.rank()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("{}: {m}", self.variant)));
        if self.channels.len() != self.levels + 1 || self.levels == 0 {
            return bad(format!("{} widths for {} levels", self.channels.len(), self.levels));
        }
        if self.channels.contains(&0) {
            return bad("zero channel width".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.input_extents.len() != self.rank() || self.input_extents.iter().any(|&e| e >> self.levels == 0) {
            return bad(format!("input extents {:?} cannot be pooled {} times", self.input_extents, self.levels));
        }
        if self.variant == Variant::Unettransformer2d {
            if let Some(c) = self.channels.iter().find(|&&c| self.heads == 0 || c % self.heads != 0) {
                return bad(format!("width {c} not divisible by {} heads", self.heads));
            }
        }
        Ok(())
    }
}
