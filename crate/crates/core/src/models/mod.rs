//! The eight architectures, built from a declarative spec, and their
//! checkpoint container.

mod checkpoint;
mod net;
mod spec;

pub use checkpoint::{Checkpoint, CheckpointManifest};
pub use net::{BaseAttention, DecoderLevel, Model, Network, SkipFusion, Upsample};
pub use spec::{ModelSpec, Variant};
