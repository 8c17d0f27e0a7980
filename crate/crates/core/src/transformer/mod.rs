//! Shared encoder, the two attention decoders, and the cross-connected
//! decoder variant.

mod blocks;
mod config;
mod model;

pub use config::{CrossMode, ModelConfig};
pub use model::{DecoderKind, DualDecoderModel, FwdCtx};
