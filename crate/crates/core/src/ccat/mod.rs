//! The CCAT classifier: spatial tokens per slice, a within-slice encoder,
//! a between-slice encoder over the slice sequence, and an MLP head.

mod blocks;
mod config;
mod model;
mod posenc;

pub use blocks::{AttentionBlock, Block, Encoder, GmlpBlock};
pub use config::{CcatConfig, LEAKY_SLOPE};
pub use model::{AttentionTrace, CcatModel};
pub use posenc::{sinusoid_1d, sinusoid_2d};
