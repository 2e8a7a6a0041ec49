//! Scan-level COVID-19 classification of chest CT volumes.
//!
//! Two pipelines share one data layer:
//!
//! * [`dwcc`]: a slice scorer followed by a Wilcoxon signed-rank test over
//!   the per-slice evidence, giving a scan decision with a p-value.
//! * [`ccat`]: a CNN backbone whose spatial feature map is read by a
//!   within-slice transformer, whose per-slice vectors are read by a
//!   between-slice transformer, ending in a three-layer perceptron.
//!
//! Both are trained by [`train`] and scored by [`eval`].

pub mod artifact;
pub mod ccat;
pub mod config;
pub mod data;
pub mod dwcc;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod nn;
pub mod seed;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tape, Tensor, Var};
