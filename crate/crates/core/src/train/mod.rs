//! Adam with a step learning-rate schedule, minimizing two-class
//! cross-entropy over scans (CCAT) or slices (the DWCC scorer).

mod adam;
mod config;
mod engine;
mod sets;

pub use adam::{adam_step, OptimizerState};
pub use config::TrainConfig;
pub use engine::{train, EpochLog, Observer, Silent, TrainSet, TrainState, EPOCH_LOG_HEADER};
pub use sets::{ScanSet, SliceSet};
