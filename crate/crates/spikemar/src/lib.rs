//! spikemar: ternary spiking neurons in a toy state-space decoder, trained by
//! spike-aware bidirectional distillation from a dense teacher, with an
//! operation-level energy profiler for the attention-vs-SSM comparison.

pub mod error;
pub mod atmn;
pub mod data;
pub mod distill;
pub mod energy;
pub mod metrics;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
