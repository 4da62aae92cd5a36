//! Minimal dense-array math with reverse-mode gradient support.
//!
//! Everything is 64-bit: desk scale makes speed irrelevant and the
//! finite-difference checks demand the precision. One tape per training
//! step; tensors are immutable values that are safe to share read-only.

mod fd;
mod tape;
mod tensor;

pub use fd::{finite_diff_grad, max_rel_err, DEFAULT_FD_STEP};
pub use tape::{GradTape, Gradients};
pub use tensor::Tensor;
