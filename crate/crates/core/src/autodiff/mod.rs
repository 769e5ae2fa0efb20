//! Minimal reverse-mode differentiation over real tensors, with complex
//! values carried as paired real tensors, the Adam optimizer, and a
//! finite-difference gradient oracle.

pub mod adam;
pub mod complex;
pub mod fd;
pub mod tape;
pub mod verify;
pub mod tensor;

pub use adam::{AdamHyper, AdamState};
pub use complex::Ct;
pub use fd::{finite_diff_grad, max_rel_error};
pub use tape::{Gradients, NodeId, Op, Tape};
pub use tensor::Tensor;
