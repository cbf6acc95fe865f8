//! Efficient attention for long inputs: sparsity patterns, forward kernels
//! with a dense masked oracle, exact score-cell accounting, and a toy
//! encoder-decoder that trains with pluggable cross-attention.

pub mod autodiff;
pub mod error;
pub mod kernels;
pub mod ledger;
pub mod mask;
pub mod patterns;
pub mod seq2seq;
pub mod tensor;
pub mod verify;

pub use autodiff::{finite_difference_check, Gradients, Tape, Var};
pub use error::{Error, Result};
pub use mask::{softmax_masked, AttentionMask};
pub use patterns::{PatternKind, PatternSpec};
pub use tensor::Tensor;
