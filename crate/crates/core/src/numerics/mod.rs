//! Dense tensors, a reverse-mode tape, Adam and a finite-difference checker.
//!
//! All model math in the crate goes through [`ComputeGraph`]; nothing else
//! computes gradients by hand.

mod adam;
mod gradcheck;
mod graph;
mod sparse;
mod tensor;

pub use adam::{adam_update, AdamState};
pub use gradcheck::{grad_check, grad_check_many};
pub use graph::{log_softmax_rows, matmul, ComputeGraph, Gradients, Var};
pub use sparse::CsrMatrix;
pub use tensor::Tensor;

/// Entropy of a distribution, `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}
