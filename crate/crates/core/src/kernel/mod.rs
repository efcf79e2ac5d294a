//! Dense tensors and tape-based reverse-mode differentiation.
//!
//! Values live in a [`Graph`] arena; each primitive appends a node holding
//! its output and whatever it needs for the backward pass. Nodes are
//! appended in evaluation order, so walking the arena backwards is a valid
//! reverse topological order.
//!
//! Shapes never broadcast, with one exception: [`Graph::add_row`] adds a
//! rank-1 bias to every row of a matrix.

mod graph;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use tensor::{gaussian_sample, Tensor};

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("invalid shape {shape:?}")]
    InvalidShape { shape: Vec<usize> },
    #[error("data length {got} does not match shape volume {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    RankMismatch { op: &'static str, expected: usize, shape: Vec<usize> },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("{op}: index {index} out of range (len {len})")]
    IndexOutOfRange { op: &'static str, index: usize, len: usize },
}

/// `c = a·b + beta·c` for strided row/column layouts.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!((m - 1) * rsa + (k - 1) * csa < a.len());
    assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(m * n <= c.len());
    // SAFETY: the asserts above bound every offset dgemm touches; c is
    // row-major m×n and exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
