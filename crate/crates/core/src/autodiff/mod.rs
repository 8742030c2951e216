//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] records operations on [`Tensor`] values and hands out [`Var`]
//! handles. [`Graph::backward`] builds gradient nodes in the same graph, so
//! penalties that contain an input gradient (coherency, MP, GP) can be
//! differentiated again with respect to the network parameters.
//!
//! Conventions:
//! - no broadcasting except [`Graph::add_row_bias`];
//! - the subgradient of `relu`, `lrelu` and `abs` at exactly 0 is 0;
//! - `log` of a non-positive entry and `exp` overflow are errors.

mod graph;
mod tensor;

pub use graph::{Graph, OpKind, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: domain error, {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("backward: root must be 1x1, got {shape:?}")]
    NonScalarRoot { shape: (usize, usize) },
    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("tensor of shape {rows}x{cols} cannot hold {len} values")]
    BadLength { rows: usize, cols: usize, len: usize },
}

/// Central-difference gradient `(f(θ + h·e_i) − f(θ − h·e_i)) / 2h` for every
/// coordinate of `theta`.
pub fn finite_diff_oracle(mut f: impl FnMut(&Tensor) -> f64, theta: &Tensor, step: f64) -> Tensor {
    assert!(step > 0.0, "finite difference step must be positive");
    let mut probe = theta.clone();
    let mut out = Tensor::zeros(theta.rows(), theta.cols());
    for i in 0..theta.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + step;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - step;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        out.as_mut_slice()[i] = (up - down) / (2.0 * step);
    }
    out
}

/// Largest entrywise error of `got` against `want`, relative to
/// `max(|want|, floor)`.
pub fn max_relative_error(got: &Tensor, want: &Tensor, floor: f64) -> f64 {
    assert_eq!(got.shape(), want.shape());
    got.as_slice()
        .iter()
        .zip(want.as_slice())
        .map(|(g, w)| (g - w).abs() / w.abs().max(floor))
        .fold(0.0, f64::max)
}
