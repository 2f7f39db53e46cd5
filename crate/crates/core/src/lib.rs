//! Numerical laboratory for the degenerate parabolic problem
//! `u_t - div(A(t,x) |∇u|^{p-2} ∇u) = γ |∇u|^q` with homogeneous Dirichlet data.
//!
//! - [`regime`]: thresholds in `(p, q, N)`, decay exponents and rates.
//! - [`field`]: grids, discrete gradients and the conservative p-Laplacian.
//! - [`evolve`]: initial data, time steppers and recorded runs.
//! - [`metrics`]: norms, truncations, Gronwall envelopes and decay fits.
//! - [`cli`]: configuration files, verification reports and the `decaylab` commands.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod evolve;
pub mod field;
pub mod metrics;
pub mod regime;
