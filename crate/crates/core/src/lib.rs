//! Numerical laboratory for lazy training of two-layer ReLU networks.
//!
//! The crate trains `f(x) = Σ_k a_k σ(b_kᵀx)` and its frozen-first-layer random
//! feature counterpart by explicit-Euler gradient descent, and evaluates the
//! kernel, Gram-matrix and generalization quantities that describe the
//! kernel regime along those trajectories.
//!
//! Modules, bottom-up:
//!
//! - [`rng`]: seeded, cross-platform-stable random streams.
//! - [`linalg`]: small dense symmetric eigen solver and least squares.
//! - [`datagen`]: sphere sampling, target functions and datasets.
//! - [`kernel`]: limiting kernels `k_a`, `k_b` and their normalized matrices.
//! - [`model`]: network parameters, forward pass, risks and gradients.
//! - [`dynamics`]: gradient-descent flows with trajectory logging.
//! - [`theory`]: Gram matrices, bound evaluators and empirical checks.
//! - [`audit`]: seeded empirical checks built on `theory`.
//! - [`experiment`]: presets, artifact emission and plot data.

pub mod audit;
pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};

/// ReLU.
#[inline]
pub fn relu(t: f64) -> f64 {
    if t > 0.0 {
        t
    } else {
        0.0
    }
}

/// ReLU derivative with the convention `σ'(0) = 0`.
#[inline]
pub fn relu_prime(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}
