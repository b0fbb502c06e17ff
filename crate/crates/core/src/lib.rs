//! Slow-fast jump diffusions with delay.
//!
//! The crate simulates the two-time-scale system
//!
//! ```text
//! dX = a(X_t, Y) dt + √ε σ(X_t) dB¹ + ε ∫ c(X_{t-}, z) Ñ^{1/ε}(dt, dz)
//! dY = (1/ε) f(X_t, Y) dt + (1/√ε) g(X_t, Y) dB² + ∫ h(X_{t-}, Y_-, z) Ñ^{1/ε}(dt, dz)
//! ```
//!
//! where `X_t` is the delay segment `θ ↦ X(t+θ)` on `[-τ, 0]`, and provides the
//! averaging and moderate-deviation machinery built on it: invariant-measure
//! and averaged-drift estimators, the averaged functional ODE, Khasminskii
//! auxiliary processes, the skeleton equation, the quadratic rate function
//! and Monte Carlo sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod averaging;
pub mod deviations;
pub mod engine;
pub mod error;
pub mod levy;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod segment;
pub mod stats;

pub use error::{Error, Result};
