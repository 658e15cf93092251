//! Numerical laboratory for stochastic degenerate fractional conservation laws
//!
//! ```text
//! du + ∂ₓF(u) dt + g^λ[u] dt = ∂ₓ(A(u) ∂ₓu) dt + Φ(u) dW
//! ```
//!
//! on the torus of length 2π, approximated by vanishing viscosity and a
//! semi-implicit Euler–Maruyama scheme. The crate provides the grid and
//! norms ([`torus`]), coefficient models ([`coefficients`]), two realizations
//! of the fractional operator ([`fractional`]), the time stepper and coupled
//! Monte Carlo paths ([`solver`]), kinetic-formulation diagnostics
//! ([`kinetic`]) and the experiments that check the quantitative estimates
//! ([`experiments`]).
//!
//! All numerics are generic over the scalar type through [`Real`]; the aliases
//! below fix `f64`, which is what the experiments use.

// `!(x > 0)` is how parameter checks reject NaN along with the range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coefficients;
pub mod error;
pub mod experiments;
pub mod fractional;
pub mod kinetic;
pub mod quadrature;
pub mod real;
pub mod solver;
pub mod stats;
pub mod torus;

pub use error::{Error, Result};

/// Version of this crate, recorded in run summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use real::Real;

pub type Grid = torus::TorusGrid<f64>;
pub type Field = torus::Field<f64>;
pub type SpectralField = torus::SpectralField<f64>;
pub type Flux = coefficients::FluxSpec<f64>;
pub type Diffusion = coefficients::DiffusionSpec<f64>;
pub type Noise = coefficients::NoiseSpec<f64>;
pub type Kernel = fractional::LevyKernel<f64>;
pub type Config = solver::SolverConfig<f64>;
pub type Trajectory = solver::Trajectory<f64>;

pub type Grid32 = torus::TorusGrid<f32>;
pub type Field32 = torus::Field<f32>;
