//! Numerical laboratory for time-harmonic diffuse optical tomography in the
//! diffusion approximation.
//!
//! The crate covers the pointwise tensor algebra of the complex diffusion
//! tensor, a finite-difference Dirichlet solver for the equivalent real
//! two-component system, discrete Dirichlet-to-Neumann operators with
//! fractional Sobolev boundary norms, closed-form singular solutions built
//! from complex Gegenbauer polynomials, and an experiment harness that
//! confronts boundary stability estimates with computed data.

pub mod cli;
pub mod config;
pub mod dnmap;
pub mod error;
pub mod expr;
pub mod fd;
pub mod fit;
pub mod gegenbauer;
pub mod grid;
pub mod medium;
pub mod plot;
pub mod quadrature;
pub mod singular;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Version string embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Serialize a complex number as `[re, im]`.
pub(crate) fn serialize_c64<S: serde::Serializer>(v: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize;
    [v.re, v.im].serialize(s)
}
