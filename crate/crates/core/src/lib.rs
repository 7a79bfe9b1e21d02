//! Numerical laboratory for the thin-film equation on a horizontal cylinder
//!
//! ```text
//! u_t + ∂x[ uⁿ (u_xxx + α² u_x − sin x) ] = 0,   x ∈ ℝ/2πℤ
//! ```
//!
//! The crate is split into:
//!
//! * [`grid`]: periodic grid, nodal fields, quadrature, spectral differentiation.
//! * [`functionals`]: energy, dissipation, entropies and the analytic bounds around them.
//! * [`steady`]: closed-form droplet and film steady states, the energy minimizer, the catalog.
//! * [`evolution`]: conservative backward-Euler/Newton integrator for the regularized equation.
//! * [`experiments`]: reproduction harness (mass map, catalog sweep, evolution, rate checks).

pub mod banded;
pub mod config;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod functionals;
pub mod grid;
pub mod quadrature;
pub mod steady;

pub use error::{Error, Result};
pub use functionals::Params;
pub use grid::{Field, PeriodicGrid};
