//! Numerical models of charge-density-wave transport.
//!
//! - [`model`]: impurity lattice, drive field, shared parameter records.
//! - [`classical`]: overdamped random-pinning dynamics, in-loop conductivity
//!   transform, dielectric response and threshold scans.
//! - [`quantum`]: single-chain wavefunction dynamics (Crank–Nicolson and
//!   Dufort–Frankel steppers).
//! - [`sine_gordon`]: analytic kinks, continuum residual and the pendulum
//!   chain.
//! - [`variational`]: Gaussian-packet trial states for coupled chains,
//!   quadrature energies, minimisation, band structure and phase staircase.
//! - [`current_laws`]: soliton tunnelling and Zener current laws and fits.
//! - [`optim`]: Nelder–Mead simplex minimiser shared by the fitters.
//! - [`par`]: ordered data-parallel maps (rayon, or sequential without the
//!   `parallel` feature).

/// Crate version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod classical;
pub mod current_laws;
pub mod model;
pub mod optim;
pub mod par;
pub mod quantum;
pub mod sine_gordon;
mod tridiag;
pub mod variational;
