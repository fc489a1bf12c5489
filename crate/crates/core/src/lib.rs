//! Numerical laboratory for single-peakon dynamics in the Novikov equation.
//!
//! The crate evolves piecewise-C¹ perturbations of the unit peakon along
//! characteristics: exactly for the linearized flow ([`linear`]), and as a
//! coupled ODE system with O(N) nonlocal terms for the full equation
//! ([`characteristics`]). Conservation functionals, growth-rate fits and the
//! Riccati blow-up comparison live in [`diagnostics`]; [`direct`] holds an
//! independent fixed-grid solver used for cross-validation; [`experiment`]
//! wires the pieces into reproducible scenario runs with CSV artifacts.

pub mod characteristics;
pub mod diagnostics;
pub mod direct;
pub mod error;
pub mod experiment;
pub mod field;
pub mod kernel;
pub mod linear;

pub use error::{Error, Result};
