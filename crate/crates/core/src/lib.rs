//! Numerical laboratory for the one-dimensional swelling porous-elastic soil
//! with a single internal fractional damping of generalized Caputo type.
//!
//! The fractional term is realized through its diffusive representation, the
//! resulting augmented system is simulated exactly in space (sine modes) and
//! with Crank–Nicolson in time, and its spectrum and resolvent are probed to
//! exhibit the polynomial decay rate `t^{−2/(1−α)}`.
//!
//! Modules:
//! - [`model`]: parameters, validity checks, `μ(y)` and the limit wave speeds.
//! - [`kernel`]: the fractional operator, directly and via the diffusive grid.
//! - [`modal`]: per-mode generator, time stepping and energy bookkeeping.
//! - [`spectrum`]: characteristic roots and their asymptotic branches.
//! - [`resolvent`]: reduced resolvent solves, growth exponents, static solve.
//! - [`experiments`]: decay-rate fits and cross-checks combining the above.

pub mod error;
pub mod exec;
pub mod experiments;
pub mod fit;
pub mod kernel;
pub mod modal;
pub mod model;
pub mod resolvent;
pub mod spectrum;

pub use error::{Error, Result};
pub use exec::Exec;
pub use kernel::DiffusiveGrid;
pub use model::{validate_params, DerivedConstants, PhysicalParams, ValidationReport};
