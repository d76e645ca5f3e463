//! Core numerics for a triangular cross-diffusion epidemic model.
//!
//! The system evolves a susceptible density `u` and an infective density `v`
//! on a bounded domain with no-flux boundaries:
//!
//! ```text
//! u_t - a Δu         = Λ - λ(t) f(u, v) - µ u
//! v_t - b Δu - d Δv  =     λ(t) f(u, v) - µ v
//! ```
//!
//! The crate is `no_std` (with `alloc`). It provides the model description and
//! hypothesis checks ([`model`]), the Lyapunov constants and their algebraic
//! admissibility checks ([`constants`]), a cell-centered finite-difference grid
//! ([`grid`]), forward-Euler integrators for the direct and diagonalized forms
//! ([`solver`]) and runtime monitors for the Lyapunov functional and the
//! invariant region ([`monitor`]).
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is how NaN gets rejected alongside nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod constants;
mod error;
pub mod grid;
pub mod model;
pub mod monitor;
pub mod solver;

pub use error::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;
