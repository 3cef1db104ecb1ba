//! Exact-arithmetic and numeric machinery for the Kontsevich-Penner matrix
//! model: the cubic (Airy) one-matrix integral with a logarithmic potential
//! and an external source.
//!
//! The crate computes the model's free energy as a truncated graded series in
//! the source parameters t_n (n a non-negative half-integer), derives the
//! Virasoro-type constraint tower mechanically from the matrix equations of
//! motion, evaluates the dual correlators by exact residues, solves the
//! large-size saddle equations numerically, and cross-checks every route
//! against the others.

pub mod error;
pub mod rational;
pub mod kpoly;
pub mod series;
pub mod rng;

pub use error::{Error, Result};

pub mod diffop;
pub mod eigencalc;
pub mod virasoro;
pub mod solve;

pub mod laurent;
pub mod correlators;
pub mod wick;

pub mod largen;
pub mod oracles;

pub mod json;
pub mod fixtures;
pub mod verify;
