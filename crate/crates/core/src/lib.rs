//! Numerical laboratory for scale-free unique continuation estimates of
//! second-order elliptic operators in divergence form.
//!
//! The crate evaluates the explicit constants of the sampling and
//! equidistribution inequalities, builds the geometric and analytic objects
//! they are stated for (equidistributed sequences, Carleman weights, cutoffs,
//! reflected and periodic extensions), discretizes
//! `Op u = -div(A grad u) + b . grad u + c u` on cubes, and checks the
//! inequalities on eigenfunctions and spectral-projector samples.

// `!(x > 0.0)` is used on purpose so that NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carleman;
pub mod cli;
pub mod constants;
pub mod discretization;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod quadrature;
pub mod spectral;
pub mod verifier;

pub use error::{Result, UcError};
