//! Random-embedding global optimization (X-REGO) for bound-constrained
//! problems whose objective has low effective dimensionality.
//!
//! Modules, bottom-up:
//!
//! * [`embedcore`]: seeded Gaussian / Haar sampling, effective-subspace
//!   projections and the minimal-norm reduced minimizer.
//! * [`numerics`]: special functions, distribution CDFs, adaptive
//!   quadrature and the success-probability integrals `I` and `J`.
//! * [`problems`]: the 19 benchmark functions and their lifting to
//!   `D` dimensions through a random rotation.
//! * [`reduced`]: the reduced problem `min f(Ay + p) s.t. Ay + p ∈ [-1,1]^D`.
//! * [`solvers`]: DIRECT, Nelder–Mead (single and multi-start) and random search.
//! * [`xrego`]: the multi-embedding driver and its anchor-point policies.
//! * [`theory`]: Monte-Carlo and quadrature validation of the success
//!   probability laws and the convergence bound.
//! * [`harness`]: experiment plans, performance profiles and file output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod embedcore;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod problems;
pub mod reduced;
pub mod solvers;
pub mod theory;
pub mod xrego;

pub use error::{Error, Result};
