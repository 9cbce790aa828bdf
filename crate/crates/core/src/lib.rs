//! Expected reward, transient and asymptotic deviation matrices, mean first
//! passage times and stationary distributions of finite level-independent
//! quasi-birth-and-death processes.
//!
//! Two independent routes are provided:
//!
//! * [`transform`] and [`passage`] solve the second-order matrix difference
//!   equations level by level using `G(s)`, `Ĝ(s)` and `H0(s)` from
//!   [`matrix_eq`]; every matrix involved is at most `4n x 4n` whatever the
//!   capacity.
//! * [`perturbation`] grows the capacity one level at a time and updates the
//!   full deviation matrix (and the resolvent) with one-block updates.
//!
//! [`oracle`] holds dense brute-force references for both.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod error;
pub mod laplace;
pub mod linalg;
pub mod mapph;
pub mod matrix_eq;
pub mod model;
pub mod oracle;
pub mod passage;
pub mod perturbation;
pub mod stationary;
pub mod transform;

pub use error::{ErrorCategory, QbdError, Result};
pub use matrix_eq::{Algorithm, GMatrices, SolverConfig};
pub use model::{DriftClass, DriftTag, QbdBlocks, RewardSpec, ValidationReport};
pub use stationary::StationaryDistribution;
