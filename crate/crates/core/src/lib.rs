//! Certification toolkit for constrained minimax programs.
//!
//! Finds KKT points of `min over Phi, max over Y(x)` programs by semismooth
//! Newton on the Kojima reformulation, differentiates the optimal-value
//! function through a Schur complement of the inner KKT system, certifies
//! Jacobian-uniqueness style stability conditions at both levels, and
//! cross-examines the certificates with derivative-free oracles and
//! canonical-perturbation experiments.

pub mod builtins;
pub mod conditions;
pub mod diff;
pub mod error;
pub mod generator;
pub mod harness;
pub mod jsonout;
pub mod kkt;
pub mod linalg;
pub mod lower;
pub mod lq;
pub mod oracle;
pub mod problem;
pub mod regularity;
pub mod report;
pub mod sensitivity;
pub mod solver;
pub mod tols;

pub use error::{Error, Result};
