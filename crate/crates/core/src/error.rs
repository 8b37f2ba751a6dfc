//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Problem document violates the LQ schema.
    #[error("schema violation: {0}")]
    Schema(String),

    /// Runtime shape disagreement between data and declared dimensions.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    /// Quadratic block fails the symmetry check.
    #[error("asymmetric quadratic block in {name} (max asymmetry {asymmetry:.3e})")]
    AsymmetricQuad { name: String, asymmetry: f64 },

    /// A split component sits on the kink of the positive/negative-part map.
    #[error("degenerate split: |{block}[{index}]| = {value:.3e} is below the activity tolerance; use a generalized-Jacobian element instead")]
    DegenerateSplit {
        block: &'static str,
        index: usize,
        value: f64,
    },

    #[error("singular matrix in {what}: sigma_min {sigma_min:.3e}, sigma_max {sigma_max:.3e}")]
    SingularMatrix {
        what: String,
        sigma_min: f64,
        sigma_max: f64,
    },

    #[error("{what}: no convergence after {iters} iterations (residual {residual:.3e})")]
    MaxIterations {
        what: String,
        iters: usize,
        residual: f64,
    },

    /// A tracked active set changed along a path that requires it fixed.
    #[error("active-set change at {where_}: {detail}")]
    ActiveSetChange { where_: String, detail: String },

    /// A nested solve inside an outer operation did not succeed.
    #[error("nested solve failed at {context}: {detail}")]
    NestedSolve { context: String, detail: String },

    /// A required certificate did not hold at a path node.
    #[error("certificate failed at node {node}: {item}")]
    CertificationFailed { node: usize, item: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Non-finite number where a finite one is required (reports reject NaN).
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
