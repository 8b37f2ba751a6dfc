//! Certificate tolerances, shared by the lower-level and upper-level checks.

/// Thresholds for the numerical certificates.
///
/// Rank decisions are relative: a row stack counts as independent when its
/// smallest singular value exceeds `rank_rel` times its largest. Activity
/// decisions use `act` on raw constraint values, and are always reported
/// with margins rather than silently applied.
#[derive(Debug, Clone, Copy)]
pub struct CertTolerances {
    /// KKT residual gate (infinity norm).
    pub kkt: f64,
    /// Relative singular-value gate for constraint-gradient independence.
    pub rank_rel: f64,
    /// Strict-complementarity margin gate.
    pub strict_comp: f64,
    /// Eigenvalue gate for the (strong) second-order conditions.
    pub sosc: f64,
    /// Activity tolerance for index-set decisions.
    pub act: f64,
}

impl Default for CertTolerances {
    fn default() -> Self {
        Self {
            kkt: 1e-8,
            rank_rel: 1e-8,
            strict_comp: 1e-8,
            sosc: 1e-8,
            act: 1e-8,
        }
    }
}
