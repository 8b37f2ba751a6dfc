//! Optimal-value-function derivatives and the full-vs-reduced Schur identity.
//!
//! With the inner Jacobian uniqueness conditions certified at x, the value
//! function phi(x) = f(x, y(x)) is twice differentiable and
//!
//! ```text
//! grad phi(x)  = grad_x L(x, y(x), mu(x), lambda(x))
//! hess phi(x)  = hess_xx L - N_alpha' K_alpha^{-1} N_alpha
//! ```
//!
//! An equivalent form eliminates the full slack-extended system
//! (y, s, mu, lambda) instead of the active-set-reduced one; both produce the
//! same Schur term, which `verify_schur_identity` checks numerically.

use crate::error::{Error, Result};
use crate::kkt::lagrangian_blocks;
use crate::linalg;
use crate::lower::{self, LowerSolution};
use crate::problem::ProblemSpec;
use nalgebra::{DMatrix, DVector};

/// Condition-number gate on the reduced lower KKT matrix.
const K_ALPHA_COND_GATE: f64 = 1e12;

/// Assembled sensitivity data at a certified point.
#[derive(Debug, Clone)]
pub struct SensitivityBundle {
    pub grad: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub k_alpha: DMatrix<f64>,
    pub n_alpha: DMatrix<f64>,
    /// Reduced upper Hessian (value Hessian plus the multiplier-weighted
    /// upper-constraint curvature).
    pub psi: DMatrix<f64>,
    pub k_alpha_sigma_min: f64,
    pub k_alpha_cond: f64,
    pub hessian_asymmetry: f64,
}

/// First derivative of the value function: the x-gradient of the Lagrangian
/// at the certified inner solution.
pub fn value_grad(spec: &ProblemSpec, x: &DVector<f64>, sol: &LowerSolution) -> DVector<f64> {
    let lag = lagrangian_blocks(spec, x, &sol.y, &sol.mu, &sol.lambda).expect("dimensions");
    lag.grad_x
}

pub(crate) struct HessianDetails {
    pub hessian: DMatrix<f64>,
    pub asymmetry: f64,
    pub k_sigma_min: f64,
    pub k_cond: f64,
}

pub(crate) fn value_hessian_details(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    sol: &LowerSolution,
) -> Result<HessianDetails> {
    let k = lower::assemble_k_alpha(spec, x, sol);
    let n = lower::assemble_n_alpha(spec, x, sol);
    let (lo, hi) = linalg::sigma_extrema(&k);
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if k.nrows() > 0 && !(cond <= K_ALPHA_COND_GATE) {
        return Err(Error::SingularMatrix {
            what: format!("reduced lower KKT matrix (condition {cond:.3e})"),
            sigma_min: lo,
            sigma_max: hi,
        });
    }
    let lag = lagrangian_blocks(spec, x, &sol.y, &sol.mu, &sol.lambda)?;
    let schur = if k.nrows() == 0 {
        DMatrix::zeros(spec.dims.n, spec.dims.n)
    } else {
        let kinv_n = linalg::solve_matrix(&k, &n, "reduced lower KKT matrix")?;
        n.transpose() * kinv_n
    };
    let raw = &lag.hess_xx - schur;
    let asymmetry = linalg::mat_inf_norm(&(&raw - raw.transpose()));
    if asymmetry > 1e-8 {
        return Err(Error::AsymmetricQuad {
            name: "value-function Hessian".into(),
            asymmetry,
        });
    }
    Ok(HessianDetails {
        hessian: (&raw + raw.transpose()) * 0.5,
        asymmetry,
        k_sigma_min: lo,
        k_cond: cond,
    })
}

/// Second derivative of the value function via a dense factorization of the
/// reduced lower KKT matrix. Symmetrized; asymmetry beyond 1e-8 is treated
/// as a wrong assembly, not roundoff, and fails the run.
pub fn value_hessian(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    sol: &LowerSolution,
) -> Result<DMatrix<f64>> {
    Ok(value_hessian_details(spec, x, sol)?.hessian)
}

/// The full slack-extended pair (K, N): blocks ordered as the y block, the
/// slack block, the h block, and the g block,
///
/// ```text
/// K = [ hess_yy L     0                0       J_y g'            ]    ...
/// ```
///
/// with `-2 Diag(lambda)` on the slack diagonal and `2 Diag(sqrt(-g))`
/// coupling slacks to the g rows. Size (m + 2 m2 + m1) square; N stacks
/// [hess_yx L; 0; J_x h; J_x g].
pub fn assemble_full_kn(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    sol: &LowerSolution,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dims = spec.dims;
    let (m, m1, m2, n) = (dims.m, dims.m1, dims.m2, dims.n);
    let g = spec.g_values(x, &sol.y);
    let mut sqrt_neg_g = DVector::zeros(m2);
    for i in 0..m2 {
        if g[i] > 1e-12 {
            return Err(Error::Infeasible(format!(
                "g[{i}] = {:.3e} > 0 at the inner solution; slack extension undefined",
                g[i]
            )));
        }
        sqrt_neg_g[i] = (-g[i]).max(0.0).sqrt();
    }
    let lag = lagrangian_blocks(spec, x, &sol.y, &sol.mu, &sol.lambda)?;
    let (jxh, jyh) = spec.h_jacobians(x, &sol.y);
    let (jxg, jyg) = spec.g_jacobians(x, &sol.y);

    let size = m + m2 + m1 + m2;
    let off_s = m;
    let off_h = m + m2;
    let off_g = m + m2 + m1;
    let mut k = DMatrix::zeros(size, size);
    linalg::insert_block(&mut k, 0, 0, &lag.hess_yy);
    linalg::insert_block(&mut k, 0, off_h, &jyh.transpose());
    linalg::insert_block(&mut k, 0, off_g, &jyg.transpose());
    for i in 0..m2 {
        k[(off_s + i, off_s + i)] = -2.0 * sol.lambda[i];
        k[(off_s + i, off_g + i)] = 2.0 * sqrt_neg_g[i];
        k[(off_g + i, off_s + i)] = 2.0 * sqrt_neg_g[i];
    }
    linalg::insert_block(&mut k, off_h, 0, &jyh);
    linalg::insert_block(&mut k, off_g, 0, &jyg);

    let mut n_mat = DMatrix::zeros(size, n);
    linalg::insert_block(&mut n_mat, 0, 0, &lag.hess_xy.transpose());
    linalg::insert_block(&mut n_mat, off_h, 0, &jxh);
    linalg::insert_block(&mut n_mat, off_g, 0, &jxg);
    Ok((k, n_mat))
}

#[derive(Debug, Clone)]
pub struct IdentityReport {
    /// inf-norm of the full-system Schur term N' K^{-1} N.
    pub full_norm: f64,
    /// inf-norm of the reduced Schur term.
    pub reduced_norm: f64,
    pub abs_error: f64,
    /// abs_error / (1 + reduced_norm).
    pub rel_error: f64,
    pub pass: bool,
}

/// Check that the slack-extended and active-set-reduced Schur terms agree.
/// Requires the full K to be nonsingular, which strict complementarity
/// provides (the inactive slack block is then invertible).
pub fn verify_schur_identity(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    sol: &LowerSolution,
    tol: f64,
) -> Result<IdentityReport> {
    let (k_full, n_full) = assemble_full_kn(spec, x, sol)?;
    let full_term = if k_full.nrows() == 0 {
        DMatrix::zeros(spec.dims.n, spec.dims.n)
    } else {
        let kinv_n = linalg::solve_matrix(&k_full, &n_full, "full slack-extended KKT matrix")?;
        n_full.transpose() * kinv_n
    };
    let k_red = lower::assemble_k_alpha(spec, x, sol);
    let n_red = lower::assemble_n_alpha(spec, x, sol);
    let reduced_term = if k_red.nrows() == 0 {
        DMatrix::zeros(spec.dims.n, spec.dims.n)
    } else {
        let kinv_n = linalg::solve_matrix(&k_red, &n_red, "reduced lower KKT matrix")?;
        n_red.transpose() * kinv_n
    };
    let abs_error = linalg::mat_inf_norm(&(&full_term - &reduced_term));
    let reduced_norm = linalg::mat_inf_norm(&reduced_term);
    let rel_error = abs_error / (1.0 + reduced_norm);
    Ok(IdentityReport {
        full_norm: linalg::mat_inf_norm(&full_term),
        reduced_norm,
        abs_error,
        rel_error,
        pass: rel_error <= tol,
    })
}
