//! Upper-level certificates: critical-cone bases, the reduced upper Hessian,
//! second-order conditions, full Jacobian uniqueness, and the variant that
//! drops upper strict complementarity in exchange for the strong
//! second-order condition on the affine hull of the critical cone
//! (property A).
//!
//! Upper LICQ is required throughout; under it the upper multiplier set is a
//! singleton, so the second-order forms are evaluated rather than maximized
//! over a multiplier polytope.

use crate::error::Result;
use crate::kkt::{self, ActiveSets, PrimalDualPoint};
use crate::linalg;
use crate::lower::{self, LowerJUReport, LowerSolution};
use crate::problem::ProblemSpec;
use crate::sensitivity;
use crate::tols::CertTolerances;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// Kernel of [JH; JG_beta]: the critical cone as a subspace, valid under
    /// upper strict complementarity.
    CriticalStrictComp,
    /// Kernel of [JH; JG_beta_plus]: the affine hull of the critical cone.
    AffineHull,
}

#[derive(Debug, Clone)]
pub struct ConeBasis {
    /// Orthonormal columns spanning the requested subspace (may be empty).
    pub basis: DMatrix<f64>,
    pub which: ConeKind,
}

fn upper_row_stack(spec: &ProblemSpec, x: &DVector<f64>, select: &[usize]) -> DMatrix<f64> {
    let jh = spec.big_h_jacobian(x);
    let jg = linalg::select_rows(&spec.big_g_jacobian(x), select);
    let mut stack = DMatrix::zeros(jh.nrows() + jg.nrows(), spec.dims.n);
    linalg::insert_block(&mut stack, 0, 0, &jh);
    linalg::insert_block(&mut stack, jh.nrows(), 0, &jg);
    stack
}

/// Orthonormal kernel basis of the selected upper constraint gradients.
pub fn cone_basis(
    spec: &ProblemSpec,
    z: &PrimalDualPoint,
    which: ConeKind,
    tols: &CertTolerances,
) -> ConeBasis {
    let sets = kkt::active_sets(spec, z, tols.act);
    cone_basis_with_sets(spec, z, &sets, which, tols)
}

pub fn cone_basis_with_sets(
    spec: &ProblemSpec,
    z: &PrimalDualPoint,
    sets: &ActiveSets,
    which: ConeKind,
    tols: &CertTolerances,
) -> ConeBasis {
    let select = match which {
        ConeKind::CriticalStrictComp => &sets.beta,
        ConeKind::AffineHull => &sets.beta_plus,
    };
    let stack = upper_row_stack(spec, &z.x, select);
    ConeBasis {
        basis: linalg::kernel_basis(&stack, tols.rank_rel),
        which,
    }
}

/// Reduced upper Hessian: the value-function Hessian plus the
/// multiplier-weighted curvature of the upper constraints,
/// `hess phi + sum_j u_j hess H_j + sum_i v_i hess G_i`.
pub fn reduced_upper_hessian(
    spec: &ProblemSpec,
    z: &PrimalDualPoint,
    sol: &LowerSolution,
) -> Result<DMatrix<f64>> {
    let phi_hess = sensitivity::value_hessian(spec, &z.x, sol)?;
    Ok(phi_hess + kkt::upper_hessian_sum(spec, &z.x, &z.u, &z.v))
}

/// Full certificate at a KKT candidate.
#[derive(Debug, Clone)]
pub struct UpperConditionReport {
    pub kkt_residual: f64,
    pub kkt_pass: bool,
    /// Smallest singular value of {grad H_j} united with {grad G_i : i active}.
    pub licq_margin: Option<f64>,
    pub licq_pass: bool,
    /// min over active i of v_i - G_i; None when no upper inequality is active.
    pub strict_comp_margin: Option<f64>,
    pub strict_comp_pass: bool,
    /// Smallest eigenvalue of the reduced Hessian on the critical-cone basis.
    pub sosc_eigenvalue: Option<f64>,
    pub sosc_pass: bool,
    /// Smallest eigenvalue on the affine-hull basis (strong condition).
    pub strong_sosc_eigenvalue: Option<f64>,
    pub strong_sosc_pass: bool,
    /// Report-only second-order necessary check; never gates a verdict.
    pub second_order_necessary: bool,
    pub lower: LowerJUReport,
    pub cone_dim: usize,
    pub aff_cone_dim: usize,
    /// Verdict: KKT + LICQ + strict complementarity + lower certificate +
    /// second-order sufficiency on the critical cone.
    pub jacobian_uniqueness: bool,
    /// Verdict: the same without upper strict complementarity, with the
    /// strong second-order condition on the affine hull.
    pub property_a: bool,
}

impl UpperConditionReport {
    pub fn failed_items(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.kkt_pass {
            out.push("kkt");
        }
        if !self.licq_pass {
            out.push("licq");
        }
        if !self.strict_comp_pass {
            out.push("strict-complementarity");
        }
        if !self.lower.pass() {
            out.push("lower-certificate");
        }
        if !self.sosc_pass {
            out.push("sosc");
        }
        if !self.strong_sosc_pass {
            out.push("strong-sosc");
        }
        out
    }
}

pub fn check_upper_conditions(
    spec: &ProblemSpec,
    z: &PrimalDualPoint,
    sol: &LowerSolution,
    tols: &CertTolerances,
) -> Result<UpperConditionReport> {
    let lower_report = lower::check_lower_ju(spec, &z.x, sol, tols);
    let (_, kkt_residual) = kkt::kkt_residual(spec, z);
    let kkt_pass = kkt_residual <= tols.kkt;

    let sets = kkt::active_sets(spec, z, tols.act);
    let stack = upper_row_stack(spec, &z.x, &sets.beta);
    let (licq_margin, licq_pass) = if stack.nrows() == 0 {
        (None, true)
    } else {
        let (lo, hi) = linalg::sigma_extrema(&stack);
        let lo = if stack.nrows() > stack.ncols() { 0.0 } else { lo };
        (Some(lo), lo > tols.rank_rel * hi.max(1.0))
    };

    let big_g = &sets.big_g_values;
    let (strict_comp_margin, strict_comp_pass) = if sets.beta.is_empty() {
        (None, true)
    } else {
        let margin = sets
            .beta
            .iter()
            .map(|&i| z.v[i] - big_g[i])
            .fold(f64::INFINITY, f64::min);
        (Some(margin), margin > tols.strict_comp)
    };

    let psi = reduced_upper_hessian(spec, z, sol)?;
    let z_crit = cone_basis_with_sets(spec, z, &sets, ConeKind::CriticalStrictComp, tols);
    let z_aff = cone_basis_with_sets(spec, z, &sets, ConeKind::AffineHull, tols);

    let eig_on = |basis: &DMatrix<f64>| -> Option<f64> {
        if basis.ncols() == 0 {
            None
        } else {
            let reduced = basis.transpose() * &psi * basis;
            Some(linalg::symmetric_eig_range(&reduced).0)
        }
    };
    let sosc_eigenvalue = eig_on(&z_crit.basis);
    let sosc_pass = sosc_eigenvalue.map_or(true, |e| e > tols.sosc);
    let strong_sosc_eigenvalue = eig_on(&z_aff.basis);
    let strong_sosc_pass = strong_sosc_eigenvalue.map_or(true, |e| e > tols.sosc);
    let second_order_necessary = sosc_eigenvalue.map_or(true, |e| e >= -tols.sosc);

    let lower_pass = lower_report.pass();
    Ok(UpperConditionReport {
        kkt_residual,
        kkt_pass,
        licq_margin,
        licq_pass,
        strict_comp_margin,
        strict_comp_pass,
        sosc_eigenvalue,
        sosc_pass,
        strong_sosc_eigenvalue,
        strong_sosc_pass,
        second_order_necessary,
        lower: lower_report,
        cone_dim: z_crit.basis.ncols(),
        aff_cone_dim: z_aff.basis.ncols(),
        jacobian_uniqueness: kkt_pass && licq_pass && strict_comp_pass && lower_pass && sosc_pass,
        property_a: kkt_pass && licq_pass && lower_pass && strong_sosc_pass,
    })
}

/// Everything `sensitivity` computes, bundled for reporting.
pub fn build_sensitivity_bundle(
    spec: &ProblemSpec,
    z: &PrimalDualPoint,
    sol: &LowerSolution,
) -> Result<sensitivity::SensitivityBundle> {
    let details = sensitivity::value_hessian_details(spec, &z.x, sol)?;
    let psi = &details.hessian + kkt::upper_hessian_sum(spec, &z.x, &z.u, &z.v);
    Ok(sensitivity::SensitivityBundle {
        grad: sensitivity::value_grad(spec, &z.x, sol),
        hessian: details.hessian,
        k_alpha: lower::assemble_k_alpha(spec, &z.x, sol),
        n_alpha: lower::assemble_n_alpha(spec, &z.x, sol),
        psi,
        k_alpha_sigma_min: details.k_sigma_min,
        k_alpha_cond: details.k_cond,
        hessian_asymmetry: details.asymmetry,
    })
}
