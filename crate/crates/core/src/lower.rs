//! Lower-level machinery: solve the inner maximization with x fixed, certify
//! its Jacobian uniqueness conditions, assemble the reduced sensitivity
//! blocks, and track the implicit solution map along x-paths.
//!
//! The inner problem is `max f(x, y) over h(x,y) = 0, g(x,y) <= 0`. Its KKT
//! system in shifted form (xi = lambda + g) is the lower block of the Kojima
//! mapping:
//!
//! ```text
//! grad_y L(x, y, mu, xi+) = 0,   h(x, y) = 0,   -g(x, y) + xi- = 0
//! ```
//!
//! which a local Newton iteration solves from a caller-supplied start.

use crate::error::{Error, Result};
use crate::kkt::lagrangian_blocks;
use crate::linalg;
use crate::problem::ProblemSpec;
use crate::tols::CertTolerances;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct LowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub tol_act: f64,
}

impl Default for LowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            tol_act: 1e-8,
        }
    }
}

/// Converged inner solution with multipliers and the active set it landed on.
#[derive(Debug, Clone)]
pub struct LowerSolution {
    pub y: DVector<f64>,
    pub mu: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Shifted multiplier xi = lambda + g(x, y).
    pub xi: DVector<f64>,
    /// Infinity norm of the inner KKT residual.
    pub residual: f64,
    pub alpha: Vec<usize>,
    /// g values at the solution (activity margins).
    pub g_values: DVector<f64>,
    /// Residual history of the Newton run that produced this solution.
    pub trace: Vec<f64>,
}

/// Inner KKT residual in natural form: stationarity, equalities, and the
/// min(lambda, -g) complementarity residual.
pub fn lower_kkt_residual(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    mu: &DVector<f64>,
    lambda: &DVector<f64>,
) -> (DVector<f64>, f64) {
    let dims = spec.dims;
    let lag = lagrangian_blocks(spec, x, y, mu, lambda).expect("dimensions");
    let h = spec.h_values(x, y);
    let g = spec.g_values(x, y);
    let mut r = DVector::zeros(dims.m + dims.m1 + dims.m2);
    r.rows_mut(0, dims.m).copy_from(&lag.grad_y);
    r.rows_mut(dims.m, dims.m1).copy_from(&h);
    for i in 0..dims.m2 {
        r[dims.m + dims.m1 + i] = lambda[i].min(-g[i]);
    }
    let norm = linalg::vec_inf_norm(&r);
    (r, norm)
}

/// Package an externally obtained point as a `LowerSolution`.
pub fn solution_from_point(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    mu: &DVector<f64>,
    lambda: &DVector<f64>,
    tol_act: f64,
) -> LowerSolution {
    let g = spec.g_values(x, y);
    let (_, residual) = lower_kkt_residual(spec, x, y, mu, lambda);
    let alpha = (0..spec.dims.m2).filter(|&i| g[i] >= -tol_act).collect();
    LowerSolution {
        y: y.clone(),
        mu: mu.clone(),
        lambda: lambda.clone(),
        xi: lambda + &g,
        residual,
        alpha,
        g_values: g,
        trace: Vec::new(),
    }
}

struct LowerState {
    y: DVector<f64>,
    mu: DVector<f64>,
    xi: DVector<f64>,
}

fn lower_kojima_eval(spec: &ProblemSpec, x: &DVector<f64>, s: &LowerState) -> DVector<f64> {
    let dims = spec.dims;
    let xi_plus = s.xi.map(|t| t.max(0.0));
    let xi_minus = s.xi.map(|t| t.min(0.0));
    let lag = lagrangian_blocks(spec, x, &s.y, &s.mu, &xi_plus).expect("dimensions");
    let mut r = DVector::zeros(dims.m + dims.m1 + dims.m2);
    r.rows_mut(0, dims.m).copy_from(&lag.grad_y);
    r.rows_mut(dims.m, dims.m1)
        .copy_from(&spec.h_values(x, &s.y));
    let g = spec.g_values(x, &s.y);
    for i in 0..dims.m2 {
        r[dims.m + dims.m1 + i] = -g[i] + xi_minus[i];
    }
    r
}

/// Newton iteration on the shifted inner KKT system.
///
/// Degenerate split components take the slope suggested by the residual sign
/// (ties resolve to the positive branch) so runs are reproducible.
fn lower_newton(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    mut state: LowerState,
    opts: &LowerOptions,
) -> Result<LowerSolution> {
    let dims = spec.dims;
    let (m, m1, m2) = (dims.m, dims.m1, dims.m2);
    let total = m + m1 + m2;
    let mut trace = Vec::new();
    for _ in 0..=opts.max_iter {
        let r = lower_kojima_eval(spec, x, &state);
        let norm = linalg::vec_inf_norm(&r);
        trace.push(norm);
        if norm <= opts.tol {
            let lambda = state.xi.map(|t| t.max(0.0));
            let mut sol = solution_from_point(spec, x, &state.y, &state.mu, &lambda, opts.tol_act);
            sol.xi = state.xi.clone();
            sol.trace = trace;
            return Ok(sol);
        }
        if trace.len() > opts.max_iter {
            break;
        }
        // split slopes, with the residual-sign rule on kinks
        let mut dxi = vec![0.0; m2];
        for i in 0..m2 {
            let xii = state.xi[i];
            dxi[i] = if xii > opts.tol_act {
                1.0
            } else if xii < -opts.tol_act {
                0.0
            } else if r[m + m1 + i] <= 0.0 {
                1.0
            } else {
                0.0
            };
        }
        let xi_plus = state.xi.map(|t| t.max(0.0));
        let lag = lagrangian_blocks(spec, x, &state.y, &state.mu, &xi_plus)?;
        let (_, jyh) = spec.h_jacobians(x, &state.y);
        let (_, jyg) = spec.g_jacobians(x, &state.y);
        let mut jac = DMatrix::zeros(total, total);
        linalg::insert_block(&mut jac, 0, 0, &lag.hess_yy);
        linalg::insert_block(&mut jac, 0, m, &jyh.transpose());
        for i in 0..m2 {
            let col = jyg.row(i).transpose() * (-dxi[i]);
            jac.view_mut((0, m + m1 + i), (m, 1)).copy_from(&col);
        }
        linalg::insert_block(&mut jac, m, 0, &jyh);
        linalg::insert_block(&mut jac, m + m1, 0, &(-&jyg));
        for i in 0..m2 {
            jac[(m + m1 + i, m + m1 + i)] = 1.0 - dxi[i];
        }
        let step = linalg::solve_gated(&jac, &(-&r), 1e-12, "lower Newton matrix")?;
        state.y += step.rows(0, m);
        state.mu += step.rows(m, m1);
        state.xi += step.rows(m + m1, m2);
    }
    Err(Error::MaxIterations {
        what: "lower-level Newton".into(),
        iters: opts.max_iter,
        residual: trace.last().copied().unwrap_or(f64::NAN),
    })
}

/// Solve the inner maximization by a local Newton method from `y_init`.
pub fn solve_lower(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    y_init: &DVector<f64>,
    opts: &LowerOptions,
) -> Result<LowerSolution> {
    if y_init.len() != spec.dims.m {
        return Err(Error::Dimension {
            what: "y_init".into(),
            expected: spec.dims.m,
            got: y_init.len(),
        });
    }
    let state = LowerState {
        y: y_init.clone(),
        mu: DVector::zeros(spec.dims.m1),
        xi: spec.g_values(x, y_init),
    };
    lower_newton(spec, x, state, opts)
}

/// Solve at a new x, warm-started from a previous solution.
pub fn solve_lower_warm(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    warm: &LowerSolution,
    opts: &LowerOptions,
) -> Result<LowerSolution> {
    let state = LowerState {
        y: warm.y.clone(),
        mu: warm.mu.clone(),
        xi: &warm.lambda + spec.g_values(x, &warm.y),
    };
    lower_newton(spec, x, state, opts)
}

/// Jacobian-uniqueness certificate for the inner problem: KKT residual,
/// gradient independence, strict complementarity, and the second-order
/// condition on the kernel of the active constraint gradients.
#[derive(Debug, Clone)]
pub struct LowerJUReport {
    pub kkt_residual: f64,
    pub kkt_pass: bool,
    /// Smallest singular value of the stacked active gradients; None when
    /// there are no rows (vacuous).
    pub licq_margin: Option<f64>,
    pub licq_pass: bool,
    /// min over i of lambda_i - g_i; None when m2 = 0.
    pub strict_comp_margin: Option<f64>,
    pub strict_comp_pass: bool,
    /// Largest eigenvalue of the reduced y-Hessian on the critical cone;
    /// None when the cone has dimension zero (vacuous pass).
    pub sosc_eigenvalue: Option<f64>,
    pub sosc_pass: bool,
    pub cone_dim: usize,
    pub alpha: Vec<usize>,
}

impl LowerJUReport {
    pub fn pass(&self) -> bool {
        self.kkt_pass && self.licq_pass && self.strict_comp_pass && self.sosc_pass
    }

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
        if !self.sosc_pass {
            out.push("sosc");
        }
        out
    }
}

/// Stack of the active lower constraint gradients in y: rows of J_y h over
/// all j, then J_y g_i for i in alpha.
fn active_y_stack(spec: &ProblemSpec, x: &DVector<f64>, sol: &LowerSolution) -> DMatrix<f64> {
    let (_, jyh) = spec.h_jacobians(x, &sol.y);
    let (_, jyg) = spec.g_jacobians(x, &sol.y);
    let active = linalg::select_rows(&jyg, &sol.alpha);
    let mut stack = DMatrix::zeros(jyh.nrows() + active.nrows(), spec.dims.m);
    linalg::insert_block(&mut stack, 0, 0, &jyh);
    linalg::insert_block(&mut stack, jyh.nrows(), 0, &active);
    stack
}

pub fn check_lower_ju(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    sol: &LowerSolution,
    tols: &CertTolerances,
) -> LowerJUReport {
    let (_, kkt_residual) = lower_kkt_residual(spec, x, &sol.y, &sol.mu, &sol.lambda);
    let kkt_pass = kkt_residual <= tols.kkt;

    let stack = active_y_stack(spec, x, sol);
    let (licq_margin, licq_pass) = if stack.nrows() == 0 {
        (None, true)
    } else {
        let (lo, hi) = linalg::sigma_extrema(&stack);
        let lo = if stack.nrows() > stack.ncols() { 0.0 } else { lo };
        (Some(lo), lo > tols.rank_rel * hi.max(1.0))
    };

    let g = spec.g_values(x, &sol.y);
    let (strict_comp_margin, strict_comp_pass) = if spec.dims.m2 == 0 {
        (None, true)
    } else {
        let margin = (0..spec.dims.m2)
            .map(|i| sol.lambda[i] - g[i])
            .fold(f64::INFINITY, f64::min);
        (Some(margin), margin > tols.strict_comp)
    };

    // Under strict complementarity the critical cone is the kernel of the
    // stacked active gradients.
    let z = linalg::kernel_basis(&stack, tols.rank_rel);
    let cone_dim = z.ncols();
    let (sosc_eigenvalue, sosc_pass) = if cone_dim == 0 {
        (None, true)
    } else {
        let lag = lagrangian_blocks(spec, x, &sol.y, &sol.mu, &sol.lambda).expect("dimensions");
        let reduced = z.transpose() * &lag.hess_yy * &z;
        let (_, hi) = linalg::symmetric_eig_range(&reduced);
        (Some(hi), hi < -tols.sosc)
    };

    LowerJUReport {
        kkt_residual,
        kkt_pass,
        licq_margin,
        licq_pass,
        strict_comp_margin,
        strict_comp_pass,
        sosc_eigenvalue,
        sosc_pass,
        cone_dim,
        alpha: sol.alpha.clone(),
    }
}

/// The reduced lower KKT matrix
///
/// ```text
/// K_alpha = [ hess_yy L   J_y h'   -J_y g_alpha' ]
///           [ J_y h       0         0            ]
///           [ -J_y g_alpha  0       0            ]
/// ```
///
/// of size (m + m1 + |alpha|)^2.
pub fn assemble_k_alpha(spec: &ProblemSpec, x: &DVector<f64>, sol: &LowerSolution) -> DMatrix<f64> {
    let dims = spec.dims;
    let a = sol.alpha.len();
    let lag = lagrangian_blocks(spec, x, &sol.y, &sol.mu, &sol.lambda).expect("dimensions");
    let (_, jyh) = spec.h_jacobians(x, &sol.y);
    let (_, jyg) = spec.g_jacobians(x, &sol.y);
    let jyg_a = linalg::select_rows(&jyg, &sol.alpha);
    let size = dims.m + dims.m1 + a;
    let mut k = DMatrix::zeros(size, size);
    linalg::insert_block(&mut k, 0, 0, &lag.hess_yy);
    linalg::insert_block(&mut k, 0, dims.m, &jyh.transpose());
    linalg::insert_block(&mut k, 0, dims.m + dims.m1, &(-jyg_a.transpose()));
    linalg::insert_block(&mut k, dims.m, 0, &jyh);
    linalg::insert_block(&mut k, dims.m + dims.m1, 0, &(-&jyg_a));
    k
}

/// The x-coupling block paired with [`assemble_k_alpha`]:
///
/// ```text
/// N_alpha = [ hess_yx L ; J_x h ; -J_x g_alpha ]
/// ```
///
/// of size (m + m1 + |alpha|) x n. The sign on the g rows matches the sign
/// carried by the g rows of K_alpha, which is what the implicit
/// differentiation of the active system produces.
pub fn assemble_n_alpha(spec: &ProblemSpec, x: &DVector<f64>, sol: &LowerSolution) -> DMatrix<f64> {
    let dims = spec.dims;
    let a = sol.alpha.len();
    let lag = lagrangian_blocks(spec, x, &sol.y, &sol.mu, &sol.lambda).expect("dimensions");
    let (jxh, _) = spec.h_jacobians(x, &sol.y);
    let (jxg, _) = spec.g_jacobians(x, &sol.y);
    let jxg_a = linalg::select_rows(&jxg, &sol.alpha);
    let mut n_mat = DMatrix::zeros(dims.m + dims.m1 + a, dims.n);
    linalg::insert_block(&mut n_mat, 0, 0, &lag.hess_xy.transpose());
    linalg::insert_block(&mut n_mat, dims.m, 0, &jxh);
    linalg::insert_block(&mut n_mat, dims.m + dims.m1, 0, &(-&jxg_a));
    n_mat
}

/// Warm solve across one path segment, halving the step on failure.
fn continue_segment_with_anchor(
    spec: &ProblemSpec,
    x_to: &DVector<f64>,
    from: &LowerSolution,
    x_from: &DVector<f64>,
    opts: &LowerOptions,
    depth: usize,
) -> Result<LowerSolution> {
    match solve_lower_warm(spec, x_to, from, opts) {
        Ok(sol) => Ok(sol),
        Err(_e) if depth > 0 => {
            let mid = (x_from + x_to) * 0.5;
            let half = continue_segment_with_anchor(spec, &mid, from, x_from, opts, depth - 1)?;
            continue_segment_with_anchor(spec, x_to, &half, &mid, opts, depth - 1)
        }
        Err(e) => Err(e),
    }
}

/// Warm-started solves along an x-path, asserting that the active set stays
/// fixed and every active multiplier stays strictly positive. A change is a
/// reportable finding, not something to route around.
pub fn track_lower_map(
    spec: &ProblemSpec,
    x_path: &[DVector<f64>],
    start: &LowerSolution,
    opts: &LowerOptions,
) -> Result<Vec<LowerSolution>> {
    let mut out: Vec<LowerSolution> = Vec::with_capacity(x_path.len());
    let alpha0 = start.alpha.clone();
    let mut current = start.clone();
    for (pos, x) in x_path.iter().enumerate() {
        let sol = if pos == 0 {
            solve_lower_warm(spec, x, &current, opts).map_err(|e| Error::NestedSolve {
                context: format!("path position {pos}"),
                detail: e.to_string(),
            })?
        } else {
            continue_segment_with_anchor(spec, x, &current, &x_path[pos - 1], opts, 6).map_err(
                |e| Error::NestedSolve {
                    context: format!("path position {pos}"),
                    detail: e.to_string(),
                },
            )?
        };
        if sol.alpha != alpha0 {
            return Err(Error::ActiveSetChange {
                where_: format!("path position {pos}"),
                detail: format!("alpha changed from {:?} to {:?}", alpha0, sol.alpha),
            });
        }
        for &i in &alpha0 {
            if sol.lambda[i] <= opts.tol_act {
                return Err(Error::ActiveSetChange {
                    where_: format!("path position {pos}"),
                    detail: format!("active multiplier lambda[{i}] = {:.3e} hit zero", sol.lambda[i]),
                });
            }
        }
        out.push(sol.clone());
        current = sol;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_column_slice(&[x])
    }

    #[test]
    fn solves_unconstrained_inner_max() {
        let spec = builtins::get("p1").unwrap().spec;
        let sol = solve_lower(&spec, &v1(0.3), &v1(0.0), &LowerOptions::default()).unwrap();
        assert!((sol.y[0] - 0.3).abs() < 1e-12);
        assert!(sol.residual <= 1e-12);
    }

    #[test]
    fn solves_inner_max_with_active_bound() {
        let spec = builtins::get("p2").unwrap().spec;
        let sol = solve_lower(&spec, &v1(2.0), &v1(0.9), &LowerOptions::default()).unwrap();
        assert!((sol.y[0] - 1.0).abs() < 1e-12);
        assert!((sol.lambda[0] - 1.0).abs() < 1e-12);
        assert_eq!(sol.alpha, vec![0]);
    }

    #[test]
    fn solves_p3_inner() {
        let spec = builtins::get("p3").unwrap().spec;
        let sol = solve_lower(&spec, &v1(1.0), &v1(0.0), &LowerOptions::default()).unwrap();
        assert!((sol.y[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ju_certificate_on_p2() {
        let spec = builtins::get("p2").unwrap().spec;
        let sol = solve_lower(&spec, &v1(2.0), &v1(0.9), &LowerOptions::default()).unwrap();
        let report = check_lower_ju(&spec, &v1(2.0), &sol, &CertTolerances::default());
        assert!(report.pass());
        assert!((report.licq_margin.unwrap() - 1.0).abs() < 1e-12);
        assert!((report.strict_comp_margin.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(report.cone_dim, 0);
        assert!(report.sosc_eigenvalue.is_none());
    }

    #[test]
    fn ju_certificate_on_p1() {
        let spec = builtins::get("p1").unwrap().spec;
        let sol = solve_lower(&spec, &v1(0.3), &v1(0.0), &LowerOptions::default()).unwrap();
        let report = check_lower_ju(&spec, &v1(0.3), &sol, &CertTolerances::default());
        assert!(report.pass());
        assert_eq!(report.cone_dim, 1);
        assert!((report.sosc_eigenvalue.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn strict_complementarity_fault_is_flagged() {
        let spec = builtins::get("p2").unwrap().spec;
        let sol = solve_lower(&spec, &v1(2.0), &v1(0.9), &LowerOptions::default()).unwrap();
        let mut broken = sol.clone();
        broken.lambda[0] = 0.0;
        let report = check_lower_ju(&spec, &v1(2.0), &broken, &CertTolerances::default());
        assert!(!report.strict_comp_pass);
        assert!(report.strict_comp_margin.unwrap().abs() < 1e-12);
    }

    #[test]
    fn reduced_blocks_match_hand_assembly() {
        let p2 = builtins::get("p2").unwrap();
        let sol = solve_lower(&p2.spec, &v1(2.0), &v1(0.9), &LowerOptions::default()).unwrap();
        let k = assemble_k_alpha(&p2.spec, &v1(2.0), &sol);
        let n = assemble_n_alpha(&p2.spec, &v1(2.0), &sol);
        let k_expect = DMatrix::from_row_slice(2, 2, &[-1.0, -1.0, -1.0, 0.0]);
        assert!(linalg::mat_inf_norm(&(&k - &k_expect)) < 1e-12);
        assert!((n[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(n[(1, 0)].abs() < 1e-12);

        let p1 = builtins::get("p1").unwrap();
        let sol1 = solve_lower(&p1.spec, &v1(0.3), &v1(0.0), &LowerOptions::default()).unwrap();
        let k1 = assemble_k_alpha(&p1.spec, &v1(0.3), &sol1);
        assert!((k1[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((assemble_n_alpha(&p1.spec, &v1(0.3), &sol1)[(0, 0)] - 1.0).abs() < 1e-12);

        let p3 = builtins::get("p3").unwrap();
        let sol3 = solve_lower(&p3.spec, &v1(1.0), &v1(0.0), &LowerOptions::default()).unwrap();
        let k3 = assemble_k_alpha(&p3.spec, &v1(1.0), &sol3);
        assert!((k3[(0, 0)] + 2.0).abs() < 1e-12);
        assert!((assemble_n_alpha(&p3.spec, &v1(1.0), &sol3)[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_alpha_nonsingular_under_passing_ju() {
        let p2 = builtins::get("p2").unwrap();
        let sol = solve_lower(&p2.spec, &v1(2.0), &v1(0.9), &LowerOptions::default()).unwrap();
        let report = check_lower_ju(&p2.spec, &v1(2.0), &sol, &CertTolerances::default());
        assert!(report.pass());
        let k = assemble_k_alpha(&p2.spec, &v1(2.0), &sol);
        let (lo, hi) = linalg::sigma_extrema(&k);
        assert!(lo > 1e-8 * hi);
    }

    #[test]
    fn tracks_inner_map_and_multiplier_growth() {
        let spec = builtins::get("p2").unwrap().spec;
        let start = solve_lower(&spec, &v1(2.0), &v1(0.9), &LowerOptions::default()).unwrap();
        let path: Vec<DVector<f64>> = (0..=10).map(|i| v1(2.0 + 0.1 * i as f64)).collect();
        let sols = track_lower_map(&spec, &path, &start, &LowerOptions::default()).unwrap();
        for (i, sol) in sols.iter().enumerate() {
            let x = 2.0 + 0.1 * i as f64;
            assert_eq!(sol.alpha, vec![0]);
            assert!((sol.lambda[0] - (x - 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn unconstrained_track_keeps_empty_alpha() {
        let spec = builtins::get("p1").unwrap().spec;
        let start = solve_lower(&spec, &v1(0.0), &v1(0.0), &LowerOptions::default()).unwrap();
        let path: Vec<DVector<f64>> = (0..=5).map(|i| v1(0.2 * i as f64)).collect();
        let sols = track_lower_map(&spec, &path, &start, &LowerOptions::default()).unwrap();
        assert!(sols.iter().all(|s| s.alpha.is_empty()));
    }

    #[test]
    fn activity_boundary_stops_the_tracker() {
        let spec = builtins::get("p2").unwrap().spec;
        let start = solve_lower(&spec, &v1(2.0), &v1(0.9), &LowerOptions::default()).unwrap();
        let path: Vec<DVector<f64>> = vec![v1(2.0), v1(1.5), v1(1.0), v1(0.5)];
        match track_lower_map(&spec, &path, &start, &LowerOptions::default()) {
            Err(Error::ActiveSetChange { where_, .. }) => {
                assert!(where_.contains("position 2") || where_.contains("position 3"));
            }
            other => panic!("expected active-set change, got {other:?}"),
        }
    }

    #[test]
    fn lipschitz_step_bound_along_path() {
        let spec = builtins::get("p2").unwrap().spec;
        let start = solve_lower(&spec, &v1(2.0), &v1(0.9), &LowerOptions::default()).unwrap();
        let path: Vec<DVector<f64>> = (0..=20).map(|i| v1(2.0 + 0.05 * i as f64)).collect();
        let sols = track_lower_map(&spec, &path, &start, &LowerOptions::default()).unwrap();
        for w in sols.windows(2) {
            let dy = (&w[1].y - &w[0].y).norm();
            assert!(dy <= 10.0 * 0.05);
        }
    }

    #[test]
    fn quadratic_tail_on_a_nonlinear_inner_problem() {
        use crate::problem::{ClosureField, Dimensions, EvaluatorBundle, ProblemSpec};
        use std::sync::Arc;
        // f(x, y) = x sin y - y^2 / 2: genuinely nonlinear in y.
        let f = ClosureField::new(
            2,
            |z| z[0] * z[1].sin() - 0.5 * z[1] * z[1],
            |z| DVector::from_column_slice(&[z[1].sin(), z[0] * z[1].cos() - z[1]]),
            |z| {
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[0.0, z[1].cos(), z[1].cos(), -z[0] * z[1].sin() - 1.0],
                )
            },
        );
        let dims = Dimensions {
            n: 1,
            m: 1,
            n1: 0,
            n2: 0,
            m1: 0,
            m2: 0,
        };
        let bundle = EvaluatorBundle {
            objective: Arc::new(f),
            lower_eq: vec![],
            lower_ineq: vec![],
            upper_eq: vec![],
            upper_ineq: vec![],
        };
        let spec = ProblemSpec::new("sine-well", dims, bundle).unwrap();
        let sol = solve_lower(&spec, &v1(0.5), &v1(1.4), &LowerOptions::default()).unwrap();
        assert!(sol.residual <= 1e-10);
        // residuals must contract at least quadratically near the solution
        let tail: Vec<f64> = sol
            .trace
            .iter()
            .copied()
            .filter(|r| *r > 0.0)
            .collect();
        assert!(tail.len() >= 3, "want a few Newton steps, got {tail:?}");
        for w in tail.windows(2).rev().take(3) {
            let c = w[1] / (w[0] * w[0]).max(1e-300);
            assert!(c.is_finite() && c < 1e6, "tail ratio {c} from {w:?}");
        }
    }
}
