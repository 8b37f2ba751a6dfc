//! Semismooth Newton on the Kojima mapping for the coupled KKT system, the
//! implicit parameter derivative, and predictor-corrector tracking of
//! certified solutions through a parameter family.

use crate::conditions::{self, UpperConditionReport};
use crate::error::{Error, Result};
use crate::kkt::{self, KojimaPoint};
use crate::linalg;
use crate::lower::{self, LowerJUReport};
use crate::problem::{freeze_parameter, ParametricProblemSpec, ProblemSpec};
use crate::tols::CertTolerances;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Damping {
    Off,
    Backtracking,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Infinity-norm residual target.
    pub tol: f64,
    pub max_iter: usize,
    pub damping: Damping,
    /// Split tolerance deciding when an index counts as degenerate.
    pub tol_act: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            damping: Damping::Off,
            tol_act: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NewtonStatus {
    Converged { iterations: usize },
    MaxIterations,
    Singular { sigma_min: f64, sigma_max: f64 },
}

/// Outcome of a Newton run; the final iterate is carried on failure too.
#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub point: KojimaPoint,
    /// Residual history, starting with the residual at the initial point.
    pub trace: Vec<f64>,
    pub status: NewtonStatus,
}

impl NewtonResult {
    pub fn converged(&self) -> bool {
        matches!(self.status, NewtonStatus::Converged { .. })
    }

    pub fn iterations(&self) -> usize {
        self.trace.len() - 1
    }
}

/// Largest ratio r_{k+1} / r_k^2 over the final (up to) three steps of a
/// residual trace; 0 for traces with no usable pairs.
pub fn quadratic_tail_constant(trace: &[f64]) -> f64 {
    let mut c: f64 = 0.0;
    let pairs: Vec<(f64, f64)> = trace
        .windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|(a, _)| *a > 1e-300)
        .collect();
    for (a, b) in pairs.iter().rev().take(3) {
        c = c.max(b / (a * a));
    }
    c
}

/// Generalized-Jacobian element to use at the current iterate: the classical
/// Jacobian when all splits are strict, otherwise the element selected by the
/// residual-sign rule (a kink takes the branch the residual pushes it
/// toward; ties take the positive branch).
fn newton_element(
    spec: &ProblemSpec,
    k: &KojimaPoint,
    residual: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<kkt::KojimaDerivative> {
    let dims = spec.dims;
    let off_w = dims.n + dims.n1;
    let off_xi = off_w + dims.n2 + dims.m + dims.m1;
    let mut dw = Vec::with_capacity(dims.n2);
    for i in 0..dims.n2 {
        let wi = k.w[i];
        dw.push(if wi > opts.tol_act {
            1.0
        } else if wi < -opts.tol_act {
            0.0
        } else if residual[off_w + i] >= 0.0 {
            1.0
        } else {
            0.0
        });
    }
    let mut dxi = Vec::with_capacity(dims.m2);
    for i in 0..dims.m2 {
        let xii = k.xi[i];
        dxi.push(if xii > opts.tol_act {
            1.0
        } else if xii < -opts.tol_act {
            0.0
        } else if residual[off_xi + i] <= 0.0 {
            1.0
        } else {
            0.0
        });
    }
    kkt::assemble_generalized(spec, k, &dw, &dxi, opts.tol_act)
}

/// Solve F(k) = eta by semismooth Newton from k0. Already-solved starts
/// return immediately with zero iterations.
pub fn newton_kojima(
    spec: &ProblemSpec,
    k0: &KojimaPoint,
    eta: Option<&DVector<f64>>,
    opts: &NewtonOptions,
) -> Result<NewtonResult> {
    let dims = spec.dims;
    let mut k = k0.clone();
    let mut r = kkt::kojima_eval(spec, &k, eta)?;
    let mut norm = linalg::vec_inf_norm(&r);
    let mut trace = vec![norm];
    for iter in 0..opts.max_iter {
        if norm <= opts.tol {
            return Ok(NewtonResult {
                point: k,
                trace,
                status: NewtonStatus::Converged { iterations: iter },
            });
        }
        let element = newton_element(spec, &k, &r, opts)?;
        let (lo, hi) = linalg::sigma_extrema(&element.natural);
        if !(lo > 1e-12 * hi) || hi == 0.0 {
            return Ok(NewtonResult {
                point: k,
                trace,
                status: NewtonStatus::Singular {
                    sigma_min: lo,
                    sigma_max: hi,
                },
            });
        }
        let lu = element.natural.clone().full_piv_lu();
        let step = match lu.solve(&(-&r)) {
            Some(s) => s,
            None => {
                return Ok(NewtonResult {
                    point: k,
                    trace,
                    status: NewtonStatus::Singular {
                        sigma_min: lo,
                        sigma_max: hi,
                    },
                })
            }
        };
        let flat = k.to_flat();
        let mut t = 1.0;
        let mut next;
        let mut next_r;
        let mut next_norm;
        loop {
            next = KojimaPoint::from_flat(&dims, &(&flat + &step * t));
            next_r = kkt::kojima_eval(spec, &next, eta)?;
            next_norm = linalg::vec_inf_norm(&next_r);
            if opts.damping == Damping::Off || next_norm <= (1.0 - 1e-4 * t) * norm || t < 1e-9 {
                break;
            }
            t *= 0.5;
        }
        k = next;
        r = next_r;
        norm = next_norm;
        trace.push(norm);
    }
    if norm <= opts.tol {
        let iterations = trace.len() - 1;
        return Ok(NewtonResult {
            point: k,
            trace,
            status: NewtonStatus::Converged { iterations },
        });
    }
    Ok(NewtonResult {
        point: k,
        trace,
        status: NewtonStatus::MaxIterations,
    })
}

/// d F / d theta: one column per parameter component, assembled from the
/// parametric derivative evaluators at (k, theta).
pub fn kojima_dtheta(
    pspec: &ParametricProblemSpec,
    k: &KojimaPoint,
    theta: &DVector<f64>,
) -> DMatrix<f64> {
    let dims = pspec.dims;
    let (n, n1, n2, m, m1, _m2) = (dims.n, dims.n1, dims.n2, dims.m, dims.m1, dims.m2);
    let l = pspec.param_dim;
    let z = {
        let mut z = DVector::zeros(n + m);
        z.rows_mut(0, n).copy_from(&k.x);
        z.rows_mut(n, m).copy_from(&k.y);
        z
    };
    let w_plus = kkt::positive_part(&k.w);
    let xi_plus = kkt::positive_part(&k.xi);
    let mut out = DMatrix::zeros(dims.kojima_len(), l);
    for col in 0..l {
        // d/d theta of grad_(x,y) L(x, y, mu, xi+)
        let mut dgrad = pspec.objective.dtheta_gradient(&z, theta, col);
        for (j, hf) in pspec.lower_eq.iter().enumerate() {
            dgrad += hf.dtheta_gradient(&z, theta, col) * k.mu[j];
        }
        for (i, gf) in pspec.lower_ineq.iter().enumerate() {
            dgrad -= gf.dtheta_gradient(&z, theta, col) * xi_plus[i];
        }
        let mut dx = dgrad.rows(0, n).into_owned();
        let dy = dgrad.rows(n, m).into_owned();
        for (j, hf) in pspec.upper_eq.iter().enumerate() {
            dx += hf.dtheta_gradient(&k.x, theta, col) * k.u[j];
        }
        for (i, gf) in pspec.upper_ineq.iter().enumerate() {
            dx += gf.dtheta_gradient(&k.x, theta, col) * w_plus[i];
        }
        let mut at = 0;
        out.view_mut((at, col), (n, 1)).copy_from(&dx);
        at += n;
        for (j, hf) in pspec.upper_eq.iter().enumerate() {
            out[(at + j, col)] = hf.dtheta_value(&k.x, theta, col);
        }
        at += n1;
        for (i, gf) in pspec.upper_ineq.iter().enumerate() {
            out[(at + i, col)] = gf.dtheta_value(&k.x, theta, col);
        }
        at += n2;
        out.view_mut((at, col), (m, 1)).copy_from(&dy);
        at += m;
        for (j, hf) in pspec.lower_eq.iter().enumerate() {
            out[(at + j, col)] = hf.dtheta_value(&z, theta, col);
        }
        at += m1;
        for (i, gf) in pspec.lower_ineq.iter().enumerate() {
            out[(at + i, col)] = -gf.dtheta_value(&z, theta, col);
        }
    }
    out
}

/// Implicit derivative dz/dtheta = -J^{-1} dF/dtheta at a point where the
/// classical Jacobian exists and is nonsingular.
pub fn implicit_derivative(
    pspec: &ParametricProblemSpec,
    k: &KojimaPoint,
    theta: &DVector<f64>,
    tol_act: f64,
) -> Result<DMatrix<f64>> {
    let frozen = freeze_parameter(pspec, theta)?;
    let jac = kkt::kojima_jacobian(&frozen, k, tol_act)?;
    let rhs = kojima_dtheta(pspec, k, theta);
    let x = linalg::solve_matrix(&jac.natural, &rhs, "parametric Kojima Jacobian")?;
    Ok(-x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertMode {
    /// Require the full certificate (with upper strict complementarity).
    JacobianUniqueness,
    /// Require the strict-complementarity-free certificate.
    PropertyA,
}

#[derive(Debug, Clone)]
pub struct PathNode {
    pub theta: DVector<f64>,
    pub point: KojimaPoint,
    pub derivative: DMatrix<f64>,
    pub lower: LowerJUReport,
    pub upper: UpperConditionReport,
    pub residual: f64,
    pub newton_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub nodes: Vec<PathNode>,
    /// Active sets, identical at every node on a successful run.
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
}

/// Predictor-corrector tracking across a parameter grid. Every node is
/// re-certified in the requested mode and the active sets must stay
/// literally equal to the first node's; any change is an error, not
/// something to recover from.
pub fn track_path(
    pspec: &ParametricProblemSpec,
    theta_grid: &[DVector<f64>],
    k_start: &KojimaPoint,
    opts: &NewtonOptions,
    mode: CertMode,
    tols: &CertTolerances,
) -> Result<PathResult> {
    if theta_grid.is_empty() {
        return Err(Error::Schema("empty parameter grid".into()));
    }
    let mut nodes: Vec<PathNode> = Vec::with_capacity(theta_grid.len());
    let mut alpha0: Vec<usize> = Vec::new();
    let mut beta0: Vec<usize> = Vec::new();
    let mut k = k_start.clone();
    for (idx, theta) in theta_grid.iter().enumerate() {
        let frozen = freeze_parameter(pspec, theta)?;
        let run = newton_kojima(&frozen, &k, None, opts)?;
        if !run.converged() {
            return Err(Error::NestedSolve {
                context: format!("corrector at node {idx}"),
                detail: format!("status {:?}, residual {:?}", run.status, run.trace.last()),
            });
        }
        let point = run.point.clone();
        let z = kkt::from_kojima(&frozen, &point);
        let sol = lower::solution_from_point(&frozen, &z.x, &z.y, &z.mu, &z.lambda, tols.act);
        let upper = conditions::check_upper_conditions(&frozen, &z, &sol, tols)?;
        let certified = match mode {
            CertMode::JacobianUniqueness => upper.jacobian_uniqueness,
            CertMode::PropertyA => upper.property_a,
        };
        if !certified {
            return Err(Error::CertificationFailed {
                node: idx,
                item: upper.failed_items().join(","),
            });
        }
        let sets = kkt::active_sets(&frozen, &z, tols.act);
        if idx == 0 {
            alpha0 = sets.alpha.clone();
            beta0 = sets.beta.clone();
        } else if sets.alpha != alpha0 || sets.beta != beta0 {
            return Err(Error::ActiveSetChange {
                where_: format!("node {idx}"),
                detail: format!(
                    "alpha {:?} -> {:?}, beta {:?} -> {:?}",
                    alpha0, sets.alpha, beta0, sets.beta
                ),
            });
        }
        let derivative = implicit_derivative(pspec, &point, theta, tols.act)?;
        let residual = *run.trace.last().unwrap();
        nodes.push(PathNode {
            theta: theta.clone(),
            point: point.clone(),
            derivative: derivative.clone(),
            lower: upper.lower.clone(),
            upper,
            residual,
            newton_iterations: run.iterations(),
        });
        // first-order predictor for the next node
        if idx + 1 < theta_grid.len() {
            let dtheta = &theta_grid[idx + 1] - theta;
            let flat = point.to_flat() + &derivative * dtheta;
            k = KojimaPoint::from_flat(&pspec.dims, &flat);
        }
    }
    Ok(PathResult {
        nodes,
        alpha: alpha0,
        beta: beta0,
    })
}
