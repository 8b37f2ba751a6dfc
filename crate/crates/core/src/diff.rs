//! Central finite-difference oracle, independent of every analytic
//! derivative path it is used to check.

use crate::error::{Error, Result};
use crate::lower::{self, LowerOptions, LowerSolution};
use crate::problem::ProblemSpec;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct FDConfig {
    /// First-difference step; corpus inputs are O(1).
    pub step: f64,
    /// Second-difference step. Larger than `step` because second differences
    /// divide by the step squared and cancellation dominates sooner.
    pub hessian_step: f64,
}

impl Default for FDConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            hessian_step: 1e-4,
        }
    }
}

/// Componentwise central difference (f(p + h e_i) - f(p - h e_i)) / 2h.
pub fn fd_gradient<F>(f: F, point: &DVector<f64>, cfg: &FDConfig) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let h = cfg.step;
    let mut out = DVector::zeros(point.len());
    let mut p = point.clone();
    for i in 0..point.len() {
        p[i] = point[i] + h;
        let fp = f(&p);
        p[i] = point[i] - h;
        let fm = f(&p);
        p[i] = point[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
    out
}

/// Symmetric second-difference matrix, symmetrized as (M + M') / 2.
pub fn fd_hessian<F>(f: F, point: &DVector<f64>, cfg: &FDConfig) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let h = cfg.hessian_step;
    let d = point.len();
    let f0 = f(point);
    let mut m = DMatrix::zeros(d, d);
    let mut p = point.clone();
    for i in 0..d {
        p[i] = point[i] + h;
        let fp = f(&p);
        p[i] = point[i] - h;
        let fm = f(&p);
        p[i] = point[i];
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..d {
            p[i] = point[i] + h;
            p[j] = point[j] + h;
            let fpp = f(&p);
            p[j] = point[j] - h;
            let fpm = f(&p);
            p[i] = point[i] - h;
            let fmm = f(&p);
            p[j] = point[j] + h;
            let fmp = f(&p);
            p[i] = point[i];
            p[j] = point[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    (&m + m.transpose()) * 0.5
}

#[derive(Debug, Clone)]
pub struct FunctionDerivCheck {
    pub label: String,
    pub gradient_error: f64,
    pub hessian_error: f64,
    /// Component index of the worst gradient discrepancy.
    pub worst_component: usize,
}

#[derive(Debug, Clone)]
pub struct DerivativeReport {
    pub per_function: Vec<FunctionDerivCheck>,
    pub tol: f64,
    pub pass: bool,
    pub warning: Option<String>,
}

/// Compare analytic gradients and Hessians of every declared function with
/// central differences at the probe points. The report carries the max
/// discrepancy per function; a probe list that is empty passes vacuously
/// with a warning.
pub fn check_derivatives(
    spec: &ProblemSpec,
    probes: &[DVector<f64>],
    tol: f64,
    cfg: &FDConfig,
) -> DerivativeReport {
    let mut per_function = Vec::new();
    let mut warning = None;
    if probes.is_empty() {
        warning = Some("no probe points; derivative check is vacuous".to_string());
    }
    let n = spec.dims.n;
    let mut groups: Vec<(String, crate::problem::Field, bool)> = Vec::new();
    groups.push(("f".into(), spec.bundle.objective.clone(), true));
    for (i, f) in spec.bundle.lower_eq.iter().enumerate() {
        groups.push((format!("h[{i}]"), f.clone(), true));
    }
    for (i, f) in spec.bundle.lower_ineq.iter().enumerate() {
        groups.push((format!("g[{i}]"), f.clone(), true));
    }
    for (i, f) in spec.bundle.upper_eq.iter().enumerate() {
        groups.push((format!("H[{i}]"), f.clone(), false));
    }
    for (i, f) in spec.bundle.upper_ineq.iter().enumerate() {
        groups.push((format!("G[{i}]"), f.clone(), false));
    }

    for (label, field, stacked) in groups {
        let mut gradient_error = 0.0_f64;
        let mut hessian_error = 0.0_f64;
        let mut worst_component = 0usize;
        for probe in probes {
            let p = if stacked {
                probe.clone()
            } else {
                probe.rows(0, n).into_owned()
            };
            let analytic_g = field.gradient(&p);
            let fd_g = fd_gradient(|z| field.value(z), &p, cfg);
            for i in 0..p.len() {
                let e = (analytic_g[i] - fd_g[i]).abs();
                if e > gradient_error {
                    gradient_error = e;
                    worst_component = i;
                }
            }
            let analytic_h = field.hessian(&p);
            let fd_h = fd_hessian(|z| field.value(z), &p, cfg);
            hessian_error = hessian_error.max(crate::linalg::mat_inf_norm(&(analytic_h - fd_h)));
        }
        per_function.push(FunctionDerivCheck {
            label,
            gradient_error,
            hessian_error,
            worst_component,
        });
    }
    let pass = per_function
        .iter()
        .all(|c| c.gradient_error <= tol && c.hessian_error <= tol.max(1e-5));
    DerivativeReport {
        per_function,
        tol,
        pass,
        warning,
    }
}

/// Nested value of the inner maximization at a probe x, re-solved from the
/// center solution. The probe must land on the center's active set;
/// disagreement means the step left the stability neighborhood and aborts.
fn nested_value(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    center: &LowerSolution,
    opts: &LowerOptions,
    probe_label: &str,
) -> Result<f64> {
    // Second differences divide by step^2, and with active constraints the
    // objective is first-order sensitive to the inner solution, so the
    // nested solves must run to near machine precision.
    let tight = LowerOptions {
        tol: opts.tol.min(1e-13),
        ..*opts
    };
    let sol = lower::solve_lower_warm(spec, x, center, &tight).map_err(|e| Error::NestedSolve {
        context: format!("value probe {probe_label}"),
        detail: e.to_string(),
    })?;
    if sol.alpha != center.alpha {
        return Err(Error::ActiveSetChange {
            where_: format!("value probe {probe_label}"),
            detail: format!("alpha changed from {:?} to {:?}", center.alpha, sol.alpha),
        });
    }
    Ok(spec.f_value(x, &sol.y))
}

/// Central-difference gradient of the optimal-value function, with each
/// nested solve warm-started from `center`.
pub fn fd_value_gradient(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    center: &LowerSolution,
    opts: &LowerOptions,
    cfg: &FDConfig,
) -> Result<DVector<f64>> {
    let h = cfg.step;
    let n = x.len();
    let mut out = DVector::zeros(n);
    let mut p = x.clone();
    for i in 0..n {
        p[i] = x[i] + h;
        let fp = nested_value(spec, &p, center, opts, &format!("+e{i}"))?;
        p[i] = x[i] - h;
        let fm = nested_value(spec, &p, center, opts, &format!("-e{i}"))?;
        p[i] = x[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// Central second differences of the optimal-value function around x.
pub fn fd_value_hessian(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    center: &LowerSolution,
    opts: &LowerOptions,
    cfg: &FDConfig,
) -> Result<DMatrix<f64>> {
    let h = cfg.hessian_step;
    let n = x.len();
    let f0 = nested_value(spec, x, center, opts, "center")?;
    let mut m = DMatrix::zeros(n, n);
    let mut p = x.clone();
    for i in 0..n {
        p[i] = x[i] + h;
        let fp = nested_value(spec, &p, center, opts, &format!("+e{i}"))?;
        p[i] = x[i] - h;
        let fm = nested_value(spec, &p, center, opts, &format!("-e{i}"))?;
        p[i] = x[i];
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..n {
            p[i] = x[i] + h;
            p[j] = x[j] + h;
            let fpp = nested_value(spec, &p, center, opts, &format!("+e{i}+e{j}"))?;
            p[j] = x[j] - h;
            let fpm = nested_value(spec, &p, center, opts, &format!("+e{i}-e{j}"))?;
            p[i] = x[i] - h;
            let fmm = nested_value(spec, &p, center, opts, &format!("-e{i}-e{j}"))?;
            p[j] = x[j] + h;
            let fmp = nested_value(spec, &p, center, opts, &format!("-e{i}+e{j}"))?;
            p[i] = x[i];
            p[j] = x[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok((&m + m.transpose()) * 0.5)
}
