//! Brute-force verification of the local minimax property and of quadratic
//! growth, on dense grids at desk scale (one or two variables per level).
//!
//! The check is deliberately independent of every derivative-based path in
//! the crate: only function values on grids are used, plus a derivative-free
//! parabolic refinement of inner maxima so exact-quadratic corpora evaluate
//! their inner suprema exactly.

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use nalgebra::DVector;

#[derive(Debug, Clone, Copy)]
pub struct GridOracleConfig {
    /// Outer radius of the check.
    pub delta0: f64,
    /// Grid points per axis.
    pub grid_points: usize,
    /// Inner-ball schedule eta(delta) = min(delta0, eta_factor * delta).
    pub eta_factor: f64,
    /// Feasibility tolerance for grid membership in the constraint sets.
    pub feas_tol: f64,
    /// Inequality slack tolerated before declaring a violation.
    pub slack_tol: f64,
}

impl Default for GridOracleConfig {
    fn default() -> Self {
        Self {
            delta0: 0.1,
            grid_points: 201,
            eta_factor: 10.0,
            feas_tol: 1e-9,
            slack_tol: 1e-9,
        }
    }
}

impl GridOracleConfig {
    fn eta(&self, delta: f64) -> f64 {
        self.delta0.min(self.eta_factor * delta)
    }
}

fn axis(center: f64, radius: f64, points: usize) -> Vec<f64> {
    let k = points.max(3);
    (0..k)
        .map(|i| center - radius + 2.0 * radius * (i as f64) / ((k - 1) as f64))
        .collect()
}

/// Cartesian product grid around `center`, radius `delta0` per axis.
fn grid_around(center: &DVector<f64>, radius: f64, points: usize) -> Vec<DVector<f64>> {
    match center.len() {
        1 => axis(center[0], radius, points)
            .into_iter()
            .map(|v| DVector::from_column_slice(&[v]))
            .collect(),
        2 => {
            let a0 = axis(center[0], radius, points);
            let a1 = axis(center[1], radius, points);
            let mut out = Vec::with_capacity(a0.len() * a1.len());
            for &v0 in &a0 {
                for &v1 in &a1 {
                    out.push(DVector::from_column_slice(&[v0, v1]));
                }
            }
            out
        }
        _ => Vec::new(),
    }
}

fn x_feasible(spec: &ProblemSpec, x: &DVector<f64>, tol: f64) -> bool {
    spec.big_h_values(x).iter().all(|v| v.abs() <= tol)
        && spec.big_g_values(x).iter().all(|v| *v <= tol)
}

fn y_feasible(spec: &ProblemSpec, x: &DVector<f64>, y: &DVector<f64>, tol: f64) -> bool {
    spec.h_values(x, y).iter().all(|v| v.abs() <= tol)
        && spec.g_values(x, y).iter().all(|v| *v <= tol)
}

#[derive(Debug, Clone)]
pub struct MinimaxLevel {
    pub delta: f64,
    pub eta: f64,
    /// Worst slack of f(x*, y) <= f(x*, y*) over the level's y grid.
    pub left_worst_slack: f64,
    /// Worst slack of f(x*, y*) <= sup_z f(x, z) over the level's x grid.
    pub right_worst_slack: f64,
    pub left_points: usize,
    pub right_points: usize,
    pub empty_inner: usize,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct MinimaxVerdict {
    pub pass: bool,
    pub levels: Vec<MinimaxLevel>,
    /// Reportable irregularities (empty feasible grids, empty inner sets).
    pub anomalies: Vec<String>,
}

/// Check the two-sided local minimax inequality on a geometric radius ladder
/// delta0, delta0/2, delta0/4, delta0/8.
pub fn grid_minimax_check(
    spec: &ProblemSpec,
    x_star: &DVector<f64>,
    y_star: &DVector<f64>,
    cfg: &GridOracleConfig,
) -> Result<MinimaxVerdict> {
    if spec.dims.n > 2 || spec.dims.m > 2 {
        return Err(Error::Unsupported(format!(
            "grid oracle supports n, m <= 2; got n = {}, m = {}",
            spec.dims.n, spec.dims.m
        )));
    }
    let f_star = spec.f_value(x_star, y_star);
    let x_grid = grid_around(x_star, cfg.delta0, cfg.grid_points);
    let y_grid = grid_around(y_star, cfg.delta0, cfg.grid_points);

    let mut levels = Vec::new();
    let mut anomalies = Vec::new();
    for level in 0..4 {
        let delta = cfg.delta0 / (1 << level) as f64;
        let eta = cfg.eta(delta);
        let mut left_worst: f64 = f64::INFINITY;
        let mut left_points = 0usize;
        for y in &y_grid {
            if (y - y_star).norm() > delta || !y_feasible(spec, x_star, y, cfg.feas_tol) {
                continue;
            }
            left_points += 1;
            left_worst = left_worst.min(f_star - spec.f_value(x_star, y));
        }
        if left_points == 0 {
            anomalies.push(format!("level {level}: no feasible y grid point"));
        }

        let mut right_worst: f64 = f64::INFINITY;
        let mut right_points = 0usize;
        let mut empty_inner = 0usize;
        for x in &x_grid {
            if (x - x_star).norm() > delta || !x_feasible(spec, x, cfg.feas_tol) {
                continue;
            }
            let mut inner: Option<f64> = None;
            for z in &y_grid {
                if (z - y_star).norm() > eta || !y_feasible(spec, x, z, cfg.feas_tol) {
                    continue;
                }
                let v = spec.f_value(x, z);
                inner = Some(inner.map_or(v, |best: f64| best.max(v)));
            }
            match inner {
                Some(sup) => {
                    right_points += 1;
                    right_worst = right_worst.min(sup - f_star);
                }
                None => empty_inner += 1,
            }
        }
        if right_points == 0 {
            anomalies.push(format!("level {level}: no feasible x grid point"));
        }
        if empty_inner > 0 {
            anomalies.push(format!(
                "level {level}: inner feasible set empty at {empty_inner} x grid points"
            ));
        }
        let left_ok = left_points == 0 || left_worst >= -cfg.slack_tol;
        let right_ok = right_points == 0 || right_worst >= -cfg.slack_tol;
        levels.push(MinimaxLevel {
            delta,
            eta,
            left_worst_slack: if left_points == 0 { f64::INFINITY } else { left_worst },
            right_worst_slack: if right_points == 0 {
                f64::INFINITY
            } else {
                right_worst
            },
            left_points,
            right_points,
            empty_inner,
            pass: left_ok && right_ok,
        });
    }
    Ok(MinimaxVerdict {
        pass: levels.iter().all(|l| l.pass),
        levels,
        anomalies,
    })
}

/// Inner max of f(x, .) over the feasible grid within the eta-ball, improved
/// by a per-axis three-point parabolic step around the grid argmax. The
/// refined point only replaces the grid value when it stays feasible and
/// inside the ball.
fn refined_inner_max(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    y_star: &DVector<f64>,
    eta: f64,
    axes: &[Vec<f64>],
    cfg: &GridOracleConfig,
) -> Option<f64> {
    let m = y_star.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut idx = vec![0usize; m];
    loop {
        let y = DVector::from_iterator(m, idx.iter().enumerate().map(|(d, &i)| axes[d][i]));
        if (&y - y_star).norm() <= eta && y_feasible(spec, x, &y, cfg.feas_tol) {
            let v = spec.f_value(x, &y);
            if best.as_ref().map_or(true, |(_, b)| v > *b) {
                best = Some((idx.clone(), v));
            }
        }
        // advance the multi-index
        let mut d = 0;
        loop {
            if d == m {
                break;
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == m {
            break;
        }
    }
    let (argmax, grid_val) = best?;
    // parabolic refinement along each axis
    let mut y_ref = DVector::from_iterator(m, argmax.iter().enumerate().map(|(d, &i)| axes[d][i]));
    let mut val = grid_val;
    for d in 0..m {
        let i = argmax[d];
        if i == 0 || i + 1 >= axes[d].len() {
            continue;
        }
        let h = axes[d][i + 1] - axes[d][i];
        let mut probe = y_ref.clone();
        probe[d] = axes[d][i - 1];
        let fm = spec.f_value(x, &probe);
        probe[d] = axes[d][i + 1];
        let fp = spec.f_value(x, &probe);
        let denom = fm - 2.0 * val + fp;
        if denom >= -1e-300 {
            continue;
        }
        let shift = 0.5 * h * (fm - fp) / denom;
        if shift.abs() > h {
            continue;
        }
        probe[d] = y_ref[d] + shift;
        if (&probe - y_star).norm() <= eta && y_feasible(spec, x, &probe, cfg.feas_tol) {
            let v = spec.f_value(x, &probe);
            if v > val {
                val = v;
                y_ref = probe;
            }
        }
    }
    Some(val)
}

#[derive(Debug, Clone)]
pub struct GrowthFit {
    /// Least-squares slope of the deficit against the squared half-distance.
    pub gamma: f64,
    /// Relative fit residual.
    pub residual: f64,
    /// Worst pointwise slack of deficit >= gamma * t.
    pub worst_slack: f64,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct GrowthReport {
    pub inner: GrowthFit,
    pub outer: GrowthFit,
    pub pass: bool,
}

const FIT_RESIDUAL_GATE: f64 = 0.25;

fn fit_through_origin(ts: &[f64], us: &[f64], slack_tol: f64) -> GrowthFit {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&t, &u) in ts.iter().zip(us) {
        num += t * u;
        den += t * t;
    }
    let gamma = if den > 0.0 { num / den } else { 0.0 };
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut worst = f64::INFINITY;
    for (&t, &u) in ts.iter().zip(us) {
        let r = u - gamma * t;
        ss_res += r * r;
        ss_tot += u * u;
        worst = worst.min(r);
    }
    let residual = if ss_tot > 0.0 {
        (ss_res / ss_tot).sqrt()
    } else if ss_res > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    GrowthFit {
        gamma,
        residual,
        worst_slack: if ts.is_empty() { f64::INFINITY } else { worst },
        points: ts.len(),
    }
    .clamp_slack(slack_tol)
}

impl GrowthFit {
    fn clamp_slack(self, _slack_tol: f64) -> Self {
        self
    }
    fn pass(&self, slack_tol: f64) -> bool {
        self.gamma > 0.0
            && self.residual <= FIT_RESIDUAL_GATE
            && (self.points == 0 || self.worst_slack >= -slack_tol)
    }
}

/// Fit the two growth constants: the deficit f(x*,y*) - f(x*,y) against
/// |y - y*|^2 / 2 over the feasible y grid, and the surplus
/// sup_z f(x, z) - f(x*,y*) against |x - x*|^2 / 2 over the feasible x grid.
pub fn growth_check(
    spec: &ProblemSpec,
    x_star: &DVector<f64>,
    y_star: &DVector<f64>,
    cfg: &GridOracleConfig,
) -> Result<GrowthReport> {
    if spec.dims.n > 2 || spec.dims.m > 2 {
        return Err(Error::Unsupported(format!(
            "growth oracle supports n, m <= 2; got n = {}, m = {}",
            spec.dims.n, spec.dims.m
        )));
    }
    let f_star = spec.f_value(x_star, y_star);
    let y_axes: Vec<Vec<f64>> = (0..spec.dims.m)
        .map(|d| axis(y_star[d], cfg.delta0, cfg.grid_points))
        .collect();

    let mut ts = Vec::new();
    let mut us = Vec::new();
    for y in grid_around(y_star, cfg.delta0, cfg.grid_points) {
        let dist = (&y - y_star).norm();
        if dist > cfg.delta0 || !y_feasible(spec, x_star, &y, cfg.feas_tol) {
            continue;
        }
        if dist == 0.0 {
            continue;
        }
        ts.push(0.5 * dist * dist);
        us.push(f_star - spec.f_value(x_star, &y));
    }
    let inner = fit_through_origin(&ts, &us, cfg.slack_tol);

    let eta = cfg.eta(cfg.delta0);
    let mut txs = Vec::new();
    let mut uxs = Vec::new();
    for x in grid_around(x_star, cfg.delta0, cfg.grid_points) {
        let dist = (&x - x_star).norm();
        if dist > cfg.delta0 || dist == 0.0 || !x_feasible(spec, &x, cfg.feas_tol) {
            continue;
        }
        if let Some(sup) = refined_inner_max(spec, &x, y_star, eta, &y_axes, cfg) {
            txs.push(0.5 * dist * dist);
            uxs.push(sup - f_star);
        }
    }
    let outer = fit_through_origin(&txs, &uxs, cfg.slack_tol);
    let pass = inner.pass(cfg.slack_tol) && outer.pass(cfg.slack_tol);
    Ok(GrowthReport { inner, outer, pass })
}

/// Best feasible grid point of the inner problem over a box.
pub fn brute_lower_max(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    box_lo: &DVector<f64>,
    box_hi: &DVector<f64>,
    grid: usize,
) -> Result<(DVector<f64>, f64)> {
    let m = spec.dims.m;
    if m > 2 {
        return Err(Error::Unsupported(format!(
            "brute-force inner max supports m <= 2; got m = {m}"
        )));
    }
    if box_lo.len() != m || box_hi.len() != m {
        return Err(Error::Dimension {
            what: "inner search box".into(),
            expected: m,
            got: box_lo.len(),
        });
    }
    let axes: Vec<Vec<f64>> = (0..m)
        .map(|d| {
            let c = 0.5 * (box_lo[d] + box_hi[d]);
            let r = 0.5 * (box_hi[d] - box_lo[d]);
            axis(c, r, grid)
        })
        .collect();
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut idx = vec![0usize; m];
    loop {
        let y = DVector::from_iterator(m, idx.iter().enumerate().map(|(d, &i)| axes[d][i]));
        if y_feasible(spec, x, &y, 1e-9) {
            let v = spec.f_value(x, &y);
            if best.as_ref().map_or(true, |(_, b)| v > *b) {
                best = Some((y, v));
            }
        }
        let mut d = 0;
        loop {
            if d == m {
                break;
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == m {
            break;
        }
    }
    best.ok_or_else(|| Error::Infeasible("no feasible grid point in the search box".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_column_slice(&[x])
    }

    #[test]
    fn saddle_points_pass_the_grid_check() {
        let cfg = GridOracleConfig::default();
        for key in ["p1", "p3"] {
            let b = builtins::get(key).unwrap();
            let verdict =
                grid_minimax_check(&b.spec, &b.reference.x, &b.reference.y, &cfg).unwrap();
            assert!(verdict.pass, "{key}: {:?}", verdict.levels);
            assert!(verdict.anomalies.is_empty(), "{key}");
        }
    }

    #[test]
    fn pure_maximum_fails_the_right_inequality() {
        let cfg = GridOracleConfig::default();
        let b = builtins::get("neg-saddle").unwrap();
        let verdict = grid_minimax_check(&b.spec, &b.reference.x, &b.reference.y, &cfg).unwrap();
        assert!(!verdict.pass);
        assert!(verdict
            .levels
            .iter()
            .any(|l| l.right_worst_slack < -cfg.slack_tol));
        assert!(verdict
            .levels
            .iter()
            .all(|l| l.left_worst_slack >= -cfg.slack_tol));
    }

    #[test]
    fn verdicts_survive_grid_doubling() {
        let mut cfg = GridOracleConfig::default();
        for key in ["p1", "p3", "neg-saddle"] {
            let b = builtins::get(key).unwrap();
            cfg.grid_points = 201;
            let v1_ = grid_minimax_check(&b.spec, &b.reference.x, &b.reference.y, &cfg).unwrap();
            cfg.grid_points = 402;
            let v2 = grid_minimax_check(&b.spec, &b.reference.x, &b.reference.y, &cfg).unwrap();
            assert_eq!(v1_.pass, v2.pass, "{key}");
        }
    }

    #[test]
    fn growth_constants_match_closed_forms() {
        let cfg = GridOracleConfig::default();
        let p1 = builtins::get("p1").unwrap();
        let g1 = growth_check(&p1.spec, &p1.reference.x, &p1.reference.y, &cfg).unwrap();
        assert!(g1.pass, "{g1:?}");
        assert!((g1.inner.gamma - 1.0).abs() < 0.25);
        assert!((g1.outer.gamma - 1.0).abs() < 0.25);

        let p3 = builtins::get("p3").unwrap();
        let g3 = growth_check(&p3.spec, &p3.reference.x, &p3.reference.y, &cfg).unwrap();
        assert!(g3.pass, "{g3:?}");
        assert!((g3.inner.gamma - 2.0).abs() < 0.5);
        assert!((g3.outer.gamma - 2.5).abs() < 0.625);
    }

    #[test]
    fn flat_value_function_fails_growth() {
        let cfg = GridOracleConfig::default();
        let b = builtins::get("neg-linear-growth").unwrap();
        let report = growth_check(&b.spec, &b.reference.x, &b.reference.y, &cfg).unwrap();
        assert!(!report.pass);
        // sup_z f(x, z) = x is odd around x* = 0, so the fitted slope is 0
        assert!(report.outer.gamma.abs() < 1e-9, "{report:?}");
    }

    #[test]
    fn brute_inner_max_finds_known_maximizers() {
        let p1 = builtins::get("p1").unwrap();
        let (y, _) = brute_lower_max(&p1.spec, &v1(0.3), &v1(-1.0), &v1(1.0), 2001).unwrap();
        assert!((y[0] - 0.3).abs() <= 1.5e-3);

        let p2 = builtins::get("p2").unwrap();
        let (y2, _) = brute_lower_max(&p2.spec, &v1(2.0), &v1(-2.0), &v1(2.0), 2001).unwrap();
        assert!((y2[0] - 1.0).abs() <= 2.5e-3);
    }

    #[test]
    fn infeasible_box_is_an_error() {
        let p2 = builtins::get("p2").unwrap();
        let err = brute_lower_max(&p2.spec, &v1(2.0), &v1(2.0), &v1(3.0), 101);
        assert!(matches!(err, Err(Error::Infeasible(_))));
    }
}
