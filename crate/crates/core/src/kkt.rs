//! KKT machinery for the coupled minimax system: Lagrangian blocks, KKT
//! residuals, active sets, the Kojima reformulation and its generalized
//! Jacobians.
//!
//! The Kojima variable is k = (x, u, w, y, mu, xi) where w and xi are the
//! shifted multipliers w = v + G(x), xi = lambda + g(x, y). Positive parts
//! recover the multipliers, negative parts the constraint values, and the
//! KKT system becomes the piecewise-smooth equation F(k) = 0 with
//!
//! ```text
//! F = [ grad_x L(x,y,mu,xi+) + JH' u + JG' w+ ;
//!       H(x) ;
//!       G(x) - w- ;
//!       grad_y L(x,y,mu,xi+) ;
//!       h(x,y) ;
//!       -g(x,y) + xi- ]
//! ```
//!
//! with L(x,y,mu,lambda) = f + mu'h - lambda'g. Sign conventions are kept
//! exactly as above; assembled matrices expose both the natural variable
//! ordering and the active-set block ordering (beta_plus, beta_zero, beta_c
//! and alpha, alpha_c) through explicit permutation bookkeeping.

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{Dimensions, ProblemSpec};
use nalgebra::{DMatrix, DVector};

/// Primal-dual point of the coupled KKT system.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub y: DVector<f64>,
    pub mu: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl PrimalDualPoint {
    pub fn zeros(dims: &Dimensions) -> Self {
        Self {
            x: DVector::zeros(dims.n),
            u: DVector::zeros(dims.n1),
            v: DVector::zeros(dims.n2),
            y: DVector::zeros(dims.m),
            mu: DVector::zeros(dims.m1),
            lambda: DVector::zeros(dims.m2),
        }
    }

    pub fn norm_inf_diff(&self, other: &Self) -> f64 {
        let mut d = 0.0_f64;
        let pairs = [
            (&self.x, &other.x),
            (&self.u, &other.u),
            (&self.v, &other.v),
            (&self.y, &other.y),
            (&self.mu, &other.mu),
            (&self.lambda, &other.lambda),
        ];
        for (a, b) in pairs {
            d = d.max(linalg::vec_inf_norm(&(a - b)));
        }
        d
    }
}

/// Point in the domain of the Kojima mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct KojimaPoint {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    pub y: DVector<f64>,
    pub mu: DVector<f64>,
    pub xi: DVector<f64>,
}

pub fn positive_part(v: &DVector<f64>) -> DVector<f64> {
    v.map(|t| t.max(0.0))
}

pub fn negative_part(v: &DVector<f64>) -> DVector<f64> {
    v.map(|t| t.min(0.0))
}

impl KojimaPoint {
    pub fn to_flat(&self) -> DVector<f64> {
        let total =
            self.x.len() + self.u.len() + self.w.len() + self.y.len() + self.mu.len() + self.xi.len();
        let mut out = DVector::zeros(total);
        let mut at = 0;
        for block in [&self.x, &self.u, &self.w, &self.y, &self.mu, &self.xi] {
            out.rows_mut(at, block.len()).copy_from(block);
            at += block.len();
        }
        out
    }

    pub fn from_flat(dims: &Dimensions, flat: &DVector<f64>) -> Self {
        let mut at = 0;
        let mut take = |len: usize| {
            let v = flat.rows(at, len).into_owned();
            at += len;
            v
        };
        Self {
            x: take(dims.n),
            u: take(dims.n1),
            w: take(dims.n2),
            y: take(dims.m),
            mu: take(dims.m1),
            xi: take(dims.m2),
        }
    }
}

/// Lagrangian value and derivative blocks at (x, y, mu, lambda).
#[derive(Debug, Clone)]
pub struct LagrangianBlocks {
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub grad_y: DVector<f64>,
    pub hess_xx: DMatrix<f64>,
    pub hess_xy: DMatrix<f64>,
    pub hess_yy: DMatrix<f64>,
}

/// L = f + mu'h - lambda'g with first and second derivative blocks.
/// Empty constraint families contribute zero.
pub fn lagrangian_blocks(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    mu: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<LagrangianBlocks> {
    if mu.len() != spec.dims.m1 {
        return Err(Error::Dimension {
            what: "mu".into(),
            expected: spec.dims.m1,
            got: mu.len(),
        });
    }
    if lambda.len() != spec.dims.m2 {
        return Err(Error::Dimension {
            what: "lambda".into(),
            expected: spec.dims.m2,
            got: lambda.len(),
        });
    }
    let z = spec.stack(x, y);
    let mut value = spec.bundle.objective.value(&z);
    let mut grad = spec.bundle.objective.gradient(&z);
    let mut hess = spec.bundle.objective.hessian(&z);
    for (j, field) in spec.bundle.lower_eq.iter().enumerate() {
        value += mu[j] * field.value(&z);
        grad += field.gradient(&z) * mu[j];
        hess += field.hessian(&z) * mu[j];
    }
    for (i, field) in spec.bundle.lower_ineq.iter().enumerate() {
        value -= lambda[i] * field.value(&z);
        grad -= field.gradient(&z) * lambda[i];
        hess -= field.hessian(&z) * lambda[i];
    }
    let (grad_x, grad_y) = spec.split_grad(&grad);
    let (hess_xx, hess_xy, hess_yy) = spec.split_hess(&hess);
    Ok(LagrangianBlocks {
        value,
        grad_x,
        grad_y,
        hess_xx,
        hess_xy,
        hess_yy,
    })
}

/// Sum of multiplier-weighted upper-constraint Hessians at x.
pub fn upper_hessian_sum(
    spec: &ProblemSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> DMatrix<f64> {
    let n = spec.dims.n;
    let mut sum = DMatrix::zeros(n, n);
    for (j, _) in spec.bundle.upper_eq.iter().enumerate() {
        sum += spec.big_h_hessian(j, x) * u[j];
    }
    for (i, _) in spec.bundle.upper_ineq.iter().enumerate() {
        sum += spec.big_g_hessian(i, x) * v[i];
    }
    sum
}

/// Stacked KKT residual and its infinity norm. Complementarity is encoded
/// with the natural residual min(multiplier, -constraint), whose zero set is
/// exactly the complementary pairs.
pub fn kkt_residual(spec: &ProblemSpec, z: &PrimalDualPoint) -> (DVector<f64>, f64) {
    let dims = spec.dims;
    let lag = lagrangian_blocks(spec, &z.x, &z.y, &z.mu, &z.lambda).expect("dimensions");
    let jh = spec.big_h_jacobian(&z.x);
    let jg = spec.big_g_jacobian(&z.x);
    let big_h = spec.big_h_values(&z.x);
    let big_g = spec.big_g_values(&z.x);
    let h = spec.h_values(&z.x, &z.y);
    let g = spec.g_values(&z.x, &z.y);

    let mut r = DVector::zeros(dims.kojima_len());
    let mut at = 0;
    let put = |seg: DVector<f64>, r: &mut DVector<f64>, at: &mut usize| {
        r.rows_mut(*at, seg.len()).copy_from(&seg);
        *at += seg.len();
    };
    let stat_x = &lag.grad_x + jh.transpose() * &z.u + jg.transpose() * &z.v;
    put(stat_x, &mut r, &mut at);
    put(big_h, &mut r, &mut at);
    put(
        DVector::from_iterator(dims.n2, (0..dims.n2).map(|i| z.v[i].min(-big_g[i]))),
        &mut r,
        &mut at,
    );
    put(lag.grad_y, &mut r, &mut at);
    put(h, &mut r, &mut at);
    put(
        DVector::from_iterator(dims.m2, (0..dims.m2).map(|i| z.lambda[i].min(-g[i]))),
        &mut r,
        &mut at,
    );
    let norm = linalg::vec_inf_norm(&r);
    (r, norm)
}

/// Shift multipliers by constraint values: w = v + G(x), xi = lambda + g(x,y).
pub fn to_kojima(spec: &ProblemSpec, z: &PrimalDualPoint) -> KojimaPoint {
    KojimaPoint {
        x: z.x.clone(),
        u: z.u.clone(),
        w: &z.v + spec.big_g_values(&z.x),
        y: z.y.clone(),
        mu: z.mu.clone(),
        xi: &z.lambda + spec.g_values(&z.x, &z.y),
    }
}

/// Recover multipliers from the positive parts. Inverse of [`to_kojima`]
/// on points satisfying v >= 0 complementary to G <= 0 (and likewise for the
/// lower level).
pub fn from_kojima(_spec: &ProblemSpec, k: &KojimaPoint) -> PrimalDualPoint {
    PrimalDualPoint {
        x: k.x.clone(),
        u: k.u.clone(),
        v: positive_part(&k.w),
        y: k.y.clone(),
        mu: k.mu.clone(),
        lambda: positive_part(&k.xi),
    }
}

/// Index sets of the active constraints, with the degenerate upper split
/// beta_zero = { i in beta : v_i <= tol }. Raw constraint and multiplier
/// values are carried along so every activity decision is auditable.
#[derive(Debug, Clone)]
pub struct ActiveSets {
    pub alpha: Vec<usize>,
    pub alpha_c: Vec<usize>,
    pub beta: Vec<usize>,
    pub beta_plus: Vec<usize>,
    pub beta_zero: Vec<usize>,
    pub beta_c: Vec<usize>,
    pub g_values: DVector<f64>,
    pub big_g_values: DVector<f64>,
    pub lower_multipliers: DVector<f64>,
    pub upper_multipliers: DVector<f64>,
    pub tol_act: f64,
}

impl ActiveSets {
    pub fn same_lower(&self, other: &ActiveSets) -> bool {
        self.alpha == other.alpha
    }
    pub fn same_upper(&self, other: &ActiveSets) -> bool {
        self.beta == other.beta
            && self.beta_plus == other.beta_plus
            && self.beta_zero == other.beta_zero
    }
}

pub fn active_sets(spec: &ProblemSpec, z: &PrimalDualPoint, tol_act: f64) -> ActiveSets {
    let g = spec.g_values(&z.x, &z.y);
    let big_g = spec.big_g_values(&z.x);
    let mut alpha = Vec::new();
    let mut alpha_c = Vec::new();
    for i in 0..spec.dims.m2 {
        if g[i] >= -tol_act {
            alpha.push(i);
        } else {
            alpha_c.push(i);
        }
    }
    let mut beta = Vec::new();
    let mut beta_plus = Vec::new();
    let mut beta_zero = Vec::new();
    let mut beta_c = Vec::new();
    for i in 0..spec.dims.n2 {
        if big_g[i] >= -tol_act {
            beta.push(i);
            if z.v[i] > tol_act {
                beta_plus.push(i);
            } else {
                beta_zero.push(i);
            }
        } else {
            beta_c.push(i);
        }
    }
    ActiveSets {
        alpha,
        alpha_c,
        beta,
        beta_plus,
        beta_zero,
        beta_c,
        g_values: g,
        big_g_values: big_g,
        lower_multipliers: z.lambda.clone(),
        upper_multipliers: z.v.clone(),
        tol_act,
    }
}

/// Kojima mapping, optionally shifted by a right-hand side: F(k) - eta.
pub fn kojima_eval(
    spec: &ProblemSpec,
    k: &KojimaPoint,
    eta: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let dims = spec.dims;
    if let Some(eta) = eta {
        if eta.len() != dims.kojima_len() {
            return Err(Error::Dimension {
                what: "eta".into(),
                expected: dims.kojima_len(),
                got: eta.len(),
            });
        }
    }
    let w_plus = positive_part(&k.w);
    let w_minus = negative_part(&k.w);
    let xi_plus = positive_part(&k.xi);
    let xi_minus = negative_part(&k.xi);
    let lag = lagrangian_blocks(spec, &k.x, &k.y, &k.mu, &xi_plus)?;
    let jh = spec.big_h_jacobian(&k.x);
    let jg = spec.big_g_jacobian(&k.x);

    let mut out = DVector::zeros(dims.kojima_len());
    let mut at = 0;
    let put = |seg: DVector<f64>, out: &mut DVector<f64>, at: &mut usize| {
        out.rows_mut(*at, seg.len()).copy_from(&seg);
        *at += seg.len();
    };
    put(
        &lag.grad_x + jh.transpose() * &k.u + jg.transpose() * &w_plus,
        &mut out,
        &mut at,
    );
    put(spec.big_h_values(&k.x), &mut out, &mut at);
    put(spec.big_g_values(&k.x) - w_minus, &mut out, &mut at);
    put(lag.grad_y, &mut out, &mut at);
    put(spec.h_values(&k.x, &k.y), &mut out, &mut at);
    put(-spec.g_values(&k.x, &k.y) + xi_minus, &mut out, &mut at);
    if let Some(eta) = eta {
        out -= eta;
    }
    Ok(out)
}

/// Block permutation that reorders the w indices as (beta_plus, beta_zero,
/// beta_c) and the xi indices as (alpha, alpha_c). `perm[p] = natural flat
/// index of block-order position p`; rows and columns share it.
#[derive(Debug, Clone)]
pub struct SplitOrdering {
    pub beta_plus: Vec<usize>,
    pub beta_zero: Vec<usize>,
    pub beta_c: Vec<usize>,
    pub alpha: Vec<usize>,
    pub alpha_c: Vec<usize>,
    pub perm: Vec<usize>,
}

impl SplitOrdering {
    fn build(dims: &Dimensions, dw: &[f64], dxi: &[f64], tol_act: f64, w: &DVector<f64>) -> Self {
        let mut beta_plus = Vec::new();
        let mut beta_zero = Vec::new();
        let mut beta_c = Vec::new();
        for i in 0..dims.n2 {
            if w[i].abs() <= tol_act {
                beta_zero.push(i);
            } else if dw[i] >= 0.5 {
                beta_plus.push(i);
            } else {
                beta_c.push(i);
            }
        }
        let mut alpha = Vec::new();
        let mut alpha_c = Vec::new();
        for i in 0..dims.m2 {
            if dxi[i] >= 0.5 {
                alpha.push(i);
            } else {
                alpha_c.push(i);
            }
        }
        let mut perm = Vec::with_capacity(dims.kojima_len());
        let off_w = dims.n + dims.n1;
        let off_y = off_w + dims.n2;
        let off_xi = off_y + dims.m + dims.m1;
        perm.extend(0..off_w);
        for &i in beta_plus.iter().chain(&beta_zero).chain(&beta_c) {
            perm.push(off_w + i);
        }
        perm.extend(off_y..off_xi);
        for &i in alpha.iter().chain(&alpha_c) {
            perm.push(off_xi + i);
        }
        Self {
            beta_plus,
            beta_zero,
            beta_c,
            alpha,
            alpha_c,
            perm,
        }
    }
}

/// An element of the (generalized) Jacobian of the Kojima mapping.
#[derive(Debug, Clone)]
pub struct KojimaDerivative {
    /// Rows/columns in the natural variable order (x, u, w, y, mu, xi).
    pub natural: DMatrix<f64>,
    pub ordering: SplitOrdering,
}

impl KojimaDerivative {
    /// The matrix with rows and columns permuted into active-set block order.
    pub fn block_order(&self) -> DMatrix<f64> {
        let p = &self.ordering.perm;
        DMatrix::from_fn(p.len(), p.len(), |i, j| self.natural[(p[i], p[j])])
    }
}

/// Assemble a generalized-Jacobian element with prescribed diagonal values
/// dw = d(w+)/dw and dxi = d(xi+)/dxi (each entry in [0, 1]).
pub(crate) fn assemble_generalized(
    spec: &ProblemSpec,
    k: &KojimaPoint,
    dw: &[f64],
    dxi: &[f64],
    tol_act: f64,
) -> Result<KojimaDerivative> {
    let dims = spec.dims;
    let total = dims.kojima_len();
    let (n, n1, n2, m, m1, m2) = (dims.n, dims.n1, dims.n2, dims.m, dims.m1, dims.m2);
    let off_u = n;
    let off_w = n + n1;
    let off_y = off_w + n2;
    let off_mu = off_y + m;
    let off_xi = off_mu + m1;

    let w_plus = positive_part(&k.w);
    let xi_plus = positive_part(&k.xi);
    let lag = lagrangian_blocks(spec, &k.x, &k.y, &k.mu, &xi_plus)?;
    let jh = spec.big_h_jacobian(&k.x);
    let jg = spec.big_g_jacobian(&k.x);
    let (jxh, jyh) = spec.h_jacobians(&k.x, &k.y);
    let (jxg, jyg) = spec.g_jacobians(&k.x, &k.y);
    let g11 = &lag.hess_xx + upper_hessian_sum(spec, &k.x, &k.u, &w_plus);

    let mut v = DMatrix::zeros(total, total);
    linalg::insert_block(&mut v, 0, 0, &g11);
    linalg::insert_block(&mut v, 0, off_u, &jh.transpose());
    for i in 0..n2 {
        let col = jg.row(i).transpose() * dw[i];
        v.view_mut((0, off_w + i), (n, 1)).copy_from(&col);
    }
    linalg::insert_block(&mut v, 0, off_y, &lag.hess_xy);
    linalg::insert_block(&mut v, 0, off_mu, &jxh.transpose());
    for i in 0..m2 {
        let col = jxg.row(i).transpose() * (-dxi[i]);
        v.view_mut((0, off_xi + i), (n, 1)).copy_from(&col);
    }

    linalg::insert_block(&mut v, off_u, 0, &jh);

    linalg::insert_block(&mut v, off_w, 0, &jg);
    for i in 0..n2 {
        v[(off_w + i, off_w + i)] = -(1.0 - dw[i]);
    }

    linalg::insert_block(&mut v, off_y, 0, &lag.hess_xy.transpose());
    linalg::insert_block(&mut v, off_y, off_y, &lag.hess_yy);
    linalg::insert_block(&mut v, off_y, off_mu, &jyh.transpose());
    for i in 0..m2 {
        let col = jyg.row(i).transpose() * (-dxi[i]);
        v.view_mut((off_y, off_xi + i), (m, 1)).copy_from(&col);
    }

    linalg::insert_block(&mut v, off_mu, 0, &jxh);
    linalg::insert_block(&mut v, off_mu, off_y, &jyh);

    linalg::insert_block(&mut v, off_xi, 0, &(-&jxg));
    linalg::insert_block(&mut v, off_xi, off_y, &(-&jyg));
    for i in 0..m2 {
        v[(off_xi + i, off_xi + i)] = 1.0 - dxi[i];
    }

    let ordering = SplitOrdering::build(&dims, dw, dxi, tol_act, &k.w);
    Ok(KojimaDerivative {
        natural: v,
        ordering,
    })
}

pub(crate) fn split_diagonals_strict(
    k: &KojimaPoint,
    tol_act: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut dw = Vec::with_capacity(k.w.len());
    for (i, &wi) in k.w.iter().enumerate() {
        if wi.abs() <= tol_act {
            return Err(Error::DegenerateSplit {
                block: "w",
                index: i,
                value: wi,
            });
        }
        dw.push(if wi > 0.0 { 1.0 } else { 0.0 });
    }
    let mut dxi = Vec::with_capacity(k.xi.len());
    for (i, &xii) in k.xi.iter().enumerate() {
        if xii.abs() <= tol_act {
            return Err(Error::DegenerateSplit {
                block: "xi",
                index: i,
                value: xii,
            });
        }
        dxi.push(if xii > 0.0 { 1.0 } else { 0.0 });
    }
    Ok((dw, dxi))
}

/// Classical Jacobian of F at k. Requires every split component of w and xi
/// to sit strictly off the kink (within `tol_act`); a degenerate index is an
/// error directing callers to [`kojima_b_subdiff_element`].
pub fn kojima_jacobian(spec: &ProblemSpec, k: &KojimaPoint, tol_act: f64) -> Result<KojimaDerivative> {
    let (dw, dxi) = split_diagonals_strict(k, tol_act)?;
    assemble_generalized(spec, k, &dw, &dxi, tol_act)
}

/// Indices of w sitting on the split kink at k (the degenerate set).
pub fn degenerate_w_indices(k: &KojimaPoint, tol_act: f64) -> Vec<usize> {
    (0..k.w.len()).filter(|&i| k.w[i].abs() <= tol_act).collect()
}

/// A generalized-Jacobian element at k, with `omega` giving the split slope
/// on each degenerate w index (ascending index order). Vertices omega in
/// {0,1} produce B-subdifferential elements; interior omega produce elements
/// of the Clarke hull. The xi split must be strict.
pub fn kojima_b_subdiff_element(
    spec: &ProblemSpec,
    k: &KojimaPoint,
    omega: &[f64],
    tol_act: f64,
) -> Result<KojimaDerivative> {
    let degenerate = degenerate_w_indices(k, tol_act);
    if omega.len() != degenerate.len() {
        return Err(Error::Dimension {
            what: "omega".into(),
            expected: degenerate.len(),
            got: omega.len(),
        });
    }
    for (&om, &i) in omega.iter().zip(&degenerate) {
        if !(0.0..=1.0).contains(&om) {
            return Err(Error::Schema(format!(
                "omega for degenerate index {i} is {om}, outside [0, 1]"
            )));
        }
    }
    let mut dw = Vec::with_capacity(k.w.len());
    let mut next = 0usize;
    for (_i, &wi) in k.w.iter().enumerate() {
        if wi.abs() <= tol_act {
            dw.push(omega[next]);
            next += 1;
        } else {
            dw.push(if wi > 0.0 { 1.0 } else { 0.0 });
        }
    }
    let mut dxi = Vec::with_capacity(k.xi.len());
    for (i, &xii) in k.xi.iter().enumerate() {
        if xii.abs() <= tol_act {
            return Err(Error::DegenerateSplit {
                block: "xi",
                index: i,
                value: xii,
            });
        }
        dxi.push(if xii > 0.0 { 1.0 } else { 0.0 });
    }
    assemble_generalized(spec, k, &dw, &dxi, tol_act)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_column_slice(&[x])
    }

    #[test]
    fn lagrangian_on_saddle_problem() {
        let spec = builtins::get("p1").unwrap().spec;
        let lag =
            lagrangian_blocks(&spec, &v1(1.0), &v1(1.0), &DVector::zeros(0), &DVector::zeros(0))
                .unwrap();
        assert!((lag.value - 0.5).abs() < 1e-15);
        assert!(lag.grad_y[0].abs() < 1e-15);
    }

    #[test]
    fn zero_multipliers_reduce_to_objective() {
        let spec = builtins::get("p2").unwrap().spec;
        let x = v1(0.7);
        let y = v1(-0.3);
        let lag = lagrangian_blocks(&spec, &x, &y, &DVector::zeros(0), &v1(0.0)).unwrap();
        let grad = spec.f_gradient(&x, &y);
        assert!((lag.grad_x[0] - grad[0]).abs() < 1e-15);
        assert!((lag.grad_y[0] - grad[1]).abs() < 1e-15);
        assert!((lag.value - spec.f_value(&x, &y)).abs() < 1e-15);
    }

    #[test]
    fn lagrangian_with_active_lower_multiplier() {
        let spec = builtins::get("p2").unwrap().spec;
        let lag = lagrangian_blocks(&spec, &v1(2.0), &v1(1.0), &DVector::zeros(0), &v1(1.0)).unwrap();
        // grad_y L = x - y - lambda = 0
        assert!(lag.grad_y[0].abs() < 1e-15);
    }

    #[test]
    fn kkt_residual_vanishes_at_solutions() {
        let p1 = builtins::get("p1").unwrap();
        let (_, norm) = kkt_residual(&p1.spec, &p1.reference);
        assert!(norm < 1e-15);

        let p3 = builtins::get("p3").unwrap();
        let (_, norm3) = kkt_residual(&p3.spec, &p3.reference);
        assert!(norm3 < 1e-15);
    }

    #[test]
    fn kkt_residual_sees_stationarity_violation() {
        let p1 = builtins::get("p1").unwrap();
        let mut z = p1.reference.clone();
        z.x = v1(1.0);
        let (r, norm) = kkt_residual(&p1.spec, &z);
        // grad_y L = x - y = 1 lives in the y block
        assert!((norm - 1.0).abs() < 1e-15);
        assert!((r[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kojima_shift_and_splits() {
        // Constant G = (0, -2) with v = (1, 0): w = (1, -2).
        use crate::problem::{EvaluatorBundle, QuadraticForm};
        use std::sync::Arc;
        let dims = Dimensions {
            n: 1,
            m: 1,
            n1: 0,
            n2: 2,
            m1: 0,
            m2: 0,
        };
        let bundle = EvaluatorBundle {
            objective: Arc::new(QuadraticForm::zero(2)),
            lower_eq: vec![],
            lower_ineq: vec![],
            upper_eq: vec![],
            upper_ineq: vec![
                Arc::new(QuadraticForm::affine(DVector::zeros(1), 0.0)),
                Arc::new(QuadraticForm::affine(DVector::zeros(1), -2.0)),
            ],
        };
        let spec = ProblemSpec::new("const-g", dims, bundle).unwrap();
        let mut z = PrimalDualPoint::zeros(&dims);
        z.v = DVector::from_column_slice(&[1.0, 0.0]);
        let k = to_kojima(&spec, &z);
        assert_eq!(k.w, DVector::from_column_slice(&[1.0, -2.0]));
        assert_eq!(positive_part(&k.w), DVector::from_column_slice(&[1.0, 0.0]));
        assert_eq!(negative_part(&k.w), DVector::from_column_slice(&[0.0, -2.0]));
    }

    #[test]
    fn kojima_round_trip_on_kkt_point() {
        let p2 = builtins::get("p2").unwrap();
        let z = p2.reference.clone();
        let k = to_kojima(&p2.spec, &z);
        let back = from_kojima(&p2.spec, &k);
        assert!(back.norm_inf_diff(&z) < 1e-15);
    }

    #[test]
    fn degenerate_split_boundary() {
        // lambda = 0 and g = 0 gives xi = 0 whose positive part is 0.
        let xi = v1(0.0);
        assert_eq!(positive_part(&xi)[0], 0.0);
        assert_eq!(negative_part(&xi)[0], 0.0);
    }

    #[test]
    fn active_sets_examples() {
        let p2 = builtins::get("p2").unwrap();
        let sets = active_sets(&p2.spec, &p2.reference, 1e-8);
        assert_eq!(sets.alpha, vec![0]);
        assert!(sets.alpha_c.is_empty());

        let p3 = builtins::get("p3").unwrap();
        let sets = active_sets(&p3.spec, &p3.reference, 1e-8);
        assert_eq!(sets.beta, vec![0]);
        assert!(sets.beta_plus.is_empty());
        assert_eq!(sets.beta_zero, vec![0]);

        // Strictly inactive everywhere.
        let mut z = p3.reference.clone();
        z.x = v1(1.0);
        z.y = v1(0.5);
        let sets = active_sets(&p3.spec, &z, 1e-8);
        assert!(sets.beta.is_empty());
        assert_eq!(sets.beta_c, vec![0]);
    }

    #[test]
    fn kojima_eval_zero_at_solutions() {
        let p3 = builtins::get("p3").unwrap();
        let k = to_kojima(&p3.spec, &p3.reference);
        let f = kojima_eval(&p3.spec, &k, None).unwrap();
        assert!(linalg::vec_inf_norm(&f) < 1e-15);

        let p1 = builtins::get("p1").unwrap();
        let k1 = to_kojima(&p1.spec, &p1.reference);
        let f1 = kojima_eval(&p1.spec, &k1, None).unwrap();
        assert!(linalg::vec_inf_norm(&f1) < 1e-15);
    }

    #[test]
    fn kojima_eval_with_matching_rhs_is_zero() {
        let p3 = builtins::get("p3").unwrap();
        let k = KojimaPoint {
            x: v1(0.4),
            u: DVector::zeros(0),
            w: v1(-0.2),
            y: v1(1.3),
            mu: DVector::zeros(0),
            xi: DVector::zeros(0),
        };
        let f = kojima_eval(&p3.spec, &k, None).unwrap();
        let shifted = kojima_eval(&p3.spec, &k, Some(&f)).unwrap();
        assert!(linalg::vec_inf_norm(&shifted) < 1e-15);
    }

    #[test]
    fn jacobian_on_unconstrained_problem_is_full_hessian() {
        let p1 = builtins::get("p1").unwrap();
        let k = to_kojima(&p1.spec, &p1.reference);
        let jac = kojima_jacobian(&p1.spec, &k, 1e-8).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, -1.0]);
        assert!(linalg::mat_inf_norm(&(&jac.natural - &expect)) < 1e-15);
    }

    #[test]
    fn jacobian_differentiable_with_strict_splits() {
        let p2x = builtins::get("p2x").unwrap();
        let k = to_kojima(&p2x.spec, &p2x.reference);
        assert_eq!(k.xi, DVector::from_column_slice(&[1.0, -2.0]));
        assert!(kojima_jacobian(&p2x.spec, &k, 1e-8).is_ok());
    }

    #[test]
    fn jacobian_rejects_degenerate_split() {
        let p3 = builtins::get("p3").unwrap();
        let k = to_kojima(&p3.spec, &p3.reference);
        match kojima_jacobian(&p3.spec, &k, 1e-8) {
            Err(Error::DegenerateSplit { block: "w", index: 0, .. }) => {}
            other => panic!("expected degenerate w[0], got {other:?}"),
        }
    }

    #[test]
    fn b_subdiff_vertices_match_hand_determinants() {
        let p3 = builtins::get("p3").unwrap();
        let k = to_kojima(&p3.spec, &p3.reference);
        let at0 = kojima_b_subdiff_element(&p3.spec, &k, &[0.0], 1e-8).unwrap();
        let expect0 =
            DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, -1.0, -1.0, 0.0, 1.0, 0.0, -2.0]);
        assert!(linalg::mat_inf_norm(&(at0.block_order() - expect0)) < 1e-15);
        assert!((linalg::determinant(&at0.natural) - 5.0).abs() < 1e-12);

        let at1 = kojima_b_subdiff_element(&p3.spec, &k, &[1.0], 1e-8).unwrap();
        assert!((linalg::determinant(&at1.natural) - 2.0).abs() < 1e-12);

        // interior element stays on the 5 - 3w line
        let mid = kojima_b_subdiff_element(&p3.spec, &k, &[0.5], 1e-8).unwrap();
        assert!((linalg::determinant(&mid.natural) - 3.5).abs() < 1e-12);

        assert!(kojima_b_subdiff_element(&p3.spec, &k, &[1.5], 1e-8).is_err());
        assert!(kojima_b_subdiff_element(&p3.spec, &k, &[], 1e-8).is_err());
    }

    #[test]
    fn b_subdiff_reduces_to_jacobian_without_degeneracy() {
        let p2x = builtins::get("p2x").unwrap();
        let k = to_kojima(&p2x.spec, &p2x.reference);
        let a = kojima_jacobian(&p2x.spec, &k, 1e-8).unwrap();
        let b = kojima_b_subdiff_element(&p2x.spec, &k, &[], 1e-8).unwrap();
        assert!(linalg::mat_inf_norm(&(&a.natural - &b.natural)) < 1e-15);
    }

    #[test]
    fn first_order_consistency_away_from_kinks() {
        let p2x = builtins::get("p2x").unwrap();
        let k = to_kojima(&p2x.spec, &p2x.reference);
        let jac = kojima_jacobian(&p2x.spec, &k, 1e-8).unwrap();
        let f0 = kojima_eval(&p2x.spec, &k, None).unwrap();
        let dims = p2x.spec.dims;
        let flat = k.to_flat();
        let dir = crate::problem::probe_point(flat.len(), 7).normalize() * 1e-6;
        let k2 = KojimaPoint::from_flat(&dims, &(flat + &dir));
        let f1 = kojima_eval(&p2x.spec, &k2, None).unwrap();
        let lin = &f0 + &jac.natural * &dir;
        assert!(linalg::vec_inf_norm(&(f1 - lin)) <= 1e-9);
    }
}
