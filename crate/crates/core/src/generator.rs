//! Random LQ instance generation with an embedded, known solution.
//!
//! Instances are built backwards: pick the solution point and multipliers
//! first, then construct constraints and curvature so the requested active
//! sets and margins hold by construction. Every generated instance therefore
//! ships with exact ground truth for testing.

use crate::error::{Error, Result};
use crate::kkt::{self, PrimalDualPoint};
use crate::linalg;
use crate::lower;
use crate::lq::{LqDocument, LqForm, LqParametricDocument, LqParametricForm, LqParams};
use crate::problem::{Dimensions, ProblemSpec, QuadraticForm, ScalarField};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy)]
pub struct GeneratorConfig {
    pub dims: Dimensions,
    /// Target number of active lower inequalities (|alpha|).
    pub n_active_lower: usize,
    /// Target number of active upper inequalities with positive multiplier.
    pub n_beta_plus: usize,
    /// Target number of active upper inequalities with zero multiplier.
    pub n_beta_zero: usize,
    /// Negative-definiteness margin of the inner y-Hessian.
    pub lower_curvature: f64,
    /// Positive-definiteness margin of the reduced upper Hessian.
    pub upper_curvature: f64,
    /// Scale of the random quadratic parts of constraints.
    pub constraint_quad_scale: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(dims: Dimensions, seed: u64) -> Self {
        Self {
            dims,
            n_active_lower: 0,
            n_beta_plus: 0,
            n_beta_zero: 0,
            lower_curvature: 0.5,
            upper_curvature: 0.5,
            constraint_quad_scale: 0.1,
            seed,
        }
    }
}

#[derive(Clone)]
pub struct GeneratedInstance {
    pub doc: LqDocument,
    pub spec: ProblemSpec,
    pub solution: PrimalDualPoint,
    pub name: String,
}

/// Sidecar file carrying the intended solution of a generated instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarSolution {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl SidecarSolution {
    pub fn from_point(z: &PrimalDualPoint) -> Self {
        let v = |d: &DVector<f64>| d.iter().copied().collect();
        Self {
            x: v(&z.x),
            u: v(&z.u),
            v: v(&z.v),
            y: v(&z.y),
            mu: v(&z.mu),
            lambda: v(&z.lambda),
        }
    }

    pub fn to_point(&self) -> PrimalDualPoint {
        let d = |v: &Vec<f64>| DVector::from_column_slice(v);
        PrimalDualPoint {
            x: d(&self.x),
            u: d(&self.u),
            v: d(&self.v),
            y: d(&self.y),
            mu: d(&self.mu),
            lambda: d(&self.lambda),
        }
    }
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(-scale..scale)))
}

fn random_symmetric(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * (0.5 * scale)
}

/// Random row stack with a guaranteed independence margin; falls back to
/// row orthonormalization if rejection sampling runs long.
fn independent_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    if rows == 0 {
        return DMatrix::zeros(0, cols);
    }
    for _ in 0..50 {
        let b = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let (lo, _) = linalg::sigma_extrema(&b);
        if lo >= 0.3 {
            return b;
        }
    }
    let b = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
    let qr = b.transpose().qr();
    qr.q().transpose()
}

/// A quadratic form with prescribed value and gradient at `at`.
fn form_through(
    quad: DMatrix<f64>,
    at: &DVector<f64>,
    value_at: f64,
    grad_at: &DVector<f64>,
) -> QuadraticForm {
    let lin = grad_at - &quad * at;
    let constant = value_at - 0.5 * (at.transpose() * &quad * at)[(0, 0)] - lin.dot(at);
    QuadraticForm {
        quad,
        lin,
        constant,
    }
}

pub fn generate_instance(cfg: &GeneratorConfig) -> Result<GeneratedInstance> {
    let dims = cfg.dims;
    dims.validate()?;
    let (n, m) = (dims.n, dims.m);
    let a = cfg.n_active_lower;
    let bp = cfg.n_beta_plus;
    let b0 = cfg.n_beta_zero;
    if a > dims.m2 {
        return Err(Error::Infeasible(format!(
            "requested {a} active lower inequalities, only m2 = {} declared",
            dims.m2
        )));
    }
    if bp + b0 > dims.n2 {
        return Err(Error::Infeasible(format!(
            "requested {} active upper inequalities, only n2 = {} declared",
            bp + b0,
            dims.n2
        )));
    }
    if dims.m1 + a > m {
        return Err(Error::Infeasible(format!(
            "lower gradient stack of {} rows cannot be independent in {m} dimensions",
            dims.m1 + a
        )));
    }
    if dims.n1 + bp + b0 > n {
        return Err(Error::Infeasible(format!(
            "upper gradient stack of {} rows cannot be independent in {n} dimensions",
            dims.n1 + bp + b0
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x_star = random_vector(&mut rng, n, 0.5);
    let y_star = random_vector(&mut rng, m, 0.5);
    let z_star = {
        let mut z = DVector::zeros(n + m);
        z.rows_mut(0, n).copy_from(&x_star);
        z.rows_mut(n, m).copy_from(&y_star);
        z
    };

    // Lower constraints: y-gradients of h and the active g form an
    // independent stack; values and multipliers realize the target split.
    let y_stack = independent_rows(&mut rng, dims.m1 + a, m);
    let mut h_forms = Vec::with_capacity(dims.m1);
    for j in 0..dims.m1 {
        let gx = random_vector(&mut rng, n, 1.0);
        let mut grad = DVector::zeros(n + m);
        grad.rows_mut(0, n).copy_from(&gx);
        grad.rows_mut(n, m).copy_from(&y_stack.row(j).transpose());
        let quad = random_symmetric(&mut rng, n + m, cfg.constraint_quad_scale);
        h_forms.push(form_through(quad, &z_star, 0.0, &grad));
    }
    let mut g_forms = Vec::with_capacity(dims.m2);
    let mut lambda_star = DVector::zeros(dims.m2);
    for i in 0..dims.m2 {
        let gx = random_vector(&mut rng, n, 1.0);
        let gy = if i < a {
            y_stack.row(dims.m1 + i).transpose()
        } else {
            random_vector(&mut rng, m, 1.0)
        };
        let mut grad = DVector::zeros(n + m);
        grad.rows_mut(0, n).copy_from(&gx);
        grad.rows_mut(n, m).copy_from(&gy);
        let quad = random_symmetric(&mut rng, n + m, cfg.constraint_quad_scale);
        let value = if i < a {
            lambda_star[i] = rng.random_range(0.5..1.5);
            0.0
        } else {
            -rng.random_range(0.5..1.5)
        };
        g_forms.push(form_through(quad, &z_star, value, &grad));
    }
    let mu_star = random_vector(&mut rng, dims.m1, 1.0);

    // Upper constraints.
    let x_stack = independent_rows(&mut rng, dims.n1 + bp + b0, n);
    let mut big_h_forms = Vec::with_capacity(dims.n1);
    for j in 0..dims.n1 {
        let grad = x_stack.row(j).transpose();
        let quad = random_symmetric(&mut rng, n, cfg.constraint_quad_scale);
        big_h_forms.push(form_through(quad, &x_star, 0.0, &grad));
    }
    let mut big_g_forms = Vec::with_capacity(dims.n2);
    let mut v_star = DVector::zeros(dims.n2);
    for i in 0..dims.n2 {
        let grad = if i < bp + b0 {
            x_stack.row(dims.n1 + i).transpose()
        } else {
            random_vector(&mut rng, n, 1.0)
        };
        let quad = random_symmetric(&mut rng, n, cfg.constraint_quad_scale);
        let value = if i < bp + b0 {
            if i < bp {
                v_star[i] = rng.random_range(0.5..1.5);
            }
            0.0
        } else {
            -rng.random_range(0.5..1.5)
        };
        big_g_forms.push(form_through(quad, &x_star, value, &grad));
    }
    let u_star = random_vector(&mut rng, dims.n1, 1.0);

    // Objective curvature: the inner y-Hessian of L is made uniformly
    // negative definite, the reduced upper Hessian uniformly positive
    // definite with the requested margins.
    let r_low = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    let target_yy = -(DMatrix::identity(m, m) * cfg.lower_curvature + &r_low * r_low.transpose() * 0.5);
    let r_up = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let target_psi = DMatrix::identity(n, n) * cfg.upper_curvature + &r_up * r_up.transpose() * 0.5;
    let q_f_xy = DMatrix::from_fn(n, m, |_, _| rng.random_range(-0.5..0.5));

    let block = |q: &DMatrix<f64>, r0: usize, c0: usize, nr: usize, nc: usize| {
        q.view((r0, c0), (nr, nc)).into_owned()
    };
    let mut q_f_yy = target_yy.clone();
    for (j, hf) in h_forms.iter().enumerate() {
        q_f_yy -= block(&hf.quad, n, n, m, m) * mu_star[j];
    }
    for (i, gf) in g_forms.iter().enumerate() {
        q_f_yy += block(&gf.quad, n, n, m, m) * lambda_star[i];
    }

    // Desired objective gradient at the solution from stationarity of both
    // levels.
    let grad_of = |f: &QuadraticForm| f.gradient(&z_star);
    let mut grad_y_f = DVector::zeros(m);
    let mut grad_x_f = DVector::zeros(n);
    for (j, hf) in h_forms.iter().enumerate() {
        let g = grad_of(hf);
        grad_y_f -= g.rows(n, m) * mu_star[j];
        grad_x_f -= g.rows(0, n) * mu_star[j];
    }
    for (i, gf) in g_forms.iter().enumerate() {
        let g = grad_of(gf);
        grad_y_f += g.rows(n, m) * lambda_star[i];
        grad_x_f += g.rows(0, n) * lambda_star[i];
    }
    for (j, hf) in big_h_forms.iter().enumerate() {
        grad_x_f -= hf.gradient(&x_star) * u_star[j];
    }
    for (i, gf) in big_g_forms.iter().enumerate() {
        grad_x_f -= gf.gradient(&x_star) * v_star[i];
    }

    let assemble_doc = |q_f_xx: &DMatrix<f64>| -> Result<LqDocument> {
        let mut q_f = DMatrix::zeros(n + m, n + m);
        linalg::insert_block(&mut q_f, 0, 0, q_f_xx);
        linalg::insert_block(&mut q_f, 0, n, &q_f_xy);
        linalg::insert_block(&mut q_f, n, 0, &q_f_xy.transpose());
        linalg::insert_block(&mut q_f, n, n, &q_f_yy);
        let mut grad = DVector::zeros(n + m);
        grad.rows_mut(0, n).copy_from(&grad_x_f);
        grad.rows_mut(n, m).copy_from(&grad_y_f);
        let f_form = form_through(q_f, &z_star, 0.0, &grad);
        Ok(LqDocument {
            name: format!("gen-s{}", cfg.seed),
            dims: dims.into(),
            f: LqForm::from_quadratic(&f_form),
            h: h_forms.iter().map(LqForm::from_quadratic).collect(),
            g: g_forms.iter().map(LqForm::from_quadratic).collect(),
            upper_eq: big_h_forms.iter().map(LqForm::from_quadratic).collect(),
            upper_ineq: big_g_forms.iter().map(LqForm::from_quadratic).collect(),
        })
    };

    // First pass with zero x-curvature to measure the Schur term, then set
    // the x-block so the reduced upper Hessian equals the target.
    let probe_doc = assemble_doc(&DMatrix::zeros(n, n))?;
    let probe_spec = probe_doc.to_spec()?;
    let sol = lower::solution_from_point(&probe_spec, &x_star, &y_star, &mu_star, &lambda_star, 1e-8);
    let k_alpha = lower::assemble_k_alpha(&probe_spec, &x_star, &sol);
    let n_alpha = lower::assemble_n_alpha(&probe_spec, &x_star, &sol);
    let schur = if k_alpha.nrows() == 0 {
        DMatrix::zeros(n, n)
    } else {
        let kinv_n = linalg::solve_matrix(&k_alpha, &n_alpha, "generated inner KKT matrix")?;
        n_alpha.transpose() * kinv_n
    };
    let mut fixed_xx = DMatrix::zeros(n, n);
    for (j, hf) in h_forms.iter().enumerate() {
        fixed_xx += block(&hf.quad, 0, 0, n, n) * mu_star[j];
    }
    for (i, gf) in g_forms.iter().enumerate() {
        fixed_xx -= block(&gf.quad, 0, 0, n, n) * lambda_star[i];
    }
    for (j, hf) in big_h_forms.iter().enumerate() {
        fixed_xx += &hf.quad * u_star[j];
    }
    for (i, gf) in big_g_forms.iter().enumerate() {
        fixed_xx += &gf.quad * v_star[i];
    }
    let q_f_xx = &target_psi - fixed_xx + &schur;

    let doc = assemble_doc(&q_f_xx)?;
    let spec = doc.to_spec()?;
    let solution = PrimalDualPoint {
        x: x_star,
        u: u_star,
        v: v_star,
        y: y_star,
        mu: mu_star,
        lambda: lambda_star,
    };
    let (_, residual) = kkt::kkt_residual(&spec, &solution);
    if residual > 1e-9 {
        return Err(Error::Infeasible(format!(
            "generated instance violates its own optimality system (residual {residual:.3e})"
        )));
    }
    let name = doc.name.clone();
    Ok(GeneratedInstance {
        doc,
        spec,
        solution,
        name,
    })
}

/// Wrap an LQ document into a one-parameter family whose objective is tilted
/// by theta times a linear term in x. Constraints are parameter free, so
/// active sets persist for small theta.
pub fn parametric_tilt(doc: &LqDocument, direction: &DVector<f64>) -> Result<LqParametricDocument> {
    let dims: Dimensions = doc.dims.clone().into();
    if direction.len() != dims.n {
        return Err(Error::Dimension {
            what: "tilt direction".into(),
            expected: dims.n,
            got: direction.len(),
        });
    }
    let zdim = dims.stacked();
    let mut lin = DVector::zeros(zdim);
    lin.rows_mut(0, dims.n).copy_from(direction);
    let tilt = QuadraticForm::affine(lin, 0.0);
    let base_f = doc.f.to_quadratic(zdim, "f")?;
    let promote = |forms: &[LqForm]| -> Vec<LqParametricForm> {
        forms
            .iter()
            .map(|f| LqParametricForm {
                quad: f.quad.clone(),
                q: f.q.clone(),
                r: f.r,
                dtheta: vec![],
            })
            .collect()
    };
    Ok(LqParametricDocument {
        name: format!("{}-tilt", doc.name),
        dims: doc.dims.clone(),
        parameters: LqParams {
            l: 1,
            theta0: vec![0.0],
        },
        f: LqParametricForm::from_parts(&base_f, &[tilt]),
        h: promote(&doc.h),
        g: promote(&doc.g),
        upper_eq: promote(&doc.upper_eq),
        upper_ineq: promote(&doc.upper_ineq),
    })
}

/// Deterministic sweep of structure classes used by the test harness:
/// cycles dimensions and active-set targets from the seed.
pub fn config_for_class(seed: u64) -> GeneratorConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd_1234);
    let n = rng.random_range(1..=6usize);
    let m = rng.random_range(1..=6usize);
    let m1 = rng.random_range(0..=1usize.min(m.saturating_sub(1)));
    let m2 = rng.random_range(0..=3usize);
    let n1 = rng.random_range(0..=1usize.min(n.saturating_sub(1)));
    let n2 = rng.random_range(0..=2usize);
    let a = rng.random_range(0..=m2.min(m.saturating_sub(m1)));
    let b_total = n2.min(n.saturating_sub(n1));
    let bp = rng.random_range(0..=b_total);
    let dims = Dimensions {
        n,
        m,
        n1,
        n2,
        m1,
        m2,
    };
    GeneratorConfig {
        dims,
        n_active_lower: a,
        n_beta_plus: bp,
        n_beta_zero: 0,
        lower_curvature: 0.5,
        upper_curvature: 0.5,
        constraint_quad_scale: 0.1,
        seed,
    }
}
