//! Problem data model: dimensions, evaluator bundles, quadratic forms, and
//! the parametric variant used for perturbation studies.
//!
//! A minimax program
//!
//! ```text
//!   min over x in Phi   max over y in Y(x)   f(x, y)
//!   Phi  = { x : H(x) = 0,    G(x) <= 0 }
//!   Y(x) = { y : h(x, y) = 0, g(x, y) <= 0 }
//! ```
//!
//! is described by per-function evaluators over the stacked variable (x; y)
//! for f, h, g and over x alone for H, G. Evaluators are immutable and must
//! be safe to call concurrently.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Variable and constraint counts.
///
/// `n`/`m` are the x/y dimensions; `n1`/`n2` count upper-level equalities H
/// and inequalities G; `m1`/`m2` count lower-level equalities h and
/// inequalities g. Zero constraint counts are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensions {
    pub n: usize,
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
    pub m1: usize,
    pub m2: usize,
}

impl Dimensions {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Schema("n must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::Schema("m must be at least 1".into()));
        }
        Ok(())
    }

    /// Length of the stacked primal-dual (Kojima) variable.
    pub fn kojima_len(&self) -> usize {
        self.n + self.n1 + self.n2 + self.m + self.m1 + self.m2
    }

    pub fn stacked(&self) -> usize {
        self.n + self.m
    }
}

/// A twice-differentiable scalar function of a dense vector.
pub trait ScalarField: Send + Sync {
    /// Input dimension.
    fn dim(&self) -> usize;
    fn value(&self, z: &DVector<f64>) -> f64;
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64>;
}

/// `value(z) = z' Q z / 2 + q' z + r` with `Q` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub quad: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn new(quad: DMatrix<f64>, lin: DVector<f64>, constant: f64) -> Result<Self> {
        if quad.nrows() != quad.ncols() {
            return Err(Error::Dimension {
                what: "quadratic block rows".into(),
                expected: quad.ncols(),
                got: quad.nrows(),
            });
        }
        if quad.nrows() != lin.len() {
            return Err(Error::Dimension {
                what: "quadratic linear term".into(),
                expected: quad.nrows(),
                got: lin.len(),
            });
        }
        let asym = crate::linalg::mat_inf_norm(&(&quad - quad.transpose()));
        if asym > 1e-12 {
            return Err(Error::AsymmetricQuad {
                name: "quadratic form".into(),
                asymmetry: asym,
            });
        }
        Ok(Self {
            quad,
            lin,
            constant,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            quad: DMatrix::zeros(dim, dim),
            lin: DVector::zeros(dim),
            constant: 0.0,
        }
    }

    /// Affine form `a' z + c`.
    pub fn affine(lin: DVector<f64>, constant: f64) -> Self {
        let dim = lin.len();
        Self {
            quad: DMatrix::zeros(dim, dim),
            lin,
            constant,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            quad: &self.quad * c,
            lin: &self.lin * c,
            constant: self.constant * c,
        }
    }

    pub fn add(&self, other: &QuadraticForm) -> Self {
        Self {
            quad: &self.quad + &other.quad,
            lin: &self.lin + &other.lin,
            constant: self.constant + other.constant,
        }
    }
}

impl ScalarField for QuadraticForm {
    fn dim(&self) -> usize {
        self.lin.len()
    }
    fn value(&self, z: &DVector<f64>) -> f64 {
        0.5 * (z.transpose() * &self.quad * z)[(0, 0)] + self.lin.dot(z) + self.constant
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.quad * z + &self.lin
    }
    fn hessian(&self, _z: &DVector<f64>) -> DMatrix<f64> {
        self.quad.clone()
    }
}

/// Closure-backed field for analytic (non-quadratic) problems.
pub struct ClosureField {
    dim: usize,
    value_fn: Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
    grad_fn: Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    hess_fn: Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>,
}

impl ClosureField {
    pub fn new(
        dim: usize,
        value_fn: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        grad_fn: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        hess_fn: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value_fn: Box::new(value_fn),
            grad_fn: Box::new(grad_fn),
            hess_fn: Box::new(hess_fn),
        }
    }
}

impl ScalarField for ClosureField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, z: &DVector<f64>) -> f64 {
        (self.value_fn)(z)
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.grad_fn)(z)
    }
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        (self.hess_fn)(z)
    }
}

pub type Field = Arc<dyn ScalarField>;

/// Evaluators for every function of the program.
#[derive(Clone)]
pub struct EvaluatorBundle {
    /// f over (x; y).
    pub objective: Field,
    /// h_j over (x; y), length m1.
    pub lower_eq: Vec<Field>,
    /// g_i over (x; y), length m2.
    pub lower_ineq: Vec<Field>,
    /// H_j over x, length n1.
    pub upper_eq: Vec<Field>,
    /// G_i over x, length n2.
    pub upper_ineq: Vec<Field>,
}

/// An immutable problem instance.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub dims: Dimensions,
    pub bundle: EvaluatorBundle,
    /// Canonical LQ document text when the problem came from (or can be
    /// expressed in) the LQ format; used for content hashing.
    pub canonical_json: Option<String>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn new(name: impl Into<String>, dims: Dimensions, bundle: EvaluatorBundle) -> Result<Self> {
        dims.validate()?;
        let spec = Self {
            name: name.into(),
            dims,
            bundle,
            canonical_json: None,
        };
        spec.check_counts()?;
        Ok(spec)
    }

    fn check_counts(&self) -> Result<()> {
        let pairs = [
            ("h", self.bundle.lower_eq.len(), self.dims.m1),
            ("g", self.bundle.lower_ineq.len(), self.dims.m2),
            ("H", self.bundle.upper_eq.len(), self.dims.n1),
            ("G", self.bundle.upper_ineq.len(), self.dims.n2),
        ];
        for (what, got, expected) in pairs {
            if got != expected {
                return Err(Error::Dimension {
                    what: format!("{what} evaluator count"),
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// Content fingerprint: SHA-256 of the canonical document when present,
    /// otherwise a name-derived marker for analytic problems.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        match &self.canonical_json {
            Some(doc) => {
                let digest = Sha256::digest(doc.as_bytes());
                let mut s = String::with_capacity(64);
                for b in digest {
                    s.push_str(&format!("{b:02x}"));
                }
                s
            }
            None => format!("analytic:{}", self.name),
        }
    }

    pub fn stack(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.dims.n + self.dims.m);
        z.rows_mut(0, self.dims.n).copy_from(x);
        z.rows_mut(self.dims.n, self.dims.m).copy_from(y);
        z
    }

    pub fn split_grad(&self, grad: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            grad.rows(0, self.dims.n).into_owned(),
            grad.rows(self.dims.n, self.dims.m).into_owned(),
        )
    }

    /// Split a stacked Hessian into (xx, xy, yy) blocks.
    pub fn split_hess(&self, h: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (n, m) = (self.dims.n, self.dims.m);
        (
            h.view((0, 0), (n, n)).into_owned(),
            h.view((0, n), (n, m)).into_owned(),
            h.view((n, n), (m, m)).into_owned(),
        )
    }

    pub fn f_value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.bundle.objective.value(&self.stack(x, y))
    }

    pub fn f_gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.bundle.objective.gradient(&self.stack(x, y))
    }

    pub fn f_hessian(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        self.bundle.objective.hessian(&self.stack(x, y))
    }

    pub fn h_values(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let z = self.stack(x, y);
        DVector::from_iterator(
            self.dims.m1,
            self.bundle.lower_eq.iter().map(|f| f.value(&z)),
        )
    }

    pub fn g_values(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let z = self.stack(x, y);
        DVector::from_iterator(
            self.dims.m2,
            self.bundle.lower_ineq.iter().map(|f| f.value(&z)),
        )
    }

    /// Row-stacked Jacobians (d/dx, d/dy) of the lower equalities.
    pub fn h_jacobians(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        self.stacked_jacobians(&self.bundle.lower_eq, x, y)
    }

    pub fn g_jacobians(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        self.stacked_jacobians(&self.bundle.lower_ineq, x, y)
    }

    fn stacked_jacobians(
        &self,
        fields: &[Field],
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let z = self.stack(x, y);
        let (n, m) = (self.dims.n, self.dims.m);
        let mut jx = DMatrix::zeros(fields.len(), n);
        let mut jy = DMatrix::zeros(fields.len(), m);
        for (i, f) in fields.iter().enumerate() {
            let grad = f.gradient(&z);
            jx.set_row(i, &grad.rows(0, n).transpose());
            jy.set_row(i, &grad.rows(n, m).transpose());
        }
        (jx, jy)
    }

    pub fn h_hessian(&self, j: usize, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        self.bundle.lower_eq[j].hessian(&self.stack(x, y))
    }

    pub fn g_hessian(&self, i: usize, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        self.bundle.lower_ineq[i].hessian(&self.stack(x, y))
    }

    pub fn big_h_values(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dims.n1,
            self.bundle.upper_eq.iter().map(|f| f.value(x)),
        )
    }

    pub fn big_g_values(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dims.n2,
            self.bundle.upper_ineq.iter().map(|f| f.value(x)),
        )
    }

    pub fn big_h_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.dims.n1, self.dims.n);
        for (i, f) in self.bundle.upper_eq.iter().enumerate() {
            j.set_row(i, &f.gradient(x).transpose());
        }
        j
    }

    pub fn big_g_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.dims.n2, self.dims.n);
        for (i, f) in self.bundle.upper_ineq.iter().enumerate() {
            j.set_row(i, &f.gradient(x).transpose());
        }
        j
    }

    pub fn big_h_hessian(&self, j: usize, x: &DVector<f64>) -> DMatrix<f64> {
        self.bundle.upper_eq[j].hessian(x)
    }

    pub fn big_g_hessian(&self, i: usize, x: &DVector<f64>) -> DMatrix<f64> {
        self.bundle.upper_ineq[i].hessian(x)
    }
}

/// One check line of a validation run.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            pass,
            detail,
        });
    }
}

/// Structural and behavioural sanity checks on a spec: output shapes,
/// Hessian symmetry at a probe point, and bitwise evaluator determinism.
pub fn validate_spec(spec: &ProblemSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let dims = spec.dims;
    report.push(
        "dims",
        dims.validate().is_ok(),
        format!("n={} m={}", dims.n, dims.m),
    );

    let probe = probe_point(dims.stacked(), 1);
    let probe_x = probe_point(dims.n, 2);

    let mut groups: Vec<(&str, &[Field], usize)> = vec![
        ("h", &spec.bundle.lower_eq, dims.stacked()),
        ("g", &spec.bundle.lower_ineq, dims.stacked()),
        ("H", &spec.bundle.upper_eq, dims.n),
        ("G", &spec.bundle.upper_ineq, dims.n),
    ];
    let obj: [Field; 1] = [spec.bundle.objective.clone()];
    groups.insert(0, ("f", &obj, dims.stacked()));

    for (name, fields, want_dim) in groups {
        for (i, f) in fields.iter().enumerate() {
            let z = if want_dim == dims.stacked() {
                &probe
            } else {
                &probe_x
            };
            let label = format!("{name}[{i}]");
            let grad = f.gradient(z);
            let hess = f.hessian(z);
            let shape_ok =
                f.dim() == want_dim && grad.len() == want_dim && hess.nrows() == want_dim
                    && hess.ncols() == want_dim;
            report.push(
                &format!("shape:{label}"),
                shape_ok,
                format!(
                    "dim {} grad {} hess {}x{}, expected {}",
                    f.dim(),
                    grad.len(),
                    hess.nrows(),
                    hess.ncols(),
                    want_dim
                ),
            );
            if !shape_ok {
                continue;
            }
            let asym = crate::linalg::mat_inf_norm(&(&hess - hess.transpose()));
            report.push(
                &format!("hessian-symmetry:{label}"),
                asym <= 1e-12,
                format!("asymmetry {asym:.3e}"),
            );
            let v1 = f.value(z);
            let v2 = f.value(z);
            let g2 = f.gradient(z);
            let deterministic = v1.to_bits() == v2.to_bits()
                && grad
                    .iter()
                    .zip(g2.iter())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            report.push(
                &format!("determinism:{label}"),
                deterministic,
                String::new(),
            );
        }
    }
    report
}

/// Deterministic pseudo-random probe in [-1, 1]^dim, keyed by `salt`.
pub fn probe_point(dim: usize, salt: u64) -> DVector<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9e3779b9 ^ salt);
    DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(-1.0..1.0)))
}

/// A scalar function of (z, theta) with derivatives in both arguments.
pub trait ParametricField: Send + Sync {
    fn dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn value(&self, z: &DVector<f64>, theta: &DVector<f64>) -> f64;
    fn gradient(&self, z: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, z: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64>;
    /// d(value)/d(theta_k).
    fn dtheta_value(&self, z: &DVector<f64>, theta: &DVector<f64>, k: usize) -> f64;
    /// d(gradient)/d(theta_k).
    fn dtheta_gradient(&self, z: &DVector<f64>, theta: &DVector<f64>, k: usize) -> DVector<f64>;
    /// Materialize the field at a fixed parameter.
    fn freeze(&self, theta: &DVector<f64>) -> Field;
}

/// Quadratic form whose coefficients depend affinely on theta:
/// `base + sum_k theta_k * sens[k]`.
#[derive(Debug, Clone)]
pub struct ParametricQuadraticForm {
    pub base: QuadraticForm,
    pub sens: Vec<QuadraticForm>,
}

impl ParametricQuadraticForm {
    pub fn constant(base: QuadraticForm, param_dim: usize) -> Self {
        let dim = base.dim();
        Self {
            base,
            sens: vec![QuadraticForm::zero(dim); param_dim],
        }
    }

    fn at(&self, theta: &DVector<f64>) -> QuadraticForm {
        let mut out = self.base.clone();
        for (k, s) in self.sens.iter().enumerate() {
            out = out.add(&s.scaled(theta[k]));
        }
        out
    }
}

impl ParametricField for ParametricQuadraticForm {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn param_dim(&self) -> usize {
        self.sens.len()
    }
    fn value(&self, z: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        self.at(theta).value(z)
    }
    fn gradient(&self, z: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
        self.at(theta).gradient(z)
    }
    fn hessian(&self, z: &DVector<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
        self.at(theta).hessian(z)
    }
    fn dtheta_value(&self, z: &DVector<f64>, _theta: &DVector<f64>, k: usize) -> f64 {
        self.sens[k].value(z)
    }
    fn dtheta_gradient(&self, z: &DVector<f64>, _theta: &DVector<f64>, k: usize) -> DVector<f64> {
        self.sens[k].gradient(z)
    }
    fn freeze(&self, theta: &DVector<f64>) -> Field {
        Arc::new(self.at(theta))
    }
}

pub type PField = Arc<dyn ParametricField>;

/// A parameterized program together with its base parameter.
#[derive(Clone)]
pub struct ParametricProblemSpec {
    pub name: String,
    pub dims: Dimensions,
    pub param_dim: usize,
    pub theta0: DVector<f64>,
    pub objective: PField,
    pub lower_eq: Vec<PField>,
    pub lower_ineq: Vec<PField>,
    pub upper_eq: Vec<PField>,
    pub upper_ineq: Vec<PField>,
}

impl ParametricProblemSpec {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.theta0.len() != self.param_dim {
            return Err(Error::Dimension {
                what: "theta0".into(),
                expected: self.param_dim,
                got: self.theta0.len(),
            });
        }
        Ok(())
    }
}

/// Fix the parameter, producing an ordinary spec whose evaluators equal the
/// parametric ones at `theta`.
pub fn freeze_parameter(pspec: &ParametricProblemSpec, theta: &DVector<f64>) -> Result<ProblemSpec> {
    if theta.len() != pspec.param_dim {
        return Err(Error::Dimension {
            what: "theta".into(),
            expected: pspec.param_dim,
            got: theta.len(),
        });
    }
    let bundle = EvaluatorBundle {
        objective: pspec.objective.freeze(theta),
        lower_eq: pspec.lower_eq.iter().map(|f| f.freeze(theta)).collect(),
        lower_ineq: pspec.lower_ineq.iter().map(|f| f.freeze(theta)).collect(),
        upper_eq: pspec.upper_eq.iter().map(|f| f.freeze(theta)).collect(),
        upper_ineq: pspec.upper_ineq.iter().map(|f| f.freeze(theta)).collect(),
    };
    ProblemSpec::new(format!("{}@theta", pspec.name), pspec.dims, bundle)
}
