//! Builtin problem corpus: small exact-arithmetic instances with known
//! solutions, covering each certificate with at least one passing and one
//! failing witness.
//!
//! All builtins are expressible in the LQ document format, so they carry
//! canonical documents and content hashes like parsed problems do.

use crate::generator::{self, GeneratorConfig};
use crate::kkt::PrimalDualPoint;
use crate::lq::{LqDims, LqDocument, LqForm, LqParametricDocument, LqParametricForm, LqParams};
use crate::problem::{Dimensions, ParametricProblemSpec, ProblemSpec};
use nalgebra::DVector;

/// What the selftest harness expects of each builtin. `None` means the
/// check is not meaningful (or not run) for this entry.
#[derive(Debug, Clone, Copy, Default)]
pub struct Expectations {
    pub lower_ju: Option<bool>,
    pub jacobian_uniqueness: Option<bool>,
    pub property_a: Option<bool>,
    pub strong_regularity: Option<bool>,
    pub minimax_oracle: Option<bool>,
    pub growth_pass: Option<bool>,
    /// Closed-form growth constants (gamma1, gamma2) where known.
    pub growth_constants: Option<(f64, f64)>,
}

#[derive(Clone)]
pub struct BuiltinProblem {
    pub key: &'static str,
    pub doc: LqDocument,
    pub spec: ProblemSpec,
    /// Known reference point (a KKT point of the coupled system where one
    /// exists; otherwise the lower-level certification point).
    pub reference: PrimalDualPoint,
    pub parametric: Option<ParametricProblemSpec>,
    pub parametric_doc: Option<LqParametricDocument>,
    pub expect: Expectations,
}

fn form2(q: [[f64; 2]; 2], lin: [f64; 2], r: f64) -> LqForm {
    LqForm {
        quad: vec![q[0].to_vec(), q[1].to_vec()],
        q: lin.to_vec(),
        r,
    }
}

fn form1(q: f64, lin: f64, r: f64) -> LqForm {
    LqForm {
        quad: vec![vec![q]],
        q: vec![lin],
        r,
    }
}

fn dims11(n1: usize, n2: usize, m1: usize, m2: usize) -> LqDims {
    LqDims {
        n: 1,
        m: 1,
        n1,
        n2,
        m1,
        m2,
    }
}

fn point(
    x: &[f64],
    u: &[f64],
    v: &[f64],
    y: &[f64],
    mu: &[f64],
    lambda: &[f64],
) -> PrimalDualPoint {
    PrimalDualPoint {
        x: DVector::from_column_slice(x),
        u: DVector::from_column_slice(u),
        v: DVector::from_column_slice(v),
        y: DVector::from_column_slice(y),
        mu: DVector::from_column_slice(mu),
        lambda: DVector::from_column_slice(lambda),
    }
}

const SADDLE_Q: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, -1.0]];

fn p1_doc() -> LqDocument {
    LqDocument {
        name: "p1".into(),
        dims: dims11(0, 0, 0, 0),
        f: form2(SADDLE_Q, [0.0, 0.0], 0.0),
        h: vec![],
        g: vec![],
        upper_eq: vec![],
        upper_ineq: vec![],
    }
}

fn p1_parametric_doc() -> LqParametricDocument {
    // objective tilted by theta * x
    let base = p1_doc();
    LqParametricDocument {
        name: "p1-tilt".into(),
        dims: base.dims.clone(),
        parameters: LqParams {
            l: 1,
            theta0: vec![0.0],
        },
        f: LqParametricForm {
            quad: base.f.quad.clone(),
            q: base.f.q.clone(),
            r: base.f.r,
            dtheta: vec![form2([[0.0, 0.0], [0.0, 0.0]], [1.0, 0.0], 0.0)],
        },
        h: vec![],
        g: vec![],
        upper_eq: vec![],
        upper_ineq: vec![],
    }
}

fn p2_doc() -> LqDocument {
    LqDocument {
        name: "p2".into(),
        dims: dims11(0, 0, 0, 1),
        f: form2(SADDLE_Q, [0.0, 0.0], 0.0),
        h: vec![],
        g: vec![form2([[0.0, 0.0], [0.0, 0.0]], [0.0, 1.0], -1.0)],
        upper_eq: vec![],
        upper_ineq: vec![],
    }
}

fn p2x_doc() -> LqDocument {
    let mut doc = p2_doc();
    doc.name = "p2x".into();
    doc.dims.m2 = 2;
    doc.g
        .push(form2([[0.0, 0.0], [0.0, 0.0]], [0.0, 1.0], -3.0));
    doc
}

fn p3_doc() -> LqDocument {
    LqDocument {
        name: "p3".into(),
        dims: dims11(0, 1, 0, 0),
        f: form2([[2.0, 1.0], [1.0, -2.0]], [0.0, 0.0], 0.0),
        h: vec![],
        g: vec![],
        upper_eq: vec![],
        upper_ineq: vec![form1(0.0, -1.0, 0.0)],
    }
}

fn p3_parametric_doc() -> LqParametricDocument {
    // feasible set shifted by theta: G(x, theta) = -x + theta
    let base = p3_doc();
    LqParametricDocument {
        name: "p3-shift".into(),
        dims: base.dims.clone(),
        parameters: LqParams {
            l: 1,
            theta0: vec![0.0],
        },
        f: LqParametricForm {
            quad: base.f.quad.clone(),
            q: base.f.q.clone(),
            r: base.f.r,
            dtheta: vec![],
        },
        h: vec![],
        g: vec![],
        upper_eq: vec![],
        upper_ineq: vec![LqParametricForm {
            quad: vec![vec![0.0]],
            q: vec![-1.0],
            r: 0.0,
            dtheta: vec![form1(0.0, 0.0, 1.0)],
        }],
    }
}

fn p3_neg_psi_doc() -> LqDocument {
    let mut doc = p3_doc();
    doc.name = "p3-neg-psi".into();
    doc.f = form2([[-2.0, 1.0], [1.0, -2.0]], [0.0, 0.0], 0.0);
    doc
}

fn neg_lower_sosc_doc() -> LqDocument {
    LqDocument {
        name: "neg-lower-sosc".into(),
        dims: dims11(0, 0, 0, 0),
        f: form2([[0.0, 1.0], [1.0, 1.0]], [0.0, 0.0], 0.0),
        h: vec![],
        g: vec![],
        upper_eq: vec![],
        upper_ineq: vec![],
    }
}

fn neg_saddle_doc() -> LqDocument {
    LqDocument {
        name: "neg-saddle".into(),
        dims: dims11(0, 0, 0, 0),
        f: form2([[-2.0, 0.0], [0.0, -2.0]], [0.0, 0.0], 0.0),
        h: vec![],
        g: vec![],
        upper_eq: vec![],
        upper_ineq: vec![],
    }
}

fn neg_linear_growth_doc() -> LqDocument {
    LqDocument {
        name: "neg-linear-growth".into(),
        dims: dims11(0, 0, 0, 0),
        f: form2([[0.0, 0.0], [0.0, -1.0]], [1.0, 0.0], 0.0),
        h: vec![],
        g: vec![],
        upper_eq: vec![],
        upper_ineq: vec![],
    }
}

/// A 3+2-dimensional generated instance exercising every block at once:
/// upper equality, active and inactive upper inequalities, lower equality,
/// active and inactive lower inequalities.
fn lq32() -> BuiltinProblem {
    let mut cfg = GeneratorConfig::new(
        Dimensions {
            n: 3,
            m: 2,
            n1: 1,
            n2: 2,
            m1: 1,
            m2: 2,
        },
        0x32,
    );
    cfg.n_active_lower = 1;
    cfg.n_beta_plus = 1;
    cfg.n_beta_zero = 0;
    let inst = generator::generate_instance(&cfg).expect("builtin instance generates");
    let mut doc = inst.doc;
    doc.name = "lq32".into();
    let spec = doc.to_spec().expect("builtin instance parses");
    BuiltinProblem {
        key: "lq32",
        doc,
        spec,
        reference: inst.solution,
        parametric: None,
        parametric_doc: None,
        expect: Expectations {
            lower_ju: Some(true),
            jacobian_uniqueness: Some(true),
            property_a: Some(true),
            strong_regularity: Some(true),
            minimax_oracle: None,
            growth_pass: None,
            growth_constants: None,
        },
    }
}

fn build(
    key: &'static str,
    doc: LqDocument,
    reference: PrimalDualPoint,
    parametric_doc: Option<LqParametricDocument>,
    expect: Expectations,
) -> BuiltinProblem {
    let spec = doc.to_spec().expect("builtin documents are valid");
    let parametric = parametric_doc
        .as_ref()
        .map(|d| d.to_parametric_spec().expect("builtin parametric documents are valid"));
    BuiltinProblem {
        key,
        doc,
        spec,
        reference,
        parametric,
        parametric_doc,
        expect,
    }
}

pub fn all_keys() -> Vec<&'static str> {
    vec![
        "p1",
        "p2",
        "p2x",
        "p3",
        "p3-neg-psi",
        "neg-lower-sosc",
        "neg-lower-sc",
        "neg-saddle",
        "neg-linear-growth",
        "lq32",
    ]
}

pub fn get(key: &str) -> Option<BuiltinProblem> {
    let b = match key {
        "p1" => build(
            "p1",
            p1_doc(),
            point(&[0.0], &[], &[], &[0.0], &[], &[]),
            Some(p1_parametric_doc()),
            Expectations {
                lower_ju: Some(true),
                jacobian_uniqueness: Some(true),
                property_a: Some(true),
                strong_regularity: Some(true),
                minimax_oracle: Some(true),
                growth_pass: Some(true),
                growth_constants: Some((1.0, 1.0)),
            },
        ),
        "p2" => build(
            "p2",
            p2_doc(),
            point(&[2.0], &[], &[], &[1.0], &[], &[1.0]),
            None,
            Expectations {
                lower_ju: Some(true),
                jacobian_uniqueness: Some(false),
                property_a: Some(false),
                strong_regularity: Some(false),
                minimax_oracle: Some(false),
                growth_pass: None,
                growth_constants: None,
            },
        ),
        "p2x" => build(
            "p2x",
            p2x_doc(),
            point(&[2.0], &[], &[], &[1.0], &[], &[1.0, 0.0]),
            None,
            Expectations {
                lower_ju: Some(true),
                jacobian_uniqueness: Some(false),
                property_a: Some(false),
                strong_regularity: Some(false),
                minimax_oracle: Some(false),
                growth_pass: None,
                growth_constants: None,
            },
        ),
        "p3" => build(
            "p3",
            p3_doc(),
            point(&[0.0], &[], &[0.0], &[0.0], &[], &[]),
            Some(p3_parametric_doc()),
            Expectations {
                lower_ju: Some(true),
                jacobian_uniqueness: Some(false),
                property_a: Some(true),
                strong_regularity: Some(true),
                minimax_oracle: Some(true),
                growth_pass: Some(true),
                growth_constants: Some((2.0, 2.5)),
            },
        ),
        "p3-neg-psi" => build(
            "p3-neg-psi",
            p3_neg_psi_doc(),
            point(&[0.0], &[], &[0.0], &[0.0], &[], &[]),
            None,
            Expectations {
                lower_ju: Some(true),
                jacobian_uniqueness: Some(false),
                property_a: Some(false),
                strong_regularity: Some(false),
                minimax_oracle: Some(false),
                growth_pass: Some(false),
                growth_constants: None,
            },
        ),
        "neg-lower-sosc" => build(
            "neg-lower-sosc",
            neg_lower_sosc_doc(),
            point(&[0.0], &[], &[], &[0.0], &[], &[]),
            None,
            Expectations {
                lower_ju: Some(false),
                jacobian_uniqueness: Some(false),
                property_a: Some(false),
                strong_regularity: None,
                minimax_oracle: Some(false),
                growth_pass: None,
                growth_constants: None,
            },
        ),
        "neg-lower-sc" => build(
            "neg-lower-sc",
            {
                let mut doc = p2_doc();
                doc.name = "neg-lower-sc".into();
                doc
            },
            point(&[1.0], &[], &[], &[1.0], &[], &[0.0]),
            None,
            Expectations {
                lower_ju: Some(false),
                jacobian_uniqueness: Some(false),
                property_a: Some(false),
                strong_regularity: None,
                minimax_oracle: Some(false),
                growth_pass: None,
                growth_constants: None,
            },
        ),
        "neg-saddle" => build(
            "neg-saddle",
            neg_saddle_doc(),
            point(&[0.0], &[], &[], &[0.0], &[], &[]),
            None,
            Expectations {
                lower_ju: Some(true),
                jacobian_uniqueness: Some(false),
                property_a: Some(false),
                strong_regularity: Some(false),
                minimax_oracle: Some(false),
                growth_pass: Some(false),
                growth_constants: None,
            },
        ),
        "neg-linear-growth" => build(
            "neg-linear-growth",
            neg_linear_growth_doc(),
            point(&[0.0], &[], &[], &[0.0], &[], &[]),
            None,
            Expectations {
                lower_ju: Some(true),
                jacobian_uniqueness: Some(false),
                property_a: Some(false),
                strong_regularity: None,
                minimax_oracle: Some(false),
                growth_pass: Some(false),
                growth_constants: None,
            },
        ),
        "lq32" => lq32(),
        _ => return None,
    };
    Some(b)
}

pub fn all() -> Vec<BuiltinProblem> {
    all_keys().into_iter().filter_map(get).collect()
}
