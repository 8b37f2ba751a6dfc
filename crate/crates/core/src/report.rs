//! Machine-readable report assembly. All values pass through finite-number
//! guards; NaN anywhere in a report is a hard error rather than a silent
//! null.

use crate::conditions::UpperConditionReport;
use crate::error::{Error, Result};
use crate::jsonout::{num, num_vec, obj};
use crate::kkt::PrimalDualPoint;
use crate::lower::LowerJUReport;
use crate::oracle::{GrowthReport, MinimaxVerdict};
use crate::regularity::{LipschitzEstimate, StabilityCertificate};
use crate::sensitivity::{IdentityReport, SensitivityBundle};
use crate::solver::{NewtonResult, NewtonStatus};
use crate::tols::CertTolerances;
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

/// None or a non-finite non-NaN value serializes as null (vacuous margin);
/// NaN is rejected.
pub fn opt_num(label: &str, v: Option<f64>) -> Result<Value> {
    match v {
        None => Ok(Value::Null),
        Some(x) if x.is_nan() => Err(Error::NonFinite(label.to_string())),
        Some(x) if x.is_infinite() => Ok(Value::Null),
        Some(x) => num(label, x),
    }
}

pub fn vector_json(label: &str, v: &DVector<f64>) -> Result<Value> {
    num_vec(label, v.as_slice())
}

pub fn matrix_json(label: &str, m: &DMatrix<f64>) -> Result<Value> {
    let mut rows = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<f64> = (0..m.ncols()).map(|j| m[(i, j)]).collect();
        rows.push(num_vec(&format!("{label}[{i}]"), &row)?);
    }
    Ok(Value::Array(rows))
}

fn usize_vec(v: &[usize]) -> Value {
    Value::Array(v.iter().map(|&i| Value::from(i as u64)).collect())
}

pub fn tols_json(t: &CertTolerances) -> Result<Value> {
    Ok(obj(vec![
        ("kkt", num("tol.kkt", t.kkt)?),
        ("rank_rel", num("tol.rank_rel", t.rank_rel)?),
        ("strict_comp", num("tol.strict_comp", t.strict_comp)?),
        ("sosc", num("tol.sosc", t.sosc)?),
        ("act", num("tol.act", t.act)?),
    ]))
}

pub fn point_json(z: &PrimalDualPoint) -> Result<Value> {
    Ok(obj(vec![
        ("x", vector_json("x", &z.x)?),
        ("u", vector_json("u", &z.u)?),
        ("v", vector_json("v", &z.v)?),
        ("y", vector_json("y", &z.y)?),
        ("mu", vector_json("mu", &z.mu)?),
        ("lambda", vector_json("lambda", &z.lambda)?),
    ]))
}

pub fn newton_json(r: &NewtonResult, quadratic_tail: f64) -> Result<Value> {
    let status = match r.status {
        NewtonStatus::Converged { .. } => "converged",
        NewtonStatus::MaxIterations => "max-iterations",
        NewtonStatus::Singular { .. } => "singular",
    };
    Ok(obj(vec![
        ("status", Value::from(status)),
        ("iterations", Value::from(r.iterations() as u64)),
        (
            "final_residual",
            num("solve.final_residual", *r.trace.last().unwrap_or(&f64::NAN))?,
        ),
        ("trace", num_vec("solve.trace", &r.trace)?),
        ("quadratic_tail", num("solve.quadratic_tail", quadratic_tail)?),
    ]))
}

pub fn lower_ju_json(r: &LowerJUReport) -> Result<Value> {
    Ok(obj(vec![
        ("pass", Value::from(r.pass())),
        ("kkt_residual", num("lower.kkt_residual", r.kkt_residual)?),
        ("kkt_pass", Value::from(r.kkt_pass)),
        ("licq_margin", opt_num("lower.licq_margin", r.licq_margin)?),
        ("licq_pass", Value::from(r.licq_pass)),
        (
            "strict_comp_margin",
            opt_num("lower.strict_comp_margin", r.strict_comp_margin)?,
        ),
        ("strict_comp_pass", Value::from(r.strict_comp_pass)),
        (
            "sosc_eigenvalue",
            opt_num("lower.sosc_eigenvalue", r.sosc_eigenvalue)?,
        ),
        ("sosc_pass", Value::from(r.sosc_pass)),
        ("cone_dim", Value::from(r.cone_dim as u64)),
        ("alpha", usize_vec(&r.alpha)),
    ]))
}

pub fn upper_json(r: &UpperConditionReport) -> Result<Value> {
    Ok(obj(vec![
        ("jacobian_uniqueness", Value::from(r.jacobian_uniqueness)),
        ("property_a", Value::from(r.property_a)),
        ("kkt_residual", num("upper.kkt_residual", r.kkt_residual)?),
        ("kkt_pass", Value::from(r.kkt_pass)),
        ("licq_margin", opt_num("upper.licq_margin", r.licq_margin)?),
        ("licq_pass", Value::from(r.licq_pass)),
        (
            "strict_comp_margin",
            opt_num("upper.strict_comp_margin", r.strict_comp_margin)?,
        ),
        ("strict_comp_pass", Value::from(r.strict_comp_pass)),
        (
            "sosc_eigenvalue",
            opt_num("upper.sosc_eigenvalue", r.sosc_eigenvalue)?,
        ),
        ("sosc_pass", Value::from(r.sosc_pass)),
        (
            "strong_sosc_eigenvalue",
            opt_num("upper.strong_sosc_eigenvalue", r.strong_sosc_eigenvalue)?,
        ),
        ("strong_sosc_pass", Value::from(r.strong_sosc_pass)),
        (
            "second_order_necessary",
            Value::from(r.second_order_necessary),
        ),
        ("cone_dim", Value::from(r.cone_dim as u64)),
        ("aff_cone_dim", Value::from(r.aff_cone_dim as u64)),
        ("lower", lower_ju_json(&r.lower)?),
    ]))
}

pub fn sensitivity_json(b: &SensitivityBundle, fd_error: Option<f64>) -> Result<Value> {
    Ok(obj(vec![
        ("value_gradient", vector_json("sens.grad", &b.grad)?),
        ("value_hessian", matrix_json("sens.hessian", &b.hessian)?),
        ("psi", matrix_json("sens.psi", &b.psi)?),
        (
            "k_alpha_sigma_min",
            opt_num("sens.k_alpha_sigma_min", Some(b.k_alpha_sigma_min))?,
        ),
        ("k_alpha_cond", opt_num("sens.k_alpha_cond", Some(b.k_alpha_cond))?),
        (
            "hessian_asymmetry",
            num("sens.hessian_asymmetry", b.hessian_asymmetry)?,
        ),
        ("fd_relative_error", opt_num("sens.fd_relative_error", fd_error)?),
    ]))
}

pub fn identity_json(r: &IdentityReport) -> Result<Value> {
    Ok(obj(vec![
        ("pass", Value::from(r.pass)),
        ("abs_error", num("identity.abs_error", r.abs_error)?),
        ("rel_error", num("identity.rel_error", r.rel_error)?),
        ("full_norm", num("identity.full_norm", r.full_norm)?),
        ("reduced_norm", num("identity.reduced_norm", r.reduced_norm)?),
    ]))
}

pub fn certificate_json(c: &StabilityCertificate) -> Result<Value> {
    let element = |e: &crate::regularity::ElementResult, label: &str| -> Result<Value> {
        Ok(obj(vec![
            ("omega", num_vec(&format!("{label}.omega"), &e.omega)?),
            ("sigma_min", num(&format!("{label}.sigma_min"), e.sigma_min)?),
            ("sigma_max", num(&format!("{label}.sigma_max"), e.sigma_max)?),
            ("det", num(&format!("{label}.det"), e.det)?),
            ("nonsingular", Value::from(e.nonsingular)),
            ("schur_agrees", Value::from(e.schur_agrees)),
        ]))
    };
    let mut vertices = Vec::new();
    for (i, e) in c.vertices.iter().enumerate() {
        vertices.push(element(e, &format!("cert.vertices[{i}]"))?);
    }
    let mut interior = Vec::new();
    for (i, e) in c.interior.iter().enumerate() {
        interior.push(element(e, &format!("cert.interior[{i}]"))?);
    }
    Ok(obj(vec![
        ("certified", Value::from(c.certified())),
        ("property_a", Value::from(c.property_a_verdict)),
        (
            "all_elements_nonsingular",
            Value::from(c.all_elements_nonsingular),
        ),
        (
            "vertex_sign_agreement",
            Value::from(c.vertex_sign_agreement),
        ),
        ("schur_verdicts_agree", Value::from(c.schur_verdicts_agree)),
        ("beta_zero_size", Value::from(c.beta_zero_size as u64)),
        ("enumeration_capped", Value::from(c.enumeration_capped)),
        ("vertices", Value::Array(vertices)),
        ("interior", Value::Array(interior)),
        ("seed", Value::from(c.seed)),
    ]))
}

pub fn lipschitz_json(e: &LipschitzEstimate, stability_ratio: Option<f64>) -> Result<Value> {
    let solved = e
        .samples
        .iter()
        .filter(|s| s.status == crate::regularity::SampleStatus::Solved)
        .count();
    Ok(obj(vec![
        ("flagged", Value::from(e.flagged())),
        ("ratio", num("lipschitz.ratio", e.ratio)?),
        ("radius", num("lipschitz.radius", e.radius)?),
        ("samples", Value::from(e.samples.len() as u64)),
        ("solved", Value::from(solved as u64)),
        ("failures", Value::from(e.failures as u64)),
        (
            "uniqueness_violation",
            Value::from(e.uniqueness_violation),
        ),
        (
            "halving_stability",
            opt_num("lipschitz.halving_stability", stability_ratio)?,
        ),
        ("seed", Value::from(e.seed)),
    ]))
}

pub fn minimax_json(v: &MinimaxVerdict) -> Result<Value> {
    let mut levels = Vec::new();
    for (i, l) in v.levels.iter().enumerate() {
        levels.push(obj(vec![
            ("delta", num(&format!("oracle.level[{i}].delta"), l.delta)?),
            ("eta", num(&format!("oracle.level[{i}].eta"), l.eta)?),
            (
                "left_worst_slack",
                opt_num(
                    &format!("oracle.level[{i}].left_worst_slack"),
                    Some(l.left_worst_slack),
                )?,
            ),
            (
                "right_worst_slack",
                opt_num(
                    &format!("oracle.level[{i}].right_worst_slack"),
                    Some(l.right_worst_slack),
                )?,
            ),
            ("left_points", Value::from(l.left_points as u64)),
            ("right_points", Value::from(l.right_points as u64)),
            ("empty_inner", Value::from(l.empty_inner as u64)),
            ("pass", Value::from(l.pass)),
        ]));
    }
    Ok(obj(vec![
        ("pass", Value::from(v.pass)),
        ("levels", Value::Array(levels)),
        (
            "anomalies",
            Value::Array(v.anomalies.iter().map(|a| Value::from(a.clone())).collect()),
        ),
    ]))
}

pub fn growth_json(g: &GrowthReport) -> Result<Value> {
    let fit = |f: &crate::oracle::GrowthFit, label: &str| -> Result<Value> {
        Ok(obj(vec![
            ("gamma", num(&format!("{label}.gamma"), f.gamma)?),
            (
                "residual",
                opt_num(&format!("{label}.residual"), Some(f.residual))?,
            ),
            (
                "worst_slack",
                opt_num(&format!("{label}.worst_slack"), Some(f.worst_slack))?,
            ),
            ("points", Value::from(f.points as u64)),
        ]))
    };
    Ok(obj(vec![
        ("pass", Value::from(g.pass)),
        ("inner", fit(&g.inner, "growth.inner")?),
        ("outer", fit(&g.outer, "growth.outer")?),
    ]))
}

/// Serialize a finished report value to canonical text and write it out.
pub fn emit_report(value: &Value, path: &std::path::Path) -> Result<()> {
    let text = crate::jsonout::to_canonical_string(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
