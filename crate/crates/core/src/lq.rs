//! The LQ problem document: a JSON text format in which every function of
//! the program is a quadratic form with explicit coefficients, so analytic
//! derivatives are exact.
//!
//! Top-level fields: `name`, `dims` {n,m,n1,n2,m1,m2}, `f` (form over the
//! stacked variable (x; y), arrays row-major), `h`, `g` (arrays of forms over
//! (x; y)), `H`, `G` (arrays of forms over x). Unknown fields are rejected.
//! Parametric documents add a `parameters` block and optional per-form
//! `dtheta` arrays giving the affine dependence of coefficients on theta.

use crate::error::{Error, Result};
use crate::jsonout;
use crate::problem::{
    Dimensions, EvaluatorBundle, ParametricProblemSpec, ParametricQuadraticForm, ProblemSpec,
    QuadraticForm, ScalarField,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct LqDims {
    pub n: usize,
    pub m: usize,
    pub n1: usize,
    pub n2: usize,
    pub m1: usize,
    pub m2: usize,
}

impl From<LqDims> for Dimensions {
    fn from(d: LqDims) -> Self {
        Dimensions {
            n: d.n,
            m: d.m,
            n1: d.n1,
            n2: d.n2,
            m1: d.m1,
            m2: d.m2,
        }
    }
}

impl From<Dimensions> for LqDims {
    fn from(d: Dimensions) -> Self {
        LqDims {
            n: d.n,
            m: d.m,
            n1: d.n1,
            n2: d.n2,
            m1: d.m1,
            m2: d.m2,
        }
    }
}

/// One quadratic form: value(z) = z'Qz/2 + q'z + r.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LqForm {
    #[serde(rename = "Q")]
    pub quad: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub r: f64,
}

impl LqForm {
    pub fn from_quadratic(f: &QuadraticForm) -> Self {
        let d = f.dim();
        let quad = (0..d)
            .map(|i| (0..d).map(|j| f.quad[(i, j)]).collect())
            .collect();
        LqForm {
            quad,
            q: f.lin.iter().copied().collect(),
            r: f.constant,
        }
    }

    /// Validate shapes and symmetry against the expected variable dimension.
    pub fn to_quadratic(&self, dim: usize, label: &str) -> Result<QuadraticForm> {
        if self.q.len() != dim {
            return Err(Error::Schema(format!(
                "{label}: q has length {}, expected {dim}",
                self.q.len()
            )));
        }
        if self.quad.len() != dim || self.quad.iter().any(|row| row.len() != dim) {
            return Err(Error::Schema(format!(
                "{label}: Q must be {dim}x{dim} row-major"
            )));
        }
        for v in self.q.iter().chain(self.quad.iter().flatten()) {
            if !v.is_finite() {
                return Err(Error::Schema(format!("{label}: non-finite coefficient")));
            }
        }
        if !self.r.is_finite() {
            return Err(Error::Schema(format!("{label}: non-finite coefficient")));
        }
        let mut asym = 0.0_f64;
        for i in 0..dim {
            for j in 0..dim {
                asym = asym.max((self.quad[i][j] - self.quad[j][i]).abs());
            }
        }
        if asym > 1e-12 {
            return Err(Error::AsymmetricQuad {
                name: label.to_string(),
                asymmetry: asym,
            });
        }
        let flat: Vec<f64> = self.quad.iter().flatten().copied().collect();
        QuadraticForm::new(
            DMatrix::from_row_slice(dim, dim, &flat),
            DVector::from_column_slice(&self.q),
            self.r,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LqDocument {
    pub name: String,
    pub dims: LqDims,
    pub f: LqForm,
    pub h: Vec<LqForm>,
    pub g: Vec<LqForm>,
    #[serde(rename = "H")]
    pub upper_eq: Vec<LqForm>,
    #[serde(rename = "G")]
    pub upper_ineq: Vec<LqForm>,
}

impl LqDocument {
    /// Canonical text: sorted keys, fixed float formatting. Used for hashing
    /// and byte-reproducible emission.
    pub fn canonical_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        jsonout::to_canonical_string(&value)
    }

    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let dims: Dimensions = self.dims.clone().into();
        dims.validate()?;
        let zdim = dims.stacked();
        let check_count = |what: &str, got: usize, expected: usize| -> Result<()> {
            if got != expected {
                Err(Error::Schema(format!(
                    "{what} has {got} entries, dims declare {expected}"
                )))
            } else {
                Ok(())
            }
        };
        check_count("h", self.h.len(), dims.m1)?;
        check_count("g", self.g.len(), dims.m2)?;
        check_count("H", self.upper_eq.len(), dims.n1)?;
        check_count("G", self.upper_ineq.len(), dims.n2)?;

        let mut bundle = EvaluatorBundle {
            objective: Arc::new(self.f.to_quadratic(zdim, "f")?),
            lower_eq: Vec::new(),
            lower_ineq: Vec::new(),
            upper_eq: Vec::new(),
            upper_ineq: Vec::new(),
        };
        for (i, form) in self.h.iter().enumerate() {
            bundle
                .lower_eq
                .push(Arc::new(form.to_quadratic(zdim, &format!("h[{i}]"))?));
        }
        for (i, form) in self.g.iter().enumerate() {
            bundle
                .lower_ineq
                .push(Arc::new(form.to_quadratic(zdim, &format!("g[{i}]"))?));
        }
        for (i, form) in self.upper_eq.iter().enumerate() {
            bundle
                .upper_eq
                .push(Arc::new(form.to_quadratic(dims.n, &format!("H[{i}]"))?));
        }
        for (i, form) in self.upper_ineq.iter().enumerate() {
            bundle
                .upper_ineq
                .push(Arc::new(form.to_quadratic(dims.n, &format!("G[{i}]"))?));
        }
        let mut spec = ProblemSpec::new(self.name.clone(), dims, bundle)?;
        spec.canonical_json = Some(self.canonical_json()?);
        Ok(spec)
    }
}

/// Parse an LQ problem document. Schema violations and asymmetric quadratic
/// blocks are rejected, never repaired.
pub fn parse_problem(document: &str) -> Result<ProblemSpec> {
    let doc: LqDocument = serde_json::from_str(document)
        .map_err(|e| Error::Schema(format!("document does not match the LQ schema: {e}")))?;
    doc.to_spec()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LqParams {
    pub l: usize,
    pub theta0: Vec<f64>,
}

/// A form with affine coefficient dependence on theta.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LqParametricForm {
    #[serde(rename = "Q")]
    pub quad: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub r: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dtheta: Vec<LqForm>,
}

impl LqParametricForm {
    pub fn from_parts(base: &QuadraticForm, sens: &[QuadraticForm]) -> Self {
        let b = LqForm::from_quadratic(base);
        LqParametricForm {
            quad: b.quad,
            q: b.q,
            r: b.r,
            dtheta: sens.iter().map(LqForm::from_quadratic).collect(),
        }
    }

    fn to_parametric(
        &self,
        dim: usize,
        param_dim: usize,
        label: &str,
    ) -> Result<ParametricQuadraticForm> {
        let base = LqForm {
            quad: self.quad.clone(),
            q: self.q.clone(),
            r: self.r,
        }
        .to_quadratic(dim, label)?;
        if !self.dtheta.is_empty() && self.dtheta.len() != param_dim {
            return Err(Error::Schema(format!(
                "{label}: dtheta has {} entries, parameters declare {param_dim}",
                self.dtheta.len()
            )));
        }
        let mut sens = Vec::with_capacity(param_dim);
        for k in 0..param_dim {
            sens.push(match self.dtheta.get(k) {
                Some(f) => f.to_quadratic(dim, &format!("{label}.dtheta[{k}]"))?,
                None => QuadraticForm::zero(dim),
            });
        }
        Ok(ParametricQuadraticForm { base, sens })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LqParametricDocument {
    pub name: String,
    pub dims: LqDims,
    pub parameters: LqParams,
    pub f: LqParametricForm,
    pub h: Vec<LqParametricForm>,
    pub g: Vec<LqParametricForm>,
    #[serde(rename = "H")]
    pub upper_eq: Vec<LqParametricForm>,
    #[serde(rename = "G")]
    pub upper_ineq: Vec<LqParametricForm>,
}

impl LqParametricDocument {
    pub fn canonical_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        jsonout::to_canonical_string(&value)
    }

    pub fn to_parametric_spec(&self) -> Result<ParametricProblemSpec> {
        let dims: Dimensions = self.dims.clone().into();
        dims.validate()?;
        let l = self.parameters.l;
        if self.parameters.theta0.len() != l {
            return Err(Error::Schema(format!(
                "theta0 has length {}, parameters declare l={l}",
                self.parameters.theta0.len()
            )));
        }
        let zdim = dims.stacked();
        let wrap = |forms: &[LqParametricForm],
                    dim: usize,
                    what: &str,
                    expected: usize|
         -> Result<Vec<crate::problem::PField>> {
            if forms.len() != expected {
                return Err(Error::Schema(format!(
                    "{what} has {} entries, dims declare {expected}",
                    forms.len()
                )));
            }
            let mut out: Vec<crate::problem::PField> = Vec::new();
            for (i, f) in forms.iter().enumerate() {
                out.push(Arc::new(f.to_parametric(dim, l, &format!("{what}[{i}]"))?));
            }
            Ok(out)
        };
        let pspec = ParametricProblemSpec {
            name: self.name.clone(),
            dims,
            param_dim: l,
            theta0: DVector::from_column_slice(&self.parameters.theta0),
            objective: Arc::new(self.f.to_parametric(zdim, l, "f")?),
            lower_eq: wrap(&self.h, zdim, "h", dims.m1)?,
            lower_ineq: wrap(&self.g, zdim, "g", dims.m2)?,
            upper_eq: wrap(&self.upper_eq, dims.n, "H", dims.n1)?,
            upper_ineq: wrap(&self.upper_ineq, dims.n, "G", dims.n2)?,
        };
        pspec.validate()?;
        Ok(pspec)
    }
}

pub fn parse_parametric_problem(document: &str) -> Result<ParametricProblemSpec> {
    let doc: LqParametricDocument = serde_json::from_str(document).map_err(|e| {
        Error::Schema(format!(
            "document does not match the parametric LQ schema: {e}"
        ))
    })?;
    doc.to_parametric_spec()
}

#[cfg(test)]
mod tests {
    use super::*;

    const P1_DOC: &str = r#"{
        "name": "p1",
        "dims": {"n": 1, "m": 1, "n1": 0, "n2": 0, "m1": 0, "m2": 0},
        "f": {"Q": [[0.0, 1.0], [1.0, -1.0]], "q": [0.0, 0.0], "r": 0.0},
        "h": [], "g": [], "H": [], "G": []
    }"#;

    #[test]
    fn parses_p1() {
        let spec = parse_problem(P1_DOC).unwrap();
        assert_eq!(spec.dims.n, 1);
        assert_eq!(spec.dims.m, 1);
        assert_eq!(spec.dims.m2, 0);
        let x = DVector::from_column_slice(&[1.0]);
        let y = DVector::from_column_slice(&[1.0]);
        assert!((spec.f_value(&x, &y) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_asymmetric_quad() {
        let doc = P1_DOC.replace("[[0.0, 1.0], [1.0, -1.0]]", "[[0.0, 1.0], [0.5, -1.0]]");
        match parse_problem(&doc) {
            Err(Error::AsymmetricQuad { .. }) => {}
            other => panic!("expected asymmetric rejection, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_fields() {
        let doc = P1_DOC.replace("\"name\": \"p1\",", "\"name\": \"p1\", \"extra\": 1,");
        assert!(matches!(parse_problem(&doc), Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_count_mismatch() {
        let doc = P1_DOC.replace("\"m2\": 0", "\"m2\": 1");
        assert!(matches!(parse_problem(&doc), Err(Error::Schema(_))));
    }

    #[test]
    fn p3_evaluators_are_exact() {
        // f = x^2 + xy - y^2, G = -x
        let doc = r#"{
            "name": "p3",
            "dims": {"n": 1, "m": 1, "n1": 0, "n2": 1, "m1": 0, "m2": 0},
            "f": {"Q": [[2.0, 1.0], [1.0, -2.0]], "q": [0.0, 0.0], "r": 0.0},
            "h": [], "g": [], "H": [],
            "G": [{"Q": [[0.0]], "q": [-1.0], "r": 0.0}]
        }"#;
        let spec = parse_problem(doc).unwrap();
        let x = DVector::from_column_slice(&[1.0]);
        let y = DVector::from_column_slice(&[1.0]);
        assert!((spec.f_value(&x, &y) - 1.0).abs() < 1e-15);
        assert!((spec.big_g_values(&x)[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn canonical_round_trip() {
        let spec_doc: LqDocument = serde_json::from_str(P1_DOC).unwrap();
        let canon = spec_doc.canonical_json().unwrap();
        let reparsed: LqDocument = serde_json::from_str(&canon).unwrap();
        assert_eq!(spec_doc, reparsed);
        assert_eq!(canon, reparsed.canonical_json().unwrap());
    }
}
