//! End-to-end analysis pipeline shared by the CLI and the selftest: solve,
//! certify, differentiate, enumerate, perturb, and cross-check a problem,
//! assembling one machine-readable report.

use crate::builtins;
use crate::conditions::{self, UpperConditionReport};
use crate::diff::{self, FDConfig};
use crate::error::Result;
use crate::jsonout::{num, obj};
use crate::kkt::{self, PrimalDualPoint};
use crate::linalg;
use crate::lower::{self, LowerJUReport, LowerOptions, LowerSolution};
use crate::oracle::{self, GridOracleConfig, GrowthReport, MinimaxVerdict};
use crate::problem::ProblemSpec;
use crate::regularity::{self, LipschitzEstimate, RegularityCaps, StabilityCertificate};
use crate::report;
use crate::sensitivity::SensitivityBundle;
use crate::solver::{self, NewtonOptions, NewtonResult};
use crate::tols::CertTolerances;
use serde_json::Value;
use std::time::Instant;

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub tols: CertTolerances,
    pub newton: NewtonOptions,
    pub lower: LowerOptions,
    pub fd: FDConfig,
    pub grid: GridOracleConfig,
    pub caps: RegularityCaps,
    /// Perturbation-experiment radius.
    pub delta: f64,
    /// Perturbation-experiment sample count.
    pub samples: usize,
    pub seed: u64,
    /// Include wall-clock timings in serialized reports. Off by default so
    /// identical runs produce byte-identical reports.
    pub timings: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            tols: CertTolerances::default(),
            newton: NewtonOptions::default(),
            lower: LowerOptions::default(),
            fd: FDConfig::default(),
            grid: GridOracleConfig::default(),
            caps: RegularityCaps::default(),
            delta: 1e-3,
            samples: 50,
            seed: 0,
            timings: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Phases {
    pub solve: bool,
    pub check: bool,
    pub sens: bool,
    pub certify: bool,
    pub perturb: bool,
    pub oracle: bool,
}

impl Phases {
    pub fn all() -> Self {
        Self {
            solve: true,
            check: true,
            sens: true,
            certify: true,
            perturb: true,
            oracle: true,
        }
    }
}

#[derive(Default)]
pub struct Analysis {
    pub name: String,
    pub hash: String,
    pub solve: Option<NewtonResult>,
    pub point: Option<PrimalDualPoint>,
    pub lower_solution: Option<LowerSolution>,
    pub lower: Option<LowerJUReport>,
    pub upper: Option<UpperConditionReport>,
    pub upper_error: Option<String>,
    pub sensitivity: Option<SensitivityBundle>,
    pub sensitivity_fd_error: Option<f64>,
    pub sensitivity_error: Option<String>,
    pub certificate: Option<StabilityCertificate>,
    pub certificate_error: Option<String>,
    pub lipschitz: Option<LipschitzEstimate>,
    pub lipschitz_half: Option<LipschitzEstimate>,
    pub minimax: Option<MinimaxVerdict>,
    pub growth: Option<GrowthReport>,
    pub oracle_error: Option<String>,
    pub timings_ms: Vec<(&'static str, f64)>,
}

impl Analysis {
    pub fn halving_stability(&self) -> Option<f64> {
        match (&self.lipschitz, &self.lipschitz_half) {
            (Some(a), Some(b)) if b.ratio > 0.0 => Some(a.ratio / b.ratio),
            _ => None,
        }
    }

    pub fn lipschitz_flagged(&self) -> Option<bool> {
        let est = self.lipschitz.as_ref()?;
        let half = self.lipschitz_half.as_ref()?;
        let stable = self
            .halving_stability()
            .map_or(false, |r| (0.5..=2.0).contains(&r));
        Some(est.flagged() || half.flagged() || !stable)
    }
}

/// Run the requested phases on one problem from a start point.
pub fn analyze(
    spec: &ProblemSpec,
    start: &PrimalDualPoint,
    phases: Phases,
    opts: &RunOptions,
) -> Result<Analysis> {
    let mut analysis = Analysis {
        name: spec.name.clone(),
        hash: spec.hash(),
        ..Default::default()
    };
    let clock = |analysis: &mut Analysis, label: &'static str, t: Instant| {
        analysis
            .timings_ms
            .push((label, t.elapsed().as_secs_f64() * 1e3));
    };

    let mut z = start.clone();
    if phases.solve {
        let t = Instant::now();
        let run = solver::newton_kojima(spec, &kkt::to_kojima(spec, &z), None, &opts.newton)?;
        if run.converged() {
            z = kkt::from_kojima(spec, &run.point);
        }
        analysis.solve = Some(run);
        clock(&mut analysis, "solve", t);
    }
    analysis.point = Some(z.clone());

    let sol = lower::solution_from_point(spec, &z.x, &z.y, &z.mu, &z.lambda, opts.tols.act);
    analysis.lower_solution = Some(sol.clone());

    if phases.check {
        let t = Instant::now();
        analysis.lower = Some(lower::check_lower_ju(spec, &z.x, &sol, &opts.tols));
        match conditions::check_upper_conditions(spec, &z, &sol, &opts.tols) {
            Ok(upper) => analysis.upper = Some(upper),
            Err(e) => analysis.upper_error = Some(e.to_string()),
        }
        clock(&mut analysis, "check", t);
    }

    if phases.sens {
        let t = Instant::now();
        match conditions::build_sensitivity_bundle(spec, &z, &sol) {
            Ok(bundle) => {
                let fd_error = diff::fd_value_hessian(spec, &z.x, &sol, &opts.lower, &opts.fd)
                    .ok()
                    .map(|fd| {
                        linalg::mat_inf_norm(&(&bundle.hessian - fd))
                            / (1.0 + linalg::mat_inf_norm(&bundle.hessian))
                    });
                analysis.sensitivity = Some(bundle);
                analysis.sensitivity_fd_error = fd_error;
            }
            Err(e) => analysis.sensitivity_error = Some(e.to_string()),
        }
        clock(&mut analysis, "sens", t);
    }

    if phases.certify {
        let t = Instant::now();
        match regularity::certify_strong_regularity(
            spec,
            &z,
            &sol,
            &opts.tols,
            &opts.caps,
            opts.seed,
        ) {
            Ok(cert) => analysis.certificate = Some(cert),
            Err(e) => analysis.certificate_error = Some(e.to_string()),
        }
        clock(&mut analysis, "certify", t);
    }

    if phases.perturb {
        let t = Instant::now();
        analysis.lipschitz = Some(regularity::lipschitz_experiment(
            spec,
            &z,
            opts.delta,
            opts.samples,
            &opts.newton,
            opts.seed,
        )?);
        analysis.lipschitz_half = Some(regularity::lipschitz_experiment(
            spec,
            &z,
            opts.delta * 0.5,
            opts.samples,
            &opts.newton,
            opts.seed,
        )?);
        clock(&mut analysis, "perturb", t);
    }

    if phases.oracle {
        let t = Instant::now();
        if spec.dims.n <= 2 && spec.dims.m <= 2 {
            match oracle::grid_minimax_check(spec, &z.x, &z.y, &opts.grid) {
                Ok(v) => analysis.minimax = Some(v),
                Err(e) => analysis.oracle_error = Some(e.to_string()),
            }
            if analysis.oracle_error.is_none() {
                match oracle::growth_check(spec, &z.x, &z.y, &opts.grid) {
                    Ok(g) => analysis.growth = Some(g),
                    Err(e) => analysis.oracle_error = Some(e.to_string()),
                }
            }
        } else {
            analysis.oracle_error = Some("problem too large for the grid oracle".into());
        }
        clock(&mut analysis, "oracle", t);
    }

    Ok(analysis)
}

fn opt_or_null(v: Option<Result<Value>>) -> Result<Value> {
    match v {
        Some(r) => r,
        None => Ok(Value::Null),
    }
}

pub fn analysis_json(a: &Analysis, opts: &RunOptions) -> Result<Value> {
    let mut fields: Vec<(&str, Value)> = vec![
        ("problem", Value::from(a.name.clone())),
        ("hash", Value::from(a.hash.clone())),
        ("seed", Value::from(opts.seed)),
        ("tolerances", report::tols_json(&opts.tols)?),
    ];
    fields.push((
        "solve",
        opt_or_null(a.solve.as_ref().map(|r| {
            report::newton_json(r, solver::quadratic_tail_constant(&r.trace))
        }))?,
    ));
    fields.push((
        "point",
        opt_or_null(a.point.as_ref().map(report::point_json))?,
    ));
    fields.push((
        "lower",
        opt_or_null(a.lower.as_ref().map(report::lower_ju_json))?,
    ));
    fields.push((
        "upper",
        opt_or_null(a.upper.as_ref().map(report::upper_json))?,
    ));
    fields.push((
        "upper_error",
        a.upper_error
            .as_ref()
            .map_or(Value::Null, |e| Value::from(e.clone())),
    ));
    fields.push((
        "sensitivity",
        opt_or_null(
            a.sensitivity
                .as_ref()
                .map(|b| report::sensitivity_json(b, a.sensitivity_fd_error)),
        )?,
    ));
    fields.push((
        "sensitivity_error",
        a.sensitivity_error
            .as_ref()
            .map_or(Value::Null, |e| Value::from(e.clone())),
    ));
    fields.push((
        "certificate",
        opt_or_null(a.certificate.as_ref().map(report::certificate_json))?,
    ));
    fields.push((
        "certificate_error",
        a.certificate_error
            .as_ref()
            .map_or(Value::Null, |e| Value::from(e.clone())),
    ));
    fields.push((
        "lipschitz",
        opt_or_null(
            a.lipschitz
                .as_ref()
                .map(|e| report::lipschitz_json(e, a.halving_stability())),
        )?,
    ));
    fields.push((
        "oracle",
        match (&a.minimax, &a.growth) {
            (None, None) => Value::Null,
            (mv, gv) => obj(vec![
                ("minimax", opt_or_null(mv.as_ref().map(report::minimax_json))?),
                ("growth", opt_or_null(gv.as_ref().map(report::growth_json))?),
            ]),
        },
    ));
    fields.push((
        "oracle_error",
        a.oracle_error
            .as_ref()
            .map_or(Value::Null, |e| Value::from(e.clone())),
    ));
    if opts.timings {
        let mut timing_fields = Vec::new();
        for (label, ms) in &a.timings_ms {
            timing_fields.push((*label, num(&format!("timing.{label}"), *ms)?));
        }
        fields.push(("timings_ms", obj(timing_fields)));
    }
    Ok(obj(fields))
}

/// One selftest line: a builtin, its expectations, and whether the run
/// matched them.
pub struct SelftestLine {
    pub key: String,
    pub matches: Vec<(String, bool)>,
    pub pass: bool,
}

pub struct SelftestOutcome {
    pub report: String,
    pub lines: Vec<SelftestLine>,
    pub pass: bool,
}

fn within_quarter(actual: f64, expected: f64) -> bool {
    (actual - expected).abs() <= 0.25 * expected.abs()
}

/// Run the builtin corpus end to end against its expectation matrix and
/// produce a canonical (byte-reproducible) report.
pub fn selftest(opts: &RunOptions) -> Result<SelftestOutcome> {
    let mut lines = Vec::new();
    let mut problems_json = Vec::new();
    for b in builtins::all() {
        let phases = Phases {
            solve: true,
            check: true,
            sens: true,
            certify: true,
            perturb: matches!(b.key, "p3" | "p3-neg-psi"),
            oracle: b.expect.minimax_oracle.is_some(),
        };
        let mut run_opts = *opts;
        run_opts.samples = opts.samples.min(20);
        let analysis = analyze(&b.spec, &b.reference, phases, &run_opts)?;
        let mut matches: Vec<(String, bool)> = Vec::new();
        if let Some(want) = b.expect.lower_ju {
            let got = analysis.lower.as_ref().map(|r| r.pass());
            matches.push(("lower_ju".into(), got == Some(want)));
        }
        if let Some(want) = b.expect.jacobian_uniqueness {
            let got = analysis.upper.as_ref().map(|r| r.jacobian_uniqueness);
            matches.push(("jacobian_uniqueness".into(), got == Some(want)));
        }
        if let Some(want) = b.expect.property_a {
            let got = analysis.upper.as_ref().map(|r| r.property_a);
            matches.push(("property_a".into(), got == Some(want)));
        }
        if let Some(want) = b.expect.strong_regularity {
            let got = analysis.certificate.as_ref().map(|c| c.certified());
            matches.push(("strong_regularity".into(), got == Some(want)));
        }
        if let Some(want) = b.expect.minimax_oracle {
            let got = analysis.minimax.as_ref().map(|v| v.pass);
            matches.push(("minimax_oracle".into(), got == Some(want)));
        }
        if let Some(want) = b.expect.growth_pass {
            let got = analysis.growth.as_ref().map(|g| g.pass);
            matches.push(("growth".into(), got == Some(want)));
        }
        if let Some((g1, g2)) = b.expect.growth_constants {
            let ok = analysis.growth.as_ref().map_or(false, |g| {
                within_quarter(g.inner.gamma, g1) && within_quarter(g.outer.gamma, g2)
            });
            matches.push(("growth_constants".into(), ok));
        }
        if b.key == "p3" {
            matches.push((
                "lipschitz_clean".into(),
                analysis.lipschitz_flagged() == Some(false),
            ));
        }
        if b.key == "p3-neg-psi" {
            matches.push((
                "lipschitz_flagged".into(),
                analysis.lipschitz_flagged() == Some(true),
            ));
        }
        let pass = matches.iter().all(|(_, ok)| *ok);
        let match_json: Vec<(&str, Value)> = matches
            .iter()
            .map(|(k, ok)| (k.as_str(), Value::from(*ok)))
            .collect();
        problems_json.push(obj(vec![
            ("key", Value::from(b.key)),
            ("report", analysis_json(&analysis, &run_opts)?),
            ("expectations_met", obj(match_json)),
            ("pass", Value::from(pass)),
        ]));
        lines.push(SelftestLine {
            key: b.key.to_string(),
            matches,
            pass,
        });
    }
    let pass = lines.iter().all(|l| l.pass);
    let root = obj(vec![
        ("kind", Value::from("selftest")),
        ("seed", Value::from(opts.seed)),
        ("tolerances", report::tols_json(&opts.tols)?),
        ("problems", Value::Array(problems_json)),
        ("pass", Value::from(pass)),
    ]);
    Ok(SelftestOutcome {
        report: crate::jsonout::to_canonical_string(&root)?,
        lines,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_matches_expectations_and_is_deterministic() {
        let opts = RunOptions {
            seed: 42,
            ..RunOptions::default()
        };
        let first = selftest(&opts).unwrap();
        for line in &first.lines {
            assert!(line.pass, "{}: {:?}", line.key, line.matches);
        }
        assert!(first.pass);
        let second = selftest(&opts).unwrap();
        assert_eq!(first.report, second.report, "selftest must be byte-stable");
    }
}
