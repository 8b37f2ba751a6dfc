//! Command-line front end: solve, certify, differentiate, perturb, track,
//! and brute-force-check minimax programs given as LQ documents or builtin
//! corpus names.
//!
//! Exit codes: 0 every requested certificate passed, 1 a certificate failed,
//! 2 usage or I/O error, 3 numerical failure.

use clap::{Parser, Subcommand, ValueEnum};
use mmstab::diff::FDConfig;
use mmstab::error::Error;
use mmstab::generator::{self, GeneratorConfig, SidecarSolution};
use mmstab::harness::{self, Phases, RunOptions};
use mmstab::kkt::PrimalDualPoint;
use mmstab::lower::LowerOptions;
use mmstab::oracle::GridOracleConfig;
use mmstab::problem::{Dimensions, ParametricProblemSpec, ProblemSpec};
use mmstab::regularity::RegularityCaps;
use mmstab::report;
use mmstab::solver::{CertMode, NewtonOptions};
use mmstab::tols::CertTolerances;
use mmstab::{builtins, lq, solver};
use nalgebra::DVector;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mmstab", about = "Stability certification for constrained minimax programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Activity tolerance for index-set decisions.
    #[arg(long, default_value_t = 1e-8, global = true)]
    tol_act: f64,
    /// KKT residual gate.
    #[arg(long, default_value_t = 1e-8, global = true)]
    tol_kkt: f64,
    /// Relative rank gate for constraint-gradient independence.
    #[arg(long, default_value_t = 1e-8, global = true)]
    tol_rank: f64,
    /// Eigenvalue gate for second-order conditions.
    #[arg(long, default_value_t = 1e-8, global = true)]
    tol_sosc: f64,
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    /// Write the machine-readable report here.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// Cross-check analytic sensitivities against finite differences.
    #[arg(long, global = true)]
    fd_check: bool,
    /// Grid points per axis for the brute-force oracle.
    #[arg(long, default_value_t = 201, global = true)]
    grid: usize,
    /// Radius of the canonical-perturbation experiment.
    #[arg(long, default_value_t = 1e-3, global = true)]
    delta: f64,
    /// Sample count for perturbation experiments.
    #[arg(long, default_value_t = 50, global = true)]
    samples: usize,
    /// Vertex-enumeration cap for the stability certificate.
    #[arg(long, default_value_t = 16, global = true)]
    enum_cap: usize,
    /// Include wall-clock timings in reports (makes reports run-dependent).
    #[arg(long, global = true)]
    timings: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Full certificate including upper strict complementarity.
    Ju,
    /// Certificate without upper strict complementarity.
    PropertyA,
}

#[derive(Subcommand)]
enum Cmd {
    /// Find a KKT point by semismooth Newton from a start point.
    Solve {
        problem: String,
        #[arg(long)]
        start: Option<PathBuf>,
    },
    /// Certify the lower-level and upper-level stability conditions.
    Check {
        problem: String,
        #[arg(long)]
        start: Option<PathBuf>,
    },
    /// Value-function gradient and Hessian, optionally FD cross-checked.
    Sens {
        problem: String,
        #[arg(long)]
        start: Option<PathBuf>,
    },
    /// Strong-regularity certificate (generalized-Jacobian enumeration).
    Certify {
        problem: String,
        #[arg(long)]
        start: Option<PathBuf>,
    },
    /// Canonical-perturbation Lipschitz experiment.
    Perturb {
        problem: String,
        #[arg(long)]
        start: Option<PathBuf>,
    },
    /// Track a certified solution through a parametric family.
    Path {
        problem: String,
        #[arg(long)]
        start: Option<PathBuf>,
        /// Comma-separated first parameter node (defaults to theta0).
        #[arg(long)]
        theta_start: Option<String>,
        /// Comma-separated last parameter node (defaults to theta0 + 0.05).
        #[arg(long)]
        theta_end: Option<String>,
        #[arg(long, default_value_t = 10)]
        nodes: usize,
        #[arg(long, value_enum, default_value = "ju")]
        mode: ModeArg,
    },
    /// Brute-force grid check of the local minimax property and growth.
    Oracle {
        problem: String,
        #[arg(long)]
        start: Option<PathBuf>,
    },
    /// Emit a random LQ instance with an embedded solution sidecar.
    Gen {
        /// Output path for the problem document.
        out: PathBuf,
        /// Dimensions as n,m,n1,n2,m1,m2.
        #[arg(long, default_value = "3,2,0,1,0,1")]
        dims: String,
        #[arg(long, default_value_t = 1)]
        alpha: usize,
        #[arg(long, default_value_t = 1)]
        beta_plus: usize,
        #[arg(long, default_value_t = 0)]
        beta_zero: usize,
        #[arg(long, default_value_t = 0.5)]
        margin: f64,
        /// Also emit a one-parameter tilted family next to the document.
        #[arg(long)]
        parametric: bool,
    },
    /// Run the builtin corpus end to end against its expectation matrix.
    Selftest {},
}

fn run_options(c: &Common) -> RunOptions {
    RunOptions {
        tols: CertTolerances {
            kkt: c.tol_kkt,
            rank_rel: c.tol_rank,
            strict_comp: 1e-8,
            sosc: c.tol_sosc,
            act: c.tol_act,
        },
        newton: NewtonOptions {
            tol_act: c.tol_act,
            ..NewtonOptions::default()
        },
        lower: LowerOptions {
            tol_act: c.tol_act,
            ..LowerOptions::default()
        },
        fd: FDConfig::default(),
        grid: GridOracleConfig {
            grid_points: c.grid,
            ..GridOracleConfig::default()
        },
        caps: RegularityCaps {
            enum_cap: c.enum_cap,
            ..RegularityCaps::default()
        },
        delta: c.delta,
        samples: c.samples,
        seed: c.seed,
        timings: c.timings,
    }
}

struct Loaded {
    spec: ProblemSpec,
    start: PrimalDualPoint,
    parametric: Option<ParametricProblemSpec>,
}

fn load_problem(name: &str, start: &Option<PathBuf>) -> Result<Loaded, Error> {
    let path = Path::new(name);
    let (spec, parametric, reference) = if path.exists() {
        let text = std::fs::read_to_string(path)?;
        // parametric documents carry a `parameters` block; try them first
        match lq::parse_parametric_problem(&text) {
            Ok(pspec) => {
                let frozen = mmstab::problem::freeze_parameter(&pspec, &pspec.theta0.clone())?;
                (frozen, Some(pspec), None)
            }
            Err(_) => (lq::parse_problem(&text)?, None, None),
        }
    } else if let Some(b) = builtins::get(name.trim_end_matches(".json")) {
        (b.spec, b.parametric, Some(b.reference))
    } else {
        return Err(Error::Schema(format!(
            "problem '{name}' is neither a readable file nor a builtin \
             (builtins: {})",
            builtins::all_keys().join(", ")
        )));
    };
    let start_point = match start {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let sidecar: SidecarSolution = serde_json::from_str(&text)?;
            sidecar.to_point()
        }
        None => reference.unwrap_or_else(|| PrimalDualPoint::zeros(&spec.dims)),
    };
    Ok(Loaded {
        spec,
        start: start_point,
        parametric,
    })
}

fn parse_csv_vector(text: &str) -> Result<DVector<f64>, Error> {
    let vals: Result<Vec<f64>, _> = text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    vals.map(DVector::from_vec)
        .map_err(|e| Error::Schema(format!("bad vector '{text}': {e}")))
}

fn parse_dims(text: &str) -> Result<Dimensions, Error> {
    let parts: Result<Vec<usize>, _> = text.split(',').map(|t| t.trim().parse::<usize>()).collect();
    let parts = parts.map_err(|e| Error::Schema(format!("bad dims '{text}': {e}")))?;
    if parts.len() != 6 {
        return Err(Error::Schema("dims must be n,m,n1,n2,m1,m2".into()));
    }
    Ok(Dimensions {
        n: parts[0],
        m: parts[1],
        n1: parts[2],
        n2: parts[3],
        m1: parts[4],
        m2: parts[5],
    })
}

fn exit_for_error(e: &Error) -> u8 {
    match e {
        Error::Schema(_)
        | Error::Dimension { .. }
        | Error::AsymmetricQuad { .. }
        | Error::Io(_)
        | Error::Json(_)
        | Error::Unsupported(_)
        | Error::Infeasible(_) => 2,
        Error::CertificationFailed { .. } | Error::ActiveSetChange { .. } => 1,
        Error::DegenerateSplit { .. }
        | Error::SingularMatrix { .. }
        | Error::MaxIterations { .. }
        | Error::NestedSolve { .. }
        | Error::NonFinite(_) => 3,
    }
}

fn write_report(value: &serde_json::Value, path: &Option<PathBuf>) -> Result<(), Error> {
    if let Some(p) = path {
        report::emit_report(value, p)?;
        println!("report written to {}", p.display());
    }
    Ok(())
}

fn verdict_line(label: &str, pass: bool) {
    println!("{}  {label}", if pass { "PASS" } else { "FAIL" });
}

fn run(cli: Cli) -> Result<u8, Error> {
    let opts = run_options(&cli.common);
    match cli.cmd {
        Cmd::Solve { problem, start } => {
            let loaded = load_problem(&problem, &start)?;
            let phases = Phases {
                solve: true,
                ..Phases::default()
            };
            let analysis = harness::analyze(&loaded.spec, &loaded.start, phases, &opts)?;
            let run = analysis.solve.as_ref().expect("solve phase ran");
            println!(
                "{}: {} iterations, residual {:.3e}",
                loaded.spec.name,
                run.iterations(),
                run.trace.last().unwrap()
            );
            write_report(&harness::analysis_json(&analysis, &opts)?, &cli.common.report)?;
            Ok(if run.converged() { 0 } else { 3 })
        }
        Cmd::Check { problem, start } => {
            let loaded = load_problem(&problem, &start)?;
            let phases = Phases {
                solve: true,
                check: true,
                ..Phases::default()
            };
            let analysis = harness::analyze(&loaded.spec, &loaded.start, phases, &opts)?;
            let lower_ok = analysis.lower.as_ref().map_or(false, |r| r.pass());
            verdict_line("lower-level jacobian uniqueness", lower_ok);
            let (ju, pa) = match &analysis.upper {
                Some(u) => {
                    verdict_line("jacobian uniqueness (full problem)", u.jacobian_uniqueness);
                    verdict_line("property A", u.property_a);
                    if !u.jacobian_uniqueness {
                        println!("  failed items: {}", u.failed_items().join(", "));
                    }
                    (u.jacobian_uniqueness, u.property_a)
                }
                None => {
                    println!(
                        "upper certificate unavailable: {}",
                        analysis.upper_error.as_deref().unwrap_or("unknown")
                    );
                    (false, false)
                }
            };
            write_report(&harness::analysis_json(&analysis, &opts)?, &cli.common.report)?;
            if analysis.upper.is_none() {
                return Ok(3);
            }
            Ok(if lower_ok && ju && pa { 0 } else { 1 })
        }
        Cmd::Sens { problem, start } => {
            let loaded = load_problem(&problem, &start)?;
            let phases = Phases {
                solve: true,
                check: true,
                sens: true,
                ..Phases::default()
            };
            let mut opts = opts;
            if !cli.common.fd_check {
                opts.timings = cli.common.timings;
            }
            let analysis = harness::analyze(&loaded.spec, &loaded.start, phases, &opts)?;
            let code = match &analysis.sensitivity {
                Some(bundle) => {
                    println!("value gradient: {:?}", bundle.grad.as_slice());
                    println!("value hessian:");
                    for i in 0..bundle.hessian.nrows() {
                        let row: Vec<f64> =
                            (0..bundle.hessian.ncols()).map(|j| bundle.hessian[(i, j)]).collect();
                        println!("  {row:?}");
                    }
                    if cli.common.fd_check {
                        match analysis.sensitivity_fd_error {
                            Some(err) => {
                                verdict_line(
                                    &format!("finite-difference cross-check (error {err:.3e})"),
                                    err <= 1e-4,
                                );
                                if err <= 1e-4 {
                                    0
                                } else {
                                    1
                                }
                            }
                            None => {
                                println!("finite-difference cross-check unavailable");
                                3
                            }
                        }
                    } else {
                        0
                    }
                }
                None => {
                    println!(
                        "sensitivity unavailable: {}",
                        analysis.sensitivity_error.as_deref().unwrap_or("unknown")
                    );
                    3
                }
            };
            write_report(&harness::analysis_json(&analysis, &opts)?, &cli.common.report)?;
            Ok(code)
        }
        Cmd::Certify { problem, start } => {
            let loaded = load_problem(&problem, &start)?;
            let phases = Phases {
                solve: true,
                check: true,
                certify: true,
                ..Phases::default()
            };
            let analysis = harness::analyze(&loaded.spec, &loaded.start, phases, &opts)?;
            let code = match &analysis.certificate {
                Some(cert) => {
                    verdict_line("property A", cert.property_a_verdict);
                    verdict_line(
                        &format!(
                            "all {} vertex / {} interior elements nonsingular",
                            cert.vertices.len(),
                            cert.interior.len()
                        ),
                        cert.all_elements_nonsingular,
                    );
                    verdict_line("vertex determinant signs agree", cert.vertex_sign_agreement);
                    verdict_line("strong regularity certificate", cert.certified());
                    if cert.certified() {
                        0
                    } else {
                        1
                    }
                }
                None => {
                    println!(
                        "certificate unavailable: {}",
                        analysis.certificate_error.as_deref().unwrap_or("unknown")
                    );
                    3
                }
            };
            write_report(&harness::analysis_json(&analysis, &opts)?, &cli.common.report)?;
            Ok(code)
        }
        Cmd::Perturb { problem, start } => {
            let loaded = load_problem(&problem, &start)?;
            let phases = Phases {
                solve: true,
                perturb: true,
                ..Phases::default()
            };
            let analysis = harness::analyze(&loaded.spec, &loaded.start, phases, &opts)?;
            let est = analysis.lipschitz.as_ref().expect("perturb phase ran");
            println!(
                "lipschitz ratio {:.4e} at radius {:.1e} ({} samples, {} failures)",
                est.ratio,
                est.radius,
                est.samples.len(),
                est.failures
            );
            if let Some(s) = analysis.halving_stability() {
                println!("radius-halving stability ratio {s:.3}");
            }
            let flagged = analysis.lipschitz_flagged().unwrap_or(true);
            verdict_line("local single-valued Lipschitz evidence", !flagged);
            write_report(&harness::analysis_json(&analysis, &opts)?, &cli.common.report)?;
            Ok(if flagged { 1 } else { 0 })
        }
        Cmd::Path {
            problem,
            start,
            theta_start,
            theta_end,
            nodes,
            mode,
        } => {
            let loaded = load_problem(&problem, &start)?;
            let pspec = loaded.parametric.ok_or_else(|| {
                Error::Schema(format!(
                    "problem '{problem}' has no parametric form; `path` needs a parametric document"
                ))
            })?;
            let t0 = match theta_start {
                Some(t) => parse_csv_vector(&t)?,
                None => pspec.theta0.clone(),
            };
            let t1 = match theta_end {
                Some(t) => parse_csv_vector(&t)?,
                None => t0.add_scalar(0.05),
            };
            if nodes < 2 {
                return Err(Error::Schema("path needs at least two nodes".into()));
            }
            let grid: Vec<DVector<f64>> = (0..nodes)
                .map(|i| {
                    let s = i as f64 / (nodes - 1) as f64;
                    &t0 + (&t1 - &t0) * s
                })
                .collect();
            // corrector start: the supplied point lifted into Kojima form at
            // the first node
            let frozen0 = mmstab::problem::freeze_parameter(&pspec, &grid[0])?;
            let k_start = mmstab::kkt::to_kojima(&frozen0, &loaded.start);
            let cert_mode = match mode {
                ModeArg::Ju => CertMode::JacobianUniqueness,
                ModeArg::PropertyA => CertMode::PropertyA,
            };
            match solver::track_path(&pspec, &grid, &k_start, &opts.newton, cert_mode, &opts.tols)
            {
                Ok(result) => {
                    println!(
                        "tracked {} nodes; alpha {:?}, beta {:?} constant",
                        result.nodes.len(),
                        result.alpha,
                        result.beta
                    );
                    for node in &result.nodes {
                        println!(
                            "  theta {:?}: residual {:.2e}, newton iters {}",
                            node.theta.as_slice(),
                            node.residual,
                            node.newton_iterations
                        );
                    }
                    verdict_line("path certificates", true);
                    Ok(0)
                }
                Err(e) => {
                    verdict_line(&format!("path certificates ({e})"), false);
                    Ok(exit_for_error(&e))
                }
            }
        }
        Cmd::Oracle { problem, start } => {
            let loaded = load_problem(&problem, &start)?;
            let phases = Phases {
                solve: true,
                oracle: true,
                ..Phases::default()
            };
            let analysis = harness::analyze(&loaded.spec, &loaded.start, phases, &opts)?;
            let code = match (&analysis.minimax, &analysis.growth) {
                (Some(v), g) => {
                    verdict_line("local minimax grid check", v.pass);
                    for a in &v.anomalies {
                        println!("  anomaly: {a}");
                    }
                    if let Some(g) = g {
                        println!(
                            "growth constants: gamma1 {:.4}, gamma2 {:.4}",
                            g.inner.gamma, g.outer.gamma
                        );
                        verdict_line("quadratic growth", g.pass);
                    }
                    if v.pass {
                        0
                    } else {
                        1
                    }
                }
                _ => {
                    println!(
                        "oracle unavailable: {}",
                        analysis.oracle_error.as_deref().unwrap_or("unknown")
                    );
                    2
                }
            };
            write_report(&harness::analysis_json(&analysis, &opts)?, &cli.common.report)?;
            Ok(code)
        }
        Cmd::Gen {
            out,
            dims,
            alpha,
            beta_plus,
            beta_zero,
            margin,
            parametric,
        } => {
            let dims = parse_dims(&dims)?;
            let cfg = GeneratorConfig {
                dims,
                n_active_lower: alpha,
                n_beta_plus: beta_plus,
                n_beta_zero: beta_zero,
                lower_curvature: margin,
                upper_curvature: margin,
                constraint_quad_scale: 0.1,
                seed: cli.common.seed,
            };
            let inst = generator::generate_instance(&cfg)?;
            std::fs::write(&out, inst.doc.canonical_json()? + "\n")?;
            let sidecar_path = out.with_extension("solution.json");
            let sidecar = SidecarSolution::from_point(&inst.solution);
            std::fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)? + "\n")?;
            println!(
                "wrote {} and {}",
                out.display(),
                sidecar_path.display()
            );
            if parametric {
                let dir = DVector::from_element(dims.n, 1.0) / (dims.n as f64).sqrt();
                let pdoc = generator::parametric_tilt(&inst.doc, &dir)?;
                let ppath = out.with_extension("parametric.json");
                std::fs::write(&ppath, pdoc.canonical_json()? + "\n")?;
                println!("wrote {}", ppath.display());
            }
            Ok(0)
        }
        Cmd::Selftest {} => {
            let outcome = harness::selftest(&opts)?;
            for line in &outcome.lines {
                let detail: Vec<String> = line
                    .matches
                    .iter()
                    .map(|(k, ok)| format!("{k}={}", if *ok { "ok" } else { "MISMATCH" }))
                    .collect();
                verdict_line(&format!("{} [{}]", line.key, detail.join(" ")), line.pass);
            }
            if let Some(p) = &cli.common.report {
                std::fs::write(p, outcome.report.clone() + "\n")?;
                println!("report written to {}", p.display());
            }
            Ok(if outcome.pass { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for_error(&e))
        }
    }
}
