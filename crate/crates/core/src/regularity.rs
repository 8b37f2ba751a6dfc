//! Strong-regularity certification and canonical-perturbation experiments.
//!
//! The certificate side enumerates generalized-Jacobian elements of the
//! Kojima mapping at a KKT point. Degeneracy lives on the diagonal slopes
//! omega_i in [0, 1], one per active upper inequality with zero multiplier;
//! vertex slopes give the B-subdifferential, interior slopes the Clarke
//! hull. Nonsingularity of every element, together with the upper
//! certificate, is the sufficient condition being checked; vertex
//! determinant signs are reported and a disagreement is flagged because
//! finite sampling cannot rule out a singular element of the hull on its
//! own.
//!
//! The experiment side perturbs the right-hand side of the Kojima equation
//! inside a small ball and probes local single-valued Lipschitz behavior:
//! multi-start agreement for uniqueness, pairwise difference ratios for the
//! Lipschitz constant, and scale stability under radius halving.

use crate::conditions::{self, UpperConditionReport};
use crate::error::Result;
use crate::kkt::{self, KojimaPoint, PrimalDualPoint};
use crate::linalg;
use crate::lower::LowerSolution;
use crate::problem::ProblemSpec;
use crate::solver::{newton_kojima, NewtonOptions};
use crate::tols::CertTolerances;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative singular-value threshold below which an element counts singular.
const NONSINGULAR_GATE: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct RegularityCaps {
    /// Enumerate all vertices up to this many degenerate indices.
    pub enum_cap: usize,
    /// Random vertices sampled when enumeration is capped.
    pub vertex_samples: usize,
    /// Interior omega samples.
    pub interior_samples: usize,
}

impl Default for RegularityCaps {
    fn default() -> Self {
        Self {
            enum_cap: 16,
            vertex_samples: 64,
            interior_samples: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ElementResult {
    pub omega: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub det: f64,
    pub nonsingular: bool,
    /// Whether the Schur-reduced matrix agreed on nonsingularity.
    pub schur_agrees: bool,
}

#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    pub property_a_verdict: bool,
    pub upper: UpperConditionReport,
    pub beta_zero_size: usize,
    pub enumeration_capped: bool,
    pub vertices: Vec<ElementResult>,
    pub interior: Vec<ElementResult>,
    /// Overall nonsingularity verdict over every enumerated or sampled
    /// element.
    pub all_elements_nonsingular: bool,
    /// Vertex determinants all share one sign. Disagreement means the hull
    /// contains a singular element even if no sample hit it.
    pub vertex_sign_agreement: bool,
    pub schur_verdicts_agree: bool,
    pub seed: u64,
}

impl StabilityCertificate {
    pub fn certified(&self) -> bool {
        self.property_a_verdict
            && self.all_elements_nonsingular
            && self.vertex_sign_agreement
            && self.schur_verdicts_agree
    }
}

/// The Schur-reduced counterpart of a generalized-Jacobian element: the
/// lower KKT block is eliminated, leaving
///
/// ```text
/// [ Psi          JH'   JG_b+'   JG_b0' W     ]
/// [ JH           0     0        0            ]
/// [ JG_b+        0     0        0            ]
/// [ JG_b0        0     0        W - I        ]
/// ```
///
/// with W = Diag(omega). Nonsingular exactly when the full element is.
fn schur_reduced_element(
    spec: &ProblemSpec,
    z: &PrimalDualPoint,
    psi: &DMatrix<f64>,
    sets: &kkt::ActiveSets,
    omega: &[f64],
) -> DMatrix<f64> {
    let n = spec.dims.n;
    let jh = spec.big_h_jacobian(&z.x);
    let jg = spec.big_g_jacobian(&z.x);
    let jg_plus = linalg::select_rows(&jg, &sets.beta_plus);
    let jg_zero = linalg::select_rows(&jg, &sets.beta_zero);
    let n1 = jh.nrows();
    let bp = jg_plus.nrows();
    let b0 = jg_zero.nrows();
    let size = n + n1 + bp + b0;
    let mut s = DMatrix::zeros(size, size);
    linalg::insert_block(&mut s, 0, 0, psi);
    linalg::insert_block(&mut s, 0, n, &jh.transpose());
    linalg::insert_block(&mut s, 0, n + n1, &jg_plus.transpose());
    let mut jg_zero_t_scaled = jg_zero.transpose();
    for (j, &om) in omega.iter().enumerate() {
        jg_zero_t_scaled.column_mut(j).scale_mut(om);
    }
    linalg::insert_block(&mut s, 0, n + n1 + bp, &jg_zero_t_scaled);
    linalg::insert_block(&mut s, n, 0, &jh);
    linalg::insert_block(&mut s, n + n1, 0, &jg_plus);
    linalg::insert_block(&mut s, n + n1 + bp, 0, &jg_zero);
    for (j, &om) in omega.iter().enumerate() {
        s[(n + n1 + bp + j, n + n1 + bp + j)] = om - 1.0;
    }
    s
}

fn assess_element(
    spec: &ProblemSpec,
    z: &PrimalDualPoint,
    k: &KojimaPoint,
    psi: &DMatrix<f64>,
    sets: &kkt::ActiveSets,
    omega: &[f64],
    tol_act: f64,
) -> Result<ElementResult> {
    let element = kkt::kojima_b_subdiff_element(spec, k, omega, tol_act)?;
    let (lo, hi) = linalg::sigma_extrema(&element.natural);
    let nonsingular = lo > NONSINGULAR_GATE * hi && hi > 0.0;
    let det = linalg::determinant(&element.natural);
    let s = schur_reduced_element(spec, z, psi, sets, omega);
    let (slo, shi) = linalg::sigma_extrema(&s);
    let schur_nonsingular = if s.nrows() == 0 {
        true
    } else {
        slo > NONSINGULAR_GATE * shi && shi > 0.0
    };
    Ok(ElementResult {
        omega: omega.to_vec(),
        sigma_min: lo,
        sigma_max: hi,
        det,
        nonsingular,
        schur_agrees: nonsingular == schur_nonsingular,
    })
}

/// Enumerate/sample generalized-Jacobian elements at the KKT point and run
/// the upper certificate; see the module notes for verdict semantics.
pub fn certify_strong_regularity(
    spec: &ProblemSpec,
    z: &PrimalDualPoint,
    sol: &LowerSolution,
    tols: &CertTolerances,
    caps: &RegularityCaps,
    seed: u64,
) -> Result<StabilityCertificate> {
    let upper = conditions::check_upper_conditions(spec, z, sol, tols)?;
    let psi = conditions::reduced_upper_hessian(spec, z, sol)?;
    let sets = kkt::active_sets(spec, z, tols.act);
    let k = kkt::to_kojima(spec, z);
    let degenerate = kkt::degenerate_w_indices(&k, tols.act);
    let b0 = degenerate.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertex_omegas: Vec<Vec<f64>> = Vec::new();
    let enumeration_capped = b0 > caps.enum_cap;
    if !enumeration_capped {
        for mask in 0..(1usize << b0) {
            vertex_omegas.push((0..b0).map(|i| ((mask >> i) & 1) as f64).collect());
        }
    } else {
        vertex_omegas.push(vec![0.0; b0]);
        vertex_omegas.push(vec![1.0; b0]);
        for _ in 0..caps.vertex_samples {
            vertex_omegas.push((0..b0).map(|_| f64::from(rng.random_range(0..=1u8))).collect());
        }
    }

    let mut vertices = Vec::with_capacity(vertex_omegas.len());
    for omega in &vertex_omegas {
        vertices.push(assess_element(spec, z, &k, &psi, &sets, omega, tols.act)?);
    }
    let mut interior = Vec::new();
    if b0 > 0 {
        for _ in 0..caps.interior_samples {
            let omega: Vec<f64> = (0..b0).map(|_| rng.random_range(0.0..1.0)).collect();
            interior.push(assess_element(spec, z, &k, &psi, &sets, &omega, tols.act)?);
        }
    }

    let all_elements_nonsingular = vertices
        .iter()
        .chain(interior.iter())
        .all(|e| e.nonsingular);
    let vertex_sign_agreement = {
        let signs: Vec<f64> = vertices.iter().map(|e| e.det.signum()).collect();
        signs.iter().all(|&s| s == signs[0] && s != 0.0)
    };
    let schur_verdicts_agree = vertices
        .iter()
        .chain(interior.iter())
        .all(|e| e.schur_agrees);

    Ok(StabilityCertificate {
        property_a_verdict: upper.property_a,
        upper,
        beta_zero_size: b0,
        enumeration_capped,
        vertices,
        interior,
        all_elements_nonsingular,
        vertex_sign_agreement,
        schur_verdicts_agree,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SampleStatus {
    Solved,
    SolveFailed,
    UniquenessViolation,
}

#[derive(Debug, Clone)]
pub struct PerturbationSample {
    pub eta: DVector<f64>,
    pub point: Option<KojimaPoint>,
    pub status: SampleStatus,
    pub distance: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LipschitzEstimate {
    /// Max pairwise ratio |k_i - k_j| / |eta_i - eta_j| over solved samples.
    pub ratio: f64,
    pub samples: Vec<PerturbationSample>,
    pub failures: usize,
    pub uniqueness_violation: bool,
    pub radius: f64,
    pub seed: u64,
}

impl LipschitzEstimate {
    /// Evidence against strong regularity surfaced by the experiment.
    pub fn flagged(&self) -> bool {
        self.uniqueness_violation || self.failures > 0 || !self.ratio.is_finite()
    }
}

fn sample_in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> DVector<f64> {
    // Box-Muller direction, radius scaled for uniform ball volume.
    let mut v = DVector::zeros(dim);
    let mut i = 0;
    while i < dim {
        let u1: f64 = rng.random_range(1e-12..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        let mag = (-2.0 * u1.ln()).sqrt();
        v[i] = mag * (2.0 * std::f64::consts::PI * u2).cos();
        if i + 1 < dim {
            v[i + 1] = mag * (2.0 * std::f64::consts::PI * u2).sin();
        }
        i += 2;
    }
    let norm = v.norm();
    if norm == 0.0 {
        return v;
    }
    let r: f64 = rng.random_range(0.0_f64..1.0).powf(1.0 / dim as f64) * radius;
    v * (r / norm)
}

/// Canonical-perturbation experiment around a solved point: `count` random
/// right-hand sides in the delta-ball (plus eta = 0), each solved from the
/// unperturbed solution and from jittered starts. Converged starts must
/// agree; the returned ratio is the empirical Lipschitz estimate.
pub fn lipschitz_experiment(
    spec: &ProblemSpec,
    z: &PrimalDualPoint,
    delta: f64,
    count: usize,
    opts: &NewtonOptions,
    seed: u64,
) -> Result<LipschitzEstimate> {
    let base = newton_kojima(spec, &kkt::to_kojima(spec, z), None, opts)?;
    let k0 = base.point.clone();
    let dim = spec.dims.kojima_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter_radius = 10.0 * delta;

    let mut samples: Vec<PerturbationSample> = Vec::with_capacity(count + 1);
    let mut etas: Vec<DVector<f64>> = vec![DVector::zeros(dim)];
    for _ in 0..count {
        etas.push(sample_in_ball(&mut rng, dim, delta));
    }
    let mut failures = 0usize;
    let mut uniqueness_violation = false;
    let k0_flat = k0.to_flat();
    for eta in &etas {
        let mut solutions: Vec<KojimaPoint> = Vec::new();
        let warm = newton_kojima(spec, &k0, Some(eta), opts)?;
        if warm.converged() {
            solutions.push(warm.point);
        }
        for _ in 0..3 {
            let start_flat = &k0_flat + sample_in_ball(&mut rng, dim, jitter_radius);
            let start = KojimaPoint::from_flat(&spec.dims, &start_flat);
            let run = newton_kojima(spec, &start, Some(eta), opts)?;
            if run.converged() {
                solutions.push(run.point);
            }
        }
        if solutions.is_empty() {
            failures += 1;
            samples.push(PerturbationSample {
                eta: eta.clone(),
                point: None,
                status: SampleStatus::SolveFailed,
                distance: None,
            });
            continue;
        }
        let mut agree = true;
        for s in &solutions[1..] {
            if linalg::vec_inf_norm(&(s.to_flat() - solutions[0].to_flat())) > 1e-8 {
                agree = false;
            }
        }
        let point = solutions.swap_remove(0);
        let distance = (point.to_flat() - &k0_flat).norm();
        if !agree {
            uniqueness_violation = true;
            samples.push(PerturbationSample {
                eta: eta.clone(),
                point: Some(point),
                status: SampleStatus::UniquenessViolation,
                distance: Some(distance),
            });
        } else {
            samples.push(PerturbationSample {
                eta: eta.clone(),
                point: Some(point),
                status: SampleStatus::Solved,
                distance: Some(distance),
            });
        }
    }

    let mut ratio: f64 = 0.0;
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            if let (Some(ki), Some(kj)) = (&samples[i].point, &samples[j].point) {
                let de = (&samples[i].eta - &samples[j].eta).norm();
                if de > 1e-14 {
                    ratio = ratio.max((ki.to_flat() - kj.to_flat()).norm() / de);
                }
            }
        }
    }
    Ok(LipschitzEstimate {
        ratio,
        samples,
        failures,
        uniqueness_violation,
        radius: delta,
        seed,
    })
}

#[derive(Debug, Clone)]
pub struct InjectivityReport {
    /// Empirical min of |F(k1) - F(k2)| / |k1 - k2| over sampled pairs.
    pub min_ratio: f64,
    pub pairs_used: usize,
    pub radius: f64,
    pub seed: u64,
}

/// Lower bound probe for local injectivity of the Kojima mapping around the
/// solution: random pairs in a ball must not collapse under F.
pub fn homeomorphism_probe(
    spec: &ProblemSpec,
    z: &PrimalDualPoint,
    radius: f64,
    count: usize,
    seed: u64,
) -> Result<InjectivityReport> {
    let k0 = kkt::to_kojima(spec, z).to_flat();
    let dim = k0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_ratio = f64::INFINITY;
    let mut pairs_used = 0usize;
    for _ in 0..count {
        let k1 = &k0 + sample_in_ball(&mut rng, dim, radius);
        let k2 = &k0 + sample_in_ball(&mut rng, dim, radius);
        let dk = (&k1 - &k2).norm();
        if dk < 1e-14 {
            continue;
        }
        let p1 = KojimaPoint::from_flat(&spec.dims, &k1);
        let p2 = KojimaPoint::from_flat(&spec.dims, &k2);
        let f1 = kkt::kojima_eval(spec, &p1, None)?;
        let f2 = kkt::kojima_eval(spec, &p2, None)?;
        min_ratio = min_ratio.min((f1 - f2).norm() / dk);
        pairs_used += 1;
    }
    Ok(InjectivityReport {
        min_ratio,
        pairs_used,
        radius,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins;
    use crate::lower;

    fn lower_at(spec: &ProblemSpec, z: &PrimalDualPoint) -> LowerSolution {
        lower::solution_from_point(spec, &z.x, &z.y, &z.mu, &z.lambda, 1e-8)
    }

    #[test]
    fn p3_certificate_passes_with_hand_determinants() {
        let p3 = builtins::get("p3").unwrap();
        let sol = lower_at(&p3.spec, &p3.reference);
        let cert = certify_strong_regularity(
            &p3.spec,
            &p3.reference,
            &sol,
            &CertTolerances::default(),
            &RegularityCaps::default(),
            17,
        )
        .unwrap();
        assert!(cert.certified(), "{cert:?}");
        assert_eq!(cert.beta_zero_size, 1);
        assert_eq!(cert.vertices.len(), 2);
        let mut dets: Vec<f64> = cert.vertices.iter().map(|v| v.det).collect();
        dets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((dets[0] - 2.0).abs() < 1e-9);
        assert!((dets[1] - 5.0).abs() < 1e-9);
        assert_eq!(cert.interior.len(), 64);
        assert!(cert.interior.iter().all(|e| e.nonsingular));
        assert!(cert.schur_verdicts_agree);
    }

    #[test]
    fn negative_curvature_flips_vertex_signs() {
        let neg = builtins::get("p3-neg-psi").unwrap();
        let sol = lower_at(&neg.spec, &neg.reference);
        let cert = certify_strong_regularity(
            &neg.spec,
            &neg.reference,
            &sol,
            &CertTolerances::default(),
            &RegularityCaps::default(),
            17,
        )
        .unwrap();
        assert!(!cert.property_a_verdict);
        assert!(!cert.vertex_sign_agreement);
        assert!(!cert.certified());
        let mut dets: Vec<f64> = cert.vertices.iter().map(|v| v.det).collect();
        dets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((dets[0] + 3.0).abs() < 1e-9);
        assert!((dets[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn classical_jacobian_case_reduces_to_single_element() {
        let p1 = builtins::get("p1").unwrap();
        let sol = lower_at(&p1.spec, &p1.reference);
        let cert = certify_strong_regularity(
            &p1.spec,
            &p1.reference,
            &sol,
            &CertTolerances::default(),
            &RegularityCaps::default(),
            17,
        )
        .unwrap();
        assert!(cert.certified());
        assert_eq!(cert.beta_zero_size, 0);
        assert_eq!(cert.vertices.len(), 1);
        assert!(cert.interior.is_empty());
    }

    #[test]
    fn interior_sigma_stays_comparable_to_vertices() {
        let p3 = builtins::get("p3").unwrap();
        let sol = lower_at(&p3.spec, &p3.reference);
        let cert = certify_strong_regularity(
            &p3.spec,
            &p3.reference,
            &sol,
            &CertTolerances::default(),
            &RegularityCaps::default(),
            5,
        )
        .unwrap();
        let vertex_min = cert
            .vertices
            .iter()
            .map(|e| e.sigma_min)
            .fold(f64::INFINITY, f64::min);
        for e in &cert.interior {
            assert!(e.sigma_min >= vertex_min / 10.0, "{e:?} vs {vertex_min}");
        }
    }

    #[test]
    fn slope_weight_formula_is_nonnegative() {
        // sum over degenerate indices of omega/(1-omega) (grad G_i' a)^2
        let p3 = builtins::get("p3").unwrap();
        let jg = p3.spec.big_g_jacobian(&p3.reference.x);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let a = DVector::from_fn(1, |_, _| rng.random_range(-1.0..1.0));
            let omega: f64 = rng.random_range(0.01..0.99);
            let term = omega / (1.0 - omega) * (jg.row(0).transpose().dot(&a)).powi(2);
            assert!(term >= 0.0);
        }
    }

    #[test]
    fn lipschitz_experiment_on_p3_is_clean_and_scale_stable() {
        let p3 = builtins::get("p3").unwrap();
        let opts = NewtonOptions::default();
        let est = lipschitz_experiment(&p3.spec, &p3.reference, 1e-3, 50, &opts, 11).unwrap();
        assert!(!est.flagged(), "failures {}, uniq {}", est.failures, est.uniqueness_violation);
        assert!(est.ratio.is_finite() && est.ratio > 0.0);
        assert!(est.samples[0].distance.unwrap() < 1e-12, "eta = 0 returns the base point");
        let est_half =
            lipschitz_experiment(&p3.spec, &p3.reference, 0.5e-3, 50, &opts, 11).unwrap();
        let stability = est.ratio / est_half.ratio;
        assert!((0.5..=2.0).contains(&stability), "ratio {stability}");
    }

    #[test]
    fn broken_curvature_is_flagged_by_the_experiment() {
        let neg = builtins::get("p3-neg-psi").unwrap();
        let opts = NewtonOptions::default();
        let est = lipschitz_experiment(&neg.spec, &neg.reference, 1e-3, 50, &opts, 11).unwrap();
        let est_half = lipschitz_experiment(&neg.spec, &neg.reference, 0.5e-3, 50, &opts, 11).unwrap();
        let stability = if est_half.ratio > 0.0 {
            est.ratio / est_half.ratio
        } else {
            f64::INFINITY
        };
        let flagged = est.flagged() || est_half.flagged() || !(0.5..=2.0).contains(&stability);
        assert!(flagged, "negative control must be flagged: {est:?}");
    }

    #[test]
    fn injectivity_probe_matches_sigma_min_on_affine_problem() {
        let p1 = builtins::get("p1").unwrap();
        let report = homeomorphism_probe(&p1.spec, &p1.reference, 1e-2, 200, 3).unwrap();
        assert!(report.pairs_used >= 190);
        // F is affine with matrix [[0,1],[1,-1]]; sigma_min = 0.618...
        let sigma = 0.6180339887498949;
        assert!(report.min_ratio >= sigma * 0.999);
        assert!(report.min_ratio <= sigma * 1.1, "{}", report.min_ratio);
    }

    #[test]
    fn injectivity_probe_positive_on_p3() {
        let p3 = builtins::get("p3").unwrap();
        let report = homeomorphism_probe(&p3.spec, &p3.reference, 1e-2, 200, 3).unwrap();
        assert!(report.min_ratio > 0.0);
    }
}
