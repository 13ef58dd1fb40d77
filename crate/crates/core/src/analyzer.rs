//! The verdict pipeline: hypotheses, normalization, common kernel, block form,
//! λ-sweep, then the sufficient conditions from cheapest to most expensive.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bad_locus::{scan_g, kpetit_classify, GScanReport, GVerdict, LocusGeometry, SmallKernelReport};
use crate::decomposition::{block_form, common_kernel, BlockFamily};
use crate::error::{GuasError, Result};
use crate::linalg::{Mat, Vector};
use crate::matrix_core::{check_weak_lyapunov, is_hurwitz, normalize, MatrixPair, NormalizedPair};
use crate::observability::{
    hurwitz_observability_crosscheck, kalman_matrix, sweep_lambda, sweep_sigma_min, ObservabilityReport,
    SweepVerdict, DEFAULT_GRID, DEFAULT_HURWITZ_BAND,
};
use crate::simulator::{estimate_omega_limit, worst_case_switching};
use crate::DEFAULT_TOL;

/// Kernel decisions with a smaller gap between kept and discarded singular values are refused.
pub const MIN_RANK_MARGIN: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Conclusion {
    #[serde(rename = "GUAS_trivial_kernel")]
    GuasTrivialKernel,
    #[serde(rename = "GUAS_dimK_le2")]
    GuasDimKLe2,
    #[serde(rename = "GUAS_G_discrete")]
    GuasGDiscrete,
    #[serde(rename = "GUAS_C_injective")]
    GuasCInjective,
    #[serde(rename = "NOT_GUAS_constant_input")]
    NotGuasConstantInput,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

impl Conclusion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Conclusion::GuasTrivialKernel => "GUAS_trivial_kernel",
            Conclusion::GuasDimKLe2 => "GUAS_dimK_le2",
            Conclusion::GuasGDiscrete => "GUAS_G_discrete",
            Conclusion::GuasCInjective => "GUAS_C_injective",
            Conclusion::NotGuasConstantInput => "NOT_GUAS_constant_input",
            Conclusion::Inconclusive => "INCONCLUSIVE",
        }
    }

    pub fn is_guas(&self) -> bool {
        matches!(
            self,
            Conclusion::GuasTrivialKernel
                | Conclusion::GuasDimKLe2
                | Conclusion::GuasGDiscrete
                | Conclusion::GuasCInjective
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceMode {
    Never,
    IfInconclusive,
    Always,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeOptions {
    pub tol: f64,
    pub hurwitz_band: f64,
    pub grid: usize,
    pub g_resolution: usize,
    pub evidence: EvidenceMode,
    pub n_random: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            tol: DEFAULT_TOL,
            hurwitz_band: DEFAULT_HURWITZ_BAND,
            grid: DEFAULT_GRID,
            g_resolution: crate::bad_locus::DEFAULT_RESOLUTION,
            evidence: EvidenceMode::IfInconclusive,
            n_random: 32,
            t_end: 100.0,
            dt: 1e-3,
            seed: 0,
        }
    }
}

/// Non-finite margins serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margins {
    pub kernel_dim: usize,
    pub output_dim: usize,
    pub rank_margin: f64,
    pub hurwitz_abscissa: [f64; 2],
    /// Largest eigenvalue of `BᵢᵀP + PBᵢ`.
    pub lyapunov_max_eigenvalue: [f64; 2],
    /// `min_λ σ_min(Kalman(λ))`.
    pub observability_margin: Option<f64>,
    pub observability_argmin: Option<f64>,
    /// `min_λ σ_min(C_λ)`.
    pub injectivity_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub lambda: f64,
    /// Unit vector of `K` in the kernel basis.
    pub x_kernel: Vec<f64>,
    /// The same state in normalized coordinates of `R^d`.
    pub x_normalized: Vec<f64>,
    /// The same state in the input coordinates, scaled to unit norm.
    pub x_raw: Vec<f64>,
    /// `‖Kalman(λ*) x*‖`.
    pub kalman_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub n_runs: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub max_final_ratio: f64,
    pub min_final_ratio: f64,
    pub plateaued_runs: usize,
    /// Runs whose norm plateaued away from zero.
    pub non_decaying_runs: Vec<usize>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointCheck {
    pub index: usize,
    pub hurwitz: bool,
    /// `(C, A)` read off `ker(Bᵢᵀ + Bᵢ)` is observable.
    pub observable_on_own_kernel: bool,
    pub sweep_sigma_min: Option<f64>,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GScanLevelSummary {
    pub resolution: usize,
    pub samples: usize,
    pub hits: usize,
    pub clusters: usize,
    pub max_cluster_diameter: f64,
    pub max_cluster_dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GScanSummary {
    pub verdict: GVerdict,
    pub dimension_supported: bool,
    pub levels: Vec<GScanLevelSummary>,
    pub notes: Vec<String>,
}

impl From<&GScanReport> for GScanSummary {
    fn from(r: &GScanReport) -> Self {
        GScanSummary {
            verdict: r.verdict,
            dimension_supported: r.dimension_supported,
            levels: r
                .levels
                .iter()
                .map(|l| GScanLevelSummary {
                    resolution: l.resolution,
                    samples: l.samples.len(),
                    hits: l.samples.iter().filter(|s| s.hit).count(),
                    clusters: l.clusters.len(),
                    max_cluster_diameter: l.clusters.iter().map(|c| c.diameter).fold(0.0, f64::max),
                    max_cluster_dimension: l.clusters.iter().map(|c| c.dimension).max().unwrap_or(0),
                })
                .collect(),
            notes: r.notes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub tol: f64,
    pub hurwitz_band: f64,
    pub min_rank_margin: f64,
    pub kernel_threshold: f64,
    pub certification_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridInfo {
    pub lambda_points: usize,
    pub g_resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub conclusion: Conclusion,
    /// The sufficient or necessary condition the conclusion rests on, in words.
    pub branch: String,
    pub margins: Margins,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
    pub tolerances: Tolerances,
    pub grid: GridInfo,
    pub endpoint_checks: Vec<EndpointCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub small_kernel: Option<SmallKernelReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_scan: Option<GScanSummary>,
    pub notes: Vec<String>,
}

const BRANCH_TRIVIAL: &str =
    "K = {0}: the symmetric parts have no common kernel, so every trajectory of the convexified system decays";
const BRANCH_NOT: &str = "(C_λ*, A_λ*) is unobservable: under the constant input λ* a unit state of K keeps its norm forever";
const BRANCH_INJECTIVE: &str =
    "C_λ is injective on K for every λ in [0, 1], so the output of the bilinear system never vanishes";
const BRANCH_SMALL: &str =
    "dim K ≤ 2 and (C_λ, A_λ) is observable for every λ in [0, 1], which gives uniform observability";
const BRANCH_G: &str =
    "(C_λ, A_λ) is observable for every λ in [0, 1] and the tangency set G on the unit sphere of K is discrete";
const BRANCH_NONE: &str = "no implemented sufficient condition applies and no constant-input witness was found";

/// Random unit starts plus the kernel directions, integrated under the greedy adversary.
pub fn empirical_evidence(
    pair: &NormalizedPair,
    k_basis: &Mat,
    n_random: usize,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<Evidence> {
    let d = pair.dim();
    let mut starts: Vec<Vector> = (0..n_random as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let v = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let n = v.norm();
            v / n
        })
        .collect();
    starts.extend(k_basis.column_iter().map(|c| c.into_owned()));
    let results: Vec<(f64, bool, bool)> = starts
        .par_iter()
        .map(|x0| {
            let tr = worst_case_switching(pair, x0, t_end, dt)?;
            let om = estimate_omega_limit(&tr, t_end / 4.0)?;
            Ok((om.r / x0.norm(), om.plateaued, om.decayed_to_zero))
        })
        .collect::<Result<_>>()?;
    let non_decaying_runs = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1 && !r.2)
        .map(|(i, _)| i)
        .collect();
    Ok(Evidence {
        n_runs: results.len(),
        t_end,
        dt,
        seed,
        max_final_ratio: results.iter().map(|r| r.0).fold(0.0, f64::max),
        min_final_ratio: results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
        plateaued_runs: results.iter().filter(|r| r.1).count(),
        non_decaying_runs,
        note: "greedy worst-case switching from random unit states and the basis of K; \
               simulations use piecewise-constant and feedback inputs only, so they are evidence, not proof"
            .into(),
    })
}

/// Run the whole pipeline on a pair. `P` defaults to the identity.
pub fn analyze(pair: &MatrixPair, opts: &AnalyzeOptions) -> Result<Verdict> {
    let tol = opts.tol;
    let d = pair.dim();
    let mut abscissa = [0.0; 2];
    for i in 0..2 {
        let h = is_hurwitz(pair.b(i), opts.hurwitz_band);
        abscissa[i] = h.abscissa;
        if !h.hurwitz {
            return Err(GuasError::NotHurwitz {
                index: i,
                abscissa: h.abscissa,
            });
        }
    }
    let p = pair.lyapunov().cloned().unwrap_or_else(|| Mat::identity(d, d));
    let (l0, l1) = check_weak_lyapunov(pair, &p, tol)?;
    let normalized = normalize(pair, &p, tol)?;
    let decomp = common_kernel(&normalized, tol);
    let (k, kp) = (decomp.k, decomp.k_prime);

    let mut verdict = Verdict {
        conclusion: Conclusion::Inconclusive,
        branch: BRANCH_NONE.into(),
        margins: Margins {
            kernel_dim: k,
            output_dim: kp,
            rank_margin: decomp.rank_margin,
            hurwitz_abscissa: abscissa,
            lyapunov_max_eigenvalue: [l0.max_eigenvalue, l1.max_eigenvalue],
            observability_margin: None,
            observability_argmin: None,
            injectivity_margin: None,
        },
        witness: None,
        evidence: None,
        tolerances: Tolerances {
            tol,
            hurwitz_band: opts.hurwitz_band,
            min_rank_margin: MIN_RANK_MARGIN,
            kernel_threshold: decomp.threshold,
            certification_threshold: None,
        },
        grid: GridInfo {
            lambda_points: opts.grid,
            g_resolution: opts.g_resolution,
        },
        endpoint_checks: Vec::new(),
        small_kernel: None,
        g_scan: None,
        notes: Vec::new(),
    };

    if decomp.rank_margin < MIN_RANK_MARGIN {
        verdict.notes.push(format!(
            "the dimension of K is numerically ambiguous (rank margin {:.3e} < {MIN_RANK_MARGIN:.0e}); no certificate is issued",
            decomp.rank_margin
        ));
        return finish(verdict, &normalized, &decomp.k_basis, opts);
    }
    if k == 0 {
        verdict.conclusion = Conclusion::GuasTrivialKernel;
        verdict.branch = BRANCH_TRIVIAL.into();
        return finish(verdict, &normalized, &decomp.k_basis, opts);
    }

    let blocks = block_form(&normalized, &decomp, tol)?;
    let obs = sweep_lambda(&blocks, opts.grid, tol);
    verdict.margins.observability_margin = Some(obs.margin);
    verdict.margins.observability_argmin = Some(argmin_lambda(&obs));
    verdict.tolerances.certification_threshold = Some(obs.certification_threshold);
    verdict.endpoint_checks = endpoint_checks(&normalized, &obs, opts, &mut verdict.notes);

    if let SweepVerdict::FailsAt { lambda, witness } = &obs.verdict {
        let xk = Vector::from_column_slice(witness);
        let kalman = kalman_matrix(&blocks.c(*lambda), &blocks.a(*lambda))?;
        let x_norm = &decomp.k_basis * &xk;
        let raw = normalized.provenance.to_raw(&x_norm);
        let raw = &raw / raw.norm();
        verdict.conclusion = Conclusion::NotGuasConstantInput;
        verdict.branch = BRANCH_NOT.into();
        verdict.witness = Some(Witness {
            lambda: *lambda,
            x_kernel: xk.iter().copied().collect(),
            x_normalized: x_norm.iter().copied().collect(),
            x_raw: raw.iter().copied().collect(),
            kalman_residual: (kalman * &xk).norm(),
        });
        verdict.notes.push(
            "this refutes GUAS of the convexified system directly; for the switched system it relies on the \
             known equivalence between GUAS of the switched and of the convexified system"
                .into(),
        );
        return finish(verdict, &normalized, &decomp.k_basis, opts);
    }
    let observable = obs.is_observable_for_all();
    if !observable {
        verdict.notes.push(format!(
            "the observability margin {:.3e} is between the refutation and certification thresholds",
            obs.margin
        ));
    }

    if observable && kp >= k {
        let inj = sweep_sigma_min(|l| blocks.c(l), opts.grid, tol);
        verdict.margins.injectivity_margin = Some(inj.margin);
        if inj.is_observable_for_all() {
            verdict.conclusion = Conclusion::GuasCInjective;
            verdict.branch = BRANCH_INJECTIVE.into();
            return finish(verdict, &normalized, &decomp.k_basis, opts);
        }
    }

    if k <= 2 {
        verdict.small_kernel = Some(kpetit_classify(&blocks, &obs, tol)?);
        if observable {
            verdict.conclusion = Conclusion::GuasDimKLe2;
            verdict.branch = BRANCH_SMALL.into();
        }
        return finish(verdict, &normalized, &decomp.k_basis, opts);
    }

    if observable {
        let scan = run_g_scan(&blocks, opts);
        let discrete = scan.verdict == GVerdict::Discrete;
        verdict.g_scan = Some(GScanSummary::from(&scan));
        if discrete {
            verdict.conclusion = Conclusion::GuasGDiscrete;
            verdict.branch = BRANCH_G.into();
            return finish(verdict, &normalized, &decomp.k_basis, opts);
        }
        verdict.notes.push(
            "every (C_λ, A_λ) is observable; the open conjecture that this alone implies GUAS would upgrade \
             this result, but it is not used as a decision rule"
                .into(),
        );
    }
    finish(verdict, &normalized, &decomp.k_basis, opts)
}

fn run_g_scan(blocks: &BlockFamily, opts: &AnalyzeOptions) -> GScanReport {
    let geom = LocusGeometry::new(blocks, opts.tol);
    scan_g(&geom, opts.g_resolution, opts.tol)
}

fn argmin_lambda(obs: &ObservabilityReport) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for (&l, &s) in obs.grid.iter().zip(&obs.sigma_min) {
        if s < best.0 {
            best = (s, l);
        }
    }
    for r in &obs.refined {
        if r.sigma_min < best.0 || (r.sigma_min == best.0 && r.lambda < best.1) {
            best = (r.sigma_min, r.lambda);
        }
    }
    best.1
}

fn endpoint_checks(
    pair: &NormalizedPair,
    obs: &ObservabilityReport,
    opts: &AnalyzeOptions,
    notes: &mut Vec<String>,
) -> Vec<EndpointCheck> {
    let mut out = Vec::new();
    for i in 0..2 {
        let sweep_sigma = if i == 0 { obs.sigma_min.first() } else { obs.sigma_min.last() }.copied();
        match hurwitz_observability_crosscheck(pair.b(i), opts.tol, opts.hurwitz_band) {
            Ok(c) => {
                // Hurwitz Bᵢ forces (Cᵢ, Aᵢ) observable on the smaller space K as well.
                let sweep_ok = sweep_sigma.is_none_or(|s| s > opts.tol * obs.scale);
                let agree = c.agree && (!c.hurwitz.hurwitz || sweep_ok);
                if !agree {
                    notes.push(format!("endpoint λ = {i}: Hurwitz and observability checks disagree"));
                }
                out.push(EndpointCheck {
                    index: i,
                    hurwitz: c.hurwitz.hurwitz,
                    observable_on_own_kernel: c.observable,
                    sweep_sigma_min: sweep_sigma,
                    agree,
                });
            }
            Err(e) => notes.push(format!("endpoint λ = {i}: cross-check not available ({e})")),
        }
    }
    out
}

fn finish(mut verdict: Verdict, pair: &NormalizedPair, k_basis: &Mat, opts: &AnalyzeOptions) -> Result<Verdict> {
    let run = match opts.evidence {
        EvidenceMode::Never => false,
        EvidenceMode::Always => true,
        EvidenceMode::IfInconclusive => verdict.conclusion == Conclusion::Inconclusive,
    };
    if run {
        let ev = empirical_evidence(pair, k_basis, opts.n_random, opts.t_end, opts.dt, opts.seed)?;
        if verdict.conclusion.is_guas() && !ev.non_decaying_runs.is_empty() {
            return Err(GuasError::InternalInconsistency(format!(
                "{} certified but {} worst-case runs stopped decaying",
                verdict.conclusion.as_str(),
                ev.non_decaying_runs.len()
            )));
        }
        verdict.evidence = Some(ev);
    }
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{example_by_name, kdeux_example, shared_output_example};

    fn quick() -> AnalyzeOptions {
        AnalyzeOptions {
            evidence: EvidenceMode::Never,
            ..AnalyzeOptions::default()
        }
    }

    #[test]
    fn mason_is_trivial_kernel() {
        let v = analyze(&example_by_name("mason").unwrap().pair, &quick()).unwrap();
        assert_eq!(v.conclusion, Conclusion::GuasTrivialKernel);
        assert_eq!(v.margins.kernel_dim, 0);
    }

    #[test]
    fn kdeux_sign_rule() {
        let v = analyze(&kdeux_example(1.0, 1.0).pair, &quick()).unwrap();
        assert_eq!(v.conclusion, Conclusion::GuasDimKLe2);
        let v = analyze(&kdeux_example(1.0, -1.0).pair, &quick()).unwrap();
        assert_eq!(v.conclusion, Conclusion::NotGuasConstantInput);
        let w = v.witness.unwrap();
        assert!((w.lambda - 0.5).abs() < 1e-9);
        assert!(w.kalman_residual < 1e-9);
        let n: f64 = w.x_kernel.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_output_families() {
        let v = analyze(&shared_output_example(2).unwrap().pair, &quick()).unwrap();
        assert_eq!(v.conclusion, Conclusion::GuasCInjective);
        let v = analyze(&shared_output_example(1).unwrap().pair, &quick()).unwrap();
        assert_eq!(v.conclusion, Conclusion::GuasDimKLe2);
    }

    #[test]
    fn hypotheses_are_checked() {
        let skew = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let pair = MatrixPair::new(skew, -Mat::identity(2, 2), None).unwrap();
        assert!(matches!(analyze(&pair, &quick()), Err(GuasError::NotHurwitz { index: 0, .. })));
        let nondiss = Mat::from_row_slice(2, 2, &[-1.0, 10.0, 0.0, -1.0]);
        let pair = MatrixPair::new(nondiss, -Mat::identity(2, 2), None).unwrap();
        assert!(matches!(
            analyze(&pair, &quick()),
            Err(GuasError::NoCommonWeakLyapunov { index: 0, .. })
        ));
    }

    #[test]
    fn endpoint_checks_agree_on_examples() {
        for name in ["hurwitz", "kdeux", "torus", "shared-output"] {
            let v = analyze(&example_by_name(name).unwrap().pair, &quick()).unwrap();
            assert_eq!(v.endpoint_checks.len(), 2, "{name}");
            assert!(v.endpoint_checks.iter().all(|c| c.agree), "{name}");
        }
    }

    #[test]
    fn json_has_required_keys() {
        let v = analyze(&kdeux_example(1.0, -1.0).pair, &quick()).unwrap();
        let j = serde_json::to_value(&v).unwrap();
        for key in ["conclusion", "branch", "margins", "witness", "tolerances", "grid"] {
            assert!(j.get(key).is_some(), "{key}");
        }
        assert_eq!(j["conclusion"], "NOT_GUAS_constant_input");
    }
}
