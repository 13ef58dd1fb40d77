//! Kalman-rank observability of `(C_λ, A_λ)`, the sweep over λ ∈ [0, 1], and
//! the single-matrix check "Hurwitz ⇔ observable" for `Bᵀ + B ⪯ 0`.

use rayon::prelude::*;
use serde::Serialize;

use crate::decomposition::BlockFamily;
use crate::error::{GuasError, Result};
use crate::linalg::{
    canonical_basis, frobenius, max_eigen_sym, sigma_extremes, skew_part, sorted_svd, spectral_norm,
    split_kernel, Mat,
};
use crate::matrix_core::{is_hurwitz, HurwitzReport};

/// Spectral-abscissa band treated as marginal by the Hurwitz tests.
pub const DEFAULT_HURWITZ_BAND: f64 = 1e-7;
/// Default λ grid size for sweeps.
pub const DEFAULT_GRID: usize = 257;
/// Width of the bracket left by the golden-section refinement.
pub const REFINE_WIDTH: f64 = 1e-8;
/// At most this many grid-local minima are refined, smallest first.
pub const MAX_REFINED: usize = 32;

/// `[C; CA; CA²; …; CA^{k−1}]`.
pub fn kalman_matrix(c: &Mat, a: &Mat) -> Result<Mat> {
    let k = a.nrows();
    if !a.is_square() || c.ncols() != k {
        return Err(GuasError::DimensionMismatch(format!(
            "Kalman matrix needs A square and C with {k} columns, got A {:?}, C {:?}",
            a.shape(),
            c.shape()
        )));
    }
    let kp = c.nrows();
    let mut out = Mat::zeros(k * kp, k);
    let mut block = c.clone();
    for j in 0..k {
        out.view_mut((j * kp, 0), (kp, k)).copy_from(&block);
        block = &block * a;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairObservability {
    pub observable: bool,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Orthonormal basis of the numerical unobservable subspace (present iff not observable).
    pub unobservable_basis: Option<Mat>,
}

/// Observable iff `σ_min(Kalman) > tol · max(1, σ_max(Kalman))`.
pub fn pair_observable(c: &Mat, a: &Mat, tol: f64) -> Result<PairObservability> {
    let kal = kalman_matrix(c, a)?;
    let k = a.nrows();
    if k == 0 {
        return Ok(PairObservability {
            observable: true,
            sigma_min: f64::INFINITY,
            sigma_max: 0.0,
            unobservable_basis: None,
        });
    }
    let (smin, smax, _) = sigma_extremes(&kal);
    let threshold = tol * smax.max(1.0);
    if smin > threshold {
        return Ok(PairObservability {
            observable: true,
            sigma_min: smin,
            sigma_max: smax,
            unobservable_basis: None,
        });
    }
    let (s, v) = sorted_svd(&kal);
    let structural = kal.nrows().min(k);
    let null_cols: Vec<usize> = (0..k)
        .filter(|&i| i >= structural || s[i] <= threshold)
        .collect();
    let raw = Mat::from_fn(k, null_cols.len(), |r, c| v[(r, null_cols[c])]);
    let basis = canonical_basis(&(&raw * raw.transpose()), null_cols.len());
    Ok(PairObservability {
        observable: false,
        sigma_min: smin,
        sigma_max: smax,
        unobservable_basis: Some(basis),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepVerdict {
    ObservableForAll,
    FailsAt { lambda: f64, witness: Vec<f64> },
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinedMinimum {
    pub lambda: f64,
    pub sigma_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservabilityReport {
    pub grid: Vec<f64>,
    pub sigma_min: Vec<f64>,
    pub refined: Vec<RefinedMinimum>,
    pub verdict: SweepVerdict,
    /// Smallest σ_min seen (grid and refinement); `+∞` when `K = {0}`.
    pub margin: f64,
    /// `max(1, max σ_max)`; every threshold below is relative to it.
    pub scale: f64,
    pub tol: f64,
    /// Margins above `certification_threshold` certify observability for all λ.
    pub certification_threshold: f64,
}

impl ObservabilityReport {
    pub fn is_observable_for_all(&self) -> bool {
        self.verdict == SweepVerdict::ObservableForAll
    }
}

/// Grid + local refinement of λ ↦ σ_min(M(λ)) over [0, 1].
///
/// Used for the Kalman matrix of `(C_λ, A_λ)` and for `C_λ` alone.
pub fn sweep_sigma_min<F>(matrix_at: F, n_grid: usize, tol: f64) -> ObservabilityReport
where
    F: Fn(f64) -> Mat + Sync,
{
    let n_grid = n_grid.max(2);
    let grid: Vec<f64> = (0..n_grid).map(|i| i as f64 / (n_grid - 1) as f64).collect();
    let evals: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&l| {
            let (smin, smax, _) = sigma_extremes(&matrix_at(l));
            (smin, smax)
        })
        .collect();
    let sigma: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let scale = evals.iter().map(|e| e.1).fold(1.0, f64::max);
    let cert = 100.0 * tol * scale;
    let eval = |l: f64| sigma_extremes(&matrix_at(l.clamp(0.0, 1.0))).0;

    let mut minima: Vec<usize> = (0..n_grid)
        .filter(|&i| {
            (i == 0 || sigma[i] <= sigma[i - 1]) && (i + 1 == n_grid || sigma[i] <= sigma[i + 1])
        })
        .collect();
    minima.sort_by(|&a, &b| sigma[a].total_cmp(&sigma[b]).then(a.cmp(&b)));
    minima.truncate(MAX_REFINED);
    minima.sort_unstable();
    let refined: Vec<RefinedMinimum> = minima
        .par_iter()
        .map(|&i| {
            let lo = grid[i.saturating_sub(1)];
            let hi = grid[(i + 1).min(n_grid - 1)];
            refine_minimum(&eval, lo, hi, grid[i], sigma[i])
        })
        .collect();
    // Deterministic reduction: smallest value, smallest λ on ties.
    let mut best = RefinedMinimum {
        lambda: grid[0],
        sigma_min: sigma[0],
    };
    for (&l, &s) in grid.iter().zip(&sigma) {
        if s < best.sigma_min {
            best = RefinedMinimum { lambda: l, sigma_min: s };
        }
    }
    for r in &refined {
        if r.sigma_min < best.sigma_min
            || (r.sigma_min == best.sigma_min && r.lambda < best.lambda)
        {
            best = *r;
        }
    }

    let verdict = if best.sigma_min < tol * scale {
        let (_, _, witness) = sigma_extremes(&matrix_at(best.lambda));
        let mut w = witness;
        crate::linalg::fix_sign(&mut w);
        SweepVerdict::FailsAt {
            lambda: best.lambda,
            witness: w.iter().copied().collect(),
        }
    } else if best.sigma_min > cert {
        SweepVerdict::ObservableForAll
    } else {
        SweepVerdict::Inconclusive
    };
    ObservabilityReport {
        grid,
        sigma_min: sigma,
        refined,
        verdict,
        margin: best.sigma_min,
        scale,
        tol,
        certification_threshold: cert,
    }
}

/// Golden-section search on `[lo, hi]` down to [`REFINE_WIDTH`], followed by
/// intersecting the two secant lines on either side of the minimum. The
/// second step lands on isolated zeros where σ_min has a V-shaped kink.
fn refine_minimum(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, start: f64, fstart: f64) -> RefinedMinimum {
    let mut best = RefinedMinimum {
        lambda: start,
        sigma_min: fstart,
    };
    let consider = |l: f64, v: f64, best: &mut RefinedMinimum| {
        if v < best.sigma_min || (v == best.sigma_min && l < best.lambda) {
            *best = RefinedMinimum { lambda: l, sigma_min: v };
        }
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    consider(x1, f1, &mut best);
    consider(x2, f2, &mut best);
    while b - a > REFINE_WIDTH {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
            consider(x1, f1, &mut best);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
            consider(x2, f2, &mut best);
        }
    }
    for h in [1e-6, 1e-8, 1e-10] {
        let m = best.lambda;
        let pts = [m - 2.0 * h, m - h, m + h, m + 2.0 * h].map(|l| l.clamp(0.0, 1.0));
        let vals = pts.map(f);
        for (l, v) in pts.iter().zip(vals.iter()) {
            consider(*l, *v, &mut best);
        }
        let (dl, dr) = (pts[1] - pts[0], pts[3] - pts[2]);
        if dl <= 0.0 || dr <= 0.0 {
            continue;
        }
        let sl = (vals[1] - vals[0]) / dl;
        let sr = (vals[3] - vals[2]) / dr;
        if sl < 0.0 && sr > 0.0 {
            // vals[1] + sl (x − pts[1]) = vals[2] + sr (x − pts[2])
            let x = (vals[2] - vals[1] + sl * pts[1] - sr * pts[2]) / (sl - sr);
            if x.is_finite() {
                let x = x.clamp(0.0, 1.0);
                consider(x, f(x), &mut best);
            }
        }
    }
    best
}

/// Sweep the Kalman matrix of `(C_λ, A_λ)` over λ ∈ [0, 1].
pub fn sweep_lambda(blocks: &BlockFamily, n_grid: usize, tol: f64) -> ObservabilityReport {
    if blocks.k() == 0 {
        return ObservabilityReport {
            grid: Vec::new(),
            sigma_min: Vec::new(),
            refined: Vec::new(),
            verdict: SweepVerdict::ObservableForAll,
            margin: f64::INFINITY,
            scale: 1.0,
            tol,
            certification_threshold: 0.0,
        };
    }
    sweep_sigma_min(
        |l| kalman_matrix(&blocks.c(l), &blocks.a(l)).expect("block family has consistent shapes"),
        n_grid,
        tol,
    )
}

/// Upper bound on the λ-Lipschitz constant of σ_min(Kalman(λ)).
pub fn kalman_lipschitz_bound(blocks: &BlockFamily) -> f64 {
    let alpha = spectral_norm(&blocks.a0).max(spectral_norm(&blocks.a1));
    let gamma = spectral_norm(&blocks.c0).max(spectral_norm(&blocks.c1));
    let dc = spectral_norm(&(&blocks.c1 - &blocks.c0));
    let da = spectral_norm(&(&blocks.a1 - &blocks.a0));
    let mut sum = 0.0;
    for j in 0..blocks.k() {
        let jf = j as f64;
        let row = dc * alpha.powi(j as i32)
            + if j > 0 { jf * gamma * alpha.powi(j as i32 - 1) * da } else { 0.0 };
        sum += row * row;
    }
    sum.sqrt()
}

/// Grid indices `i` where `|σ(λ_{i+1}) − σ(λ_i)|` exceeds the Lipschitz bound.
pub fn continuity_violations(report: &ObservabilityReport, lipschitz: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 0..report.grid.len().saturating_sub(1) {
        let dl = report.grid[i + 1] - report.grid[i];
        let ds = (report.sigma_min[i + 1] - report.sigma_min[i]).abs();
        if ds > lipschitz * dl * (1.0 + 1e-9) + 1e-12 {
            out.push(i);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckReport {
    pub hurwitz: HurwitzReport,
    pub observable: bool,
    pub sigma_min: f64,
    /// `dim ker(Bᵀ + B)`.
    pub kernel_dim: usize,
    pub agree: bool,
}

/// Compare "B is Hurwitz" with "(C, A) is observable" where `A`, `C` are read
/// off `B` in the frame `ker(Bᵀ+B) ⊕ ker(Bᵀ+B)^⊥`.
pub fn hurwitz_observability_crosscheck(
    b: &Mat,
    tol: f64,
    hurwitz_band: f64,
) -> Result<CrosscheckReport> {
    if !b.is_square() {
        return Err(GuasError::NotSquare {
            name: "B",
            rows: b.nrows(),
            cols: b.ncols(),
        });
    }
    let d = b.nrows();
    let s = b.transpose() + b;
    let (lmax, _) = max_eigen_sym(&s);
    if lmax > tol * (1.0 + frobenius(&s)) {
        return Err(GuasError::NotDissipative { max_eigenvalue: lmax });
    }
    let split = split_kernel(&s, tol);
    let k = split.kernel.ncols();
    let mut frame = Mat::zeros(d, d);
    frame.view_mut((0, 0), (d, k)).copy_from(&split.kernel);
    frame.view_mut((0, k), (d, d - k)).copy_from(&split.complement);
    let m = frame.transpose() * b * &frame;
    let a = skew_part(&m.view((0, 0), (k, k)).into_owned());
    let c = m.view((k, 0), (d - k, k)).into_owned();
    let dd = m.view((k, k), (d - k, d - k)).into_owned();
    if d > k {
        let (dmax, _) = max_eigen_sym(&(dd.transpose() + &dd));
        if dmax >= 0.0 {
            return Err(GuasError::StructureViolation(format!(
                "Dᵀ + D is not negative definite on the complement of the kernel (λ_max = {dmax:.3e})"
            )));
        }
    }
    let hurwitz = is_hurwitz(b, hurwitz_band);
    let obs = pair_observable(&c, &a, tol)?;
    Ok(CrosscheckReport {
        hurwitz,
        observable: obs.observable,
        sigma_min: obs.sigma_min,
        kernel_dim: k,
        agree: hurwitz.hurwitz == obs.observable,
    })
}
