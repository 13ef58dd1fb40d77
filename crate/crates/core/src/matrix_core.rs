//! The raw matrix pair, weak Lyapunov checks, normalization to an identity
//! Lyapunov matrix, Hurwitz tests and the planar strict-Lyapunov search.

use serde::Serialize;

use crate::error::{GuasError, Result};
use crate::linalg::{frobenius, max_eigen_sym, spectral_abscissa, sym_eigen, Mat, Vector};
use crate::DEFAULT_TOL;

/// The pair `(B0, B1)` with an optional Lyapunov candidate `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPair {
    b0: Mat,
    b1: Mat,
    p: Option<Mat>,
}

impl MatrixPair {
    pub fn new(b0: Mat, b1: Mat, p: Option<Mat>) -> Result<Self> {
        if !b0.is_square() {
            return Err(GuasError::NotSquare {
                name: "B0",
                rows: b0.nrows(),
                cols: b0.ncols(),
            });
        }
        if !b1.is_square() {
            return Err(GuasError::NotSquare {
                name: "B1",
                rows: b1.nrows(),
                cols: b1.ncols(),
            });
        }
        if b0.nrows() != b1.nrows() {
            return Err(GuasError::DimensionMismatch(format!(
                "B0 is {}x{} but B1 is {}x{}",
                b0.nrows(),
                b0.ncols(),
                b1.nrows(),
                b1.ncols()
            )));
        }
        if b0.nrows() == 0 {
            return Err(GuasError::DimensionMismatch("dimension must be at least 1".into()));
        }
        if let Some(p) = &p {
            validate_lyapunov_candidate(p, b0.nrows(), DEFAULT_TOL)?;
        }
        Ok(Self { b0, b1, p })
    }

    pub fn dim(&self) -> usize {
        self.b0.nrows()
    }

    pub fn b0(&self) -> &Mat {
        &self.b0
    }

    pub fn b1(&self) -> &Mat {
        &self.b1
    }

    pub fn b(&self, i: usize) -> &Mat {
        if i == 0 {
            &self.b0
        } else {
            &self.b1
        }
    }

    pub fn lyapunov(&self) -> Option<&Mat> {
        self.p.as_ref()
    }
}

fn validate_lyapunov_candidate(p: &Mat, d: usize, tol: f64) -> Result<()> {
    if !p.is_square() {
        return Err(GuasError::NotSquare {
            name: "P",
            rows: p.nrows(),
            cols: p.ncols(),
        });
    }
    if p.nrows() != d {
        return Err(GuasError::DimensionMismatch(format!(
            "P is {}x{} but the pair has dimension {d}",
            p.nrows(),
            p.ncols()
        )));
    }
    let scale = 1.0 + frobenius(p);
    let asym = frobenius(&(p - p.transpose()));
    if asym > tol * scale {
        return Err(GuasError::NotSymmetric {
            name: "P",
            asymmetry: asym,
        });
    }
    let (vals, _) = sym_eigen(p);
    let min = vals[0];
    if min <= tol * scale {
        return Err(GuasError::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// `Bᵀ + B`.
pub fn symmetric_part(b: &Mat) -> Mat {
    // Floating-point addition commutes, so the result is exactly symmetric.
    b.transpose() + b
}

/// Outcome of a negative-semidefiniteness test `λ_max(S) ≤ tol·(1 + ‖S‖_F)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemidefVerdict {
    pub holds: bool,
    pub max_eigenvalue: f64,
    /// Unit vector `X` with `XᵀSX` above the tolerance; present iff `holds` is false.
    pub witness: Option<Vec<f64>>,
}

pub fn check_negative_semidefinite(s: &Mat, tol: f64) -> SemidefVerdict {
    let (lmax, v) = max_eigen_sym(s);
    let bound = tol * (1.0 + frobenius(s));
    let holds = lmax <= bound;
    SemidefVerdict {
        holds,
        max_eigenvalue: lmax,
        witness: if holds { None } else { Some(v.iter().copied().collect()) },
    }
}

/// Test `BᵢᵀP + PBᵢ ⪯ 0` for both matrices of the pair.
pub fn check_weak_lyapunov(
    pair: &MatrixPair,
    p: &Mat,
    tol: f64,
) -> Result<(SemidefVerdict, SemidefVerdict)> {
    validate_lyapunov_candidate(p, pair.dim(), tol)?;
    let check = |b: &Mat| {
        let m = b.transpose() * p + p * b;
        check_negative_semidefinite(&((m.transpose() + &m) * 0.5), tol)
    };
    Ok((check(pair.b0()), check(pair.b1())))
}

/// How a [`NormalizedPair`] was obtained from the raw pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Identity,
    /// `Bᵢ' = P^{1/2} Bᵢ P^{-1/2}`.
    SqrtSimilarity { sqrt_p: Mat, inv_sqrt_p: Mat },
}

impl Provenance {
    /// Map a state expressed in normalized coordinates back to the raw ones.
    pub fn to_raw(&self, x: &Vector) -> Vector {
        match self {
            Provenance::Identity => x.clone(),
            Provenance::SqrtSimilarity { inv_sqrt_p, .. } => inv_sqrt_p * x,
        }
    }

    /// Map a raw state into normalized coordinates.
    pub fn from_raw(&self, x: &Vector) -> Vector {
        match self {
            Provenance::Identity => x.clone(),
            Provenance::SqrtSimilarity { sqrt_p, .. } => sqrt_p * x,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Provenance::Identity => "identity",
            Provenance::SqrtSimilarity { .. } => "P^(1/2) B P^(-1/2)",
        }
    }
}

/// Pair normalized so that the common Lyapunov matrix is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPair {
    pub b0: Mat,
    pub b1: Mat,
    /// `B0ᵀ + B0`
    pub s0: Mat,
    /// `B1ᵀ + B1`
    pub s1: Mat,
    pub provenance: Provenance,
}

impl NormalizedPair {
    pub fn dim(&self) -> usize {
        self.b0.nrows()
    }

    pub fn b(&self, i: usize) -> &Mat {
        if i == 0 {
            &self.b0
        } else {
            &self.b1
        }
    }

    pub fn s(&self, i: usize) -> &Mat {
        if i == 0 {
            &self.s0
        } else {
            &self.s1
        }
    }

    /// Build directly from matrices already satisfying `Bᵢᵀ + Bᵢ ⪯ 0`.
    pub fn from_identity(b0: Mat, b1: Mat, tol: f64) -> Result<Self> {
        let pair = MatrixPair::new(b0, b1, None)?;
        normalize(&pair, &Mat::identity(pair.dim(), pair.dim()), tol)
    }
}

/// Similarity transform to the identity Lyapunov matrix.
pub fn normalize(pair: &MatrixPair, p: &Mat, tol: f64) -> Result<NormalizedPair> {
    let (v0, v1) = check_weak_lyapunov(pair, p, tol)?;
    for (index, v) in [v0, v1].into_iter().enumerate() {
        if !v.holds {
            return Err(GuasError::NoCommonWeakLyapunov {
                index,
                max_eigenvalue: v.max_eigenvalue,
            });
        }
    }
    let d = pair.dim();
    let (b0, b1, provenance) = if *p == Mat::identity(d, d) {
        (pair.b0().clone(), pair.b1().clone(), Provenance::Identity)
    } else {
        let (vals, vecs) = sym_eigen(p);
        let root = Mat::from_diagonal(&Vector::from_iterator(d, vals.iter().map(|v| v.sqrt())));
        let inv_root =
            Mat::from_diagonal(&Vector::from_iterator(d, vals.iter().map(|v| 1.0 / v.sqrt())));
        let sqrt_p = &vecs * root * vecs.transpose();
        let inv_sqrt_p = &vecs * inv_root * vecs.transpose();
        let sqrt_p = (&sqrt_p + sqrt_p.transpose()) * 0.5;
        let inv_sqrt_p = (&inv_sqrt_p + inv_sqrt_p.transpose()) * 0.5;
        (
            &sqrt_p * pair.b0() * &inv_sqrt_p,
            &sqrt_p * pair.b1() * &inv_sqrt_p,
            Provenance::SqrtSimilarity { sqrt_p, inv_sqrt_p },
        )
    };
    Ok(NormalizedPair {
        s0: symmetric_part(&b0),
        s1: symmetric_part(&b1),
        b0,
        b1,
        provenance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HurwitzReport {
    pub hurwitz: bool,
    pub abscissa: f64,
    /// Abscissa within `[-tol, tol]`: neither clearly stable nor clearly unstable.
    pub marginal: bool,
}

/// Hurwitz iff the spectral abscissa is below `-tol`.
pub fn is_hurwitz(b: &Mat, tol: f64) -> HurwitzReport {
    let abscissa = spectral_abscissa(b);
    HurwitzReport {
        hurwitz: abscissa < -tol,
        abscissa,
        marginal: abscissa.abs() <= tol,
    }
}

/// `(1 − λ)B0 + λB1` on the normalized pair.
pub fn convex_combination(pair: &NormalizedPair, lambda: f64) -> Result<Mat> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(GuasError::LambdaOutOfRange(lambda));
    }
    Ok(&pair.b0 * (1.0 - lambda) + &pair.b1 * lambda)
}

/// The quadratic `det Mᵢ(q, r)` as
/// `c_qq q² + c_qr q r + c_rr r² + c_q q + c_r r + c_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conic {
    pub c_qq: f64,
    pub c_qr: f64,
    pub c_rr: f64,
    pub c_q: f64,
    pub c_r: f64,
    pub c_0: f64,
}

impl Conic {
    /// `det(BᵀP + PB)` for `P = [[1, q], [q, r]]`.
    pub fn lyapunov_determinant(b: &Mat) -> Self {
        let (a, bb, c, d) = (b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
        Conic {
            c_qq: 4.0 * bb * c - (a + d) * (a + d),
            c_qr: 2.0 * c * (d - a),
            c_rr: -c * c,
            c_q: 2.0 * bb * (a - d),
            c_r: 4.0 * a * d - 2.0 * bb * c,
            c_0: -bb * bb,
        }
    }

    pub fn value(&self, q: f64, r: f64) -> f64 {
        self.c_qq * q * q
            + self.c_qr * q * r
            + self.c_rr * r * r
            + self.c_q * q
            + self.c_r * r
            + self.c_0
    }

    /// Geometry of the curve `value = 0` when it is a real ellipse.
    pub fn ellipse(&self) -> Option<Ellipse> {
        let quad = Mat::from_row_slice(
            2,
            2,
            &[self.c_qq, 0.5 * self.c_qr, 0.5 * self.c_qr, self.c_rr],
        );
        let det = quad.determinant();
        if det <= 0.0 {
            return None;
        }
        let inv = quad.clone().try_inverse()?;
        let center = -0.5 * &inv * Vector::from_row_slice(&[self.c_q, self.c_r]);
        let (cq, cr) = (center[0], center[1]);
        let f0 = self.value(cq, cr);
        // Orient so that the quadratic part is positive definite: yᵀ Q' y = level.
        let sign = if self.c_qq + self.c_rr > 0.0 { 1.0 } else { -1.0 };
        let q_pos = &quad * sign;
        let level = -f0 * sign;
        if level <= 0.0 {
            return None;
        }
        let (mu, vecs) = sym_eigen(&q_pos);
        let major_len = (level / mu[0]).sqrt();
        let minor_len = (level / mu[1]).sqrt();
        let major_dir = vecs.column(0).into_owned();
        let minor_dir = vecs.column(1).into_owned();
        let mut vertices = [
            (cq + major_len * major_dir[0], cr + major_len * major_dir[1]),
            (cq - major_len * major_dir[0], cr - major_len * major_dir[1]),
        ];
        vertices.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
        let q_inv = q_pos.try_inverse()?;
        let half_q = (level * q_inv[(0, 0)]).sqrt();
        let half_r = (level * q_inv[(1, 1)]).sqrt();
        Some(Ellipse {
            center: (cq, cr),
            semi_axes: (major_len, minor_len),
            major_axis: (major_dir[0], major_dir[1]),
            minor_axis: (minor_dir[0], minor_dir[1]),
            vertices,
            bbox: ((cq - half_q, cq + half_q), (cr - half_r, cr + half_r)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ellipse {
    pub center: (f64, f64),
    /// (major, minor) semi-axis lengths.
    pub semi_axes: (f64, f64),
    pub major_axis: (f64, f64),
    pub minor_axis: (f64, f64),
    /// Endpoints of the major axis, sorted by `r`.
    pub vertices: [(f64, f64); 2],
    /// `((q_min, q_max), (r_min, r_max))`
    pub bbox: ((f64, f64), (f64, f64)),
}

impl Ellipse {
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                let (a, b) = self.semi_axes;
                (
                    self.center.0 + a * t.cos() * self.major_axis.0 + b * t.sin() * self.minor_axis.0,
                    self.center.1 + a * t.cos() * self.major_axis.1 + b * t.sin() * self.minor_axis.1,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveReport {
    pub conic: Conic,
    pub ellipse: Option<Ellipse>,
    /// Points on `det Mᵢ = 0` (empty when the curve is not an ellipse).
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrictLyapunovReport {
    /// `(q, r)` such that `P = [[1, q], [q, r]]` is a strict common Lyapunov matrix.
    pub strict: Option<(f64, f64)>,
    /// Smallest value found of `max(λ_max(M0), λ_max(M1), −λ_min(P))`.
    pub best_objective: f64,
    pub best_point: (f64, f64),
    pub curves: [CurveReport; 2],
    /// `((q_min, q_max), (r_min, r_max))` actually searched; `None` when the
    /// ellipse boxes are disjoint and no search was needed.
    pub searched_box: Option<((f64, f64), (f64, f64))>,
    pub verdict: String,
    pub restriction: String,
}

fn lyapunov_objective(pair: &MatrixPair, q: f64, r: f64) -> (f64, bool) {
    let p = Mat::from_row_slice(2, 2, &[1.0, q, q, r]);
    let (pvals, _) = sym_eigen(&p);
    let mut worst = -pvals[0];
    let mut strict = pvals[0] > DEFAULT_TOL * (1.0 + frobenius(&p));
    for i in 0..2 {
        let b = pair.b(i);
        let m = b.transpose() * &p + &p * b;
        let (lmax, _) = max_eigen_sym(&m);
        worst = worst.max(lmax);
        strict &= lmax < -DEFAULT_TOL * (1.0 + frobenius(&m));
    }
    (worst, strict)
}

/// Search for `P = [[1, q], [q, r]]` with `BᵢᵀP + PBᵢ ≺ 0` for both matrices.
///
/// The feasible set is convex in `(q, r)`; it is searched by a grid over the
/// bounding boxes of the curves `det Mᵢ = 0`, followed by repeated zooming
/// around the best grid points.
pub fn strict_lyapunov_2x2(pair: &MatrixPair) -> Result<StrictLyapunovReport> {
    if pair.dim() != 2 {
        return Err(GuasError::DimensionMismatch(format!(
            "planar Lyapunov search needs d = 2, got d = {}",
            pair.dim()
        )));
    }
    let curves: [CurveReport; 2] = [0, 1].map(|i| {
        let conic = Conic::lyapunov_determinant(pair.b(i));
        let ellipse = conic.ellipse();
        CurveReport {
            conic,
            samples: ellipse.map(|e| e.sample(64)).unwrap_or_default(),
            ellipse,
        }
    });
    let restriction = "P is searched in the normalized form P11 = 1; candidates with P11 = 0 \
                       are not covered"
        .to_string();

    let boxes: Vec<_> = curves.iter().filter_map(|c| c.ellipse.map(|e| e.bbox)).collect();
    let search_box = match boxes.as_slice() {
        [a, b] => {
            let q = (a.0 .0.max(b.0 .0), a.0 .1.min(b.0 .1));
            let r = (a.1 .0.max(b.1 .0), a.1 .1.min(b.1 .1));
            let pad_q = 1e-9 * (1.0 + q.0.abs().max(q.1.abs()));
            let pad_r = 1e-9 * (1.0 + r.0.abs().max(r.1.abs()));
            if q.0 > q.1 + pad_q || r.0 > r.1 + pad_r {
                None
            } else {
                Some(((q.0 - pad_q, q.1 + pad_q), (r.0 - pad_r, r.1 + pad_r)))
            }
        }
        [a] => Some(*a),
        _ => Some(((-10.0, 10.0), (0.0, 100.0))),
    };

    let Some(bx) = search_box else {
        return Ok(StrictLyapunovReport {
            strict: None,
            best_objective: f64::INFINITY,
            best_point: (f64::NAN, f64::NAN),
            curves,
            searched_box: None,
            verdict: "no strict common quadratic Lyapunov function of this normalized form \
                      (the regions det M_i > 0 do not overlap)"
                .into(),
            restriction,
        });
    };

    let mut best = ((0.0, 0.0), f64::INFINITY, false);
    let consider = |q: f64, r: f64, best: &mut ((f64, f64), f64, bool)| {
        let (f, strict) = lyapunov_objective(pair, q, r);
        if (strict && !best.2) || (strict == best.2 && f < best.1) {
            *best = ((q, r), f, strict);
        }
        f
    };

    // Coarse grid, remembering the best few cells as zoom seeds.
    let n = 81;
    let ((q0, q1), (r0, r1)) = bx;
    let (hq, hr) = ((q1 - q0) / (n - 1) as f64, (r1 - r0) / (n - 1) as f64);
    let mut scored = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (q, r) = (q0 + i as f64 * hq, r0 + j as f64 * hr);
            let f = consider(q, r, &mut best);
            scored.push((f, q, r));
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    for &(_, qs, rs) in scored.iter().take(5) {
        let (mut cq, mut cr, mut wq, mut wr) = (qs, rs, 2.0 * hq, 2.0 * hr);
        for _ in 0..40 {
            let m = 11;
            let mut local = ((cq, cr), f64::INFINITY);
            for i in 0..m {
                for j in 0..m {
                    let q = cq - wq + 2.0 * wq * i as f64 / (m - 1) as f64;
                    let r = cr - wr + 2.0 * wr * j as f64 / (m - 1) as f64;
                    let f = consider(q, r, &mut best);
                    if f < local.1 {
                        local = ((q, r), f);
                    }
                }
            }
            (cq, cr) = local.0;
            wq *= 0.5;
            wr *= 0.5;
        }
        if best.2 {
            break;
        }
    }

    let (pt, f, strict) = best;
    let verdict = if strict {
        format!("strict common quadratic Lyapunov function found at (q, r) = ({:.6}, {:.6})", pt.0, pt.1)
    } else {
        "no strict common quadratic Lyapunov function of this normalized form".to_string()
    };
    Ok(StrictLyapunovReport {
        strict: strict.then_some(pt),
        best_objective: f,
        best_point: pt,
        curves,
        searched_box: Some(bx),
        verdict,
        restriction,
    })
}
