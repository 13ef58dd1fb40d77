//! Where the output can vanish: the cone `F`, the null part `N`, the
//! killing parameter λ(x), the tangency set `G` on the unit sphere and the
//! classification for `dim K ≤ 2`.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::decomposition::BlockFamily;
use crate::error::{GuasError, Result};
use crate::linalg::{spectral_norm, split_kernel, subspace_distance, sym_eigen, Mat, Vector};
use crate::observability::{ObservabilityReport, SweepVerdict};

/// Default sphere resolution of [`scan_g`].
pub const DEFAULT_RESOLUTION: usize = 48;
/// Clusters with diameter at most this are treated as single points.
pub const POINT_DIAMETER: f64 = 1e-6;
const PCA_RATIO: f64 = 0.1;
const LM_MAX_ITER: usize = 200;

/// All 2×2 minors `u_i v_j − u_j v_i`, `i < j`, in lexicographic order.
pub fn wedge(u: &Vector, v: &Vector) -> Result<Vector> {
    if u.len() != v.len() {
        return Err(GuasError::DimensionMismatch(format!(
            "wedge of vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(wedge_unchecked(u, v))
}

fn wedge_unchecked(u: &Vector, v: &Vector) -> Vector {
    let n = u.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(u[i] * v[j] - u[j] * v[i]);
        }
    }
    Vector::from_vec(out)
}

/// Membership of a point in the cone `F`, with both characterisations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FMembership {
    /// Colinear (wedge ≈ 0) and non-acute (⟨C₀x, C₁x⟩ ≤ tol).
    pub primary: bool,
    /// `⟨C₀x, C₁x⟩ + ‖C₀x‖‖C₁x‖ ≤ tol`.
    pub dual: bool,
    pub wedge_norm: f64,
    pub inner: f64,
    pub norm_product: f64,
}

pub struct LocusGeometry<'a> {
    pub blocks: &'a BlockFamily,
    /// Orthonormal basis of `N = ker C₀ ∩ ker C₁` (k × dim N).
    pub n_basis: Mat,
    pub k: usize,
    pub k_prime: usize,
    c_scale: f64,
    w_scale: f64,
}

impl<'a> LocusGeometry<'a> {
    pub fn new(blocks: &'a BlockFamily, tol: f64) -> Self {
        let k = blocks.k();
        let kp = blocks.k_prime();
        let mut stacked = Mat::zeros(2 * kp, k);
        stacked.view_mut((0, 0), (kp, k)).copy_from(&blocks.c0);
        stacked.view_mut((kp, 0), (kp, k)).copy_from(&blocks.c1);
        let n_basis = split_kernel(&stacked, tol).kernel;
        let c_scale = spectral_norm(&blocks.c0)
            .max(spectral_norm(&blocks.c1))
            .max(1.0);
        let a_scale = spectral_norm(&blocks.a0)
            .max(spectral_norm(&blocks.a1))
            .max(1.0);
        LocusGeometry {
            blocks,
            n_basis,
            k,
            k_prime: kp,
            c_scale,
            w_scale: c_scale * c_scale * a_scale,
        }
    }

    fn check_len(&self, x: &Vector) -> Result<()> {
        if x.len() != self.k {
            return Err(GuasError::DimensionMismatch(format!(
                "point of length {} in K of dimension {}",
                x.len(),
                self.k
            )));
        }
        Ok(())
    }

    fn outputs(&self, x: &Vector) -> (Vector, Vector) {
        (&self.blocks.c0 * x, &self.blocks.c1 * x)
    }

    /// True when `x` lies in `N` up to `tol` (relative to `‖x‖` and the scale of `C`).
    pub fn in_n(&self, x: &Vector, tol: f64) -> bool {
        let nx = x.norm();
        if nx == 0.0 {
            return true;
        }
        let (u, v) = self.outputs(&(x / nx));
        u.norm().max(v.norm()) <= tol * self.c_scale
    }

    pub fn f_membership(&self, x: &Vector, tol: f64) -> Result<FMembership> {
        self.check_len(x)?;
        let nx = x.norm();
        let xn = if nx > 0.0 { x / nx } else { x.clone() };
        let (u, v) = self.outputs(&xn);
        let u = u / self.c_scale;
        let v = v / self.c_scale;
        let w = wedge_unchecked(&u, &v).norm();
        let inner = u.dot(&v);
        let prod = u.norm() * v.norm();
        Ok(FMembership {
            primary: w <= tol * (1.0 + prod) && inner <= tol,
            dual: inner + prod <= tol,
            wedge_norm: w,
            inner,
            norm_product: prod,
        })
    }

    /// `C₀x ∧ C₁x = 0` and `⟨C₀x, C₁x⟩ ≤ 0`, tested on `x/‖x‖` so the answer is scale invariant.
    pub fn in_f(&self, x: &Vector, tol: f64) -> Result<bool> {
        Ok(self.f_membership(x, tol)?.primary)
    }

    /// The unique λ with `C_λ x = 0` for `x ∈ F \ N`.
    pub fn lambda_of(&self, x: &Vector, tol: f64) -> Result<f64> {
        self.check_len(x)?;
        if self.in_n(x, tol) {
            return Err(GuasError::InNullSpace);
        }
        if !self.in_f(x, tol)? {
            return Err(GuasError::NotInF);
        }
        let xn = x / x.norm();
        let (u, v) = self.outputs(&xn);
        let diff = &u - &v;
        let lambda = diff.dot(&u) / diff.norm_squared();
        if !(-tol..=1.0 + tol).contains(&lambda) {
            return Err(GuasError::InternalInconsistency(format!(
                "killing parameter {lambda} outside [0, 1] for a point of F"
            )));
        }
        let lambda = lambda.clamp(0.0, 1.0);
        let killed = (&self.blocks.c(lambda) * &xn).norm();
        let bound = tol.max(1e-12) * 10.0 * self.c_scale;
        if killed >= bound {
            return Err(GuasError::InternalInconsistency(format!(
                "C_λ x = {killed:.3e} at λ(x) = {lambda}"
            )));
        }
        Ok(lambda)
    }

    /// `C₀A_λx ∧ C₁x + C₀x ∧ C₁A_λx`, scaled by `‖C‖²‖A‖`.
    pub fn g_residual(&self, x: &Vector, lambda: f64) -> Vector {
        let ax = &self.blocks.a(lambda) * x;
        let (u, v) = self.outputs(x);
        let (ua, va) = self.outputs(&ax);
        (wedge_unchecked(&ua, &v) + wedge_unchecked(&u, &va)) / self.w_scale
    }

    /// Tangency test. Returns `(in G, residual, λ used)`.
    pub fn in_g(&self, x: &Vector, tol: f64) -> Result<(bool, f64, Option<f64>)> {
        self.check_len(x)?;
        if !self.in_f(x, tol)? {
            return Ok((false, f64::INFINITY, None));
        }
        if !self.in_n(x, tol) {
            let lambda = self.lambda_of(x, tol)?;
            let r = self.g_residual(x, lambda).norm();
            return Ok((r < tol, r, Some(lambda)));
        }
        // On N the residual is affine in λ: (1 − λ) w₀ + λ w₁.
        let w0 = self.g_residual(x, 0.0);
        let w1 = self.g_residual(x, 1.0);
        let (lambda, r) = best_affine_zero(&w0, &w1);
        let colinear = wedge_unchecked(&w0, &w1).norm() <= tol * (1.0 + w0.norm() * w1.norm());
        let opposite = w0.dot(&w1) <= tol;
        Ok((colinear && opposite && r < tol, r, Some(lambda)))
    }

    /// `[C_λx / ‖C‖; W(x, λ); ‖x‖² − 1]` and its Jacobian in `(x, λ)`.
    fn projection_system(&self, x: &Vector, lambda: f64) -> (Vector, Mat) {
        let k = self.k;
        let kp = self.k_prime;
        let nw = kp * kp.saturating_sub(1) / 2;
        let b = self.blocks;
        let a = b.a(lambda);
        let da = &b.a1 - &b.a0;
        let m = kp + nw + 1;
        let mut r = Vector::zeros(m);
        let mut j = Mat::zeros(m, k + 1);

        let cl = b.c(lambda) / self.c_scale;
        r.rows_mut(0, kp).copy_from(&(&cl * x));
        j.view_mut((0, 0), (kp, k)).copy_from(&cl);
        j.view_mut((0, k), (kp, 1))
            .copy_from(&((&b.c1 - &b.c0) * x / self.c_scale));

        let (u, v) = self.outputs(x);
        let ax = &a * x;
        let (ua, va) = self.outputs(&ax);
        if nw > 0 {
            let w = (wedge_unchecked(&ua, &v) + wedge_unchecked(&u, &va)) / self.w_scale;
            r.rows_mut(kp, nw).copy_from(&w);
            for col in 0..k {
                let e = Vector::from_fn(k, |i, _| if i == col { 1.0 } else { 0.0 });
                let (ue, ve) = self.outputs(&e);
                let ae = &a * &e;
                let (uae, vae) = self.outputs(&ae);
                let dw = wedge_unchecked(&uae, &v)
                    + wedge_unchecked(&ua, &ve)
                    + wedge_unchecked(&ue, &va)
                    + wedge_unchecked(&u, &vae);
                j.view_mut((kp, col), (nw, 1)).copy_from(&(dw / self.w_scale));
            }
            let dax = &da * x;
            let (uda, vda) = self.outputs(&dax);
            let dwl = (wedge_unchecked(&uda, &v) + wedge_unchecked(&u, &vda)) / self.w_scale;
            j.view_mut((kp, k), (nw, 1)).copy_from(&dwl);
        }
        r[m - 1] = x.norm_squared() - 1.0;
        for col in 0..k {
            j[(m - 1, col)] = 2.0 * x[col];
        }
        (r, j)
    }

    fn initial_lambda(&self, x: &Vector) -> f64 {
        let (u, v) = self.outputs(x);
        let diff = &u - &v;
        if diff.norm_squared() > 1e-24 * self.c_scale * self.c_scale {
            (diff.dot(&u) / diff.norm_squared()).clamp(0.0, 1.0)
        } else if u.norm() > 1e-12 * self.c_scale {
            0.5
        } else {
            best_affine_zero(&self.g_residual(x, 0.0), &self.g_residual(x, 1.0)).0
        }
    }

    /// Levenberg–Marquardt projection of a sphere point onto `G`, λ kept in [0, 1].
    fn project_to_g(&self, x0: &Vector, tol: f64) -> Option<(Vector, f64, f64)> {
        let mut x = x0.clone();
        let mut lambda = self.initial_lambda(x0);
        let (mut r, mut jac) = self.projection_system(&x, lambda);
        let mut cost = r.norm_squared();
        let mut mu = 1e-3;
        let target = tol * tol;
        for _ in 0..LM_MAX_ITER {
            if cost <= target {
                break;
            }
            let jt = jac.transpose();
            let mut h = &jt * &jac;
            for i in 0..h.nrows() {
                h[(i, i)] += mu * (1.0 + h[(i, i)]);
            }
            let g = &jt * &r;
            let step = match h.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let mut xn = &x + step.rows(0, self.k);
            let ln = (lambda + step[self.k]).clamp(0.0, 1.0);
            let nn = xn.norm();
            if nn > 0.0 {
                xn /= nn;
            }
            let (rn, jn) = self.projection_system(&xn, ln);
            let cn = rn.norm_squared();
            if cn < cost {
                let moved = (&xn - &x).norm() + (ln - lambda).abs();
                x = xn;
                lambda = ln;
                r = rn;
                jac = jn;
                cost = cn;
                mu = (mu / 3.0).max(1e-15);
                if moved < 1e-15 {
                    break;
                }
            } else {
                mu *= 4.0;
                if mu > 1e12 {
                    break;
                }
            }
        }
        (cost <= target).then(|| (x, lambda, cost.sqrt()))
    }
}

/// Closest approach of `(1 − λ) w₀ + λ w₁` to zero over λ ∈ [0, 1].
fn best_affine_zero(w0: &Vector, w1: &Vector) -> (f64, f64) {
    let d = w1 - w0;
    let dd = d.norm_squared();
    let lambda = if dd > 0.0 {
        (-w0.dot(&d) / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (lambda, (w0 + &d * lambda).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GVerdict {
    Discrete,
    NotDiscrete,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GSample {
    pub x: Vec<f64>,
    /// Residual of the projected point, `+∞` when the projection failed or moved too far.
    pub residual: f64,
    pub hit: bool,
    pub projected: Option<Vec<f64>>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GCluster {
    pub members: Vec<usize>,
    pub centroid: Vec<f64>,
    pub diameter: f64,
    pub dimension: usize,
    pub touches_n: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GScanLevel {
    pub resolution: usize,
    pub spacing: f64,
    pub samples: Vec<GSample>,
    pub clusters: Vec<GCluster>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GScanReport {
    pub k: usize,
    /// False for `k > 3`: sampling is best effort and never certifies discreteness.
    pub dimension_supported: bool,
    /// Scan at `resolution` and at `2 · resolution`.
    pub levels: Vec<GScanLevel>,
    pub verdict: GVerdict,
    pub notes: Vec<String>,
}

fn sphere_samples(k: usize, resolution: usize) -> (Vec<Vector>, f64) {
    let r = resolution.max(2);
    match k {
        0 => (Vec::new(), 0.0),
        1 => (
            vec![Vector::from_element(1, 1.0), Vector::from_element(1, -1.0)],
            2.0,
        ),
        2 => {
            let n = 2 * r;
            let pts = (0..n)
                .map(|i| {
                    let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    Vector::from_vec(vec![t.cos(), t.sin()])
                })
                .collect();
            (pts, 2.0 * std::f64::consts::PI / n as f64)
        }
        3 => {
            let n = ((4 * r * r) as f64 / std::f64::consts::PI).ceil() as usize;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            let pts = (0..n)
                .map(|i| {
                    let z = 1.0 - (2 * i + 1) as f64 / n as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    Vector::from_vec(vec![rho * phi.cos(), rho * phi.sin(), z])
                })
                .collect();
            (pts, (4.0 * std::f64::consts::PI / n as f64).sqrt())
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x6761_735f);
            let mut pts = Vec::new();
            for i in 0..k {
                for s in [1.0, -1.0] {
                    let mut e = Vector::zeros(k);
                    e[i] = s;
                    pts.push(e);
                }
            }
            for _ in 0..(8 * r) {
                let v = Vector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
                let n = v.norm();
                pts.push(v / n);
            }
            (pts, f64::NAN)
        }
    }
}

fn scan_level(geom: &LocusGeometry, resolution: usize, tol: f64) -> GScanLevel {
    let (points, h) = sphere_samples(geom.k, resolution);
    let project = geom.k <= 3;
    let samples: Vec<GSample> = points
        .par_iter()
        .map(|x0| {
            if project {
                if let Some((x, lambda, res)) = geom.project_to_g(x0, tol) {
                    let close = (&x - x0).norm() <= 2.0 * h.max(1e-12);
                    let in_f = geom.in_f(&x, tol).unwrap_or(false);
                    if close && in_f {
                        return GSample {
                            x: x0.iter().copied().collect(),
                            residual: res,
                            hit: true,
                            projected: Some(x.iter().copied().collect()),
                            lambda: Some(lambda),
                        };
                    }
                }
                GSample {
                    x: x0.iter().copied().collect(),
                    residual: f64::INFINITY,
                    hit: false,
                    projected: None,
                    lambda: None,
                }
            } else {
                let (hit, residual, lambda) = geom.in_g(x0, tol).unwrap_or((false, f64::INFINITY, None));
                GSample {
                    x: x0.iter().copied().collect(),
                    residual,
                    hit,
                    projected: hit.then(|| x0.iter().copied().collect()),
                    lambda,
                }
            }
        })
        .collect();
    let radius = if h.is_finite() { 2.5 * h } else { 0.25 };
    let clusters = cluster_hits(geom, &samples, radius, tol);
    GScanLevel {
        resolution,
        spacing: h,
        samples,
        clusters,
    }
}

fn cluster_hits(geom: &LocusGeometry, samples: &[GSample], radius: f64, tol: f64) -> Vec<GCluster> {
    let hits: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].hit).collect();
    let pts: Vec<Vector> = hits
        .iter()
        .map(|&i| Vector::from_vec(samples[i].projected.clone().expect("hits are projected")))
        .collect();
    let n = pts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let cell = |x: &Vector| -> Vec<i64> { x.iter().map(|c| (c / radius).floor() as i64).collect() };
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, x) in pts.iter().enumerate() {
        grid.entry(cell(x)).or_default().push(i);
    }
    let k = geom.k;
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(k as u32))
        .map(|mut code| {
            (0..k)
                .map(|_| {
                    let o = (code % 3) as i64 - 1;
                    code /= 3;
                    o
                })
                .collect()
        })
        .collect();
    for (i, x) in pts.iter().enumerate() {
        let c = cell(x);
        for off in &offsets {
            let key: Vec<i64> = c.iter().zip(off).map(|(a, b)| a + b).collect();
            if let Some(list) = grid.get(&key) {
                for &j in list {
                    if j > i && (x - &pts[j]).norm() <= radius {
                        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                        if ri != rj {
                            parent[ri.max(rj)] = ri.min(rj);
                        }
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index_of_root: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let g = *index_of_root.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
        .into_iter()
        .map(|g| {
            let members: Vec<usize> = g.iter().map(|&i| hits[i]).collect();
            let m = g.len() as f64;
            let centroid = g.iter().fold(Vector::zeros(k), |acc, &i| acc + &pts[i]) / m;
            let mut diameter: f64 = 0.0;
            for (a, &i) in g.iter().enumerate() {
                for &j in &g[a + 1..] {
                    diameter = diameter.max((&pts[i] - &pts[j]).norm());
                }
            }
            let dimension = if diameter <= POINT_DIAMETER {
                0
            } else {
                let mut cov = Mat::zeros(k, k);
                for &i in &g {
                    let d = &pts[i] - &centroid;
                    cov += &d * d.transpose();
                }
                let (vals, _) = sym_eigen(&(cov / m));
                let top = vals.last().copied().unwrap_or(0.0);
                vals.iter().filter(|&&v| v >= PCA_RATIO * top && v > 0.0).count()
            };
            let touches_n = g.iter().any(|&i| geom.in_n(&pts[i], tol.max(1e-6)));
            GCluster {
                members,
                centroid: centroid.iter().copied().collect(),
                diameter,
                dimension,
                touches_n,
            }
        })
        .collect()
}

/// Sample `S^{k−1}`, project the samples onto `G`, cluster the hits and compare
/// the clusters at `resolution` and `2 · resolution`.
pub fn scan_g(geom: &LocusGeometry, resolution: usize, tol: f64) -> GScanReport {
    let k = geom.k;
    let supported = k <= 3;
    let levels: Vec<GScanLevel> = [resolution, 2 * resolution]
        .iter()
        .map(|&r| scan_level(geom, r, tol))
        .collect();
    let mut notes = Vec::new();
    let verdict = if !supported {
        notes.push(format!(
            "dim K = {k} > 3: sphere sampling is best effort and never certifies discreteness"
        ));
        GVerdict::Inconclusive
    } else if k <= 1 {
        GVerdict::Discrete
    } else {
        let coarse = &levels[0];
        let fine = &levels[1];
        let all_points = levels
            .iter()
            .all(|l| l.clusters.iter().all(|c| c.diameter <= POINT_DIAMETER));
        let persistent = fine.clusters.iter().any(|c| {
            c.dimension >= 1
                && c.diameter > 4.0 * fine.spacing
                && coarse.clusters.iter().any(|d| {
                    d.dimension >= 1
                        && d.diameter > 4.0 * coarse.spacing
                        && centroid_distance(c, d) <= c.diameter.max(d.diameter)
                })
        });
        if all_points {
            GVerdict::Discrete
        } else if persistent {
            GVerdict::NotDiscrete
        } else {
            GVerdict::Inconclusive
        }
    };
    if levels.iter().any(|l| l.clusters.iter().any(|c| c.touches_n)) {
        notes.push(
            "a cluster of G meets N, where F may be singular and tangency is only weak".to_string(),
        );
    }
    GScanReport {
        k,
        dimension_supported: supported,
        levels,
        verdict,
        notes,
    }
}

fn centroid_distance(a: &GCluster, b: &GCluster) -> f64 {
    a.centroid
        .iter()
        .zip(&b.centroid)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum SmallKernelDiagnostic {
    TrivialKernel,
    /// `k = 1`: observable for all λ iff `e₁ ∉ F`.
    OneDimensional { e1_in_f: bool },
    /// `k = 2`, `A_λ = 0` at the reported λ.
    RotationVanishes { lambda: f64 },
    /// `k = 2`, `ker C₀ = ker C₁`.
    KernelsCoincide,
    /// `k = 2`, rotation rates of `A₀` and `A₁` share a sign.
    CommonRotationDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallKernelReport {
    pub k: usize,
    /// `None` when the sweep was inconclusive.
    pub uniformly_observable: Option<bool>,
    pub diagnostic: SmallKernelDiagnostic,
    pub rotation_rates: Option<(f64, f64)>,
}

/// Classification for `dim K ≤ 2`, where observability of every `(C_λ, A_λ)`
/// is equivalent to uniform observability.
pub fn kpetit_classify(
    blocks: &BlockFamily,
    obs: &ObservabilityReport,
    tol: f64,
) -> Result<SmallKernelReport> {
    let k = blocks.k();
    if k > 2 {
        return Err(GuasError::DimensionTooLarge(k));
    }
    let uniformly_observable = match obs.verdict {
        SweepVerdict::ObservableForAll => Some(true),
        SweepVerdict::FailsAt { .. } => Some(false),
        SweepVerdict::Inconclusive => None,
    };
    let (diagnostic, rotation_rates) = match k {
        0 => (SmallKernelDiagnostic::TrivialKernel, None),
        1 => {
            let geom = LocusGeometry::new(blocks, tol);
            let e1_in_f = geom.in_f(&Vector::from_element(1, 1.0), tol)?;
            (SmallKernelDiagnostic::OneDimensional { e1_in_f }, None)
        }
        _ => {
            let w0 = blocks.a0[(0, 1)];
            let w1 = blocks.a1[(0, 1)];
            let ker0 = split_kernel(&blocks.c0, tol).kernel;
            let ker1 = split_kernel(&blocks.c1, tol).kernel;
            let diag = if w0 * w1 <= 0.0 {
                let lambda = if w0 == w1 { 0.0 } else { w0 / (w0 - w1) };
                SmallKernelDiagnostic::RotationVanishes { lambda }
            } else if subspace_distance(&ker0, &ker1) <= tol.max(1e-9) {
                SmallKernelDiagnostic::KernelsCoincide
            } else {
                SmallKernelDiagnostic::CommonRotationDirection
            };
            (diag, Some((w0, w1)))
        }
    };
    Ok(SmallKernelReport {
        k,
        uniformly_observable,
        diagnostic,
        rotation_rates,
    })
}
