//! Dense linear-algebra helpers shared by the analysis modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. Rank decisions are made in
//! one place ([`split_kernel`]) so that every module thresholds singular values
//! the same way.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let s = m.clone().singular_values();
    s.iter().cloned().fold(0.0, f64::max)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending.
/// Column `i` of the returned matrix is the eigenvector of value `i`.
pub fn sym_eigen(s: &Mat) -> (Vec<f64>, Mat) {
    let n = s.nrows();
    if n == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Largest eigenvalue of a symmetric matrix and a unit eigenvector for it.
pub fn max_eigen_sym(s: &Mat) -> (f64, Vector) {
    let (vals, vecs) = sym_eigen(s);
    match vals.last() {
        Some(&v) => (v, vecs.column(vals.len() - 1).into_owned()),
        None => (f64::NEG_INFINITY, Vector::zeros(0)),
    }
}

/// Singular values in descending order together with a full `n x n` orthogonal
/// matrix whose columns are the matching right singular vectors (columns past
/// `min(m, n)` span the structural null space of a wide matrix).
pub fn sorted_svd(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.ncols();
    if n == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    // Pad wide matrices with zero rows so the SVD returns a complete V.
    let padded = if m.nrows() < n {
        let mut p = Mat::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let values: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let v = Mat::from_fn(n, n, |r, c| v_t[(order[c], r)]);
    (values, v)
}

/// Smallest and largest singular value of `m` plus the right singular vector of the smallest.
/// For a matrix with fewer rows than columns the smallest singular value is zero.
pub fn sigma_extremes(m: &Mat) -> (f64, f64, Vector) {
    let (s, v) = sorted_svd(m);
    let n = s.len();
    if n == 0 {
        return (f64::INFINITY, 0.0, Vector::zeros(0));
    }
    let smin = if m.nrows() < m.ncols() { 0.0 } else { s[n - 1] };
    (smin, s[0], v.column(n - 1).into_owned())
}

/// Orthogonal splitting `R^n = ker(M) ⊕ ker(M)^⊥` decided by singular value thresholding.
#[derive(Debug, Clone)]
pub struct KernelSplit {
    /// `n x k`, orthonormal columns spanning the numerical kernel.
    pub kernel: Mat,
    /// `n x (n - k)`, orthonormal columns spanning the complement.
    pub complement: Mat,
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    /// Smallest kept singular value over the largest discarded one.
    pub rank_margin: f64,
}

/// Threshold rule: singular values at or below `tol * sigma_max * sqrt(n)` count as zero.
pub fn split_kernel(m: &Mat, tol: f64) -> KernelSplit {
    let n = m.ncols();
    let (mut s, _) = sorted_svd(m);
    // Structural zeros of a wide matrix.
    for v in s.iter_mut().skip(m.nrows().min(n)) {
        *v = 0.0;
    }
    let smax = s.first().copied().unwrap_or(0.0);
    let threshold = tol * smax * (n as f64).sqrt();
    let rank = s.iter().filter(|&&v| v > threshold).count();
    let kept_min = if rank > 0 { s[rank - 1] } else { f64::INFINITY };
    let dropped_max = if rank < n { s[rank] } else { 0.0 };
    let rank_margin = if rank == 0 || rank == n || dropped_max == 0.0 {
        f64::INFINITY
    } else {
        kept_min / dropped_max
    };

    let (_, v) = sorted_svd(m);
    let null_raw = v.columns(rank, n - rank).into_owned();
    let proj = &null_raw * null_raw.transpose();
    let kernel = canonical_basis(&proj, n - rank);
    let comp_proj = Mat::identity(n, n) - &kernel * kernel.transpose();
    let complement = canonical_basis(&comp_proj, rank);
    KernelSplit {
        kernel,
        complement,
        singular_values: s,
        threshold,
        rank_margin,
    }
}

/// Deterministic orthonormal basis of the range of an orthogonal projector.
///
/// Pivoted Gram-Schmidt on the projected coordinate axes `P e_j`, largest
/// residual first (lowest index on ties), then each column is signed so its
/// largest-magnitude entry is positive. The result depends only on the
/// subspace, not on which basis the projector was built from.
pub fn canonical_basis(proj: &Mat, dim: usize) -> Mat {
    let n = proj.nrows();
    let mut basis = Mat::zeros(n, dim);
    let mut residuals: Vec<Vector> = (0..n).map(|j| proj.column(j).into_owned()).collect();
    let mut used = vec![false; n];
    for b in 0..dim {
        let mut best = None;
        let mut best_norm = -1.0;
        for (j, r) in residuals.iter().enumerate() {
            if used[j] {
                continue;
            }
            let nr = r.norm();
            if nr > best_norm * (1.0 + 1e-12) {
                best_norm = nr;
                best = Some(j);
            }
        }
        let j = match best {
            Some(j) => j,
            None => break,
        };
        used[j] = true;
        let mut v = residuals[j].clone();
        // Two passes of re-orthogonalisation.
        for _ in 0..2 {
            for c in 0..b {
                let col = basis.column(c);
                let d = col.dot(&v);
                v -= col * d;
            }
        }
        let nv = v.norm();
        if nv == 0.0 {
            continue;
        }
        v /= nv;
        fix_sign(&mut v);
        basis.set_column(b, &v);
        for r in residuals.iter_mut() {
            let d = v.dot(r);
            *r -= &v * d;
        }
    }
    basis
}

/// Flip `v` so that its largest-magnitude entry (first one on ties) is positive.
pub fn fix_sign(v: &mut Vector) {
    let mut idx = 0;
    let mut best = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best + 1e-14 {
            best = x.abs();
            idx = i;
        }
    }
    if !v.is_empty() && v[idx] < 0.0 {
        *v *= -1.0;
    }
}

/// Spectral distance `‖U Uᵀ − V Vᵀ‖₂` between the spans of two orthonormal bases.
/// Subspaces of different dimension are at distance 1.
pub fn subspace_distance(u: &Mat, v: &Mat) -> f64 {
    if u.ncols() != v.ncols() {
        return 1.0;
    }
    if u.ncols() == 0 {
        return 0.0;
    }
    let d = u * u.transpose() - v * v.transpose();
    spectral_norm(&d)
}

/// Matrix exponential (scaling and squaring with a Padé approximant, from nalgebra).
pub fn expm(m: &Mat) -> Mat {
    if m.nrows() == 0 {
        return m.clone();
    }
    m.clone().exp()
}

pub fn skew_part(m: &Mat) -> Mat {
    (m - m.transpose()) * 0.5
}

/// Replace entries with magnitude below `cutoff` by exact zeros.
pub fn zero_small(m: &mut Mat, cutoff: f64) {
    for x in m.iter_mut() {
        if x.abs() < cutoff {
            *x = 0.0;
        }
    }
}

/// Spectral abscissa (max real part of the eigenvalues) of a square matrix.
pub fn spectral_abscissa(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}
