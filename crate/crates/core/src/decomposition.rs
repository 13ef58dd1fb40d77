//! The common kernel `K = ker S0 ∩ ker S1`, the orthogonal frame
//! `R^d = K ⊕ K^⊥` and the λ-family of blocks
//!
//! ```text
//!   frameᵀ B_λ frame = [ A_λ  −C_λᵀ ]
//!                      [ C_λ   D_λ  ]
//! ```
//!
//! with `A_λ` skew-symmetric. `(A_λ, C_λ)` is the bilinear observed system on `K`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GuasError, Result};
use crate::linalg::{frobenius, max_eigen_sym, skew_part, split_kernel, subspace_distance, zero_small, Mat};
use crate::matrix_core::{convex_combination, NormalizedPair};

#[derive(Debug, Clone, PartialEq)]
pub struct KernelDecomposition {
    /// `d x k`, orthonormal columns spanning `K`.
    pub k_basis: Mat,
    /// `d x k'`, orthonormal columns spanning `K^⊥`.
    pub kperp_basis: Mat,
    pub k: usize,
    pub k_prime: usize,
    /// `[k_basis | kperp_basis]`, orthogonal.
    pub frame: Mat,
    /// Singular values of the stacked matrix `[S0; S1]`, descending.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    /// Smallest kept over largest discarded singular value (∞ when the rank is unambiguous).
    pub rank_margin: f64,
    /// `dim ker S0` and `dim ker S1`; diagnostics only.
    pub k0_dim: usize,
    pub k1_dim: usize,
}

impl KernelDecomposition {
    pub fn frame_orthogonality_error(&self) -> f64 {
        let d = self.frame.nrows();
        frobenius(&(self.frame.transpose() * &self.frame - Mat::identity(d, d)))
    }
}

/// Intersection of the two kernels via SVD thresholding of `[S0; S1]`.
pub fn common_kernel(pair: &NormalizedPair, tol: f64) -> KernelDecomposition {
    let d = pair.dim();
    let mut stacked = Mat::zeros(2 * d, d);
    stacked.view_mut((0, 0), (d, d)).copy_from(&pair.s0);
    stacked.view_mut((d, 0), (d, d)).copy_from(&pair.s1);
    let split = split_kernel(&stacked, tol);
    let k = split.kernel.ncols();
    let mut frame = Mat::zeros(d, d);
    frame.view_mut((0, 0), (d, k)).copy_from(&split.kernel);
    frame.view_mut((0, k), (d, d - k)).copy_from(&split.complement);
    KernelDecomposition {
        k,
        k_prime: d - k,
        frame,
        k_basis: split.kernel,
        kperp_basis: split.complement,
        singular_values: split.singular_values,
        threshold: split.threshold,
        rank_margin: split.rank_margin,
        k0_dim: split_kernel(&pair.s0, tol).kernel.ncols(),
        k1_dim: split_kernel(&pair.s1, tol).kernel.ncols(),
    }
}

/// The blocks `(A_i, C_i, D_i)`, `i = 0, 1`; the family is affine in λ.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFamily {
    pub a0: Mat,
    pub a1: Mat,
    pub c0: Mat,
    pub c1: Mat,
    pub d0: Mat,
    pub d1: Mat,
}

impl BlockFamily {
    /// Assemble a family from explicit blocks (`A_i` is `k x k`, `C_i` is `k' x k`, `D_i` is `k' x k'`).
    pub fn new(a0: Mat, a1: Mat, c0: Mat, c1: Mat, d0: Mat, d1: Mat) -> Result<Self> {
        let k = a0.nrows();
        let kp = d0.nrows();
        let ok = a0.shape() == (k, k)
            && a1.shape() == (k, k)
            && c0.shape() == (kp, k)
            && c1.shape() == (kp, k)
            && d0.shape() == (kp, kp)
            && d1.shape() == (kp, kp);
        if !ok {
            return Err(GuasError::DimensionMismatch(format!(
                "inconsistent block shapes: A {:?}/{:?}, C {:?}/{:?}, D {:?}/{:?}",
                a0.shape(),
                a1.shape(),
                c0.shape(),
                c1.shape(),
                d0.shape(),
                d1.shape()
            )));
        }
        Ok(Self { a0, a1, c0, c1, d0, d1 })
    }

    pub fn k(&self) -> usize {
        self.a0.nrows()
    }

    pub fn k_prime(&self) -> usize {
        self.d0.nrows()
    }

    pub fn a(&self, lambda: f64) -> Mat {
        &self.a0 * (1.0 - lambda) + &self.a1 * lambda
    }

    pub fn c(&self, lambda: f64) -> Mat {
        &self.c0 * (1.0 - lambda) + &self.c1 * lambda
    }

    pub fn d(&self, lambda: f64) -> Mat {
        &self.d0 * (1.0 - lambda) + &self.d1 * lambda
    }

    /// The framed matrix `[[A_λ, −C_λᵀ], [C_λ, D_λ]]`.
    pub fn assemble(&self, lambda: f64) -> Mat {
        let (k, kp) = (self.k(), self.k_prime());
        let c = self.c(lambda);
        let mut m = Mat::zeros(k + kp, k + kp);
        m.view_mut((0, 0), (k, k)).copy_from(&self.a(lambda));
        m.view_mut((0, k), (k, kp)).copy_from(&(-c.transpose()));
        m.view_mut((k, 0), (kp, k)).copy_from(&c);
        m.view_mut((k, k), (kp, kp)).copy_from(&self.d(lambda));
        m
    }
}

/// Read off the blocks of `frameᵀ Bᵢ frame` and validate the structure.
pub fn block_form(
    pair: &NormalizedPair,
    decomp: &KernelDecomposition,
    tol: f64,
) -> Result<BlockFamily> {
    let (k, kp) = (decomp.k, decomp.k_prime);
    let f = &decomp.frame;
    let mut parts = Vec::with_capacity(2);
    for i in 0..2 {
        let b = pair.b(i);
        let scale = 1.0 + frobenius(b);
        let bound = 10.0 * tol * scale;
        let m = f.transpose() * b * f;
        let a = m.view((0, 0), (k, k)).into_owned();
        let top_right = m.view((0, k), (k, kp)).into_owned();
        let c = m.view((k, 0), (kp, k)).into_owned();
        let d = m.view((k, k), (kp, kp)).into_owned();

        let skew_err = frobenius(&(&a + a.transpose()));
        if skew_err > bound {
            return Err(GuasError::StructureViolation(format!(
                "A{i} is not skew-symmetric (‖A + Aᵀ‖ = {skew_err:.3e}); is the pair normalized?"
            )));
        }
        let coupling_err = frobenius(&(&top_right + c.transpose()));
        if coupling_err > bound {
            return Err(GuasError::StructureViolation(format!(
                "top-right block of B{i} differs from −C{i}ᵀ by {coupling_err:.3e}"
            )));
        }
        if kp > 0 {
            let (lmax, _) = max_eigen_sym(&(d.transpose() + &d));
            if lmax > bound {
                return Err(GuasError::StructureViolation(format!(
                    "D{i}ᵀ + D{i} has eigenvalue {lmax:.3e} > 0"
                )));
            }
        }
        let cutoff = tol * scale;
        let mut a = skew_part(&a);
        let mut c = c;
        let mut d = d;
        zero_small(&mut a, cutoff);
        zero_small(&mut c, cutoff);
        zero_small(&mut d, cutoff);
        parts.push((a, c, d));
    }
    let (a1, c1, d1) = parts.pop().unwrap();
    let (a0, c0, d0) = parts.pop().unwrap();
    let family = BlockFamily { a0, a1, c0, c1, d0, d1 };

    if kp > 0 {
        for j in 1..8 {
            let lambda = j as f64 / 8.0;
            let d = family.d(lambda);
            let (lmax, _) = max_eigen_sym(&(d.transpose() + &d));
            if lmax >= 0.0 {
                return Err(GuasError::StructureViolation(format!(
                    "D_λᵀ + D_λ is not negative definite at λ = {lambda} (λ_max = {lmax:.3e})"
                )));
            }
        }
    }
    Ok(family)
}

/// `‖frame · assemble(λ) · frameᵀ − B_λ‖_F`.
pub fn reconstruction_error(
    pair: &NormalizedPair,
    decomp: &KernelDecomposition,
    blocks: &BlockFamily,
    lambda: f64,
) -> Result<f64> {
    let b = convex_combination(pair, lambda)?;
    let rebuilt = &decomp.frame * blocks.assemble(lambda) * decomp.frame.transpose();
    Ok(frobenius(&(rebuilt - b)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelAgreement {
    pub lambda: f64,
    pub null_dim: usize,
    pub distance: f64,
    pub pass: bool,
}

/// For each λ, compare `ker(B_λᵀ + B_λ)` with `span(K)`.
pub fn verify_kernel_lemma(
    pair: &NormalizedPair,
    decomp: &KernelDecomposition,
    lambdas: &[f64],
    tol: f64,
) -> Result<Vec<KernelAgreement>> {
    if let Some(&bad) = lambdas.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(GuasError::LambdaOutOfRange(bad));
    }
    lambdas
        .par_iter()
        .map(|&lambda| {
            let b = convex_combination(pair, lambda)?;
            let s = b.transpose() + &b;
            let null = split_kernel(&s, tol).kernel;
            let distance = subspace_distance(&null, &decomp.k_basis);
            Ok(KernelAgreement {
                lambda,
                null_dim: null.ncols(),
                distance,
                pass: null.ncols() == decomp.k && distance < tol.max(1e-8),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kdeux_pair() -> NormalizedPair {
        // a = b = 1, k' = 1, C0 = [1, 0], C1 = [0, 1], D0 = D1 = [-1]
        let b0 = Mat::from_row_slice(3, 3, &[0.0, 1.0, -1.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b1 = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0, -1.0]);
        NormalizedPair::from_identity(b0, b1, 1e-9).unwrap()
    }

    #[test]
    fn trivial_kernel_for_minus_identity() {
        let p = NormalizedPair::from_identity(-Mat::identity(3, 3), -Mat::identity(3, 3), 1e-9).unwrap();
        let dec = common_kernel(&p, 1e-9);
        assert_eq!(dec.k, 0);
        assert_eq!(dec.k_prime, 3);
        let blocks = block_form(&p, &dec, 1e-9).unwrap();
        assert_eq!(blocks.k(), 0);
        assert_eq!(blocks.d(0.5), -Mat::identity(3, 3));
    }

    #[test]
    fn kdeux_kernel_is_first_two_axes() {
        let p = kdeux_pair();
        let dec = common_kernel(&p, 1e-9);
        assert_eq!(dec.k, 2);
        assert!(dec.frame_orthogonality_error() < 1e-14);
        let e12 = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(subspace_distance(&dec.k_basis, &e12) < 1e-14);
        assert_eq!(dec.k0_dim, 2);
        assert_eq!(dec.k1_dim, 2);
        let blocks = block_form(&p, &dec, 1e-9).unwrap();
        assert_eq!(blocks.c0, Mat::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(blocks.c1, Mat::from_row_slice(1, 2, &[0.0, 1.0]));
        assert_eq!(blocks.a0, Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        let checks = verify_kernel_lemma(&p, &dec, &[0.5], 1e-9).unwrap();
        assert!(checks[0].pass);
        assert_eq!(checks[0].null_dim, 2);
    }

    #[test]
    fn unnormalized_pair_violates_structure() {
        // S0 has a kernel, but claiming K is the whole space breaks the block structure.
        let p = kdeux_pair();
        let mut dec = common_kernel(&p, 1e-9);
        // Pretend K is the whole space.
        dec.k = 3;
        dec.k_prime = 0;
        dec.frame = Mat::identity(3, 3);
        assert!(matches!(
            block_form(&p, &dec, 1e-9),
            Err(GuasError::StructureViolation(_))
        ));
    }

    #[test]
    fn kernel_check_rejects_endpoint_samples() {
        let p = kdeux_pair();
        let dec = common_kernel(&p, 1e-9);
        assert!(verify_kernel_lemma(&p, &dec, &[0.0], 1e-9).is_err());
    }

    #[test]
    fn block_family_shape_validation() {
        let z = |r, c| Mat::zeros(r, c);
        assert!(BlockFamily::new(z(2, 2), z(2, 2), z(1, 2), z(1, 2), z(1, 1), z(1, 1)).is_ok());
        assert!(BlockFamily::new(z(2, 2), z(2, 2), z(1, 3), z(1, 2), z(1, 1), z(1, 1)).is_err());
    }
}
