#![allow(dead_code)]

use guas_core::builtins::{
    hurwitz_example, kdeux_blocks, kdeux_example, mason_example, shared_output_example, torus_blocks,
    torus_default_freqs, torus_example,
};
use guas_core::decomposition::BlockFamily;
use guas_core::linalg::{Mat, Vector};
use guas_core::matrix_core::MatrixPair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    loop {
        let v = gaussian_vec(rng, n);
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    gaussian_mat(rng, n, n).qr().q()
}

/// `D` with `Dᵀ + D ≺ 0`, symmetric part bounded away from zero.
pub fn dissipative_block(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let m = gaussian_mat(rng, n, n);
    let w = gaussian_mat(rng, n, n);
    -(&m * m.transpose() * 0.5) - Mat::identity(n, n) * 0.2 + (&w - w.transpose()) * 0.5
}

/// A skew matrix with well separated rotation rates, together with its invariant
/// subspaces (one 2-plane per rate, plus the zero axis when `k` is odd).
pub struct SkewWithModes {
    pub a: Mat,
    pub modes: Vec<Mat>,
}

pub fn skew_with_modes(rng: &mut ChaCha8Rng, k: usize) -> SkewWithModes {
    let q = random_orthogonal(rng, k);
    let mut a0 = Mat::zeros(k, k);
    let mut modes = Vec::new();
    for j in 0..k / 2 {
        let w = (j + 1) as f64 + rng.random_range(0.1..0.9);
        a0[(2 * j, 2 * j + 1)] = w;
        a0[(2 * j + 1, 2 * j)] = -w;
        modes.push(q.columns(2 * j, 2).into_owned());
    }
    if k % 2 == 1 {
        modes.push(q.columns(k - 1, 1).into_owned());
    }
    SkewWithModes {
        a: &q * a0 * q.transpose(),
        modes,
    }
}

/// A single block matrix `[[A, −Cᵀ], [C, D]]` in a random orthonormal frame.
///
/// When `unobservable` is set, `C` is made to vanish on one invariant subspace of `A`.
pub struct LabelledBlock {
    pub b: Mat,
    pub k: usize,
    pub unobservable: bool,
}

pub fn random_labelled_block(rng: &mut ChaCha8Rng, unobservable: bool) -> LabelledBlock {
    let d = rng.random_range(2..=6);
    let k = rng.random_range(1..d);
    let kp = d - k;
    let SkewWithModes { a, modes } = skew_with_modes(rng, k);
    let mut c = gaussian_mat(rng, kp, k);
    if unobservable {
        let v = &modes[rng.random_range(0..modes.len())];
        c = &c * (Mat::identity(k, k) - v * v.transpose());
    }
    let dd = dissipative_block(rng, kp);
    let mut m = Mat::zeros(d, d);
    m.view_mut((0, 0), (k, k)).copy_from(&a);
    m.view_mut((0, k), (k, kp)).copy_from(&(-c.transpose()));
    m.view_mut((k, 0), (kp, k)).copy_from(&c);
    m.view_mut((k, k), (kp, kp)).copy_from(&dd);
    let q = random_orthogonal(rng, d);
    LabelledBlock {
        b: &q * m * q.transpose(),
        k,
        unobservable,
    }
}

/// Two block matrices sharing the kernel `K = span(e₁..e_k)`, rotated into a random frame.
pub fn random_family(rng: &mut ChaCha8Rng, k: usize, kp: usize) -> BlockFamily {
    let skew = |rng: &mut ChaCha8Rng| {
        let g = gaussian_mat(rng, k, k);
        (&g - g.transpose()) * 0.5
    };
    let (a0, a1) = (skew(rng), skew(rng));
    let (c0, c1) = (gaussian_mat(rng, kp, k), gaussian_mat(rng, kp, k));
    let (d0, d1) = (dissipative_block(rng, kp), dissipative_block(rng, kp));
    BlockFamily::new(a0, a1, c0, c1, d0, d1).unwrap()
}

pub fn rotate_pair(rng: &mut ChaCha8Rng, blocks: &BlockFamily) -> MatrixPair {
    let d = blocks.k() + blocks.k_prime();
    let q = random_orthogonal(rng, d);
    let b0 = &q * blocks.assemble(0.0) * q.transpose();
    let b1 = &q * blocks.assemble(1.0) * q.transpose();
    MatrixPair::new(b0, b1, None).unwrap()
}

/// Raw pair `P^{-1/2} B' P^{1/2}` whose normalization is the given block pair.
pub fn with_lyapunov(rng: &mut ChaCha8Rng, pair: &MatrixPair) -> MatrixPair {
    let d = pair.dim();
    let g = gaussian_mat(rng, d, d);
    let p = &g * g.transpose() + Mat::identity(d, d);
    let eig = p.clone().symmetric_eigen();
    let sqrt = &eig.eigenvectors * Mat::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
    let inv_sqrt = sqrt.clone().try_inverse().unwrap();
    MatrixPair::new(&inv_sqrt * pair.b0() * &sqrt, &inv_sqrt * pair.b1() * &sqrt, Some(p)).unwrap()
}

/// Built-in examples plus seeded random pairs with a nontrivial common kernel.
pub fn corpus() -> Vec<(String, MatrixPair)> {
    let mut out: Vec<(String, MatrixPair)> = vec![
        ("hurwitz".into(), hurwitz_example().pair),
        ("shared-output-1".into(), shared_output_example(1).unwrap().pair),
        ("shared-output-2".into(), shared_output_example(2).unwrap().pair),
        ("kdeux(1,1)".into(), kdeux_example(1.0, 1.0).pair),
        ("kdeux(1,-1)".into(), kdeux_example(1.0, -1.0).pair),
        ("kdeux(2,3)".into(), kdeux_example(2.0, 3.0).pair),
        ("torus".into(), torus_example(&torus_default_freqs(), 1.0, 2.0).unwrap().pair),
        ("mason".into(), mason_example().pair),
    ];
    let mut r = rng(7);
    for (i, (k, kp)) in [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (4, 2)].into_iter().enumerate() {
        let fam = random_family(&mut r, k, kp);
        let pair = rotate_pair(&mut r, &fam);
        let pair = if i % 2 == 0 { with_lyapunov(&mut r, &pair) } else { pair };
        out.push((format!("random(k={k},k'={kp})"), pair));
    }
    out
}

/// Block families on which the bad-locus geometry is exercised.
pub fn locus_instances() -> Vec<(String, BlockFamily)> {
    let mut r = rng(11);
    vec![
        ("kdeux(1,-1)".into(), kdeux_blocks(1.0, -1.0)),
        ("kdeux(2,3)".into(), kdeux_blocks(2.0, 3.0)),
        ("torus".into(), torus_blocks(&torus_default_freqs(), 1.0, 2.0).unwrap()),
        ("random(3,1)".into(), random_family(&mut r, 3, 1)),
        ("random(3,2)".into(), random_family(&mut r, 3, 2)),
        ("random(4,2)".into(), random_family(&mut r, 4, 2)),
    ]
}

/// A unit point of `F₀`: a random direction of `ker C_λ` for a random λ, away from `N`.
pub fn f0_point(rng: &mut ChaCha8Rng, fam: &BlockFamily) -> Option<(Vector, f64)> {
    for _ in 0..100 {
        let lambda: f64 = rng.random_range(0.0..=1.0);
        let c = fam.c(lambda);
        let eig = (c.transpose() * &c).symmetric_eigen();
        let top = eig.eigenvalues.max().max(1.0);
        let idx: Vec<usize> = (0..fam.k()).filter(|&i| eig.eigenvalues[i] <= 1e-12 * top).collect();
        if idx.is_empty() {
            continue;
        }
        let basis = Mat::from_fn(fam.k(), idx.len(), |r, j| eig.eigenvectors[(r, idx[j])]);
        let coeffs = gaussian_vec(rng, basis.ncols());
        let x = (&basis * coeffs).normalize();
        let out0 = (&fam.c0 * &x).norm();
        let out1 = (&fam.c1 * &x).norm();
        if out0.max(out1) > 1e-3 {
            return Some((x, lambda));
        }
    }
    None
}

/// Independent expansion of `det [C_λ; C_λA_λ]` for the dim-K-two rotation family.
pub fn kdeux_det_oracle(a: f64, b: f64, lambda: f64) -> f64 {
    let w = (1.0 - lambda) * a + lambda * b;
    let (c1, c2) = (1.0 - lambda, lambda);
    // C_λ A_λ with A_λ = [[0, w], [−w, 0]]
    let (ca1, ca2) = (-w * c2, w * c1);
    c1 * ca2 - c2 * ca1
}
