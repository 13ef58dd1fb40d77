mod common;

use std::sync::Arc;

use common::*;
use guas_core::analyzer::{analyze, AnalyzeOptions, Conclusion, EvidenceMode};
use guas_core::bad_locus::{wedge, LocusGeometry};
use guas_core::builtins::{kdeux_blocks, kdeux_example, torus_blocks, torus_default_freqs};
use guas_core::decomposition::{block_form, common_kernel, reconstruction_error};
use guas_core::linalg::{Mat, Vector};
use guas_core::matrix_core::{normalize, strict_lyapunov_2x2, MatrixPair, NormalizedPair};
use guas_core::observability::{
    continuity_violations, hurwitz_observability_crosscheck, kalman_lipschitz_bound, sweep_lambda, DEFAULT_GRID,
    DEFAULT_HURWITZ_BAND,
};
use guas_core::simulator::{
    dominance_study, integrate, output_measure, random_binary_signal, worst_case_switching, FeedbackRule,
    SwitchingSignal, System,
};
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-9;

fn normalized(pair: &MatrixPair) -> NormalizedPair {
    let p = pair.lyapunov().cloned().unwrap_or_else(|| Mat::identity(pair.dim(), pair.dim()));
    normalize(pair, &p, TOL).unwrap()
}

fn small_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wedge_is_bilinear_and_alternating(
        u in small_vec(4), v in small_vec(4), w in small_vec(4), a in -5.0..5.0f64, b in -5.0..5.0f64,
    ) {
        let (u, v, w) = (Vector::from_vec(u), Vector::from_vec(v), Vector::from_vec(w));
        let lhs = wedge(&(&u * a + &w * b), &v).unwrap();
        let rhs = wedge(&u, &v).unwrap() * a + wedge(&w, &v).unwrap() * b;
        let scale = 1.0 + (u.norm() + w.norm()) * v.norm() * 5.0;
        prop_assert!((lhs - rhs).norm() <= 1e-12 * scale);
        prop_assert!((wedge(&u, &v).unwrap() + wedge(&v, &u).unwrap()).norm() <= 1e-12 * scale);
        prop_assert!(wedge(&u, &u).unwrap().norm() <= 1e-12 * scale);
    }

    #[test]
    fn f_membership_is_scale_invariant(seed in any::<u64>(), s in 1e-3..1e3f64) {
        let mut r = rng(seed);
        for (_, fam) in locus_instances() {
            let geom = LocusGeometry::new(&fam, TOL);
            let x = if r.random_bool(0.5) { f0_point(&mut r, &fam).unwrap().0 } else { gaussian_vec(&mut r, fam.k()) };
            prop_assert_eq!(geom.in_f(&x, TOL).unwrap(), geom.in_f(&(&x * s), TOL).unwrap());
            prop_assert_eq!(geom.in_f(&x, TOL).unwrap(), geom.in_f(&(&x * -s), TOL).unwrap());
        }
    }

    #[test]
    fn killing_parameter_vanishes_the_output(seed in any::<u64>()) {
        let mut r = rng(seed);
        for (name, fam) in locus_instances() {
            let geom = LocusGeometry::new(&fam, TOL);
            let (x, _) = f0_point(&mut r, &fam).unwrap();
            let l = geom.lambda_of(&x, TOL).unwrap();
            prop_assert!((0.0..=1.0).contains(&l));
            prop_assert!((&fam.c(l) * &x).norm() < 1e-9, "{}", name);
        }
    }

    #[test]
    fn hurwitz_iff_observable(seed in any::<u64>(), unobservable in any::<bool>()) {
        let mut r = rng(seed);
        let blk = random_labelled_block(&mut r, unobservable);
        let rep = hurwitz_observability_crosscheck(&blk.b, TOL, DEFAULT_HURWITZ_BAND).unwrap();
        prop_assert_eq!(rep.kernel_dim, blk.k);
        if !(rep.hurwitz.marginal && !unobservable) {
            prop_assert!(rep.agree, "{:?}", rep);
            prop_assert_eq!(rep.observable, !unobservable);
        }
    }

    #[test]
    fn kernel_decomposition_invariants(seed in any::<u64>(), k in 1usize..4, kp in 1usize..3) {
        let mut r = rng(seed);
        let fam = random_family(&mut r, k, kp);
        let rotated = rotate_pair(&mut r, &fam);
        let pair = with_lyapunov(&mut r, &rotated);
        let np = normalized(&pair);
        for i in 0..2 {
            let s = np.s(i);
            prop_assert!(s.clone().symmetric_eigen().eigenvalues.max() <= 1e-9 * (1.0 + s.norm()));
        }
        let decomp = common_kernel(&np, TOL);
        prop_assert_eq!(decomp.k, k);
        prop_assert!(decomp.frame_orthogonality_error() < 1e-12);
        let kb = &decomp.k_basis;
        for i in 0..2 {
            prop_assert!((np.s(i) * kb).norm() < 1e-9 * (1.0 + np.s(i).norm()));
        }
        let blocks = block_form(&np, &decomp, TOL).unwrap();
        for l in [0.0, 0.3, 1.0] {
            let err = reconstruction_error(&np, &decomp, &blocks, l).unwrap();
            prop_assert!(err < 1e-10 * (1.0 + np.b(0).norm() + np.b(1).norm()));
            let a = blocks.a(l);
            prop_assert!((&a + a.transpose()).norm() < 1e-10 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn bilinear_trajectories_stay_on_spheres(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fam = random_family(&mut r, 3, 2);
        let segs: Vec<(f64, f64)> = (0..10).map(|_| (r.random_range(1..50) as f64 * 0.01, r.random_range(0.0..=1.0))).collect();
        let x0 = gaussian_vec(&mut r, 3);
        let t = integrate(System::Bilinear(&fam), &SwitchingSignal::relaxed(&segs).unwrap(), &x0, 10.0, 1e-2).unwrap();
        for n in &t.norms {
            prop_assert!((n - x0.norm()).abs() < 1e-10 * x0.norm());
        }
    }

    #[test]
    fn full_system_norm_never_grows(seed in any::<u64>()) {
        let mut r = rng(seed);
        let fam = random_family(&mut r, 2, 2);
        let np = normalized(&rotate_pair(&mut r, &fam));
        let x0 = gaussian_vec(&mut r, 4);
        let sig = random_binary_signal(seed, 10.0, 1e-2, 0.3).unwrap();
        let t = integrate(System::Full(&np), &sig, &x0, 10.0, 1e-2).unwrap();
        prop_assert!(t.max_norm_increase <= t.step_bound);
        let greedy = worst_case_switching(&np, &x0, 10.0, 1e-2).unwrap();
        prop_assert!(greedy.max_norm_increase <= greedy.step_bound);
    }

    #[test]
    fn constant_input_witness_keeps_its_norm(a in 0.2..3.0f64, b in -3.0..-0.2f64) {
        let pair = kdeux_example(a, b).pair;
        let opts = AnalyzeOptions { evidence: EvidenceMode::Never, ..AnalyzeOptions::default() };
        let v = analyze(&pair, &opts).unwrap();
        prop_assert_eq!(v.conclusion, Conclusion::NotGuasConstantInput);
        let w = v.witness.unwrap();
        prop_assert!((w.lambda - a / (a - b)).abs() < 1e-7);
        let np = normalized(&pair);
        let decomp = common_kernel(&np, TOL);
        let blocks = block_form(&np, &decomp, TOL).unwrap();
        let x = Vector::from_vec(w.x_kernel.clone());
        let t = integrate(System::Bilinear(&blocks), &SwitchingSignal::constant(w.lambda).unwrap(), &x, 100.0, 1e-3).unwrap();
        prop_assert!(output_measure(&t, 1e-6).unwrap() == 0.0);
        for n in &t.norms {
            prop_assert!((n - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn strict_search_finds_constructed_solutions(seed in any::<u64>()) {
        // B = −(MMᵀ + εI) + S makes P = I strictly feasible for both matrices.
        let mut r = rng(seed);
        let mut make = || {
            let m = gaussian_mat(&mut r, 2, 2);
            let s = gaussian_mat(&mut r, 2, 2);
            -(&m * m.transpose()) * 0.5 - Mat::identity(2, 2) * 0.3 + (&s - s.transpose()) * 0.5
        };
        let pair = MatrixPair::new(make(), make(), None).unwrap();
        let rep = strict_lyapunov_2x2(&pair).unwrap();
        let (q, rr) = rep.strict.expect("a strict solution exists");
        let p = Mat::from_row_slice(2, 2, &[1.0, q, q, rr]);
        prop_assert!(p.clone().symmetric_eigen().eigenvalues.min() > 0.0);
        for i in 0..2 {
            let m = pair.b(i).transpose() * &p + &p * pair.b(i);
            prop_assert!(m.symmetric_eigen().eigenvalues.max() < 0.0);
        }
    }
}

#[test]
fn constant_segments_match_closed_forms() {
    let d = 3;
    let neg = -Mat::identity(d, d);
    let np = NormalizedPair::from_identity(neg.clone(), neg, TOL).unwrap();
    let x0 = Vector::from_vec(vec![1.0, -2.0, 0.5]);
    let t = integrate(System::Full(&np), &SwitchingSignal::binary(&[(1.0, 0), (0.7, 1)]).unwrap(), &x0, 10.0, 1e-3).unwrap();
    let last = Vector::from_vec(t.states.last().unwrap().clone());
    assert!((last - &x0 * (-10.0f64).exp()).norm() < 1e-10);

    let fam = kdeux_blocks(1.5, 1.5);
    let x0 = Vector::from_vec(vec![0.3, 0.4]);
    let t = integrate(System::Bilinear(&fam), &SwitchingSignal::constant(0.25).unwrap(), &x0, 10.0, 1e-3).unwrap();
    let (c, s) = (15.0f64.cos(), 15.0f64.sin());
    // ẋ = [[0, w], [−w, 0]] x rotates clockwise at rate w.
    let exact = Vector::from_vec(vec![c * 0.3 + s * 0.4, -s * 0.3 + c * 0.4]);
    let last = Vector::from_vec(t.states.last().unwrap().clone());
    assert!((last - exact).norm() < 1e-10);
}

#[test]
fn feedback_integration_is_fourth_order() {
    let fam = torus_blocks(&torus_default_freqs(), 1.0, 2.0).unwrap();
    let sig = SwitchingSignal::Feedback(FeedbackRule::Custom(Arc::new(|x: &Vector| {
        0.5 * (1.0 + (2.0 * x[0] - x[3]).tanh())
    })));
    let x0 = Vector::from_vec(vec![0.5, -0.1, 0.7, 0.2]);
    let end = |dt: f64| Vector::from_vec(integrate(System::Bilinear(&fam), &sig, &x0, 2.0, dt).unwrap().states.last().unwrap().clone());
    let reference = end(0.02 / 16.0);
    let e1 = (end(0.02) - &reference).norm();
    let e2 = (end(0.01) - &reference).norm();
    let order = (e1 / e2).log2();
    assert!(order >= 3.5, "observed order {order} ({e1:.2e} -> {e2:.2e})");
}

#[test]
fn greedy_adversary_dominance_is_reported() {
    for (name, pair) in corpus().iter().take(6) {
        let np = normalized(pair);
        let x0 = Vector::from_element(pair.dim(), 1.0 / (pair.dim() as f64).sqrt());
        let rep = dominance_study(&np, &x0, 5.0, 1e-2, 100, 0).unwrap();
        eprintln!(
            "dominance {name}: greedy {:.3e}, {} of 100 random signals end higher",
            rep.greedy_final,
            rep.violations.len()
        );
        assert_eq!(rep.random_finals.len(), 100);
    }
}

#[test]
fn certified_pairs_decay_faster_over_longer_horizons() {
    for (name, pair) in corpus() {
        let opts = AnalyzeOptions { evidence: EvidenceMode::Never, ..AnalyzeOptions::default() };
        let v = analyze(&pair, &opts).unwrap();
        if !v.conclusion.is_guas() {
            continue;
        }
        let np = normalized(&pair);
        let x0 = Vector::from_element(pair.dim(), 1.0 / (pair.dim() as f64).sqrt());
        let r1 = worst_case_switching(&np, &x0, 5.0, 1e-2).unwrap().final_norm();
        let r2 = worst_case_switching(&np, &x0, 10.0, 1e-2).unwrap().final_norm();
        assert!(r2 < r1, "{name}: {r2} !< {r1}");
    }
}

#[test]
fn analysis_is_deterministic_and_consistent_at_endpoints() {
    for (name, pair) in corpus() {
        let opts = AnalyzeOptions { evidence: EvidenceMode::Never, ..AnalyzeOptions::default() };
        let a = serde_json::to_string(&analyze(&pair, &opts).unwrap()).unwrap();
        let v = analyze(&pair, &opts).unwrap();
        assert_eq!(a, serde_json::to_string(&v).unwrap(), "{name}");
        assert!(v.endpoint_checks.iter().all(|c| c.agree), "{name}: {:?}", v.endpoint_checks);

        let np = normalized(&pair);
        let decomp = common_kernel(&np, TOL);
        if decomp.k > 0 {
            let blocks = block_form(&np, &decomp, TOL).unwrap();
            let rep = sweep_lambda(&blocks, DEFAULT_GRID, TOL);
            assert!(continuity_violations(&rep, kalman_lipschitz_bound(&blocks)).is_empty(), "{name}");
        }
    }
}
