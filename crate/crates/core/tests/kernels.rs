use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dlmpc::kernels::{project_affine, pseudo_inverse, solve_eq_qp, solve_qp, ColumnProjector, Polytope};

#[test]
fn pseudo_inverse_examples() {
    let id = DMatrix::<f64>::identity(3, 3);
    assert!((pseudo_inverse(&id) - &id).amax() < 1e-14);
    let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
    let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
    assert!((pseudo_inverse(&m) - expected).amax() < 1e-14);
}

#[test]
fn projection_examples() {
    let proj = ColumnProjector::new(0, DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DMatrix::from_element(1, 1, 1.0)).unwrap();
    let out = project_affine(&proj, &DMatrix::zeros(2, 1)).unwrap();
    assert!((out - DMatrix::from_element(2, 1, 0.5)).amax() < 1e-14);
    let feasible = DMatrix::from_column_slice(2, 1, &[0.25, 0.75]);
    assert!((project_affine(&proj, &feasible).unwrap() - &feasible).amax() < 1e-14);
}

#[test]
fn projection_beats_random_feasible_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = DMatrix::from_fn(3, 6, |_, _| rng.gen_range(-1.0..1.0));
    let b = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
    let proj = ColumnProjector::new(0, z.clone(), b.clone()).unwrap();
    let v = DMatrix::from_fn(6, 2, |_, _| rng.gen_range(-2.0..2.0));
    let p = project_affine(&proj, &v).unwrap();
    let dist = (&p - &v).norm();
    let z_pinv = pseudo_inverse(&z);
    let null = DMatrix::identity(6, 6) - &z_pinv * &z;
    for _ in 0..100 {
        let free = DMatrix::from_fn(6, 2, |_, _| rng.gen_range(-3.0..3.0));
        let w = &z_pinv * &b + &null * free;
        assert!((&z * &w - &b).amax() < 1e-10);
        assert!(dist <= (&w - &v).norm() + 1e-12);
    }
}

#[test]
fn equality_qp_examples() {
    let u: DVector<f64> = solve_eq_qp(&DMatrix::from_element(1, 1, 2.0), &DVector::zeros(1), &DMatrix::from_element(1, 1, 1.0), &DVector::from_element(1, 1.0)).unwrap();
    assert!((u[0] - 1.0).abs() < 1e-12);
    // (1 + u)^2 + u^2 = 2u^2 + 2u + 1: H = 4, g = 2, so u = -1/2.
    let u: DVector<f64> = solve_eq_qp(&DMatrix::from_element(1, 1, 4.0), &DVector::from_element(1, 2.0), &DMatrix::zeros(0, 1), &DVector::zeros(0)).unwrap();
    assert!((u[0] + 0.5).abs() < 1e-12);
    let z: DVector<f64> = solve_eq_qp(&DMatrix::identity(3, 3), &DVector::zeros(3), &DMatrix::zeros(0, 3), &DVector::zeros(0)).unwrap();
    assert_eq!(z, DVector::zeros(3));
}

#[test]
fn inequality_qp_examples() {
    let h: DMatrix<f64> = DMatrix::from_element(1, 1, 4.0);
    let g = DVector::from_element(1, 2.0);
    let floor = Polytope::from_rows(1, &[(vec![(0, -1.0)], 0.0)], &[]).unwrap();
    let clamped: DVector<f64> = solve_qp(&h, &g, &floor).unwrap();
    assert!(clamped[0].abs() < 1e-7);
    let free: DVector<f64> = solve_qp(&h, &g, &Polytope::unconstrained(1)).unwrap();
    assert!((free[0] + 0.5).abs() < 1e-10);
    let c = DVector::from_vec(vec![0.3, -0.2]);
    let box_rows: Vec<(Vec<(usize, f64)>, f64)> = (0..2).flat_map(|k| [(vec![(k, 1.0)], 1.0), (vec![(k, -1.0)], 1.0)]).collect();
    let boxed = Polytope::from_rows(2, &box_rows, &[]).unwrap();
    let z = solve_qp(&(DMatrix::identity(2, 2) * 2.0), &(-2.0 * &c), &boxed).unwrap();
    assert!((z - c).amax() < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn box_qp_matches_clamped_minimizer(target in proptest::collection::vec(-3.0f64..3.0, 3), weights in proptest::collection::vec(0.5f64..4.0, 3), bound in 0.1f64..2.0) {
        // Diagonal cost sum w_k (z_k - c_k)^2 over |z_k| <= bound is minimized by clamping c.
        let h = DMatrix::from_diagonal(&DVector::from_iterator(3, weights.iter().map(|w| 2.0 * w)));
        let g = DVector::from_iterator(3, weights.iter().zip(&target).map(|(w, c)| -2.0 * w * c));
        let rows: Vec<(Vec<(usize, f64)>, f64)> = (0..3).flat_map(|k| [(vec![(k, 1.0)], bound), (vec![(k, -1.0)], bound)]).collect();
        let z = solve_qp(&h, &g, &Polytope::from_rows(3, &rows, &[]).unwrap()).unwrap();
        for k in 0..3 {
            prop_assert!((z[k] - target[k].clamp(-bound, bound)).abs() < 1e-6);
        }
    }

    #[test]
    fn equality_qp_is_stationary_and_feasible(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let h = &m * m.transpose() + DMatrix::identity(4, 4);
        let g = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
        let a = DMatrix::from_fn(2, 4, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let z = solve_eq_qp(&h, &g, &a, &b).unwrap();
        prop_assert!((&a * &z - &b).amax() < 1e-10);
        // The gradient lies in the row space of A.
        let grad = &h * &z + &g;
        let proj = DMatrix::identity(4, 4) - pseudo_inverse(&a) * &a;
        prop_assert!((proj * grad).amax() < 1e-9);
    }
}
