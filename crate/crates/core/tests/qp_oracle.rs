mod common;

use common::*;
use lpvtube::qp::{self, QpProblem, QpSettings};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_qp(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=6);
    let mm = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = mm.transpose() * &mm + DMatrix::identity(n, n) * 0.2;
    let f = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let g = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let b = &g * &x0 + DVector::from_fn(m, |_, _| rng.random_range(0.0..0.5));
    (h, f, g, b)
}

#[test]
fn matches_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..300 {
        let (h, f, g, b) = random_qp(&mut rng);
        let oracle = brute_force_qp(&h, &f, &g, &b).unwrap();
        let sol = qp::solve(&QpProblem::new(h, f, g, b).unwrap(), &QpSettings::default()).unwrap();
        assert!((&sol.x - &oracle).amax() <= 1e-6);
        assert!(sol.kkt_residual <= 1e-8);
    }
}

#[test]
fn relaxing_constraints_never_raises_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..200 {
        let (h, f, g, b) = random_qp(&mut rng);
        let tight = QpProblem::new(h.clone(), f.clone(), g.clone(), b.clone()).unwrap();
        let loose = QpProblem::new(h, f, g, b.add_scalar(0.3)).unwrap();
        let jt = tight.objective(&qp::solve(&tight, &QpSettings::default()).unwrap().x);
        let jl = loose.objective(&qp::solve(&loose, &QpSettings::default()).unwrap().x);
        assert!(jl <= jt + 1e-10);
    }
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let (h, f, g, b) = random_qp(&mut rng);
        let p = QpProblem::new(h, f, g, b).unwrap();
        let a = qp::solve(&p, &QpSettings::default()).unwrap();
        let c = qp::solve(&p, &QpSettings::default()).unwrap();
        assert_eq!(a.x, c.x);
        assert_eq!(a.duals, c.duals);
        assert_eq!(a.active, c.active);
    }
}

#[test]
fn single_precision_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let (h, f, g, b) = random_qp(&mut rng);
        let oracle = brute_force_qp(&h, &f, &g, &b).unwrap();
        let p = QpProblem::<f32>::new(h.cast(), f.cast(), g.cast(), b.cast()).unwrap();
        let settings = QpSettings { tol: 1e-5f32, ..QpSettings::default() };
        let sol = qp::solve(&p, &settings).unwrap();
        let x: DVector<f64> = sol.x.cast();
        assert!((x - &oracle).amax() <= 1e-3 * (1.0 + oracle.amax()));
    }
}
