mod common;

use censored_outliers::solver::{solve_weighted_qr, WeightedQrProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_basic_solution_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..60 {
        let n = rng.gen_range(4..=25);
        let p = rng.gen_range(0..=2);
        let tau = rng.gen_range(0.05..0.95);
        let (x, y, w) = common::random_instance(&mut rng, n, p);
        let fit = solve_weighted_qr(&WeightedQrProblem::new(tau, &x, &y, &w)).unwrap();
        let (best, _) = common::brute_force_qr(&x, &y, &w, tau);
        assert!((fit.objective - best).abs() < 1e-7, "n={n} p={p}: {} vs {best}", fit.objective);
    }
}

#[test]
fn duplicated_rows_are_fine() {
    let x: Vec<Vec<f64>> = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0].iter().map(|&v| vec![v]).collect();
    let y = [1.0, 1.0, 2.0, 2.5, 3.0, 3.0];
    let w = [1.0; 6];
    let fit = solve_weighted_qr(&WeightedQrProblem::new(0.5, &x, &y, &w)).unwrap();
    let (best, _) = common::brute_force_qr(&x, &y, &w, 0.5);
    assert!((fit.objective - best).abs() < 1e-10);
}
