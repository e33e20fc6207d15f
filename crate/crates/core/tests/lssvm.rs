use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use feattrack::lssvm::{train_matrix, BiasMode};

/// Ridge regression with an unpenalized intercept, solved on its normal
/// equations.
fn ridge(x: &DMatrix<f64>, y: &[f64], gamma: f64) -> (DVector<f64>, f64) {
    let (d, n) = x.shape();
    let mut aug = DMatrix::from_element(d + 1, n, 1.0);
    aug.rows_mut(0, d).copy_from(x);
    let mut lhs = &aug * aug.transpose();
    for i in 0..d {
        lhs[(i, i)] += gamma;
    }
    let sol = lhs.lu().solve(&(&aug * DVector::from_column_slice(y))).unwrap();
    (sol.rows(0, d).clone_owned(), sol[d])
}

#[test]
fn wide_data_takes_kernel_route_and_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for gamma in [1e-2, 1.0] {
        let x = DMatrix::from_fn(60, 25, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<f64> = (0..25).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let model = train_matrix(&x, &y, gamma, BiasMode::Corrected).unwrap();
        let (w, b) = ridge(&x, &y, gamma);
        assert!((&model.w - &w).norm() / w.norm() < 1e-8);
        assert!((model.b - b).abs() < 1e-8);
    }
}
