mod common;

use common::*;
use dpp_core::linalg::DenseMatrix;
use dpp_core::online_pca::ProjectionMatrix;
use dpp_core::regressor::{sgd_step, Engine, NaiveState, PbcState, PbtState};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

const RIDGE: Engine = Engine::Ridge { lambda: 1.0 };

fn stream(n: usize, d: usize, k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = rng(seed);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| gaussian(d, &mut rng).iter().map(|v| v * 0.4).collect())
        .collect();
    let ys = (0..n).map(|_| as_f64(&labels(k, 0.3, &mut rng))).collect();
    (xs, ys)
}

#[test]
fn pbc_matches_batch_ridge_at_every_step() {
    let (d, k) = (12, 8);
    let (xs, ys) = stream(300, d, k, 51);
    let mut pbc = PbcState::new(d, k, RIDGE).unwrap();
    for t in 0..xs.len() {
        pbc.update(&xs[t], &ys[t]).unwrap();
        let oracle = batch_ridge(&xs[..=t], &ys[..=t], 1.0);
        let err = max_abs(&to_na(pbc.h()), &oracle);
        assert!(err <= 1e-8, "t={t} err={err}");
    }
}

#[test]
fn pbc_prediction_equals_ridge_on_projected_targets() {
    let (d, k) = (12, 8);
    let (xs, ys) = stream(300, d, k, 52);
    let mut pbc = PbcState::new(d, k, RIDGE).unwrap();
    for (x, y) in xs.iter().zip(&ys) {
        pbc.update(x, y).unwrap();
    }
    let mut rng = rng(53);
    for _ in 0..20 {
        let m = rng.random_range(1..=k);
        let p = random_orthonormal(m, k, &mut rng);
        let pn = to_na(&p);
        let codes: Vec<Vec<f64>> = ys
            .iter()
            .map(|y| (&pn * DVector::from_column_slice(y)).as_slice().to_vec())
            .collect();
        let w = batch_ridge(&xs, &codes, 1.0);
        let x = gaussian(d, &mut rng);
        let direct = w.transpose() * DVector::from_column_slice(&x);
        let ours = pbc
            .predict(&x, &ProjectionMatrix::new_unchecked(p))
            .unwrap();
        for (a, b) in ours.iter().zip(direct.iter()) {
            assert!((a - b).abs() <= 1e-8);
        }
    }
}

#[test]
fn pbc_predict_is_explicit_code_regressor() {
    let mut rng = rng(54);
    let (d, k, m) = (5, 6, 3);
    let mut pbc = PbcState::new(d, k, RIDGE).unwrap();
    for _ in 0..10 {
        pbc.update(&gaussian(d, &mut rng), &gaussian(k, &mut rng))
            .unwrap();
    }
    let p = random_orthonormal(m, k, &mut rng);
    let w = to_na(pbc.h()) * to_na(&p).transpose();
    let x = gaussian(d, &mut rng);
    let direct = w.transpose() * DVector::from_column_slice(&x);
    let ours = pbc
        .predict(&x, &ProjectionMatrix::new_unchecked(p))
        .unwrap();
    for (a, b) in ours.iter().zip(direct.iter()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn pbt_rotation_preserves_reconstruction() {
    let mut rng = rng(55);
    let (d, k, m) = (6, 7, 3);
    let p_old = random_orthonormal(m, k, &mut rng);
    let mut pbt = PbtState::new(d, ProjectionMatrix::new_unchecked(p_old.clone()), RIDGE).unwrap();
    for _ in 0..20 {
        let p = ProjectionMatrix::new_unchecked(p_old.clone());
        pbt.update(&gaussian(d, &mut rng), &gaussian(k, &mut rng), p)
            .unwrap();
    }
    let before = to_na(pbt.w()) * to_na(&p_old);
    let r = random_orthonormal(m, m, &mut rng);
    let p_new = r.matmul(&p_old);
    pbt.transform(ProjectionMatrix::new_unchecked(p_new.clone()))
        .unwrap();
    let after = to_na(pbt.w()) * to_na(&p_new);
    assert!(max_abs(&before, &after) < 1e-12);
}

#[test]
fn fixed_basis_pbt_equals_naive_and_batch_solve() {
    let (d, k, m) = (8, 6, 2);
    let (xs, ys) = stream(200, d, k, 56);
    let mut rng = rng(57);
    let p = ProjectionMatrix::new_unchecked(random_orthonormal(m, k, &mut rng));
    let mut pbt = PbtState::new(d, p.clone(), RIDGE).unwrap();
    let mut naive = NaiveState::new(d, m, RIDGE).unwrap();
    let mut pbc = PbcState::new(d, k, RIDGE).unwrap();
    let mut codes = Vec::new();
    for (x, y) in xs.iter().zip(&ys) {
        let a = pbt.predict(x).unwrap();
        let b = naive.predict(x).unwrap();
        let c = pbc.predict(x, &p).unwrap();
        for ((a, b), c) in a.iter().zip(&b).zip(&c) {
            assert!((a - b).abs() <= 1e-10 && (a - c).abs() <= 1e-10);
        }
        pbt.update(x, y, p.clone()).unwrap();
        naive.update(x, &p.encode(y)).unwrap();
        pbc.update(x, y).unwrap();
        codes.push(p.encode(y));
    }
    let oracle = batch_ridge(&xs, &codes, 1.0);
    assert!(max_abs(&to_na(pbt.w()), &oracle) <= 1e-8);
    assert!(max_abs(&to_na(naive.w()), &oracle) <= 1e-8);
}

#[test]
fn alternating_sign_basis_breaks_naive_only() {
    // labels are a fixed linear function of x; the encoder flips sign every step
    let (d, k, m) = (6, 4, 2);
    let mut rng = rng(58);
    let truth = DMatrix::from_fn(d, k, |_, _| rng.random_range(-1.0..1.0));
    let base = random_orthonormal(m, k, &mut rng);
    let mut flipped = base.clone();
    flipped.scale(-1.0);
    let bases = [
        ProjectionMatrix::new_unchecked(base),
        ProjectionMatrix::new_unchecked(flipped),
    ];

    let mut naive = NaiveState::new(d, m, RIDGE).unwrap();
    let mut pbt = PbtState::new(d, bases[0].clone(), RIDGE).unwrap();
    let mut pbc = PbcState::new(d, k, RIDGE).unwrap();
    let (mut err_naive, mut err_pbt, mut err_pbc) = (0.0, 0.0, 0.0);
    for t in 0..400 {
        let p = &bases[t % 2];
        let x = gaussian(d, &mut rng);
        let y: Vec<f64> = (truth.transpose() * DVector::from_column_slice(&x))
            .as_slice()
            .to_vec();
        let target = p.encode(&y);
        let sq = |r: Vec<f64>| {
            r.iter()
                .zip(&target)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        err_naive += sq(naive.predict(&x).unwrap());
        err_pbc += sq(pbc.predict(&x, p).unwrap());
        pbt.transform(p.clone()).unwrap();
        err_pbt += sq(pbt.predict(&x).unwrap());

        naive.update(&x, &target).unwrap();
        pbc.update(&x, &y).unwrap();
        pbt.update(&x, &y, p.clone()).unwrap();
    }
    assert!(
        err_naive > 10.0 * err_pbc,
        "naive {err_naive} pbc {err_pbc}"
    );
    assert!(
        err_naive > 10.0 * err_pbt,
        "naive {err_naive} pbt {err_pbt}"
    );
}

#[test]
fn sgd_step_follows_the_finite_difference_gradient() {
    let mut rng = rng(59);
    let (d, m) = (5, 3);
    let w0 = from_na(&DMatrix::from_fn(d, m, |_, _| rng.random_range(-1.0..1.0)));
    let x = gaussian(d, &mut rng);
    let target = gaussian(m, &mut rng);
    let loss = |w: &DenseMatrix| -> f64 {
        let r = w.transpose_mul_vec(&x);
        0.5 * r
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let h = 1e-5;
    let mut numeric = DenseMatrix::zeros(d, m);
    for i in 0..d {
        for j in 0..m {
            let mut plus = w0.clone();
            plus[(i, j)] += h;
            let mut minus = w0.clone();
            minus[(i, j)] -= h;
            numeric[(i, j)] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
    }
    let step = 0.3;
    let mut w = w0.clone();
    sgd_step(&mut w, &x, &target, step).unwrap();
    let mut analytic = w0.sub(&w);
    analytic.scale(1.0 / step);
    let rel = analytic.sub(&numeric).frobenius_norm() / numeric.frobenius_norm();
    assert!(rel <= 1e-5, "relative error {rel}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recursive_ridge_matches_batch_for_any_length(seed in any::<u64>(), n in 1usize..40) {
        let (xs, ys) = stream(n, 4, 3, seed);
        let mut pbc = PbcState::new(4, 3, RIDGE).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            pbc.update(x, y).unwrap();
        }
        prop_assert!(max_abs(&to_na(pbc.h()), &batch_ridge(&xs, &ys, 1.0)) <= 1e-9);
    }
}
