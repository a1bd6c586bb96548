mod common;

use common::*;
use dpp_core::linalg::{project_capped_simplex, symmetric_eigen, DenseMatrix};
use dpp_core::online_pca::{CappedMsg, LearningRate, ProjectionMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn random_state(k: usize, m: usize, rng: &mut dpp_core::rng::StreamRng) -> CappedMsg {
    let q = random_orthonormal(m + 1, k, rng);
    let raw: Vec<f64> = (0..=m).map(|_| rng.random_range(-0.5..1.5)).collect();
    let sigma = capped_simplex_bisection(&raw, m as f64);
    let total: f64 = sigma.iter().sum();
    // bisection leaves ~1e-15 of mass error; put it on an interior entry
    let mut sigma = sigma;
    if let Some(s) = sigma.iter_mut().find(|s| **s > 1e-6 && **s < 1.0 - 1e-6) {
        *s += m as f64 - total;
    }
    CappedMsg::from_parts(q, sigma, LearningRate::Default).unwrap()
}

#[test]
fn factored_state_tracks_dense_oracle() {
    let mut rng = rng(41);
    for k in 2..=6 {
        for m in 1..k {
            let mut state =
                CappedMsg::new(k, m, k as u64 * 10 + m as u64, LearningRate::Default).unwrap();
            let mut u = to_na(&state.u_matrix());
            for t in 1..=50u64 {
                let y = if t % 5 == 0 {
                    // a vector inside span(Q)
                    let c = gaussian(m + 1, &mut rng);
                    let v = state.q().transpose_mul_vec(&c);
                    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    v.into_iter().map(|a| a / n).collect()
                } else {
                    unit_gaussian(k, &mut rng)
                };
                let eta = LearningRate::Default.at(t, m, k);
                u = dense_msg_step(&u, &y, eta, m);
                state.update(&y).unwrap();
                let err = max_abs(&to_na(&state.u_matrix()), &u);
                assert!(err < 1e-7, "k={k} m={m} t={t} err={err}");
            }
        }
    }
}

#[test]
fn in_span_example_matches_dense_oracle() {
    let q = DenseMatrix::identity(2);
    let mut state =
        CappedMsg::from_parts(q, vec![0.6, 0.4], LearningRate::Constant { eta: 0.2 }).unwrap();
    state.update(&[1.0, 0.0]).unwrap();
    let u = dense_msg_step(
        &DMatrix::from_diagonal(&DVector::from_vec(vec![0.6, 0.4])),
        &[1.0, 0.0],
        0.2,
        1,
    );
    assert!(max_abs(&to_na(&state.u_matrix()), &u) < 1e-12);
    assert!((u[(0, 0)] - 0.7).abs() < 1e-12 && (u[(1, 1)] - 0.3).abs() < 1e-12);
}

#[test]
fn expected_projector_equals_u_against_nalgebra() {
    let mut rng = rng(42);
    for _ in 0..100 {
        let k = rng.random_range(2..=30);
        let m = rng.random_range(1..=8.min(k - 1));
        let state = random_state(k, m, &mut rng);
        let u = to_na(&state.u_matrix());
        let mut expected = DMatrix::zeros(k, k);
        for (p, proj) in state.enumerate_projections() {
            let pm = to_na(proj.matrix());
            expected += p * pm.transpose() * pm;
        }
        assert!(max_abs(&expected, &u) < 1e-10);
        for _ in 0..20 {
            let y = DVector::from_vec(gaussian(k, &mut rng));
            let direct = y.dot(&y) - (y.transpose() * &u * &y)[(0, 0)];
            let enumerated: f64 = state
                .enumerate_projections()
                .map(|(p, proj)| p * proj.reconstruction_error(y.as_slice()))
                .sum();
            assert!((direct - enumerated).abs() < 1e-10);
            assert!((state.expected_reconstruction_error(y.as_slice()) - direct).abs() < 1e-10);
        }
    }
}

#[test]
fn hand_enumeration_of_two_outcomes() {
    let state = CappedMsg::from_parts(
        DenseMatrix::identity(2),
        vec![0.6, 0.4],
        LearningRate::Default,
    )
    .unwrap();
    let outcomes: Vec<(f64, ProjectionMatrix)> = state.enumerate_projections().collect();
    assert!((outcomes[0].0 - 0.4).abs() < 1e-15);
    assert_eq!(outcomes[0].1.matrix().row(0), &[0.0, 1.0]);
    assert!((outcomes[1].0 - 0.6).abs() < 1e-15);
    assert_eq!(outcomes[1].1.matrix().row(0), &[1.0, 0.0]);
}

#[test]
fn capped_simplex_matches_bisection() {
    let mut rng = rng(43);
    for _ in 0..50 {
        let n = rng.random_range(2..=12);
        let budget = rng.random_range(1..n) as f64;
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..2.5)).collect();
        let fast = project_capped_simplex(&v, budget).unwrap();
        let slow = capped_simplex_bisection(&v, budget);
        let dist: f64 = fast
            .iter()
            .zip(&slow)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(dist < 1e-9, "{v:?} {budget}");
    }
    let w = project_capped_simplex(&[1.2, 0.9, 0.5], 2.0).unwrap();
    for (a, b) in w.iter().zip([1.0, 0.7, 0.3]) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn jacobi_matches_nalgebra_eigenvalues() {
    let mut rng = rng(44);
    for n in 1..=12 {
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let sym = &g + g.transpose();
        let ours = symmetric_eigen(&from_na(&sym)).unwrap();
        let mut theirs: Vec<f64> = nalgebra::SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.eigenvalues.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn updates_stay_feasible(
        k in 2usize..12,
        m_seed in 0usize..100,
        seed in any::<u64>(),
        steps in 1usize..80,
    ) {
        let m = 1 + m_seed % (k - 1);
        let mut state = CappedMsg::new(k, m, seed, LearningRate::Default).unwrap();
        let mut rng = rng(seed);
        for _ in 0..steps {
            let scale: f64 = rng.random_range(0.0..1.0);
            let y: Vec<f64> = unit_gaussian(k, &mut rng).iter().map(|v| v * scale).collect();
            state.update(&y).unwrap();
            let trace: f64 = state.sigma().iter().sum();
            prop_assert!((trace - m as f64).abs() <= 1e-9);
            prop_assert!(state.sigma().iter().all(|s| (-1e-12..=1.0 + 1e-12).contains(s)));
            prop_assert!(state.q().row_orthonormality_error() <= 1e-9);
        }
    }

    #[test]
    fn sampled_projections_are_orthonormal(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let state = random_state(7, 3, &mut rng);
        let p = state.sample_projection(&mut rng);
        prop_assert_eq!(p.matrix().shape(), (3, 7));
        prop_assert!(p.matrix().row_orthonormality_error() < 1e-12);
    }
}
