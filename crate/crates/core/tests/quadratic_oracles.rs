mod common;

use cease_core::diagnostics::contraction_report;
use cease_core::quadratic::{cease_avg_step_closed, cease_step_closed, spectral_contraction, QuadState};
use cease_core::{run, AlgoConfig, GlmFamily, Init, Matrix, Penalty, Variant};
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::RngCore;

fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_vec(m.nrows(), m.ncols(), m.transpose().as_slice().to_vec()).unwrap()
}

fn random_spd(r: &mut rand_chacha::ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d + 3, d, |_, _| normal(r));
    g.transpose() * g / (d + 3) as f64 + DMatrix::identity(d, d) * 0.05
}

fn random_state(r: &mut rand_chacha::ChaCha8Rng, m: usize, d: usize) -> QuadState {
    let covs: Vec<Matrix> = (0..m).map(|_| from_na(&random_spd(r, d))).collect();
    let cross: Vec<Vec<f64>> = (0..m).map(|_| normals(r, d)).collect();
    QuadState::from_parts(covs, cross, vec![1.0 / m as f64; m]).unwrap()
}

#[test]
fn minimizer_is_preserved_exactly() {
    let mut r = rng(41);
    for _ in 0..20 {
        let state = random_state(&mut r, 4, 5);
        let min = state.minimizer().unwrap();
        for alpha in [0.0, 0.3] {
            assert!(max_abs_diff(&cease_step_closed(&state, alpha, &min).unwrap(), &min) <= 1e-12);
            assert!(max_abs_diff(&cease_avg_step_closed(&state, alpha, &min).unwrap(), &min) <= 1e-12);
        }
    }
}

#[test]
fn identical_machines_make_averaging_irrelevant() {
    let mut r = rng(42);
    let cov = from_na(&random_spd(&mut r, 4));
    let cross = normals(&mut r, 4);
    let state = QuadState::from_parts(vec![cov.clone(), cov.clone(), cov], vec![cross.clone(), cross.clone(), cross], vec![1.0 / 3.0; 3])
        .unwrap();
    let theta = normals(&mut r, 4);
    let a = cease_step_closed(&state, 0.4, &theta).unwrap();
    let b = cease_avg_step_closed(&state, 0.4, &theta).unwrap();
    assert!(max_abs_diff(&a, &b) <= 1e-12);
}

#[test]
fn contraction_with_identical_machines_has_eigen_formula() {
    let mut r = rng(43);
    for _ in 0..10 {
        let sigma = random_spd(&mut r, 5);
        let alpha = 0.7;
        let m = from_na(&sigma);
        let state = QuadState::from_parts(vec![m.clone(), m], vec![vec![0.0; 5], vec![0.0; 5]], vec![0.5, 0.5]).unwrap();
        let ours = spectral_contraction(&state, alpha).unwrap();
        // I − (Σ+αI)⁻¹Σ has eigenvalues α/(λ+α); the largest sits at λ_min.
        let lam_min = sigma.symmetric_eigenvalues().min();
        assert!((ours - alpha / (lam_min + alpha)).abs() <= 1e-10);
        // Second route: explicit matrix, largest singular value.
        let explicit = DMatrix::identity(5, 5) - (&sigma + DMatrix::identity(5, 5) * alpha).try_inverse().unwrap() * &sigma;
        assert!((ours - explicit.singular_values().max()).abs() <= 1e-10);
    }
}

fn metric_errors(state: &QuadState, iterates: &[Vec<f64>]) -> Vec<f64> {
    let min = state.minimizer().unwrap();
    iterates.iter().map(|t| state.metric_error(t, &min)).collect()
}

#[test]
fn contraction_bounds_observed_ratios() {
    let mut r = rng(44);
    for _ in 0..10 {
        let state = random_state(&mut r, 3, 4);
        for alpha in [0.0, 0.2, 1.0] {
            let bound = spectral_contraction(&state, alpha).unwrap();
            for _ in 0..20 {
                let mut theta = normals(&mut r, 4);
                let mut path = vec![theta.clone()];
                for _ in 0..5 {
                    theta = cease_avg_step_closed(&state, alpha, &theta).unwrap();
                    path.push(theta.clone());
                }
                let errors = metric_errors(&state, &path);
                for w in errors.windows(2).filter(|w| w[0] > 1e-10) {
                    assert!(w[1] / w[0] <= bound + 1e-8, "{} > {}", w[1] / w[0], bound);
                }
                if let Some(rate) = contraction_report(&errors, 1e-10, None).rate {
                    assert!(rate <= bound + 1e-6);
                }
            }
        }
    }
}

#[test]
fn single_machine_without_regularization_is_exact_in_one_step() {
    let mut r = rng(45);
    let state = random_state(&mut r, 1, 4);
    assert!(spectral_contraction(&state, 0.0).unwrap() <= 1e-10);
    let min = state.minimizer().unwrap();
    let next = cease_step_closed(&state, 0.0, &normals(&mut r, 4)).unwrap();
    assert!(max_abs_diff(&next, &min) <= 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn engine_matches_closed_form(seed in any::<u64>(), p in 2usize..=10, m in 1usize..=8, alpha_kind in 0u8..3, averaged in any::<bool>()) {
        let mut r = rng(seed);
        let n = 20 + (r.next_u64() % 81) as usize;
        let sizes = vec![n; m];
        let cluster = random_cluster(&mut r, &sizes, p, GlmFamily::Gaussian, Penalty::none());
        let alpha = match alpha_kind {
            0 => 0.0,
            1 => p as f64 / n as f64,
            _ => 1.0,
        };
        let state = QuadState::from_cluster(&cluster).unwrap();
        let theta0 = normals(&mut r, p + 1);
        let variant = if averaged { Variant::CeaseAvg } else { Variant::Cease };
        let trace = run(&cluster, &AlgoConfig::new(variant, alpha, 10).with_init(Init::Given(theta0.clone()))).unwrap();
        let mut theta = theta0;
        for (t, ours) in trace.iterates.iter().enumerate() {
            prop_assert!(max_abs_diff(ours, &theta) <= 1e-9, "t={} diff={}", t, max_abs_diff(ours, &theta));
            theta = if averaged {
                cease_avg_step_closed(&state, alpha, &theta).unwrap()
            } else {
                cease_step_closed(&state, alpha, &theta).unwrap()
            };
        }
    }
}
