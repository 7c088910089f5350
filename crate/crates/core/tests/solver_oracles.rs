mod common;

use cease_core::solver::{solve_nonsmooth, solve_quadratic_exact, solve_smooth};
use cease_core::{Error, GlmFamily, Matrix, Penalty, Shard, SolverSettings, SurrogateProblem};
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn local<'a>(shard: &'a Shard, family: GlmFamily, penalty: Penalty, zeros: &'a [f64]) -> SurrogateProblem<'a> {
    SurrogateProblem::local(shard, family, penalty, zeros)
}

#[test]
fn newton_matches_normal_equations() {
    let mut r = rng(21);
    for _ in 0..10 {
        let shard = random_shard(&mut r, 60, 5, GlmFamily::Gaussian);
        let zeros = vec![0.0; 6];
        let sol = solve_smooth(&local(&shard, GlmFamily::Gaussian, Penalty::none(), &zeros), &zeros, &SolverSettings::default())
            .unwrap();
        assert!(max_abs_diff(&sol.theta, &least_squares(&shard)) <= 1e-9);
    }
}

#[test]
fn newton_matches_gradient_descent_oracle() {
    let mut r = rng(22);
    let shard = random_shard(&mut r, 50, 3, GlmFamily::Bernoulli);
    let zeros = vec![0.0; 4];
    let sol = solve_smooth(&local(&shard, GlmFamily::Bernoulli, Penalty::none(), &zeros), &zeros, &SolverSettings::default())
        .unwrap();

    let x = design(&shard);
    let y = vec_na(shard.y());
    let mut theta = vec_na(&zeros);
    for _ in 0..1_000_000 {
        let eta = &x * &theta;
        let resid = eta.map(|e| 1.0 / (1.0 + (-e).exp())) - &y;
        let grad = x.transpose() * resid / 50.0;
        theta -= 1e-3 * grad;
    }
    assert!(max_abs_diff(&sol.theta, theta.as_slice()) <= 1e-6, "{:?} vs {:?}", sol.theta, theta);
}

#[test]
fn fista_matches_scalar_soft_threshold() {
    // Intercept only: Q(θ) = θ²/2 − ȳθ + λ|θ|, minimised at soft(ȳ, λ).
    let y = vec![0.4, 1.9, 2.2, -0.3];
    let rows: Vec<&[f64]> = y.iter().map(|_| &[][..]).collect();
    let shard = Shard::from_features(&rows, y.clone()).unwrap();
    let mean = y.iter().sum::<f64>() / 4.0;
    for lambda in [0.1, 0.5, 0.9, 1.5] {
        let zeros = [0.0];
        let sol = solve_nonsmooth(&local(&shard, GlmFamily::Gaussian, Penalty::l1(lambda), &zeros), &zeros, &SolverSettings::default())
            .unwrap();
        let expected = mean.signum() * (mean.abs() - lambda).max(0.0);
        assert!((sol.theta[0] - expected).abs() <= 1e-8, "λ={lambda}: {} vs {expected}", sol.theta[0]);
    }
}

#[test]
fn fista_matches_soft_threshold_on_orthogonal_design() {
    // Rows (1, ±1) in equal numbers give XᵀX/n = I, so each coordinate is a
    // separate scalar lasso on ŵ = Xᵀy/n.
    let feats: [&[f64]; 4] = [&[1.0], &[-1.0], &[1.0], &[-1.0]];
    let y = vec![2.0, 0.5, 1.2, -0.4];
    let shard = Shard::from_features(&feats, y.clone()).unwrap();
    let w0 = y.iter().sum::<f64>() / 4.0;
    let w1 = (y[0] - y[1] + y[2] - y[3]) / 4.0;
    let lambda = 0.3;
    let zeros = [0.0, 0.0];
    let sol = solve_nonsmooth(&local(&shard, GlmFamily::Gaussian, Penalty::l1(lambda), &zeros), &zeros, &SolverSettings::default())
        .unwrap();
    let soft = |w: f64| w.signum() * (w.abs() - lambda).max(0.0);
    assert!(max_abs_diff(&sol.theta, &[soft(w0), soft(w1)]) <= 1e-8);
}

#[test]
fn fista_with_zero_lambda_agrees_with_newton() {
    let mut r = rng(23);
    let shard = random_shard(&mut r, 80, 4, GlmFamily::Bernoulli);
    let zeros = vec![0.0; 5];
    let smooth = solve_smooth(&local(&shard, GlmFamily::Bernoulli, Penalty::none(), &zeros), &zeros, &SolverSettings::default())
        .unwrap();
    let fista = solve_nonsmooth(&local(&shard, GlmFamily::Bernoulli, Penalty::l1(0.0), &zeros), &zeros, &SolverSettings::default())
        .unwrap();
    assert!(max_abs_diff(&smooth.theta, &fista.theta) <= 1e-6);
}

#[test]
fn large_lambda_gives_zero() {
    let mut r = rng(24);
    let shard = random_shard(&mut r, 40, 6, GlmFamily::Bernoulli);
    let zeros = vec![0.0; 7];
    let g0 = shard.gradient(GlmFamily::Bernoulli, &zeros).unwrap();
    let lambda = g0.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let sol = solve_nonsmooth(&local(&shard, GlmFamily::Bernoulli, Penalty::l1(lambda), &zeros), &zeros, &SolverSettings::default())
        .unwrap();
    assert!(sol.theta.iter().all(|v| *v == 0.0), "{:?}", sol.theta);
}

#[test]
fn fista_objective_agrees_with_longer_run() {
    let mut r = rng(25);
    for _ in 0..20 {
        let n = 20 + (r.next_u64_bounded(60) as usize);
        let p = 2 + (r.next_u64_bounded(8) as usize);
        let shard = random_shard(&mut r, n, p, GlmFamily::Bernoulli);
        let shift = normals(&mut r, p + 1).iter().map(|v| 0.05 * v).collect::<Vec<_>>();
        let anchor = normals(&mut r, p + 1);
        let prob = SurrogateProblem {
            shard: &shard,
            family: GlmFamily::Bernoulli,
            penalty: Penalty::l1(0.05),
            gradient_shift: &shift,
            anchor: &anchor,
            alpha: 0.1,
        };
        let base = SolverSettings::default();
        let long = SolverSettings {
            fista_tol: base.fista_tol / 10.0,
            fista_max_iters: base.fista_max_iters * 10,
            ..base
        };
        let a = solve_nonsmooth(&prob, &anchor, &base).unwrap();
        let b = solve_nonsmooth(&prob, &anchor, &long).unwrap();
        let qa = prob.objective(&a.theta).unwrap();
        let qb = prob.objective(&b.theta).unwrap();
        assert!((qa - qb).abs() <= 1e-7, "{qa} vs {qb}");
    }
}

trait Bounded {
    fn next_u64_bounded(&mut self, bound: u64) -> u64;
}

impl<R: rand::Rng> Bounded for R {
    fn next_u64_bounded(&mut self, bound: u64) -> u64 {
        self.random_range(0..bound)
    }
}

/// Runs the solver with budgets 1, 2, … and reads the iterate it stopped at;
/// the solver is deterministic, so these are its successive accepted steps.
fn newton_path(prob: &SurrogateProblem<'_>, init: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let mut path = vec![init.to_vec()];
    for budget in 1..=steps {
        let settings = SolverSettings {
            newton_max_iters: budget,
            ..SolverSettings::default()
        };
        match solve_smooth(prob, init, &settings) {
            Ok(sol) => {
                path.push(sol.theta);
                break;
            }
            Err(Error::ConvergenceFailure { last, .. }) => path.push(last),
            Err(e) => panic!("{e}"),
        }
    }
    path
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn newton_never_increases_the_surrogate(seed in any::<u64>(), n in 5usize..40, p in 1usize..5, alpha in 0.0f64..1.0, lambda in 0.0f64..0.2) {
        let mut r = rng(seed);
        let shard = random_shard(&mut r, n, p, GlmFamily::Bernoulli);
        let shift: Vec<f64> = normals(&mut r, p + 1).iter().map(|v| 0.1 * v).collect();
        let anchor = normals(&mut r, p + 1);
        let init: Vec<f64> = normals(&mut r, p + 1).iter().map(|v| 3.0 * v).collect();
        let prob = SurrogateProblem {
            shard: &shard,
            family: GlmFamily::Bernoulli,
            penalty: Penalty::l2(lambda + 0.01),
            gradient_shift: &shift,
            anchor: &anchor,
            alpha,
        };
        let path = newton_path(&prob, &init, 40);
        for w in path.windows(2) {
            let q0 = prob.objective(&w[0]).unwrap();
            let q1 = prob.objective(&w[1]).unwrap();
            prop_assert!(q1 <= q0 + 1e-12, "{} -> {}", q0, q1);
        }
    }

    #[test]
    fn solution_ignores_row_order(seed in any::<u64>(), n in 10usize..50, p in 1usize..5, l1 in any::<bool>()) {
        let mut r = rng(seed);
        let shard = random_shard(&mut r, n, p, GlmFamily::Bernoulli);
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        order.rotate_left(n / 3);
        let permuted = shard.select_rows(&order).unwrap();
        let penalty = if l1 { Penalty::l1(0.02) } else { Penalty::l2(0.02) };
        let zeros = vec![0.0; p + 1];
        let settings = SolverSettings::default();
        let a = cease_core::solve(&local(&shard, GlmFamily::Bernoulli, penalty, &zeros), &zeros, &settings).unwrap();
        let b = cease_core::solve(&local(&permuted, GlmFamily::Bernoulli, penalty, &zeros), &zeros, &settings).unwrap();
        prop_assert!(max_abs_diff(&a.theta, &b.theta) <= 1e-8);
    }
}

#[test]
fn exact_quadratic_solve_examples() {
    let w = [0.3, -1.0, 2.0];
    assert_eq!(solve_quadratic_exact(&Matrix::identity(3), &w, 0.0).unwrap(), w.to_vec());
    let x = solve_quadratic_exact(&Matrix::from_diag(&[2.0, 1.0]), &[3.0, 4.0], 1.0).unwrap();
    assert!(max_abs_diff(&x, &[1.0, 2.0]) <= 1e-15);
    assert!(matches!(
        solve_quadratic_exact(&Matrix::from_diag(&[1.0, -2.0]), &[1.0, 1.0], 0.5),
        Err(Error::NotPositiveDefinite { .. })
    ));
}

#[test]
fn exact_quadratic_solve_matches_lu() {
    let mut r = rng(26);
    for _ in 0..20 {
        let g = DMatrix::from_fn(5, 5, |_, _| normal(&mut r));
        let spd = g.transpose() * &g + DMatrix::identity(5, 5) * 0.5;
        let rhs = normals(&mut r, 5);
        let sigma = Matrix::from_vec(5, 5, spd.transpose().as_slice().to_vec()).unwrap();
        let ours = solve_quadratic_exact(&sigma, &rhs, 0.25).unwrap();
        let shifted = &spd + DMatrix::identity(5, 5) * 0.25;
        let oracle = shifted.clone().lu().solve(&vec_na(&rhs)).unwrap();
        assert!(max_abs_diff(&ours, oracle.as_slice()) <= 1e-10);
        let residual = (&shifted * vec_na(&ours) - vec_na(&rhs)).norm();
        assert!(residual <= 1e-12 * vec_na(&rhs).norm(), "{residual}");
    }
}

