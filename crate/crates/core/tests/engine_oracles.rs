mod common;

use cease_core::data::{generate, PartitionScheme, SyntheticSpec};
use cease_core::engine::{reference_minimizer, reference_settings, resolve_init};
use cease_core::quadratic::{closed_form_iterates, QuadState};
use cease_core::{
    global_gradient, one_shot_average, run, step, AlgoConfig, Cluster, GlmFamily, Init, Penalty, Shard,
    SolverSettings, Variant,
};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::RngCore;

fn split(shard: &Shard, sizes: &[usize]) -> Vec<Shard> {
    let mut out = Vec::new();
    let mut start = 0;
    for &n in sizes {
        out.push(shard.select_rows(&(start..start + n).collect::<Vec<_>>()).unwrap());
        start += n;
    }
    out
}

#[test]
fn global_gradient_matches_pooled_data() {
    let mut r = rng(31);
    for family in [GlmFamily::Gaussian, GlmFamily::Bernoulli] {
        let pooled = random_shard(&mut r, 100, 4, family);
        let mut order: Vec<usize> = (0..100).collect();
        for i in (1..100).rev() {
            order.swap(i, (r.next_u64() % (i as u64 + 1)) as usize);
        }
        let shuffled = pooled.select_rows(&order).unwrap();
        let cluster = Cluster::new(split(&shuffled, &[30, 10, 45, 15]), family, Penalty::none()).unwrap();
        let theta = normals(&mut r, 5);
        let ours = global_gradient(&cluster, &theta).unwrap();
        let oracle = pooled.gradient(family, &theta).unwrap();
        assert!(max_abs_diff(&ours, &oracle) <= 1e-12);
    }
}

#[test]
fn global_gradient_degenerate_cases() {
    let mut r = rng(32);
    let shard = random_shard(&mut r, 20, 3, GlmFamily::Bernoulli);
    let theta = normals(&mut r, 4);
    let local = shard.gradient(GlmFamily::Bernoulli, &theta).unwrap();
    let single = Cluster::new(vec![shard.clone()], GlmFamily::Bernoulli, Penalty::none()).unwrap();
    assert_eq!(global_gradient(&single, &theta).unwrap(), local);
    let twins = Cluster::new(vec![shard.clone(), shard], GlmFamily::Bernoulli, Penalty::none()).unwrap();
    assert_eq!(global_gradient(&twins, &theta).unwrap(), local);
}

fn alphas(cluster: &Cluster) -> [f64; 3] {
    [0.0, 0.15 * cluster.features() as f64 / cluster.local_size(), 1.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn minimizer_is_a_fixed_point(seed in any::<u64>(), l2 in any::<bool>()) {
        let mut r = rng(seed);
        let penalty = if l2 { Penalty::l2(0.01) } else { Penalty::none() };
        let cluster = random_cluster(&mut r, &[60, 60, 50], 3, GlmFamily::Bernoulli, penalty);
        let theta_hat = reference_minimizer(&cluster, &reference_settings()).unwrap().theta;
        for variant in Variant::ALL {
            for alpha in alphas(&cluster) {
                let (next, _) = step(&cluster, &AlgoConfig::new(variant, alpha, 1), &theta_hat).unwrap();
                prop_assert!(dist(&next, &theta_hat) <= 1e-9, "{:?} α={}", variant, alpha);
            }
        }
    }

    #[test]
    fn averaged_variants_ignore_machine_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cluster = random_cluster(&mut r, &[40, 40, 40, 40], 3, GlmFamily::Bernoulli, Penalty::l2(0.02));
        let mut reversed: Vec<Shard> = cluster.shards().to_vec();
        reversed.reverse();
        let relabeled = Cluster::new(reversed, GlmFamily::Bernoulli, Penalty::l2(0.02)).unwrap();
        for variant in [Variant::Gel, Variant::CeaseAvg] {
            let cfg = AlgoConfig::new(variant, 0.1, 4);
            let a = run(&cluster, &cfg).unwrap();
            let b = run(&relabeled, &cfg).unwrap();
            for (x, y) in a.iterates.iter().zip(&b.iterates) {
                prop_assert!(max_abs_diff(x, y) <= 1e-10);
            }
        }
    }
}

#[test]
fn single_machine_variants_depend_only_on_the_first_shard() {
    let mut r = rng(33);
    let cluster = random_cluster(&mut r, &[40, 40, 40], 3, GlmFamily::Bernoulli, Penalty::none());
    let s = cluster.shards();
    let swapped_tail = Cluster::new(vec![s[0].clone(), s[2].clone(), s[1].clone()], GlmFamily::Bernoulli, Penalty::none()).unwrap();
    let swapped_head = Cluster::new(vec![s[1].clone(), s[0].clone(), s[2].clone()], GlmFamily::Bernoulli, Penalty::none()).unwrap();
    let cfg = AlgoConfig::new(Variant::Cease, 0.1, 3);
    let base = run(&cluster, &cfg).unwrap();
    let tail = run(&swapped_tail, &cfg).unwrap();
    let head = run(&swapped_head, &cfg).unwrap();
    assert!(max_abs_diff(base.last(), tail.last()) <= 1e-10);
    assert!(max_abs_diff(base.last(), head.last()) > 1e-6);
}

#[test]
fn one_machine_converges_in_one_step() {
    let mut r = rng(34);
    for i in 0..10 {
        let family = if i % 2 == 0 { GlmFamily::Bernoulli } else { GlmFamily::Gaussian };
        let penalty = if i % 3 == 0 { Penalty::l2(0.05) } else { Penalty::none() };
        let cluster = random_cluster(&mut r, &[80], 4, family, penalty);
        let theta_hat = reference_minimizer(&cluster, &reference_settings()).unwrap().theta;
        for variant in [Variant::Cease, Variant::Csl] {
            let trace = run(&cluster, &AlgoConfig::new(variant, 0.0, 1)).unwrap();
            assert!(dist(trace.last(), &theta_hat) <= 1e-8);
        }
    }
}

#[test]
fn communication_tallies_follow_the_convention() {
    let mut r = rng(35);
    let cluster = random_cluster(&mut r, &[30, 30, 30], 2, GlmFamily::Bernoulli, Penalty::l2(0.1));
    for variant in Variant::ALL {
        let trace = run(&cluster, &AlgoConfig::new(variant, 0.2, 3)).unwrap();
        let (rounds, vectors) = if variant.averages() { (2, 12) } else { (1, 6) };
        assert_eq!(trace.comm_rounds, vec![rounds; 3]);
        assert_eq!(trace.vectors_sent, vec![vectors; 3]);
        assert_eq!(trace.iterates.len(), 4);
        let solved = if variant.averages() { 3 } else { 1 };
        assert!(trace.inner_residuals.iter().all(|r| r.len() == solved));
    }
    let empty = run(&cluster, &AlgoConfig::new(Variant::Cease, 0.2, 0)).unwrap();
    assert_eq!(empty.iterates.len(), 1);
}

/// `θ − Σ_k w_k (Σ̂_k+αI)⁻¹(Σ̂θ − ŵ)` written with explicit inverses.
fn closed_form_oracle(cluster: &Cluster, averaged: bool, alpha: f64, theta: &DVector<f64>) -> DVector<f64> {
    let d = cluster.dim();
    let mut covs = Vec::new();
    let mut cross = Vec::new();
    for s in cluster.shards() {
        let x = design(s);
        let n = s.len() as f64;
        covs.push(x.transpose() * &x / n);
        cross.push(x.transpose() * vec_na(s.y()) / n);
    }
    let w = cluster.weights();
    let pooled_cov = covs.iter().zip(w).fold(DMatrix::zeros(d, d), |acc, (c, wk)| acc + c * *wk);
    let pooled_cross = cross.iter().zip(w).fold(DVector::zeros(d), |acc, (c, wk)| acc + c * *wk);
    let resid = &pooled_cov * theta - pooled_cross;
    let shifted = |k: usize| (&covs[k] + DMatrix::identity(d, d) * alpha).try_inverse().unwrap();
    if averaged {
        let mut next = theta.clone();
        for k in 0..covs.len() {
            next -= shifted(k) * &resid * w[k];
        }
        next
    } else {
        theta - shifted(0) * resid
    }
}

#[test]
fn gaussian_step_matches_closed_form() {
    let mut r = rng(36);
    for _ in 0..10 {
        let cluster = random_cluster(&mut r, &[25, 25, 25, 25], 5, GlmFamily::Gaussian, Penalty::none());
        let theta = normals(&mut r, 6);
        for (variant, averaged) in [(Variant::Cease, false), (Variant::CeaseAvg, true)] {
            let (ours, _) = step(&cluster, &AlgoConfig::new(variant, 0.3, 1), &theta).unwrap();
            let oracle = closed_form_oracle(&cluster, averaged, 0.3, &vec_na(&theta));
            assert!(max_abs_diff(&ours, oracle.as_slice()) <= 1e-10);
        }
    }
}

#[test]
fn gaussian_runs_match_closed_form_traces() {
    let mut r = rng(37);
    for _ in 0..5 {
        let cluster = random_cluster(&mut r, &[30, 20, 25], 4, GlmFamily::Gaussian, Penalty::none());
        let state = QuadState::from_cluster(&cluster).unwrap();
        let theta0 = normals(&mut r, 5);
        let cfg = AlgoConfig::new(Variant::CeaseAvg, 0.2, 10).with_init(Init::Given(theta0.clone()));
        let trace = run(&cluster, &cfg).unwrap();
        let closed = closed_form_iterates(&state, true, 0.2, &theta0, 10).unwrap();
        let mut oracle = vec_na(&theta0);
        for (t, (ours, exact)) in trace.iterates.iter().zip(&closed).enumerate() {
            assert!(max_abs_diff(ours, exact) <= 1e-9, "t={t}");
            assert!(max_abs_diff(exact, oracle.as_slice()) <= 1e-9, "t={t}");
            oracle = closed_form_oracle(&cluster, true, 0.2, &oracle);
        }
    }
}

#[test]
fn one_shot_average_matches_ridge_oracle() {
    let mut r = rng(38);
    let lambda = 0.05;
    let cluster = random_cluster(&mut r, &[40, 30], 3, GlmFamily::Gaussian, Penalty::l2(lambda));
    let ours = one_shot_average(&cluster, &SolverSettings::default()).unwrap();
    let mut oracle = DVector::zeros(4);
    for s in cluster.shards() {
        let x = design(s);
        let n = s.len() as f64;
        let a = x.transpose() * &x / n + DMatrix::identity(4, 4) * (2.0 * lambda);
        let b = x.transpose() * vec_na(s.y()) / n;
        oracle += a.lu().solve(&b).unwrap() * 0.5;
    }
    assert!(max_abs_diff(&ours, oracle.as_slice()) <= 1e-9);

    let shard = cluster.shards()[0].clone();
    let twins = Cluster::new(vec![shard.clone(), shard.clone()], GlmFamily::Gaussian, Penalty::l2(lambda)).unwrap();
    let single = Cluster::new(vec![shard], GlmFamily::Gaussian, Penalty::l2(lambda)).unwrap();
    let local = reference_minimizer(&single, &reference_settings()).unwrap().theta;
    assert!(max_abs_diff(&one_shot_average(&twins, &SolverSettings::default()).unwrap(), &local) <= 1e-9);
    assert!(max_abs_diff(&one_shot_average(&single, &SolverSettings::default()).unwrap(), &local) <= 1e-9);
    assert_eq!(
        resolve_init(&single, &Init::OneShotAverage, &SolverSettings::default()).unwrap(),
        one_shot_average(&single, &SolverSettings::default()).unwrap()
    );
}

/// Ratios stop once an iterate is within 100× the inner tolerance of θ̂.
fn ratios_below_one(errors: &[f64], floor: f64) -> bool {
    errors.windows(2).take_while(|w| w[0] > floor).all(|w| w[1] < w[0])
}

#[test]
fn large_local_samples_contract_every_step() {
    let mut contracting = 0;
    let mut decreasing = 0;
    for seed in 0..10 {
        let bundle = generate(&SyntheticSpec::logistic_dense(seed)).unwrap();
        let cluster = bundle.cluster(5, PartitionScheme::Contiguous, GlmFamily::Bernoulli, Penalty::none()).unwrap();
        let theta_hat = reference_minimizer(&cluster, &reference_settings()).unwrap().theta;
        let alpha = 0.15 * 100.0 / 2000.0;
        let trace = run(&cluster, &AlgoConfig::new(Variant::Cease, alpha, 30)).unwrap();
        let errors = trace.errors_to(&theta_hat);
        let floor = 100.0 * SolverSettings::default().newton_tol;
        contracting += usize::from(ratios_below_one(&errors, floor));
        decreasing += usize::from(ratios_below_one(&errors[2..], floor));
    }
    assert!(contracting >= 9, "{contracting}/10");
    assert!(decreasing >= 9, "{decreasing}/10");
}
