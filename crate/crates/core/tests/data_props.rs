mod common;

use cease_core::data::{
    generate, partition, shard_sizes, stream_rng, test_error, train_test_split, Covariance, Experiment, PartitionScheme,
    Standardization, SyntheticSpec, ThetaStar, DATA_STREAM, THETA_STREAM,
};
use cease_core::engine::{reference_minimizer, reference_settings};
use cease_core::{Error, GlmFamily, Penalty, Shard};
use common::*;
use proptest::prelude::*;
use rand::RngCore;

fn small(seed: u64) -> SyntheticSpec {
    SyntheticSpec::logistic_dense(seed).with_size(300, 6)
}

#[test]
fn generation_is_bitwise_reproducible() {
    for spec in [small(9), SyntheticSpec::logistic_sparse_l1(9).with_size(200, 30)] {
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let bits = |s: &Shard| s.x().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.train), bits(&b.train));
    }
    assert_ne!(generate(&small(9)).unwrap().train, generate(&small(10)).unwrap().train);
}

#[test]
fn streams_are_independent() {
    let mut a = stream_rng(5, THETA_STREAM);
    let mut b = stream_rng(5, DATA_STREAM);
    assert_ne!(a.next_u64(), b.next_u64());
    assert_eq!(stream_rng(5, DATA_STREAM).next_u64(), stream_rng(5, DATA_STREAM).next_u64());
}

#[test]
fn zero_signal_gives_balanced_labels() {
    let spec = SyntheticSpec {
        theta_star: ThetaStar::Given(vec![0.0; 6]),
        ..SyntheticSpec::logistic_dense(3).with_size(100_000, 5)
    };
    let bundle = generate(&spec).unwrap();
    let mean = bundle.train.y().iter().sum::<f64>() / 100_000.0;
    assert!((mean - 0.5).abs() <= 0.01, "{mean}");
}

#[test]
fn leading_covariance_eigenvalue_is_ten() {
    let spec = SyntheticSpec::logistic_dense(4).with_size(100_000, 8);
    let x = design(&generate(&spec).unwrap().train);
    let u = x.columns(1, 8).into_owned();
    let cov = u.transpose() * &u / 100_000.0;
    let top = cov.symmetric_eigenvalues().max();
    assert!((top - 10.0).abs() <= 0.5, "{top}");
    assert_eq!(Covariance::Diag10521.diagonal(4), vec![10.0, 5.0, 2.0, 1.0]);
}

#[test]
fn theta_star_layouts() {
    let dense = SyntheticSpec::logistic_dense(1).draw_theta_star().unwrap();
    assert_eq!(dense.len(), 101);
    assert!((dist(&dense, &[0.0; 101]) - 3.0).abs() <= 1e-12);
    let sparse = SyntheticSpec::logistic_sparse_l1(1).draw_theta_star().unwrap();
    assert_eq!(sparse.len(), 1001);
    assert!(sparse[..10].iter().all(|v| (v - 0.5f64.sqrt()).abs() <= 1e-15));
    assert!(sparse[10..].iter().all(|v| *v == 0.0));
    assert_eq!(Experiment::from_name("logistic_dense"), Some(Experiment::LogisticDense));
    assert_eq!(Experiment::LogisticSparseL1.name(), "logistic_sparse_l1");
}

#[test]
fn shard_size_examples() {
    assert_eq!(shard_sizes(10, 5).unwrap(), vec![2; 5]);
    assert_eq!(shard_sizes(11, 5).unwrap(), vec![3, 2, 2, 2, 2]);
    assert!(matches!(shard_sizes(3, 4), Err(Error::TooManyMachines { machines: 4, rows: 3 })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn partitions_cover_every_row_once(n in 1usize..200, m in 1usize..20, seed in any::<u64>(), shuffled in any::<bool>()) {
        prop_assume!(m <= n);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let shard = Shard::from_features(&refs, vec![0.0; n]).unwrap();
        let scheme = if shuffled { PartitionScheme::Shuffled(seed) } else { PartitionScheme::Contiguous };
        let parts = partition(&shard, m, scheme).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Shard::len).collect();
        prop_assert_eq!(&sizes, &shard_sizes(n, m).unwrap());
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut ids: Vec<usize> = parts.iter().flat_map(|s| (0..s.len()).map(|i| s.x().row(i)[1] as usize).collect::<Vec<_>>()).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(&parts, &partition(&shard, m, scheme).unwrap());
    }

    #[test]
    fn pooled_risk_is_the_weighted_local_risk(seed in any::<u64>(), n in 5usize..60, m in 1usize..5) {
        prop_assume!(m <= n);
        let mut r = rng(seed);
        let shard = random_shard(&mut r, n, 3, GlmFamily::Bernoulli);
        let theta = normals(&mut r, 4);
        let parts = partition(&shard, m, PartitionScheme::Shuffled(seed)).unwrap();
        let weighted: f64 = parts.iter().map(|s| s.len() as f64 / n as f64 * s.loss(GlmFamily::Bernoulli, &theta).unwrap()).sum();
        let pooled = shard.loss(GlmFamily::Bernoulli, &theta).unwrap();
        prop_assert!((weighted - pooled).abs() <= 1e-12 * (1.0 + pooled.abs()));
    }

    #[test]
    fn split_is_disjoint_and_complete(n in 2usize..200, frac in 0.01f64..0.99, seed in any::<u64>()) {
        let test_rows = ((n as f64 * frac) as usize).clamp(1, n - 1);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let shard = Shard::from_features(&refs, vec![1.0; n]).unwrap();
        let (train, test) = train_test_split(&shard, test_rows, seed).unwrap();
        prop_assert_eq!(test.len(), test_rows);
        prop_assert_eq!(train.len() + test.len(), n);
        let ids = |s: &Shard| (0..s.len()).map(|i| s.x().row(i)[1] as usize).collect::<Vec<_>>();
        let mut all = ids(&train);
        all.extend(ids(&test));
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn standardized_columns_have_zero_mean_and_unit_variance(seed in any::<u64>(), n in 3usize..80, p in 1usize..6) {
        let mut r = rng(seed);
        let shard = random_shard(&mut r, n, p, GlmFamily::Gaussian);
        let fitted = Standardization::fit(&shard);
        let out = design(&fitted.apply(&shard).unwrap());
        for j in 1..=p {
            let col = out.column(j);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() <= 1e-10);
            prop_assert!((var - 1.0).abs() <= 1e-8, "{}", var);
        }
        prop_assert!(out.column(0).iter().all(|v| *v == 1.0));
    }
}

#[test]
fn shuffling_does_not_move_the_minimizer() {
    let bundle = generate(&small(12)).unwrap();
    let penalty = Penalty::l2(1e-3);
    let a = bundle.cluster(4, PartitionScheme::Contiguous, GlmFamily::Bernoulli, penalty).unwrap();
    let b = bundle.cluster(4, PartitionScheme::Shuffled(7), GlmFamily::Bernoulli, penalty).unwrap();
    let ta = reference_minimizer(&a, &reference_settings()).unwrap().theta;
    let tb = reference_minimizer(&b, &reference_settings()).unwrap().theta;
    assert!(max_abs_diff(&ta, &tb) <= 1e-8);
}

#[test]
fn constant_columns_become_zero() {
    let shard = Shard::from_features(&[&[2.0, 1.0], &[2.0, 3.0]], vec![0.0, 1.0]).unwrap();
    let fitted = Standardization::fit(&shard);
    assert_eq!(fitted.scales[0], 0.0);
    let out = fitted.apply(&shard).unwrap();
    assert_eq!(out.x().row(0), &[1.0, 0.0, -1.0]);
    assert_eq!(out.x().row(1), &[1.0, 0.0, 1.0]);
}

#[test]
fn test_error_examples() {
    let test = Shard::from_features(&[&[1.0], &[-1.0], &[0.0]], vec![1.0, 1.0, 0.0]).unwrap();
    let err = test_error(&[0.0, 1.0], &test).unwrap();
    assert!((err - 1.0 / 3.0).abs() <= 1e-15);
    let empty = Shard::from_features(&[], vec![]);
    if let Ok(empty) = empty {
        assert!(matches!(test_error(&[0.0, 1.0], &empty), Err(Error::EmptyTestSet)));
    }
    assert!(matches!(train_test_split(&test, 0, 1), Err(Error::EmptyTestSet)));
}
