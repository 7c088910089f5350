//! Synthetic designs, splitting, partitioning and standardization.
//!
//! Random draws come from ChaCha20 with a fixed stream per purpose, so the
//! same seed reproduces the same bundle on every platform:
//!
//! | stream | use |
//! |---|---|
//! | 1 | `θ*` |
//! | 2 | design and responses |
//! | 3 | train/test split |
//! | 4 | shuffled partitions |

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::engine::Cluster;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::model::{sigmoid, GlmFamily, Penalty, Shard};

pub const THETA_STREAM: u64 = 1;
pub const DATA_STREAM: u64 = 2;
pub const SPLIT_STREAM: u64 = 3;
pub const PARTITION_STREAM: u64 = 4;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    LogisticDense,
    LogisticSparseL1,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::LogisticDense => "logistic_dense",
            Experiment::LogisticSparseL1 => "logistic_sparse_l1",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "logistic_dense" => Some(Experiment::LogisticDense),
            "logistic_sparse_l1" => Some(Experiment::LogisticSparseL1),
            _ => None,
        }
    }
}

/// Feature covariance of `u`; both choices are diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariance {
    /// `diag(10, 5, 2, 1, …, 1)`
    Diag10521,
    Identity,
}

impl Covariance {
    pub fn diagonal(self, p: usize) -> Vec<f64> {
        let mut d = vec![1.0; p];
        if self == Covariance::Diag10521 {
            for (slot, v) in d.iter_mut().zip([10.0, 5.0, 2.0]) {
                *slot = v;
            }
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaStar {
    /// Uniform direction in `R^{p+1}`, scaled to the given norm.
    Sphere { norm: f64 },
    /// First `support` coordinates (intercept included) equal `1/√2`, rest zero.
    LeadingOnes { support: usize },
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub experiment: Experiment,
    pub total_rows: usize,
    pub features: usize,
    pub covariance: Covariance,
    pub theta_star: ThetaStar,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn logistic_dense(seed: u64) -> Self {
        SyntheticSpec {
            experiment: Experiment::LogisticDense,
            total_rows: 10_000,
            features: 100,
            covariance: Covariance::Diag10521,
            theta_star: ThetaStar::Sphere { norm: 3.0 },
            seed,
        }
    }

    pub fn logistic_sparse_l1(seed: u64) -> Self {
        SyntheticSpec {
            experiment: Experiment::LogisticSparseL1,
            total_rows: 5_000,
            features: 1_000,
            covariance: Covariance::Identity,
            theta_star: ThetaStar::LeadingOnes { support: 10 },
            seed,
        }
    }

    pub fn with_size(mut self, total_rows: usize, features: usize) -> Self {
        self.total_rows = total_rows;
        self.features = features;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_rows == 0 {
            return Err(Error::invalid("synthetic data needs at least one row"));
        }
        match &self.theta_star {
            ThetaStar::Sphere { norm } if !(*norm >= 0.0 && norm.is_finite()) => {
                Err(Error::invalid("theta* norm must be nonnegative"))
            }
            ThetaStar::LeadingOnes { support } if *support > self.features + 1 => Err(Error::DimensionMismatch {
                expected: self.features + 1,
                found: *support,
            }),
            ThetaStar::Given(t) if t.len() != self.features + 1 => Err(Error::DimensionMismatch {
                expected: self.features + 1,
                found: t.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Draws `θ*` from the θ* stream.
    pub fn draw_theta_star(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let d = self.features + 1;
        Ok(match &self.theta_star {
            ThetaStar::Sphere { norm } => {
                let mut rng = stream_rng(self.seed, THETA_STREAM);
                let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let len = norm2(&v);
                v.iter_mut().for_each(|x| *x *= norm / len);
                v
            }
            ThetaStar::LeadingOnes { support } => {
                let mut v = vec![0.0; d];
                v[..*support].fill(core::f64::consts::FRAC_1_SQRT_2);
                v
            }
            ThetaStar::Given(t) => t.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Synthetic(SyntheticSpec),
    File { path: String, checksum: String, rows: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: Shard,
    pub test: Option<Shard>,
    pub theta_star: Option<Vec<f64>>,
    pub provenance: Provenance,
}

impl DatasetBundle {
    /// Splits the training rows over `machines` machines.
    pub fn cluster(
        &self,
        machines: usize,
        scheme: PartitionScheme,
        family: GlmFamily,
        penalty: Penalty,
    ) -> Result<Cluster> {
        Cluster::new(partition(&self.train, machines, scheme)?, family, penalty)
    }
}

/// `x = (1, u)`, `u ~ N(0, Σ)`, `y ~ Bernoulli(σ(xᵀθ*))`.
pub fn generate(spec: &SyntheticSpec) -> Result<DatasetBundle> {
    let theta_star = spec.draw_theta_star()?;
    let d = spec.features + 1;
    let scales: Vec<f64> = spec.covariance.diagonal(spec.features).into_iter().map(libm::sqrt).collect();
    let mut rng = stream_rng(spec.seed, DATA_STREAM);
    let mut data = Vec::with_capacity(spec.total_rows * d);
    let mut y = Vec::with_capacity(spec.total_rows);
    let mut row = vec![0.0; d];
    for _ in 0..spec.total_rows {
        row[0] = 1.0;
        for (slot, s) in row[1..].iter_mut().zip(&scales) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *slot = s * z;
        }
        let prob = sigmoid(dot(&row, &theta_star));
        let u: f64 = rng.random();
        y.push(if u < prob { 1.0 } else { 0.0 });
        data.extend_from_slice(&row);
    }
    let train = Shard::new(Matrix::from_vec(spec.total_rows, d, data)?, y)?;
    Ok(DatasetBundle {
        train,
        test: None,
        theta_star: Some(theta_star),
        provenance: Provenance::Synthetic(spec.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionScheme {
    Contiguous,
    Shuffled(u64),
}

/// Sizes `⌈N/m⌉` for the first `N mod m` machines and `⌊N/m⌋` for the rest.
pub fn shard_sizes(rows: usize, machines: usize) -> Result<Vec<usize>> {
    if machines == 0 {
        return Err(Error::invalid("need at least one machine"));
    }
    if machines > rows {
        return Err(Error::TooManyMachines { machines, rows });
    }
    let base = rows / machines;
    let extra = rows % machines;
    Ok((0..machines).map(|k| base + usize::from(k < extra)).collect())
}

pub fn partition(shard: &Shard, machines: usize, scheme: PartitionScheme) -> Result<Vec<Shard>> {
    let sizes = shard_sizes(shard.len(), machines)?;
    let mut order: Vec<usize> = (0..shard.len()).collect();
    if let PartitionScheme::Shuffled(seed) = scheme {
        order.shuffle(&mut stream_rng(seed, PARTITION_STREAM));
    }
    let mut out = Vec::with_capacity(machines);
    let mut start = 0;
    for size in sizes {
        out.push(shard.select_rows(&order[start..start + size])?);
        start += size;
    }
    Ok(out)
}

/// Random disjoint split; returns `(train, test)` with rows kept in file order.
pub fn train_test_split(shard: &Shard, test_rows: usize, seed: u64) -> Result<(Shard, Shard)> {
    if test_rows == 0 {
        return Err(Error::EmptyTestSet);
    }
    if test_rows >= shard.len() {
        return Err(Error::invalid("test split must leave training rows"));
    }
    let mut order: Vec<usize> = (0..shard.len()).collect();
    order.shuffle(&mut stream_rng(seed, SPLIT_STREAM));
    let (test, train) = order.split_at_mut(test_rows);
    test.sort_unstable();
    train.sort_unstable();
    Ok((shard.select_rows(train)?, shard.select_rows(test)?))
}

/// Per-feature location and scale estimated on a training design.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Population standard deviations; zero marks a constant column.
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Fits on every column after the intercept.
    pub fn fit(shard: &Shard) -> Self {
        let x = shard.x();
        let p = x.cols() - 1;
        let n = x.rows() as f64;
        let mut means = vec![0.0; p];
        for i in 0..x.rows() {
            for (m, v) in means.iter_mut().zip(&x.row(i)[1..]) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; p];
        for i in 0..x.rows() {
            for ((s, v), m) in vars.iter_mut().zip(&x.row(i)[1..]).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let scales = vars.into_iter().map(|s| libm::sqrt(s / n)).collect();
        Standardization { means, scales }
    }

    pub fn apply(&self, shard: &Shard) -> Result<Shard> {
        let mut x = shard.x().clone();
        if x.cols() != self.means.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.means.len() + 1,
                found: x.cols(),
            });
        }
        for i in 0..x.rows() {
            let row = &mut x.row_mut(i)[1..];
            for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.scales) {
                *v = if *s > 0.0 { (*v - m) / s } else { 0.0 };
            }
        }
        Shard::new(x, shard.y().to_vec())
    }
}

/// Fraction of rows with `1{xᵀθ > 0} ≠ y`.
pub fn test_error(theta: &[f64], test: &Shard) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if theta.len() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: test.dim(),
            found: theta.len(),
        });
    }
    let x = test.x();
    let wrong = (0..x.rows())
        .filter(|&i| {
            let predicted = if dot(x.row(i), theta) > 0.0 { 1.0 } else { 0.0 };
            predicted != test.y()[i]
        })
        .count();
    Ok(wrong as f64 / x.rows() as f64)
}
