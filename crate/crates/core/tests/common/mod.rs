#![allow(dead_code)]

use cease_core::{Cluster, GlmFamily, Matrix, Penalty, Shard};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| normal(rng)).collect()
}

/// `n` rows with `p` standard-normal features; responses drawn from the
/// family's model at a random coefficient vector.
pub fn random_shard(rng: &mut ChaCha8Rng, n: usize, p: usize, family: GlmFamily) -> Shard {
    let beta: Vec<f64> = normals(rng, p + 1);
    let mut data = Vec::with_capacity(n * (p + 1));
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut eta = beta[0];
        data.push(1.0);
        for b in &beta[1..] {
            let v = normal(rng);
            eta += b * v;
            data.push(v);
        }
        y.push(match family {
            GlmFamily::Gaussian => eta + normal(rng),
            GlmFamily::Bernoulli => {
                let prob = 1.0 / (1.0 + (-eta).exp());
                if rng.random::<f64>() < prob {
                    1.0
                } else {
                    0.0
                }
            }
        });
    }
    Shard::new(Matrix::from_vec(n, p + 1, data).unwrap(), y).unwrap()
}

pub fn random_cluster(
    rng: &mut ChaCha8Rng,
    sizes: &[usize],
    p: usize,
    family: GlmFamily,
    penalty: Penalty,
) -> Cluster {
    let total: usize = sizes.iter().sum();
    let pooled = random_shard(rng, total, p, family);
    let mut shards = Vec::new();
    let mut start = 0;
    for &n in sizes {
        let rows: Vec<usize> = (start..start + n).collect();
        shards.push(pooled.select_rows(&rows).unwrap());
        start += n;
    }
    Cluster::new(shards, family, penalty).unwrap()
}

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn design(shard: &Shard) -> DMatrix<f64> {
    to_na(shard.x())
}

pub fn vec_na(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Least-squares solution of a shard by the normal equations, via LU.
pub fn least_squares(shard: &Shard) -> Vec<f64> {
    let x = design(shard);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * vec_na(shard.y());
    xtx.lu().solve(&xty).unwrap().as_slice().to_vec()
}

/// `(1/n) Σ b″(xᵢᵀθ) xᵢxᵢᵀ` written out directly.
pub fn hessian_oracle(shard: &Shard, family: GlmFamily, theta: &[f64]) -> DMatrix<f64> {
    let x = design(shard);
    let eta = &x * vec_na(theta);
    let w = DVector::from_iterator(
        eta.len(),
        eta.iter().map(|e| match family {
            GlmFamily::Gaussian => 1.0,
            GlmFamily::Bernoulli => {
                let s = 1.0 / (1.0 + (-e).exp());
                s * (1.0 - s)
            }
        }),
    );
    let xw = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * w[i]);
    x.transpose() * xw / shard.len() as f64
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
