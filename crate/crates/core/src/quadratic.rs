//! Closed-form CEASE iterations for unpenalized least squares.
//!
//! With `Σ̂_k = (1/n_k) Σ xᵢxᵢᵀ` and `ŵ_k = (1/n_k) Σ xᵢyᵢ`, the surrogate is a
//! quadratic and one iteration is the affine map
//!
//! ```text
//! θ_{t+1} = θ_t − (Σ̂_1 + αI)⁻¹ (Σ̂ θ_t − ŵ)                 (single machine)
//! θ_{t+1} = θ_t − Σ_k w_k (Σ̂_k + αI)⁻¹ (Σ̂ θ_t − ŵ)         (averaged)
//! ```
//!
//! evaluated with Cholesky solves; no matrix is ever inverted explicitly.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::Cluster;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Cholesky, Matrix, SymmetricEigen};
use crate::model::{GlmFamily, PenaltyKind};

/// Second moments of a least-squares cluster.
#[derive(Debug, Clone)]
pub struct QuadState {
    local_covs: Vec<Matrix>,
    local_cross: Vec<Vec<f64>>,
    weights: Vec<f64>,
    pooled_cov: Matrix,
    pooled_cross: Vec<f64>,
}

impl QuadState {
    /// Reads the moments off a Gaussian, unpenalized cluster.
    pub fn from_cluster(cluster: &Cluster) -> Result<Self> {
        if cluster.family() != GlmFamily::Gaussian {
            return Err(Error::invalid("closed-form iterations need the Gaussian family"));
        }
        if cluster.penalty().kind != PenaltyKind::None && cluster.penalty().lambda() != 0.0 {
            return Err(Error::invalid("closed-form iterations assume no penalty"));
        }
        let mut covs = Vec::with_capacity(cluster.machines());
        let mut cross = Vec::with_capacity(cluster.machines());
        for s in cluster.shards() {
            let inv_n = 1.0 / s.len() as f64;
            let mut cov = s.x().transpose().matmul(s.x());
            cov.scale(inv_n);
            let mut w = s.x().matvec_t(s.y());
            w.iter_mut().for_each(|v| *v *= inv_n);
            covs.push(cov);
            cross.push(w);
        }
        Self::from_parts(covs, cross, cluster.weights().to_vec())
    }

    /// Builds the state from explicit local moments and machine weights.
    pub fn from_parts(local_covs: Vec<Matrix>, local_cross: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let m = local_covs.len();
        if m == 0 || local_cross.len() != m || weights.len() != m {
            return Err(Error::invalid("need one covariance, cross-moment and weight per machine"));
        }
        let d = local_covs[0].rows();
        for (c, w) in local_covs.iter().zip(&local_cross) {
            if c.rows() != d || c.cols() != d || w.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: if w.len() != d { w.len() } else { c.cols() },
                });
            }
        }
        let mut pooled_cov = Matrix::zeros(d, d);
        let mut pooled_cross = vec![0.0; d];
        for ((c, w), wt) in local_covs.iter().zip(&local_cross).zip(&weights) {
            pooled_cov.add_scaled(*wt, c);
            axpy(*wt, w, &mut pooled_cross);
        }
        Ok(QuadState {
            local_covs,
            local_cross,
            weights,
            pooled_cov,
            pooled_cross,
        })
    }

    pub fn machines(&self) -> usize {
        self.local_covs.len()
    }

    pub fn dim(&self) -> usize {
        self.pooled_cross.len()
    }

    pub fn local_cov(&self, k: usize) -> &Matrix {
        &self.local_covs[k]
    }

    pub fn local_cross(&self, k: usize) -> &[f64] {
        &self.local_cross[k]
    }

    /// `Σ̂`
    pub fn pooled_cov(&self) -> &Matrix {
        &self.pooled_cov
    }

    /// `ŵ`
    pub fn pooled_cross(&self) -> &[f64] {
        &self.pooled_cross
    }

    /// `Σ̂⁻¹ŵ`, the pooled least-squares solution.
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        Ok(Cholesky::factor(&self.pooled_cov)?.solve(&self.pooled_cross))
    }

    /// `‖Σ̂^{1/2}(θ − Σ̂⁻¹ŵ)‖₂`, the error in the metric the contraction bound uses.
    pub fn metric_error(&self, theta: &[f64], minimizer: &[f64]) -> f64 {
        let e: Vec<f64> = theta.iter().zip(minimizer).map(|(a, b)| a - b).collect();
        libm::sqrt(f64::max(dot(&e, &self.pooled_cov.matvec(&e)), 0.0))
    }

    /// `Σ̂θ − ŵ`
    fn residual(&self, theta: &[f64]) -> Vec<f64> {
        let mut r = self.pooled_cov.matvec(theta);
        for (ri, wi) in r.iter_mut().zip(&self.pooled_cross) {
            *ri -= wi;
        }
        r
    }

    fn shifted_factor(&self, k: usize, alpha: f64) -> Result<Cholesky> {
        let mut a = self.local_covs[k].clone();
        a.add_diag(alpha);
        Cholesky::factor(&a).map_err(|e| e.at_node(k))
    }

    fn check(&self, theta: &[f64], alpha: f64) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        if !(alpha >= 0.0) {
            return Err(Error::invalid("alpha must be nonnegative"));
        }
        Ok(())
    }
}

/// One single-machine CEASE step (machine 1 solves).
pub fn cease_step_closed(state: &QuadState, alpha: f64, theta: &[f64]) -> Result<Vec<f64>> {
    state.check(theta, alpha)?;
    let delta = state.shifted_factor(0, alpha)?.solve(&state.residual(theta));
    Ok(theta.iter().zip(&delta).map(|(t, d)| t - d).collect())
}

/// One CEASE-with-averaging step.
pub fn cease_avg_step_closed(state: &QuadState, alpha: f64, theta: &[f64]) -> Result<Vec<f64>> {
    state.check(theta, alpha)?;
    let r = state.residual(theta);
    let mut next = theta.to_vec();
    for k in 0..state.machines() {
        let delta = state.shifted_factor(k, alpha)?.solve(&r);
        axpy(-state.weights[k], &delta, &mut next);
    }
    Ok(next)
}

/// `T` closed-form steps from `theta0`, including `theta0` itself.
pub fn closed_form_iterates(
    state: &QuadState,
    averaged: bool,
    alpha: f64,
    theta0: &[f64],
    iterations: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(iterations + 1);
    out.push(theta0.to_vec());
    for _ in 0..iterations {
        let last = out.last().expect("nonempty");
        let next = if averaged {
            cease_avg_step_closed(state, alpha, last)?
        } else {
            cease_step_closed(state, alpha, last)?
        };
        out.push(next);
    }
    Ok(out)
}

/// Operator norm of the averaged iteration matrix `I − Σ_k w_k (Σ̂_k+αI)⁻¹Σ̂`
/// in the `Σ̂^{1/2}` metric, i.e. `‖I − Σ_k w_k Σ̂^{1/2}(Σ̂_k+αI)⁻¹Σ̂^{1/2}‖₂`.
/// For one machine this is the single-machine factor as well.
pub fn spectral_contraction(state: &QuadState, alpha: f64) -> Result<f64> {
    let eig = SymmetricEigen::new(&state.pooled_cov)?;
    if !(eig.min() > 0.0) {
        return Err(Error::NotPositiveDefinite { pivot: 0 });
    }
    let root = eig.map_values(libm::sqrt);
    let d = state.dim();
    let mut b = Matrix::identity(d);
    for k in 0..state.machines() {
        let inner = state.shifted_factor(k, alpha)?.solve_matrix(&root);
        b.add_scaled(-state.weights[k], &root.matmul(&inner));
    }
    // Symmetric in exact arithmetic; average out rounding before the eigensolve.
    let bt = b.transpose();
    b.add_scaled(1.0, &bt);
    b.scale(0.5);
    Ok(SymmetricEigen::new(&b)?.spectral_norm())
}
