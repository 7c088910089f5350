//! Empirical homogeneity and curvature measurements, default α rules and
//! contraction reports.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::engine::{Cluster, RunTrace};
use crate::error::{Error, Result};
use crate::linalg::{norm2, power_iteration, Matrix, SymmetricEigen};

/// Where the Hessians are evaluated: the centre alone, or the centre plus
/// `points` uniform draws from the ball of `radius` around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSampling {
    pub radius: f64,
    pub points: usize,
    pub seed: u64,
}

impl BallSampling {
    pub fn center_only() -> Self {
        BallSampling {
            radius: 0.0,
            points: 0,
            seed: 0,
        }
    }

    fn locations(&self, center: &[f64]) -> Result<Vec<Vec<f64>>> {
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid("sampling radius must be nonnegative"));
        }
        let mut out = vec![center.to_vec()];
        if self.points == 0 || self.radius == 0.0 {
            return Ok(out);
        }
        let d = center.len();
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        for _ in 0..self.points {
            let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let len = norm2(&dir);
            let u: f64 = rand::Rng::random(&mut rng);
            let r = self.radius * libm::pow(u, 1.0 / d as f64) / len;
            out.push(center.iter().zip(&dir).map(|(c, v)| c + r * v).collect());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneityReport {
    /// `max_k ‖∇²f_k(θ) − ∇²f(θ)‖₂`
    pub delta: f64,
    /// Per-machine spectral norms (maximised over sampled points).
    pub machine_norms: Vec<f64>,
    /// Point the report was centred on.
    pub point: Vec<f64>,
    /// Largest power-iteration residual across machines and points.
    pub residual: f64,
    pub converged: bool,
}

/// Power-iteration settings for [`estimate_delta`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSettings {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerSettings {
    fn default() -> Self {
        PowerSettings {
            max_iters: 200,
            tol: 1e-9,
            seed: 0,
        }
    }
}

/// Hessian heterogeneity `δ̂` at `theta` (and optionally around it).
pub fn estimate_delta(
    cluster: &Cluster,
    theta: &[f64],
    sampling: &BallSampling,
    power: &PowerSettings,
) -> Result<HomogeneityReport> {
    cluster.check_dim(theta)?;
    if power.max_iters < 10 {
        return Err(Error::invalid("power iteration needs at least 10 iterations"));
    }
    let m = cluster.machines();
    let mut report = HomogeneityReport {
        delta: 0.0,
        machine_norms: vec![0.0; m],
        point: theta.to_vec(),
        residual: 0.0,
        converged: true,
    };
    for (p, point) in sampling.locations(theta)?.iter().enumerate() {
        let global = cluster.global_hessian(point)?;
        for (k, shard) in cluster.shards().iter().enumerate() {
            let mut diff = shard.hessian(cluster.family(), point)?;
            diff.add_scaled(-1.0, &global);
            let seed = power.seed ^ ((p as u64) << 32 | k as u64);
            let est = power_iteration(diff.rows(), |v, out| apply(&diff, v, out), power.max_iters, power.tol, seed);
            report.machine_norms[k] = f64::max(report.machine_norms[k], est.value);
            report.residual = f64::max(report.residual, est.residual);
            report.converged &= est.converged;
        }
    }
    report.delta = report.machine_norms.iter().copied().fold(0.0, f64::max);
    Ok(report)
}

fn apply(a: &Matrix, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = crate::linalg::dot(a.row(i), v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureReport {
    /// `λ_min(∇²(f + g))`, with L1 contributing no curvature.
    pub rho: f64,
    /// `min_k λ_min(∇²(f_k + g))`
    pub rho0: f64,
    /// `λ_max(∇²f)`
    pub lambda_max: f64,
    /// `λ_max / ρ̂`, infinite when `ρ̂ ≤ 0`.
    pub kappa: f64,
    /// Set when `ρ̂ ≤ 0`: the objective is not strongly convex there.
    pub flagged: bool,
}

fn add_curvature(h: &mut Matrix, cluster: &Cluster) {
    let penalty = cluster.penalty();
    for j in 0..h.rows() {
        h[(j, j)] += penalty.curvature(j);
    }
}

/// Strong-convexity constants of the pooled and local objectives. Each
/// quantity is minimised (or, for `λ_max`, maximised) over the sampled points.
pub fn estimate_rho(cluster: &Cluster, theta_hat: &[f64], sampling: &BallSampling) -> Result<CurvatureReport> {
    cluster.check_dim(theta_hat)?;
    let mut rho = f64::INFINITY;
    let mut rho0 = f64::INFINITY;
    let mut lambda_max: f64 = 0.0;
    for point in sampling.locations(theta_hat)? {
        let mut h = cluster.global_hessian(&point)?;
        lambda_max = f64::max(lambda_max, SymmetricEigen::new(&h)?.max());
        add_curvature(&mut h, cluster);
        rho = f64::min(rho, SymmetricEigen::new(&h)?.min());
        for shard in cluster.shards() {
            let mut hk = shard.hessian(cluster.family(), &point)?;
            add_curvature(&mut hk, cluster);
            rho0 = f64::min(rho0, SymmetricEigen::new(&hk)?.min());
        }
    }
    let flagged = !(rho > 0.0);
    Ok(CurvatureReport {
        rho,
        rho0,
        lambda_max,
        kappa: if flagged { f64::INFINITY } else { lambda_max / rho },
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    /// `c · p / n` with `n = N/m`.
    PaperFigure(f64),
    /// `δ̂² / ρ̂` measured at the supplied point.
    DeltaSquared,
}

pub fn default_alpha(cluster: &Cluster, rule: AlphaRule, at: &[f64]) -> Result<f64> {
    match rule {
        AlphaRule::PaperFigure(c) => {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::invalid("alpha multiplier must be nonnegative"));
            }
            Ok(c * cluster.features() as f64 / cluster.local_size())
        }
        AlphaRule::DeltaSquared => {
            let sampling = BallSampling::center_only();
            let curv = estimate_rho(cluster, at, &sampling)?;
            if curv.flagged {
                return Err(Error::invalid("objective is not strongly convex at the given point"));
            }
            let delta = estimate_delta(cluster, at, &sampling, &PowerSettings::default())?.delta;
            Ok(delta * delta / curv.rho)
        }
    }
}

/// Constants entering the theoretical per-iteration factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    pub delta: f64,
    pub rho: f64,
    pub rho0: f64,
    pub alpha: f64,
}

/// `((δ/(ρ₀+α))·√(ρ² + 2αρ) + α) / (ρ + α)`
pub fn theoretical_factor(inputs: &TheoryInputs) -> f64 {
    let TheoryInputs { delta, rho, rho0, alpha } = *inputs;
    ((delta / (rho0 + alpha)) * libm::sqrt(rho * rho + 2.0 * alpha * rho) + alpha) / (rho + alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// `e_{t+1}/e_t` for every `t` with `e_t` above the floor.
    pub ratios: Vec<f64>,
    /// Geometric mean of the ratios; `None` when there are none.
    pub rate: Option<f64>,
    pub theoretical: Option<f64>,
}

/// Contraction of a run towards `theta_hat`; ratios stop once an iterate is
/// within `floor` of it.
pub fn trace_contraction(
    trace: &RunTrace,
    theta_hat: &[f64],
    floor: f64,
    theory: Option<&TheoryInputs>,
) -> ContractionReport {
    contraction_report(&trace.errors_to(theta_hat), floor, theory)
}

/// Summarises how fast `errors` (e.g. `‖θ_t − θ̂‖`) shrink.
pub fn contraction_report(errors: &[f64], floor: f64, theory: Option<&TheoryInputs>) -> ContractionReport {
    let ratios: Vec<f64> = errors
        .windows(2)
        .take_while(|w| w[0] > floor)
        .map(|w| w[1] / w[0])
        .collect();
    let rate = if ratios.is_empty() {
        None
    } else {
        let log_sum: f64 = ratios.iter().map(|r| libm::log(*r)).sum();
        Some(libm::exp(log_sum / ratios.len() as f64))
    };
    ContractionReport {
        ratios,
        rate,
        theoretical: theory.map(theoretical_factor),
    }
}
