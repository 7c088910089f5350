//! Reference distributed methods: consensus ADMM and accelerated gradient
//! descent on the pooled objective.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{resolve_init, Clock, Cluster, Init, NoClock, RoundRecord, RunTrace};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, power_iteration};
use crate::model::Penalty;
use crate::solver::{solve_smooth, SolverSettings, SurrogateProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmConfig {
    pub rho: f64,
    pub iterations: usize,
    pub init: Init,
    /// Settings for the per-node subproblems and for one-shot initialization.
    pub solver: SolverSettings,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl AdmmConfig {
    pub fn new(rho: f64, iterations: usize) -> Self {
        AdmmConfig {
            rho,
            iterations,
            init: Init::Zero,
            solver: SolverSettings::default(),
            abs_tol: 1e-6,
            rel_tol: 1e-4,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid("ADMM rho must be positive"));
        }
        if !(self.abs_tol >= 0.0 && self.rel_tol >= 0.0) {
            return Err(Error::invalid("ADMM tolerances must be nonnegative"));
        }
        self.solver.validate()
    }
}

/// ADMM run with its residual history. `trace.iterates` holds the consensus
/// variable `z`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdmmTrace {
    pub trace: RunTrace,
    pub primal_residuals: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    /// Iteration after which both stopping tests held, if they did.
    pub converged_at: Option<usize>,
    /// Local solutions `θ_k` from the last completed round.
    pub nodes: Vec<Vec<f64>>,
}

/// Global-consensus ADMM. Node `k` minimizes
/// `c_k f_k(θ) + ⟨u_k, θ − z⟩ + (ρ/2)‖θ − z‖²` with `c_k = m n_k / N`, so the
/// consensus problem is the pooled objective for any shard sizes. The centre
/// sets `z = prox_{g/ρ}(mean_k(θ_k + u_k/ρ))` and the duals move by `ρ(θ_k − z)`.
pub fn run_admm(cluster: &Cluster, config: &AdmmConfig) -> Result<AdmmTrace> {
    match run_admm_with_clock(cluster, config, &NoClock) {
        (trace, None) => Ok(trace),
        (_, Some(e)) => Err(e),
    }
}

pub fn run_admm_with_clock(cluster: &Cluster, config: &AdmmConfig, clock: &dyn Clock) -> (AdmmTrace, Option<Error>) {
    let mut out = AdmmTrace::default();
    if let Err(e) = config.validate() {
        return (out, Some(e));
    }
    let z0 = match resolve_init(cluster, &config.init, &config.solver) {
        Ok(z) => z,
        Err(e) => return (out, Some(e.at_iteration(0))),
    };
    let m = cluster.machines();
    let d = cluster.dim();
    let rho = config.rho;
    let mut thetas = vec![z0.clone(); m];
    let mut duals = vec![vec![0.0; d]; m];
    let mut z = z0.clone();
    out.trace = RunTrace::start(z0);
    let penalty = cluster.penalty();
    let scale = libm::sqrt((m * d) as f64);

    for t in 0..config.iterations {
        let start = clock.seconds();
        let mut residuals = Vec::with_capacity(m);
        let mut iterations = Vec::with_capacity(m);
        for k in 0..m {
            let c = m as f64 * cluster.weights()[k];
            let shift: Vec<f64> = duals[k].iter().map(|u| -u / c).collect();
            let prob = SurrogateProblem {
                shard: &cluster.shards()[k],
                family: cluster.family(),
                penalty: Penalty::none(),
                gradient_shift: &shift,
                anchor: &z,
                alpha: rho / c,
            };
            match solve_smooth(&prob, &thetas[k], &config.solver) {
                Ok(sol) => {
                    residuals.push(sol.residual);
                    iterations.push(sol.iterations);
                    thetas[k] = sol.theta;
                }
                Err(e) => return (out, Some(e.at_node(k).at_iteration(t))),
            }
        }

        let mut v = vec![0.0; d];
        for (th, u) in thetas.iter().zip(&duals) {
            axpy(1.0, th, &mut v);
            axpy(1.0 / rho, u, &mut v);
        }
        v.iter_mut().for_each(|x| *x /= m as f64);
        penalty.prox_in_place(&mut v, 1.0 / rho);
        let z_old = core::mem::replace(&mut z, v);

        let mut primal_sq = 0.0;
        let mut theta_sq = 0.0;
        let mut dual_sq = 0.0;
        for (th, u) in thetas.iter().zip(duals.iter_mut()) {
            for ((ui, ti), zi) in u.iter_mut().zip(th).zip(&z) {
                let r = ti - zi;
                *ui += rho * r;
                primal_sq += r * r;
            }
            theta_sq += dot(th, th);
            dual_sq += dot(u, u);
        }
        let primal = libm::sqrt(primal_sq);
        let dz: Vec<f64> = z.iter().zip(&z_old).map(|(a, b)| a - b).collect();
        let dual = rho * libm::sqrt(m as f64) * norm2(&dz);
        out.primal_residuals.push(primal);
        out.dual_residuals.push(dual);

        let record = RoundRecord {
            comm_rounds: 2,
            vectors_sent: 2 * m,
            inner_residuals: residuals,
            inner_iterations: iterations,
        };
        let elapsed = clock.seconds() - start;
        out.trace.push(z.clone(), record, elapsed);
        out.nodes.clone_from(&thetas);

        let eps_primal =
            scale * config.abs_tol + config.rel_tol * f64::max(libm::sqrt(theta_sq), libm::sqrt(m as f64) * norm2(&z));
        let eps_dual = scale * config.abs_tol + config.rel_tol * libm::sqrt(dual_sq);
        if primal <= eps_primal && dual <= eps_dual {
            out.converged_at = Some(t + 1);
            break;
        }
    }
    (out, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgdStep {
    Fixed(f64),
    /// Starts at `1/λ_max(∇²F(θ₀))` and halves until sufficient decrease holds.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgdConfig {
    pub step: AgdStep,
    pub iterations: usize,
    pub init: Init,
    pub solver: SolverSettings,
    /// Seeds the power iteration behind the initial step size.
    pub seed: u64,
    /// Consecutive objective increases tolerated before reporting divergence.
    pub patience: usize,
}

impl AgdConfig {
    pub fn new(step: AgdStep, iterations: usize) -> Self {
        AgdConfig {
            step,
            iterations,
            init: Init::Zero,
            solver: SolverSettings::default(),
            seed: 0,
            patience: 50,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let AgdStep::Fixed(h) = self.step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::invalid("AGD step must be positive"));
            }
        }
        if self.patience == 0 {
            return Err(Error::invalid("AGD patience must be at least one"));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgdTrace {
    pub trace: RunTrace,
    /// `F(θ_t)` for every recorded iterate.
    pub objective: Vec<f64>,
    /// Iterations at which momentum was reset.
    pub restarts: Vec<usize>,
    pub step_sizes: Vec<f64>,
}

const MAX_HALVINGS: usize = 60;

/// Largest eigenvalue of `∇²F(θ)` by power iteration on Hessian-vector products.
pub fn hessian_spectral_bound(cluster: &Cluster, theta: &[f64], seed: u64) -> Result<f64> {
    cluster.check_dim(theta)?;
    let penalty = cluster.penalty();
    let mut failure = None;
    let est = power_iteration(
        cluster.dim(),
        |v, out| match cluster.global_hessian_vector(theta, v) {
            Ok(hv) => {
                for (j, (o, h)) in out.iter_mut().zip(hv).enumerate() {
                    *o = h + penalty.curvature(j) * v[j];
                }
            }
            Err(e) => failure = Some(e),
        },
        200,
        1e-8,
        seed,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(est.value),
    }
}

/// Nesterov's accelerated gradient on `F = f + g` with function-value restart:
/// a step that raises `F` is rejected and momentum is reset. Each iteration
/// gathers one round of local gradients.
pub fn run_agd(cluster: &Cluster, config: &AgdConfig) -> Result<AgdTrace> {
    match run_agd_with_clock(cluster, config, &NoClock) {
        (trace, None) => Ok(trace),
        (_, Some(e)) => Err(e),
    }
}

pub fn run_agd_with_clock(cluster: &Cluster, config: &AgdConfig, clock: &dyn Clock) -> (AgdTrace, Option<Error>) {
    let mut out = AgdTrace::default();
    if let Err(e) = config.validate() {
        return (out, Some(e));
    }
    if !cluster.penalty().is_smooth() {
        return (out, Some(Error::invalid("AGD needs a smooth penalty")));
    }
    let x0 = match resolve_init(cluster, &config.init, &config.solver) {
        Ok(x) => x,
        Err(e) => return (out, Some(e.at_iteration(0))),
    };
    let mut step = match config.step {
        AgdStep::Fixed(h) => h,
        AgdStep::Backtracking => match hessian_spectral_bound(cluster, &x0, config.seed) {
            Ok(l) if l > 0.0 => 1.0 / l,
            Ok(_) => 1.0,
            Err(e) => return (out, Some(e.at_iteration(0))),
        },
    };
    let backtrack = config.step == AgdStep::Backtracking;
    let m = cluster.machines();

    let mut fx = match cluster.objective(&x0) {
        Ok(v) => v,
        Err(e) => return (out, Some(e)),
    };
    let mut x = x0.clone();
    let mut y = x0.clone();
    let mut momentum = 1.0_f64;
    let mut increases = 0;
    out.trace = RunTrace::start(x0);
    out.objective.push(fx);

    for t in 0..config.iterations {
        let start = clock.seconds();
        let (fy, gy) = match cluster.objective_and_gradient(&y) {
            Ok(v) => v,
            Err(e) => return (out, Some(e.at_iteration(t))),
        };
        let g_sq = dot(&gy, &gy);
        let mut halvings = 0;
        let (x_new, f_new) = loop {
            let mut cand = y.clone();
            axpy(-step, &gy, &mut cand);
            let f_cand = match cluster.objective(&cand) {
                Ok(v) => v,
                Err(e) => return (out, Some(e.at_iteration(t))),
            };
            let slack = 8.0 * f64::EPSILON * (1.0 + libm::fabs(fy));
            if !backtrack || f_cand <= fy - 0.5 * step * g_sq + slack {
                break (cand, f_cand);
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                let err = Error::ConvergenceFailure {
                    iterations: t,
                    residual: libm::sqrt(g_sq),
                    last: y.clone(),
                };
                return (out, Some(err.at_iteration(t)));
            }
            step *= 0.5;
        };

        if !(f_new <= fx) {
            // Rounding-level increases near the optimum only reset momentum.
            if !(f_new <= fx + 8.0 * f64::EPSILON * (1.0 + libm::fabs(fx))) {
                increases += 1;
                if increases >= config.patience {
                    return (out, Some(Error::Divergence { iterations: t + 1 }));
                }
            }
            out.restarts.push(t);
            momentum = 1.0;
            y = x.clone();
        } else {
            increases = 0;
            let next_momentum = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * momentum * momentum));
            let beta = (momentum - 1.0) / next_momentum;
            y = x_new.clone();
            for ((yi, xn), xo) in y.iter_mut().zip(&x_new).zip(&x) {
                *yi += beta * (xn - xo);
            }
            momentum = next_momentum;
            x = x_new;
            fx = f_new;
        }

        let record = RoundRecord {
            comm_rounds: 1,
            vectors_sent: 2 * m,
            inner_residuals: Vec::new(),
            inner_iterations: Vec::new(),
        };
        let elapsed = clock.seconds() - start;
        out.trace.push(x.clone(), record, elapsed);
        out.objective.push(fx);
        out.step_sizes.push(step);
    }
    (out, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GlmFamily, Shard};

    fn intercept_only(values: &[f64]) -> Shard {
        let rows: Vec<&[f64]> = values.iter().map(|_| &[][..]).collect();
        Shard::from_features(&rows, values.to_vec()).unwrap()
    }

    #[test]
    fn exact_step_on_scalar_quadratic() {
        let cluster = Cluster::new(
            vec![intercept_only(&[1.0, 2.0]), intercept_only(&[4.0])],
            GlmFamily::Gaussian,
            Penalty::none(),
        )
        .unwrap();
        let out = run_agd(&cluster, &AgdConfig::new(AgdStep::Fixed(1.0), 200)).unwrap();
        assert!((out.trace.last()[0] - 7.0 / 3.0).abs() <= 1e-8);
        assert_eq!(out.trace.vectors_sent[0], 4);
    }

    #[test]
    fn oversized_fixed_step_is_reported() {
        let cluster = Cluster::new(vec![intercept_only(&[1.0, 3.0])], GlmFamily::Gaussian, Penalty::none()).unwrap();
        let err = run_agd(&cluster, &AgdConfig::new(AgdStep::Fixed(5.0), 200)).unwrap_err();
        assert!(matches!(err, Error::Divergence { iterations: 50 }));
    }

    #[test]
    fn admm_reaches_consensus_on_scalar_problem() {
        let cluster = Cluster::new(
            vec![intercept_only(&[1.0, 2.0, 3.0]), intercept_only(&[10.0])],
            GlmFamily::Gaussian,
            Penalty::none(),
        )
        .unwrap();
        let out = run_admm(&cluster, &AdmmConfig::new(1.0, 500)).unwrap();
        assert!(out.converged_at.is_some());
        assert!((out.trace.last()[0] - 4.0).abs() < 1e-3);
        assert_eq!(out.trace.comm_rounds[0], 2);
    }

    #[test]
    fn agd_rejects_l1() {
        let cluster = Cluster::new(vec![intercept_only(&[1.0])], GlmFamily::Gaussian, Penalty::l1(0.1)).unwrap();
        assert!(run_agd(&cluster, &AgdConfig::new(AgdStep::Backtracking, 3)).is_err());
    }
}
