//! Simulated node machines and central processor.
//!
//! All four estimators share one round structure: every machine evaluates its
//! local gradient at the current iterate `θ_t`, the centre forms the
//! shard-size-weighted global gradient, and one or all machines minimize the
//! gradient-enhanced surrogate
//!
//! ```text
//! f_k(θ) + g(θ) − ⟨∇f_k(θ_t) − ∇f(θ_t), θ⟩ + (α/2)‖θ − θ_t‖²
//! ```
//!
//! warm-started at `θ_t`.
//!
//! | variant    | solvers     | α        | rounds | vectors sent |
//! |------------|-------------|----------|--------|--------------|
//! | `Csl`      | machine 1   | 0        | 1      | 2m           |
//! | `Cease`    | machine 1   | config α | 1      | 2m           |
//! | `Gel`      | all, averaged | 0      | 2      | 4m           |
//! | `CeaseAvg` | all, averaged | config α | 2    | 4m           |
//!
//! Counting convention: every vector of length `p + 1` crossing the
//! node/centre boundary counts once, and a broadcast to `m` machines counts
//! as `m` transmissions. Scalars are not counted.
//!
//! Machines are processed in a fixed order and all aggregation sums run in
//! that order, so runs are bitwise reproducible.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dist2, Matrix};
use crate::model::{GlmFamily, Penalty, Shard};
use crate::solver::{solve, Solution, SolverSettings, SurrogateProblem};

/// Data spread over `m` machines, plus the model they share.
#[derive(Debug, Clone)]
pub struct Cluster {
    shards: Vec<Shard>,
    family: GlmFamily,
    penalty: Penalty,
    weights: Vec<f64>,
    total_rows: usize,
}

impl Cluster {
    pub fn new(shards: Vec<Shard>, family: GlmFamily, penalty: Penalty) -> Result<Self> {
        let first = shards
            .first()
            .ok_or_else(|| Error::invalid("a cluster needs at least one machine"))?;
        let d = first.dim();
        for s in &shards {
            if s.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: s.dim(),
                });
            }
            family.check_labels(s.y())?;
        }
        penalty.validate()?;
        let total_rows: usize = shards.iter().map(Shard::len).sum();
        let weights = shards
            .iter()
            .map(|s| s.len() as f64 / total_rows as f64)
            .collect();
        Ok(Cluster {
            shards,
            family,
            penalty,
            weights,
            total_rows,
        })
    }

    pub fn machines(&self) -> usize {
        self.shards.len()
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn family(&self) -> GlmFamily {
        self.family
    }

    pub fn penalty(&self) -> Penalty {
        self.penalty
    }

    /// `n_k / N` per machine.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `N`
    pub fn total_rows(&self) -> usize {
        self.total_rows
    }

    /// Parameter dimension `p + 1`.
    pub fn dim(&self) -> usize {
        self.shards[0].dim()
    }

    /// Feature count `p` (intercept excluded).
    pub fn features(&self) -> usize {
        self.dim() - 1
    }

    /// Average local sample size `N / m`.
    pub fn local_size(&self) -> f64 {
        self.total_rows as f64 / self.machines() as f64
    }

    /// Same data with a different penalty.
    pub fn with_penalty(&self, penalty: Penalty) -> Result<Cluster> {
        penalty.validate()?;
        Ok(Cluster {
            penalty,
            ..self.clone()
        })
    }

    pub(crate) fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    /// `∇f_k(θ)` for every machine, in machine order.
    pub fn local_gradients(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_dim(theta)?;
        self.shards
            .iter()
            .map(|s| s.gradient(self.family, theta))
            .collect()
    }

    /// Shard-size-weighted average of local gradients, i.e. the pooled gradient.
    pub fn global_gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let locals = self.local_gradients(theta)?;
        Ok(self.weighted_average(&locals))
    }

    /// Pooled empirical risk `f(θ)` (no penalty).
    pub fn global_loss(&self, theta: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        let mut total = 0.0;
        for (s, w) in self.shards.iter().zip(&self.weights) {
            total += w * s.loss(self.family, theta)?;
        }
        Ok(total)
    }

    /// `f(θ) + g(θ)`
    pub fn objective(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.global_loss(theta)? + self.penalty.value(theta))
    }

    /// Pooled Hessian `∇²f(θ)` (no penalty).
    pub fn global_hessian(&self, theta: &[f64]) -> Result<Matrix> {
        self.check_dim(theta)?;
        let d = self.dim();
        let mut h = Matrix::zeros(d, d);
        for (s, w) in self.shards.iter().zip(&self.weights) {
            h.add_scaled(*w, &s.hessian(self.family, theta)?);
        }
        Ok(h)
    }

    /// Pooled Hessian-vector product `∇²f(θ) v`.
    pub fn global_hessian_vector(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        for (s, w) in self.shards.iter().zip(&self.weights) {
            axpy(*w, &s.hessian_vector(self.family, theta, v)?, &mut out);
        }
        Ok(out)
    }

    /// `f(θ) + g(θ)` and its gradient (smooth part of `g` only) in one pass.
    pub fn objective_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(theta)?;
        let d = self.dim();
        let mut value = self.penalty.value(theta);
        let mut grad = vec![0.0; d];
        let mut local = vec![0.0; d];
        for (s, w) in self.shards.iter().zip(&self.weights) {
            let eta = s.predictor(theta);
            value += w * s.loss_from_predictor(self.family, &eta);
            s.gradient_from_predictor(self.family, &eta, &mut local);
            axpy(*w, &local, &mut grad);
        }
        self.penalty.add_smooth_gradient(theta, &mut grad);
        Ok((value, grad))
    }

    pub(crate) fn weighted_average(&self, vectors: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (v, w) in vectors.iter().zip(&self.weights) {
            axpy(*w, v, &mut out);
        }
        out
    }

    /// All rows on one machine, in machine order.
    pub fn pooled(&self) -> Result<Shard> {
        Shard::concat(&self.shards)
    }
}

/// Free-function form of [`Cluster::global_gradient`].
pub fn global_gradient(cluster: &Cluster, theta: &[f64]) -> Result<Vec<f64>> {
    cluster.global_gradient(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Machine 1 minimizes the gradient-enhanced loss; no proximal term.
    Csl,
    /// Every machine minimizes its gradient-enhanced loss; the centre averages.
    Gel,
    /// `Csl` plus the proximal term.
    Cease,
    /// `Gel` plus the proximal term.
    CeaseAvg,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Csl, Variant::Gel, Variant::Cease, Variant::CeaseAvg];

    pub fn averages(self) -> bool {
        matches!(self, Variant::Gel | Variant::CeaseAvg)
    }

    /// `α` actually used: the unregularized variants always use zero.
    pub fn effective_alpha(self, alpha: f64) -> f64 {
        match self {
            Variant::Csl | Variant::Gel => 0.0,
            Variant::Cease | Variant::CeaseAvg => alpha,
        }
    }

    pub fn comm_rounds(self) -> usize {
        if self.averages() {
            2
        } else {
            1
        }
    }

    /// Vectors crossing the node/centre boundary per iteration on `m` machines.
    pub fn vectors_per_iteration(self, machines: usize) -> usize {
        if self.averages() {
            4 * machines
        } else {
            2 * machines
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Csl => "csl",
            Variant::Gel => "gel",
            Variant::Cease => "cease",
            Variant::CeaseAvg => "cease_avg",
        }
    }

    pub fn from_name(name: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == name)
    }
}

/// Starting point of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zero,
    OneShotAverage,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub variant: Variant,
    pub alpha: f64,
    /// Number of outer iterations `T`.
    pub iterations: usize,
    pub init: Init,
    pub solver: SolverSettings,
    /// Unused by the deterministic estimators; recorded for provenance.
    pub seed: u64,
}

impl AlgoConfig {
    pub fn new(variant: Variant, alpha: f64, iterations: usize) -> Self {
        AlgoConfig {
            variant,
            alpha,
            iterations,
            init: Init::Zero,
            solver: SolverSettings::default(),
            seed: 0,
        }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_solver(mut self, solver: SolverSettings) -> Self {
        self.solver = solver;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha must be finite and nonnegative"));
        }
        self.solver.validate()
    }
}

/// Bookkeeping for one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub comm_rounds: usize,
    pub vectors_sent: usize,
    /// Final inner-solver residual of each machine that solved, in machine order.
    pub inner_residuals: Vec<f64>,
    pub inner_iterations: Vec<usize>,
}

impl RoundRecord {
    pub fn max_residual(&self) -> f64 {
        self.inner_residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Everything recorded during a run. Per-iteration vectors have length `T`;
/// `iterates` has length `T + 1` and starts with `θ₀`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub iterates: Vec<Vec<f64>>,
    pub comm_rounds: Vec<usize>,
    pub vectors_sent: Vec<usize>,
    pub inner_residuals: Vec<Vec<f64>>,
    pub wall_times: Vec<f64>,
}

impl RunTrace {
    pub fn start(theta0: Vec<f64>) -> Self {
        RunTrace {
            iterates: vec![theta0],
            ..RunTrace::default()
        }
    }

    pub fn push(&mut self, theta: Vec<f64>, record: RoundRecord, seconds: f64) {
        self.iterates.push(theta);
        self.comm_rounds.push(record.comm_rounds);
        self.vectors_sent.push(record.vectors_sent);
        self.inner_residuals.push(record.inner_residuals);
        self.wall_times.push(seconds);
    }

    /// Completed outer iterations.
    pub fn len(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> &[f64] {
        self.iterates.last().map_or(&[], Vec::as_slice)
    }

    /// `‖θ_t − reference‖₂` for every iterate.
    pub fn errors_to(&self, reference: &[f64]) -> Vec<f64> {
        self.iterates.iter().map(|t| dist2(t, reference)).collect()
    }
}

/// Source of elapsed seconds for trace timing. The core has no clock of its
/// own; the std front end supplies one.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Reports zero for every interval.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

fn surrogate<'a>(
    cluster: &'a Cluster,
    machine: usize,
    shift: &'a [f64],
    anchor: &'a [f64],
    alpha: f64,
) -> SurrogateProblem<'a> {
    SurrogateProblem {
        shard: &cluster.shards[machine],
        family: cluster.family,
        penalty: cluster.penalty,
        gradient_shift: shift,
        anchor,
        alpha,
    }
}

/// One outer iteration from `theta`.
pub fn step(cluster: &Cluster, config: &AlgoConfig, theta: &[f64]) -> Result<(Vec<f64>, RoundRecord)> {
    config.validate()?;
    if !theta.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("current iterate is not finite"));
    }
    let variant = config.variant;
    let alpha = variant.effective_alpha(config.alpha);
    let locals = cluster.local_gradients(theta)?;
    let global = cluster.weighted_average(&locals);
    let shift_for = |k: usize| -> Vec<f64> {
        locals[k].iter().zip(&global).map(|(l, g)| l - g).collect()
    };

    let solve_on = |k: usize| -> Result<Solution> {
        let shift = shift_for(k);
        let prob = surrogate(cluster, k, &shift, theta, alpha);
        solve(&prob, theta, &config.solver).map_err(|e| e.at_node(k))
    };

    let m = cluster.machines();
    let (next, residuals, iterations) = if variant.averages() {
        let solutions = (0..m).map(solve_on).collect::<Result<Vec<_>>>()?;
        let thetas: Vec<Vec<f64>> = solutions.iter().map(|s| s.theta.clone()).collect();
        (
            cluster.weighted_average(&thetas),
            solutions.iter().map(|s| s.residual).collect(),
            solutions.iter().map(|s| s.iterations).collect(),
        )
    } else {
        let sol = solve_on(0)?;
        (sol.theta, vec![sol.residual], vec![sol.iterations])
    };
    Ok((
        next,
        RoundRecord {
            comm_rounds: variant.comm_rounds(),
            vectors_sent: variant.vectors_per_iteration(m),
            inner_residuals: residuals,
            inner_iterations: iterations,
        },
    ))
}

/// Each machine minimizes its own `f_k + g` from zero; the centre takes the
/// plain average of the `m` local minimizers.
pub fn one_shot_average(cluster: &Cluster, settings: &SolverSettings) -> Result<Vec<f64>> {
    let d = cluster.dim();
    let zeros = vec![0.0; d];
    let mut sum = vec![0.0; d];
    for k in 0..cluster.machines() {
        let prob = SurrogateProblem::local(&cluster.shards[k], cluster.family, cluster.penalty, &zeros);
        let sol = solve(&prob, &zeros, settings).map_err(|e| e.at_node(k))?;
        axpy(1.0, &sol.theta, &mut sum);
    }
    let inv = 1.0 / cluster.machines() as f64;
    sum.iter_mut().for_each(|v| *v *= inv);
    Ok(sum)
}

/// Resolves a starting point; one-shot averaging uses `settings` for the local solves.
pub fn resolve_init(cluster: &Cluster, init: &Init, settings: &SolverSettings) -> Result<Vec<f64>> {
    match init {
        Init::Zero => Ok(vec![0.0; cluster.dim()]),
        Init::OneShotAverage => one_shot_average(cluster, settings),
        Init::Given(theta) => {
            cluster.check_dim(theta)?;
            Ok(theta.clone())
        }
    }
}

/// Resolves the configured starting point.
pub fn initial_point(cluster: &Cluster, config: &AlgoConfig) -> Result<Vec<f64>> {
    resolve_init(cluster, &config.init, &config.solver)
}

/// Solver settings used for the centrally computed reference minimizer.
pub fn reference_settings() -> SolverSettings {
    SolverSettings {
        newton_tol: 1e-12,
        newton_max_iters: 500,
        fista_tol: 1e-8,
        fista_max_iters: 100_000,
        ..SolverSettings::default()
    }
}

/// Minimizer of `f + g` on the pooled data. Used only for metrics.
pub fn reference_minimizer(cluster: &Cluster, settings: &SolverSettings) -> Result<Solution> {
    let pooled = cluster.pooled()?;
    let zeros = vec![0.0; cluster.dim()];
    let prob = SurrogateProblem::local(&pooled, cluster.family, cluster.penalty, &zeros);
    solve(&prob, &zeros, settings)
}

/// Runs `T` iterations, stopping at the first failure. Returns the trace so
/// far together with the error, if any (annotated with the iteration index).
pub fn run_with_clock(cluster: &Cluster, config: &AlgoConfig, clock: &dyn Clock) -> (RunTrace, Option<Error>) {
    if let Err(e) = config.validate() {
        return (RunTrace::default(), Some(e));
    }
    let theta0 = match initial_point(cluster, config) {
        Ok(t) => t,
        Err(e) => return (RunTrace::default(), Some(e.at_iteration(0))),
    };
    let mut trace = RunTrace::start(theta0);
    for t in 0..config.iterations {
        let start = clock.seconds();
        match step(cluster, config, trace.last()) {
            Ok((next, record)) => {
                let elapsed = clock.seconds() - start;
                trace.push(next, record, elapsed);
            }
            Err(e) => return (trace, Some(e.at_iteration(t))),
        }
    }
    (trace, None)
}

/// Runs `T` iterations from the configured starting point.
pub fn run(cluster: &Cluster, config: &AlgoConfig) -> Result<RunTrace> {
    match run_with_clock(cluster, config, &NoClock) {
        (trace, None) => Ok(trace),
        (_, Some(e)) => Err(e),
    }
}
