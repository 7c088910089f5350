//! Executes a configuration: one bundle and reference fit per replication,
//! then every method on the same cluster.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use cease_core::baselines::{run_admm_with_clock, run_agd_with_clock, AdmmConfig, AgdConfig};
use cease_core::data::{generate, test_error, DatasetBundle};
use cease_core::diagnostics::{default_alpha, AlphaRule};
use cease_core::engine::{reference_minimizer, reference_settings, resolve_init};
use cease_core::{run_with_clock, AlgoConfig, Clock, Cluster, GlmFamily, Init, NoClock, RunTrace, SolverSettings};

use crate::config::{Algorithm, AlphaSpec, DataSource, ExperimentConfig, MethodSpec};
use crate::dataset::{dump_bundle, load_spambase, SpambaseOptions};
use crate::error::{CliError, Result};
use crate::format::{num, write_summary, write_trace, TraceRow, STATUS_OK};

/// Wall-clock seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock(Instant);

impl StdClock {
    pub fn new() -> Self {
        StdClock(Instant::now())
    }
}

impl Default for StdClock {
    fn default() -> Self {
        StdClock::new()
    }
}

impl Clock for StdClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Data, cluster and reference fit shared by all methods of a replication.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seed: u64,
    pub bundle: DatasetBundle,
    pub cluster: Cluster,
    pub theta_hat: Vec<f64>,
    pub theta_hat_residual: f64,
}

pub fn load_bundle(cfg: &ExperimentConfig, seed: u64) -> Result<DatasetBundle> {
    match &cfg.data {
        DataSource::Synthetic(spec) => {
            let mut spec = spec.clone();
            spec.seed = seed;
            Ok(generate(&spec)?)
        }
        DataSource::Spambase {
            path,
            test_size,
            standardize,
        } => load_spambase(
            path,
            &SpambaseOptions {
                test_size: *test_size,
                seed,
                standardize: *standardize,
            },
        ),
    }
}

pub fn prepare(cfg: &ExperimentConfig, rep: usize) -> Result<Prepared> {
    let seed = cfg.replication_seed(rep);
    let bundle = load_bundle(cfg, seed)?;
    let features = bundle.train.dim() - 1;
    let penalty = cfg.penalty.resolve(features, bundle.train.len(), cfg.exempt_intercept);
    let cluster = bundle.cluster(cfg.machines, cfg.partition.scheme(seed), GlmFamily::Bernoulli, penalty)?;
    let reference = reference_minimizer(&cluster, &reference_settings())?;
    Ok(Prepared {
        seed,
        bundle,
        cluster,
        theta_hat: reference.theta,
        theta_hat_residual: reference.residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub label: String,
    /// Resolved α for the CEASE family.
    pub alpha: Option<f64>,
    pub rows: Vec<TraceRow>,
    pub error: Option<String>,
    pub last: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub rep: usize,
    pub seed: u64,
    pub train_rows: usize,
    pub lambda: f64,
    pub theta_hat_residual: f64,
    pub theta_hat_to_theta_star: Option<f64>,
    pub central_test_error: Option<f64>,
    pub methods: Vec<MethodOutcome>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn resolve_alpha(cluster: &Cluster, spec: AlphaSpec, theta0: &[f64]) -> cease_core::Result<f64> {
    Ok(match spec {
        AlphaSpec::Value(v) => v,
        AlphaSpec::PaperFigure(c) => default_alpha(cluster, AlphaRule::PaperFigure(c), theta0)?,
        AlphaSpec::DeltaSquared => default_alpha(cluster, AlphaRule::DeltaSquared, theta0)?,
    })
}

/// Converts a run into trace rows against the replication's references.
pub fn trace_rows(prep: &Prepared, trace: &RunTrace, timed: bool) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::with_capacity(trace.iterates.len());
    let mut comm = 0u64;
    let mut elapsed = 0.0;
    for (t, theta) in trace.iterates.iter().enumerate() {
        let (residual, vectors, seconds) = match t {
            0 => (None, 0, 0.0),
            _ => (
                Some(trace.inner_residuals[t - 1].iter().copied().fold(0.0, f64::max)),
                trace.vectors_sent[t - 1] as u64,
                trace.wall_times[t - 1],
            ),
        };
        comm += vectors;
        elapsed += seconds;
        rows.push(TraceRow {
            iter: t,
            log_err_to_thetahat: Some(dist(theta, &prep.theta_hat).ln()),
            log_err_to_thetastar: prep.bundle.theta_star.as_ref().map(|s| dist(theta, s).ln()),
            test_error: prep.bundle.test.as_ref().map(|test| test_error(theta, test)).transpose()?,
            comm_vectors: Some(comm),
            inner_residual_max: residual.filter(|_| !trace.inner_residuals[t - 1].is_empty()),
            wall_time_s: timed.then_some(elapsed),
            status: STATUS_OK.to_string(),
        });
    }
    Ok(rows)
}

pub fn run_method(prep: &Prepared, method: &MethodSpec, clock: &dyn Clock, timed: bool) -> Result<MethodOutcome> {
    let cluster = &prep.cluster;
    let solver = SolverSettings::default();
    let mut alpha = None;
    let theta0 = resolve_init(cluster, &method.init.to_init(), &solver);
    let (trace, error) = match theta0 {
        Err(e) => (RunTrace::default(), Some(e)),
        Ok(theta0) => match method.algorithm {
            Algorithm::Estimator(variant) => match resolve_alpha(cluster, method.alpha, &theta0) {
                Err(e) => (RunTrace::default(), Some(e)),
                Ok(a) => {
                    alpha = Some(a);
                    let cfg = AlgoConfig::new(variant, a, method.iterations).with_init(Init::Given(theta0));
                    run_with_clock(cluster, &cfg, clock)
                }
            },
            Algorithm::Admm { rho } => {
                let cfg = AdmmConfig::new(rho, method.iterations).with_init(Init::Given(theta0));
                let (out, err) = run_admm_with_clock(cluster, &cfg, clock);
                (out.trace, err)
            }
            Algorithm::Agd { step } => {
                let cfg = AgdConfig::new(step, method.iterations).with_init(Init::Given(theta0));
                let (out, err) = run_agd_with_clock(cluster, &cfg, clock);
                (out.trace, err)
            }
        },
    };
    let mut rows = trace_rows(prep, &trace, timed)?;
    if error.is_some() {
        rows.push(TraceRow::failed(trace.iterates.len()));
    }
    Ok(MethodOutcome {
        label: method.label.clone(),
        alpha,
        last: trace.last().to_vec(),
        rows,
        error: error.map(|e| e.to_string()),
    })
}

pub fn run_replication(cfg: &ExperimentConfig, rep: usize) -> Result<(Prepared, ReplicationOutcome)> {
    let prep = prepare(cfg, rep)?;
    let clock = StdClock::new();
    let clock: &dyn Clock = if cfg.wall_time { &clock } else { &NoClock };
    let methods = cfg
        .methods
        .iter()
        .map(|m| run_method(&prep, m, clock, cfg.wall_time))
        .collect::<Result<Vec<_>>>()?;
    let outcome = ReplicationOutcome {
        rep,
        seed: prep.seed,
        train_rows: prep.bundle.train.len(),
        lambda: prep.cluster.penalty().lambda(),
        theta_hat_residual: prep.theta_hat_residual,
        theta_hat_to_theta_star: prep.bundle.theta_star.as_ref().map(|s| dist(&prep.theta_hat, s)),
        central_test_error: prep.bundle.test.as_ref().map(|t| test_error(&prep.theta_hat, t)).transpose()?,
        methods,
    };
    Ok((prep, outcome))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub threads: usize,
    pub dump_data: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            threads: 1,
            dump_data: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub replications: Vec<ReplicationOutcome>,
    pub failed: usize,
    pub files: Vec<PathBuf>,
}

pub fn trace_file_name(label: &str, rep: usize) -> String {
    format!("{label}_rep{rep:03}.csv")
}

fn write(path: PathBuf, body: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
    files.push(path);
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Runs every replication (up to `threads` at a time) and writes traces,
/// `summary.csv` and `manifest.txt` under `out`. Outputs do not depend on
/// `threads`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let traces_dir = out.join("traces");
    create_dir(&traces_dir)?;
    let data_dir = out.join("data");
    if opts.dump_data {
        create_dir(&data_dir)?;
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ReplicationOutcome>>>> = 
        Mutex::new((0..cfg.replications).map(|_| None).collect());
    let worker = || loop {
        let rep = next.fetch_add(1, Ordering::Relaxed);
        if rep >= cfg.replications {
            break;
        }
        let result = run_replication(cfg, rep).and_then(|(prep, outcome)| {
            if opts.dump_data {
                dump_bundle(&prep.bundle, prep.seed, &data_dir, &format!("rep{rep:03}"))?;
            }
            Ok(outcome)
        });
        slots.lock().unwrap_or_else(|p| p.into_inner())[rep] = Some(result);
    };
    std::thread::scope(|s| {
        for _ in 1..opts.threads.clamp(1, cfg.replications) {
            s.spawn(worker);
        }
        worker();
    });

    let mut replications = Vec::with_capacity(cfg.replications);
    for slot in slots.into_inner().unwrap_or_else(|p| p.into_inner()) {
        replications.push(slot.expect("every replication index is claimed")?);
    }

    let mut files = Vec::new();
    let mut failed = 0;
    for rep in &replications {
        for m in &rep.methods {
            failed += usize::from(m.error.is_some());
            write(traces_dir.join(trace_file_name(&m.label, rep.rep)), &write_trace(&m.rows), &mut files)?;
        }
    }
    let grouped: Vec<(String, Vec<Vec<TraceRow>>)> = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(i, m)| (m.label.clone(), replications.iter().map(|r| r.methods[i].rows.clone()).collect()))
        .collect();
    write(out.join("summary.csv"), &write_summary(&grouped), &mut files)?;
    write(out.join("manifest.txt"), &manifest_text(cfg, &replications), &mut files)?;
    Ok(RunReport {
        replications,
        failed,
        files,
    })
}

/// The resolved configuration followed by one `[replication]` block per run.
pub fn manifest_text(cfg: &ExperimentConfig, reps: &[ReplicationOutcome]) -> String {
    let mut out = String::from("# cease run manifest; rerun with `cease run --config <this file>`\n");
    out.push_str(&cfg.to_text());
    for r in reps {
        out.push_str("\n[replication]\n");
        let _ = writeln!(out, "rep = {}", r.rep);
        let _ = writeln!(out, "seed = {}", r.seed);
        let _ = writeln!(out, "train_rows = {}", r.train_rows);
        let _ = writeln!(out, "lambda = {}", num(r.lambda));
        let _ = writeln!(out, "theta_hat_residual = {}", num(r.theta_hat_residual));
        if let Some(v) = r.theta_hat_to_theta_star {
            let _ = writeln!(out, "theta_hat_to_theta_star = {}", num(v));
        }
        if let Some(v) = r.central_test_error {
            let _ = writeln!(out, "central_test_error = {}", num(v));
        }
        for m in &r.methods {
            if let Some(a) = m.alpha {
                let _ = writeln!(out, "alpha.{} = {}", m.label, num(a));
            }
            let status = m.error.as_deref().map_or_else(|| STATUS_OK.to_string(), |e| format!("FAILED: {e}"));
            let _ = writeln!(out, "status.{} = {}", m.label, status.replace('\n', " "));
        }
    }
    out
}
