//! Homogeneity and curvature measurements for the first replication of a config.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cease_core::diagnostics::{
    estimate_delta, estimate_rho, theoretical_factor, BallSampling, CurvatureReport, HomogeneityReport, PowerSettings,
    TheoryInputs,
};
use cease_core::engine::resolve_init;
use cease_core::SolverSettings;

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::experiment::{prepare, resolve_alpha};
use crate::format::num;

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosis {
    pub seed: u64,
    pub machines: usize,
    pub local_rows: Vec<usize>,
    pub homogeneity: HomogeneityReport,
    pub curvature: CurvatureReport,
    /// `(label, α, theoretical factor)` for each CEASE-family method.
    pub methods: Vec<(String, f64, f64)>,
}

pub fn diagnose(cfg: &ExperimentConfig, sampling: &BallSampling, power: &PowerSettings) -> Result<Diagnosis> {
    cfg.validate()?;
    let prep = prepare(cfg, 0)?;
    let cluster = &prep.cluster;
    let homogeneity = estimate_delta(cluster, &prep.theta_hat, sampling, power)?;
    let curvature = estimate_rho(cluster, &prep.theta_hat, sampling)?;
    let mut methods = Vec::new();
    for m in &cfg.methods {
        if let Algorithm::Estimator(_) = m.algorithm {
            let theta0 = resolve_init(cluster, &m.init.to_init(), &SolverSettings::default())?;
            let alpha = resolve_alpha(cluster, m.alpha, &theta0)?;
            let factor = theoretical_factor(&TheoryInputs {
                delta: homogeneity.delta,
                rho: curvature.rho,
                rho0: curvature.rho0,
                alpha,
            });
            methods.push((m.label.clone(), alpha, factor));
        }
    }
    Ok(Diagnosis {
        seed: prep.seed,
        machines: cluster.machines(),
        local_rows: cluster.shards().iter().map(|s| s.len()).collect(),
        homogeneity,
        curvature,
        methods,
    })
}

pub fn report_text(d: &Diagnosis) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("seed", d.seed.to_string());
    kv("machines", d.machines.to_string());
    kv("delta", num(d.homogeneity.delta));
    kv("delta_power_residual", num(d.homogeneity.residual));
    kv("delta_converged", d.homogeneity.converged.to_string());
    kv("rho", num(d.curvature.rho));
    kv("rho0", num(d.curvature.rho0));
    kv("lambda_max", num(d.curvature.lambda_max));
    kv("kappa", num(d.curvature.kappa));
    kv("not_strongly_convex", d.curvature.flagged.to_string());
    for (label, alpha, factor) in &d.methods {
        kv(&format!("alpha.{label}"), num(*alpha));
        kv(&format!("theoretical_factor.{label}"), num(*factor));
    }
    out
}

pub fn machine_norms_csv(d: &Diagnosis) -> String {
    let mut out = String::from("machine,rows,hessian_deviation_norm\n");
    for (k, (rows, norm)) in d.local_rows.iter().zip(&d.homogeneity.machine_norms).enumerate() {
        let _ = writeln!(out, "{k},{rows},{}", num(*norm));
    }
    out
}

/// Writes `diagnostics.txt` and `machine_norms.csv` into `out`.
pub fn write_diagnosis(d: &Diagnosis, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let files = [
        (out.join("diagnostics.txt"), report_text(d)),
        (out.join("machine_norms.csv"), machine_norms_csv(d)),
    ];
    for (path, body) in &files {
        fs::write(path, body).map_err(|e| CliError::io(path, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
