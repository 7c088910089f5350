//! Experiment configuration: flat `key = value` lines, `#` comments, and one
//! `[method]` block per method. `[replication]` blocks (written into run
//! manifests) are skipped, so a manifest is itself a valid config.

use std::fmt::Write as _;
use std::path::PathBuf;

use cease_core::baselines::AgdStep;
use cease_core::data::{Covariance, Experiment, PartitionScheme, SyntheticSpec, ThetaStar};
use cease_core::{Init, Penalty, Variant};

use crate::error::{CliError, Result};
use crate::format::num;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// The spec's seed is replaced per replication.
    Synthetic(SyntheticSpec),
    Spambase {
        path: PathBuf,
        test_size: usize,
        standardize: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSpec {
    Value(f64),
    /// `c·p/n`
    PaperFigure(f64),
    /// `δ̂²/ρ̂` at the starting point.
    DeltaSquared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Value(f64),
    /// `c·√(ln p / N)` with `N` the training rows.
    SparseRule(f64),
}

impl LambdaSpec {
    pub fn resolve(self, features: usize, rows: usize) -> f64 {
        match self {
            LambdaSpec::Value(v) => v,
            LambdaSpec::SparseRule(c) => c * ((features as f64).ln() / rows as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltySpec {
    None,
    L1(LambdaSpec),
    L2(LambdaSpec),
}

impl PenaltySpec {
    pub fn resolve(self, features: usize, rows: usize, exempt_intercept: bool) -> Penalty {
        match self {
            PenaltySpec::None => Penalty::none(),
            PenaltySpec::L1(l) => Penalty::l1(l.resolve(features, rows)),
            PenaltySpec::L2(l) => Penalty::l2(l.resolve(features, rows)),
        }
        .with_exempt_intercept(exempt_intercept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Estimator(Variant),
    Admm { rho: f64 },
    Agd { step: AgdStep },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Estimator(v) => v.name(),
            Algorithm::Admm { .. } => "admm",
            Algorithm::Agd { .. } => "agd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitSpec {
    Zero,
    OneShot,
}

impl InitSpec {
    pub fn to_init(self) -> Init {
        match self {
            InitSpec::Zero => Init::Zero,
            InitSpec::OneShot => Init::OneShotAverage,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    /// Used in file names and summary rows.
    pub label: String,
    pub algorithm: Algorithm,
    /// Ignored by ADMM and AGD.
    pub alpha: AlphaSpec,
    pub iterations: usize,
    pub init: InitSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionKind {
    Contiguous,
    /// Shuffled with the replication seed.
    Shuffled,
}

impl PartitionKind {
    pub fn scheme(self, seed: u64) -> PartitionScheme {
        match self {
            PartitionKind::Contiguous => PartitionScheme::Contiguous,
            PartitionKind::Shuffled => PartitionScheme::Shuffled(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub machines: usize,
    pub partition: PartitionKind,
    pub penalty: PenaltySpec,
    pub exempt_intercept: bool,
    pub replications: usize,
    /// Replication `r` uses seed `seed + r` for data, splits and shuffles.
    pub seed: u64,
    pub wall_time: bool,
    pub methods: Vec<MethodSpec>,
}

impl ExperimentConfig {
    pub fn replication_seed(&self, rep: usize) -> u64 {
        self.seed.wrapping_add(rep as u64)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(CliError::config(0, msg));
        if self.methods.is_empty() {
            return fail("at least one [method] block is required");
        }
        if self.replications == 0 {
            return fail("replications must be at least 1");
        }
        if self.machines == 0 {
            return fail("machines must be at least 1");
        }
        for (i, m) in self.methods.iter().enumerate() {
            if !valid_label(&m.label) {
                return fail(&format!("method label {:?} must use only letters, digits, '_', '-', '.'", m.label));
            }
            if self.methods[..i].iter().any(|o| o.label == m.label) {
                return fail(&format!("duplicate method label {:?}", m.label));
            }
            if matches!(m.algorithm, Algorithm::Agd { .. }) && matches!(self.penalty, PenaltySpec::L1(_)) {
                return fail("agd needs a smooth penalty");
            }
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` returns an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.data {
            DataSource::Synthetic(spec) => {
                kv("dataset", spec.experiment.name().to_string());
                kv("rows", spec.total_rows.to_string());
                kv("features", spec.features.to_string());
                kv("covariance", covariance_name(spec.covariance).to_string());
                kv("theta_star", theta_star_text(&spec.theta_star));
            }
            DataSource::Spambase {
                path,
                test_size,
                standardize,
            } => {
                kv("dataset", "spambase".to_string());
                kv("path", path.display().to_string());
                kv("test_size", test_size.to_string());
                kv("standardize", standardize.to_string());
            }
        }
        kv("machines", self.machines.to_string());
        kv(
            "partition",
            match self.partition {
                PartitionKind::Contiguous => "contiguous",
                PartitionKind::Shuffled => "shuffled",
            }
            .to_string(),
        );
        let (kind, lambda) = match self.penalty {
            PenaltySpec::None => ("none", None),
            PenaltySpec::L1(l) => ("l1", Some(l)),
            PenaltySpec::L2(l) => ("l2", Some(l)),
        };
        kv("penalty", kind.to_string());
        if let Some(l) = lambda {
            kv("lambda", lambda_text(l));
        }
        kv("exempt_intercept", self.exempt_intercept.to_string());
        kv("replications", self.replications.to_string());
        kv("seed", self.seed.to_string());
        kv("wall_time", self.wall_time.to_string());
        for m in &self.methods {
            out.push_str("\n[method]\n");
            let _ = writeln!(out, "label = {}", m.label);
            let _ = writeln!(out, "algorithm = {}", m.algorithm.name());
            match m.algorithm {
                Algorithm::Estimator(_) => {
                    let _ = writeln!(out, "alpha = {}", alpha_text(m.alpha));
                }
                Algorithm::Admm { rho } => {
                    let _ = writeln!(out, "rho = {}", num(rho));
                }
                Algorithm::Agd { step } => {
                    let s = match step {
                        AgdStep::Backtracking => "backtracking".to_string(),
                        AgdStep::Fixed(h) => num(h),
                    };
                    let _ = writeln!(out, "step = {s}");
                }
            }
            let _ = writeln!(out, "iterations = {}", m.iterations);
            let init = match m.init {
                InitSpec::Zero => "zero",
                InitSpec::OneShot => "one_shot",
            };
            let _ = writeln!(out, "init = {init}");
        }
        out
    }
}

fn valid_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn covariance_name(c: Covariance) -> &'static str {
    match c {
        Covariance::Diag10521 => "diag10521",
        Covariance::Identity => "identity",
    }
}

fn theta_star_text(t: &ThetaStar) -> String {
    match t {
        ThetaStar::Sphere { norm } => format!("sphere({})", num(*norm)),
        ThetaStar::LeadingOnes { support } => format!("leading_ones({support})"),
        ThetaStar::Given(v) => format!("given({})", v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" ")),
    }
}

fn alpha_text(a: AlphaSpec) -> String {
    match a {
        AlphaSpec::Value(v) => num(v),
        AlphaSpec::PaperFigure(c) => format!("{}p/n", num(c)),
        AlphaSpec::DeltaSquared => "delta_squared".to_string(),
    }
}

fn lambda_text(l: LambdaSpec) -> String {
    match l {
        LambdaSpec::Value(v) => num(v),
        LambdaSpec::SparseRule(c) => format!("{}*sqrt(log(p)/N)", num(c)),
    }
}

fn parse_f64(v: &str, line: usize) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::config(line, format!("expected a number, got {v:?}")))
}

fn parse_usize(v: &str, line: usize) -> Result<usize> {
    v.parse().map_err(|_| CliError::config(line, format!("expected a nonnegative integer, got {v:?}")))
}

fn parse_bool(v: &str, line: usize) -> Result<bool> {
    v.parse().map_err(|_| CliError::config(line, format!("expected true or false, got {v:?}")))
}

fn parse_alpha(v: &str, line: usize) -> Result<AlphaSpec> {
    if v == "delta_squared" {
        return Ok(AlphaSpec::DeltaSquared);
    }
    if let Some(c) = v.strip_suffix("p/n") {
        return Ok(AlphaSpec::PaperFigure(parse_f64(c.trim_end_matches('*'), line)?));
    }
    Ok(AlphaSpec::Value(parse_f64(v, line)?))
}

fn parse_lambda(v: &str, line: usize) -> Result<LambdaSpec> {
    if let Some(c) = v.strip_suffix("*sqrt(log(p)/N)") {
        return Ok(LambdaSpec::SparseRule(parse_f64(c, line)?));
    }
    Ok(LambdaSpec::Value(parse_f64(v, line)?))
}

fn parse_theta_star(v: &str, line: usize) -> Result<ThetaStar> {
    let inner = |prefix: &str| v.strip_prefix(prefix).and_then(|r| r.strip_suffix(')'));
    if let Some(n) = inner("sphere(") {
        return Ok(ThetaStar::Sphere { norm: parse_f64(n, line)? });
    }
    if let Some(k) = inner("leading_ones(") {
        return Ok(ThetaStar::LeadingOnes {
            support: parse_usize(k, line)?,
        });
    }
    if let Some(vals) = inner("given(") {
        return Ok(ThetaStar::Given(
            vals.split_whitespace().map(|x| parse_f64(x, line)).collect::<Result<_>>()?,
        ));
    }
    Err(CliError::config(line, format!("unknown theta_star rule {v:?}")))
}

#[derive(Default)]
struct MethodDraft {
    line: usize,
    label: Option<String>,
    algorithm: Option<String>,
    alpha: Option<AlphaSpec>,
    rho: Option<f64>,
    step: Option<AgdStep>,
    iterations: Option<usize>,
    init: Option<InitSpec>,
}

impl MethodDraft {
    fn finish(self) -> Result<MethodSpec> {
        let line = self.line;
        let name = self.algorithm.ok_or_else(|| CliError::config(line, "[method] needs an algorithm"))?;
        let algorithm = match name.as_str() {
            "admm" => Algorithm::Admm {
                rho: self.rho.unwrap_or(1.0),
            },
            "agd" => Algorithm::Agd {
                step: self.step.unwrap_or(AgdStep::Backtracking),
            },
            other => Algorithm::Estimator(
                Variant::from_name(other).ok_or_else(|| CliError::config(line, format!("unknown algorithm {other:?}")))?,
            ),
        };
        let alpha = match (algorithm, self.alpha) {
            (Algorithm::Estimator(_), Some(a)) => a,
            (Algorithm::Estimator(_), None) => AlphaSpec::Value(0.0),
            (_, Some(_)) => return Err(CliError::config(line, "alpha applies only to csl/gel/cease/cease_avg")),
            (_, None) => AlphaSpec::Value(0.0),
        };
        if self.rho.is_some() && !matches!(algorithm, Algorithm::Admm { .. }) {
            return Err(CliError::config(line, "rho applies only to admm"));
        }
        if self.step.is_some() && !matches!(algorithm, Algorithm::Agd { .. }) {
            return Err(CliError::config(line, "step applies only to agd"));
        }
        Ok(MethodSpec {
            label: self.label.unwrap_or_else(|| name.clone()),
            algorithm,
            alpha,
            iterations: self.iterations.ok_or_else(|| CliError::config(line, "[method] needs iterations"))?,
            init: self.init.unwrap_or(InitSpec::Zero),
        })
    }
}

enum Section {
    Top,
    Method(MethodDraft),
    Skipped,
}

pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let mut top: Vec<(usize, String, String)> = Vec::new();
    let mut methods = Vec::new();
    let mut section = Section::Top;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or_default().trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            if let Section::Method(draft) = std::mem::replace(&mut section, Section::Skipped) {
                methods.push(draft.finish()?);
            }
            section = match content {
                "[method]" => Section::Method(MethodDraft {
                    line,
                    ..MethodDraft::default()
                }),
                "[replication]" => Section::Skipped,
                other => return Err(CliError::config(line, format!("unknown section {other}"))),
            };
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| CliError::config(line, "expected key = value"))?;
        match &mut section {
            Section::Skipped => {}
            Section::Top => {
                if top.iter().any(|(_, k, _)| k == key) {
                    return Err(CliError::config(line, format!("duplicate key {key}")));
                }
                top.push((line, key.to_string(), value.to_string()));
            }
            Section::Method(d) => match key {
                "label" => d.label = Some(value.to_string()),
                "algorithm" => d.algorithm = Some(value.to_string()),
                "alpha" => d.alpha = Some(parse_alpha(value, line)?),
                "rho" => d.rho = Some(parse_f64(value, line)?),
                "step" => {
                    d.step = Some(if value == "backtracking" {
                        AgdStep::Backtracking
                    } else {
                        AgdStep::Fixed(parse_f64(value, line)?)
                    })
                }
                "iterations" => d.iterations = Some(parse_usize(value, line)?),
                "init" => {
                    d.init = Some(match value {
                        "zero" => InitSpec::Zero,
                        "one_shot" => InitSpec::OneShot,
                        _ => return Err(CliError::config(line, format!("unknown init {value:?}"))),
                    })
                }
                _ => return Err(CliError::config(line, format!("unknown method key {key}"))),
            },
        }
    }
    if let Section::Method(draft) = section {
        methods.push(draft.finish()?);
    }

    let get = |key: &str| top.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()));
    let known = [
        "dataset",
        "rows",
        "features",
        "covariance",
        "theta_star",
        "path",
        "test_size",
        "standardize",
        "machines",
        "partition",
        "penalty",
        "lambda",
        "exempt_intercept",
        "replications",
        "seed",
        "wall_time",
    ];
    if let Some((line, key, _)) = top.iter().find(|(_, k, _)| !known.contains(&k.as_str())) {
        return Err(CliError::config(*line, format!("unknown key {key}")));
    }

    let (dline, dataset) = get("dataset").ok_or_else(|| CliError::config(0, "missing key dataset"))?;
    let data = if dataset == "spambase" {
        let (_, path) = get("path").ok_or_else(|| CliError::config(dline, "spambase needs a path"))?;
        DataSource::Spambase {
            path: PathBuf::from(path),
            test_size: get("test_size").map(|(l, v)| parse_usize(v, l)).transpose()?.unwrap_or(1000),
            standardize: get("standardize").map(|(l, v)| parse_bool(v, l)).transpose()?.unwrap_or(true),
        }
    } else {
        let experiment =
            Experiment::from_name(dataset).ok_or_else(|| CliError::config(dline, format!("unknown dataset {dataset:?}")))?;
        let mut spec = match experiment {
            Experiment::LogisticDense => SyntheticSpec::logistic_dense(0),
            Experiment::LogisticSparseL1 => SyntheticSpec::logistic_sparse_l1(0),
        };
        if let Some((l, v)) = get("rows") {
            spec.total_rows = parse_usize(v, l)?;
        }
        if let Some((l, v)) = get("features") {
            spec.features = parse_usize(v, l)?;
        }
        if let Some((l, v)) = get("covariance") {
            spec.covariance = match v {
                "diag10521" => Covariance::Diag10521,
                "identity" => Covariance::Identity,
                _ => return Err(CliError::config(l, format!("unknown covariance {v:?}"))),
            };
        }
        if let Some((l, v)) = get("theta_star") {
            spec.theta_star = parse_theta_star(v, l)?;
        }
        DataSource::Synthetic(spec)
    };
    let penalty_kind = get("penalty").map_or("none", |(_, v)| v);
    let lambda = get("lambda").map(|(l, v)| parse_lambda(v, l)).transpose()?;
    let penalty = match (penalty_kind, lambda) {
        ("none", None) => PenaltySpec::None,
        ("none", Some(_)) => return Err(CliError::config(get("lambda").map_or(0, |x| x.0), "lambda given without a penalty")),
        ("l1", Some(l)) => PenaltySpec::L1(l),
        ("l2", Some(l)) => PenaltySpec::L2(l),
        ("l1" | "l2", None) => return Err(CliError::config(get("penalty").map_or(0, |x| x.0), "penalty needs a lambda")),
        (other, _) => return Err(CliError::config(get("penalty").map_or(0, |x| x.0), format!("unknown penalty {other:?}"))),
    };
    let partition = match get("partition") {
        None => PartitionKind::Contiguous,
        Some((_, "contiguous")) => PartitionKind::Contiguous,
        Some((_, "shuffled")) => PartitionKind::Shuffled,
        Some((l, v)) => return Err(CliError::config(l, format!("unknown partition {v:?}"))),
    };
    let cfg = ExperimentConfig {
        data,
        machines: get("machines")
            .map(|(l, v)| parse_usize(v, l))
            .transpose()?
            .ok_or_else(|| CliError::config(0, "missing key machines"))?,
        partition,
        penalty,
        exempt_intercept: get("exempt_intercept").map(|(l, v)| parse_bool(v, l)).transpose()?.unwrap_or(false),
        replications: get("replications").map(|(l, v)| parse_usize(v, l)).transpose()?.unwrap_or(1),
        seed: get("seed")
            .map(|(l, v)| v.parse().map_err(|_| CliError::config(l, format!("bad seed {v:?}"))))
            .transpose()?
            .unwrap_or(0),
        wall_time: get("wall_time").map(|(l, v)| parse_bool(v, l)).transpose()?.unwrap_or(false),
        methods,
    };
    cfg.validate()?;
    Ok(cfg)
}
