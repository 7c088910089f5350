use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cease::config::DataSource;
use cease::dataset::{parse_spambase, read_file, sha256_hex, KNOWN_SPAMBASE_SHA256};
use cease::diagnose::{diagnose, write_diagnosis};
use cease::plot::{load_traces, svg_chart, write_long};
use cease::{parse_config, run_experiment, CliError, ExperimentConfig, Result, RunOptions};
use cease_core::diagnostics::{BallSampling, PowerSettings};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cease", version, about = "Distributed regularized GLM estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (key = value with [method] blocks).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "cease-out")]
    out: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use raw Spambase features.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method for every replication and write traces, summary and manifest.
    Run {
        #[command(flatten)]
        common: ConfigArgs,
        /// Replications run concurrently.
        #[arg(long, env = "CEASE_THREADS", default_value_t = 1)]
        threads: usize,
        /// Record per-iteration wall time (makes outputs non-reproducible).
        #[arg(long)]
        wall_time: bool,
        /// Also write each replication's data with a provenance sidecar.
        #[arg(long)]
        dump_data: bool,
    },
    /// Estimate Hessian heterogeneity and curvature at the reference minimizer.
    Diagnose {
        #[command(flatten)]
        common: ConfigArgs,
        /// Radius of the ball sampled around the minimizer (0 = centre only).
        #[arg(long, default_value_t = 0.0)]
        radius: f64,
        /// Random points drawn from the ball.
        #[arg(long, default_value_t = 0)]
        points: usize,
    },
    /// Merge trace CSVs into long format and optionally draw an SVG chart.
    Plotdata {
        /// Trace files; each file stem becomes the method name.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Long-format CSV output.
        #[arg(long, default_value = "plotdata.csv")]
        out: PathBuf,
        /// Write an SVG line chart here.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Trace column drawn in the chart.
        #[arg(long, default_value = "log_err_to_thetahat")]
        statistic: String,
    },
    /// Verify a locally downloaded Spambase file. Never downloads anything.
    SpambaseFetchCheck {
        path: PathBuf,
        /// Expected SHA-256 (hex); defaults to the digests this crate knows.
        #[arg(long)]
        sha256: Option<String>,
    },
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&args.config).map_err(|e| CliError::io(&args.config, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.no_standardize {
        if let DataSource::Spambase { standardize, .. } = &mut cfg.data {
            *standardize = false;
        }
    }
    Ok(cfg)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| CliError::io(path, e))
}

fn spambase_check(path: &Path, expected: Option<&str>) -> Result<()> {
    let bytes = read_file(path)?;
    let found = sha256_hex(&bytes);
    let text = String::from_utf8_lossy(&bytes);
    let shard = parse_spambase(&text, path)?;
    println!("rows={}", shard.len());
    println!("sha256={found}");
    match expected {
        Some(e) if !e.eq_ignore_ascii_case(&found) => Err(CliError::Checksum {
            expected: e.to_ascii_lowercase(),
            found,
        }),
        Some(_) => Ok(()),
        None => match KNOWN_SPAMBASE_SHA256.iter().find(|(_, d)| *d == found) {
            Some((name, _)) => {
                println!("matches={name}");
                Ok(())
            }
            None => Err(CliError::Checksum {
                expected: KNOWN_SPAMBASE_SHA256.iter().map(|(_, d)| *d).collect::<Vec<_>>().join(" or "),
                found,
            }),
        },
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            common,
            threads,
            wall_time,
            dump_data,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.wall_time |= wall_time;
            let report = run_experiment(&cfg, &common.out, &RunOptions { threads, dump_data })?;
            println!("wrote {} files under {}", report.files.len(), common.out.display());
            if report.failed > 0 {
                return Err(CliError::RunsFailed { failed: report.failed });
            }
            Ok(())
        }
        Command::Diagnose { common, radius, points } => {
            let cfg = load_config(&common)?;
            let sampling = BallSampling {
                radius,
                points,
                seed: cfg.seed,
            };
            let d = diagnose(&cfg, &sampling, &PowerSettings::default())?;
            for path in write_diagnosis(&d, &common.out)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Plotdata {
            traces,
            out,
            svg,
            statistic,
        } => {
            let loaded = load_traces(&traces)?;
            write_file(&out, &write_long(&loaded))?;
            if let Some(svg) = svg {
                write_file(&svg, &svg_chart(&loaded, &statistic)?)?;
            }
            Ok(())
        }
        Command::SpambaseFetchCheck { path, sha256 } => spambase_check(&path, sha256.as_deref()),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ CliError::RunsFailed { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
