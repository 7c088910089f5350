//! Spambase ingestion, checksums, and bundle dumps in the same CSV dialect.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cease_core::data::{train_test_split, DatasetBundle, Provenance, Standardization, SyntheticSpec, ThetaStar};
use cease_core::{Matrix, Shard};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::format::num;

/// 57 features followed by the 0/1 label.
pub const SPAMBASE_COLUMNS: usize = 58;

/// Digests of Spambase files this crate has been checked against.
pub const KNOWN_SPAMBASE_SHA256: &[(&str, &str)] = &[(
    "KEEL conversion of the UCI file, 4597 rows (tests/data/spambase.csv)",
    "f0b0782d02daeadf9cd649aa67cb508593624c8f550af74c554bd3d9be6761e4",
)];

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Parses headerless comma-separated rows of `SPAMBASE_COLUMNS` numbers into
/// a shard with an intercept column. Blank lines are skipped.
pub fn parse_spambase(text: &str, path: &Path) -> Result<Shard> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != SPAMBASE_COLUMNS {
            if labels.is_empty() {
                return Err(CliError::Format(format!(
                    "{}: expected {SPAMBASE_COLUMNS} columns, found {}",
                    path.display(),
                    fields.len()
                )));
            }
            return Err(CliError::parse(
                path,
                line_no,
                format!("expected {SPAMBASE_COLUMNS} fields, found {}", fields.len()),
            ));
        }
        data.push(1.0);
        for (col, field) in fields.iter().enumerate() {
            let value: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| CliError::parse(path, line_no, format!("column {}: not a number: {field:?}", col + 1)))?;
            if col + 1 == SPAMBASE_COLUMNS {
                if value != 0.0 && value != 1.0 {
                    return Err(CliError::parse(path, line_no, format!("label must be 0 or 1, got {field}")));
                }
                labels.push(value);
            } else {
                data.push(value);
            }
        }
    }
    if labels.is_empty() {
        return Err(CliError::Format(format!("{}: no data rows", path.display())));
    }
    let rows = labels.len();
    Ok(Shard::new(Matrix::from_vec(rows, SPAMBASE_COLUMNS, data)?, labels)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpambaseOptions {
    pub test_size: usize,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for SpambaseOptions {
    fn default() -> Self {
        SpambaseOptions {
            test_size: 1000,
            seed: 0,
            standardize: true,
        }
    }
}

/// Loads the file, holds out `test_size` random rows, and (by default)
/// standardizes both splits with statistics of the training split.
pub fn load_spambase(path: &Path, opts: &SpambaseOptions) -> Result<DatasetBundle> {
    let bytes = read_file(path)?;
    let checksum = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| CliError::Format(format!("{}: not UTF-8 text", path.display())))?;
    let shard = parse_spambase(&text, path)?;
    let rows = shard.len();
    let (mut train, mut test) = train_test_split(&shard, opts.test_size, opts.seed)?;
    if opts.standardize {
        let fitted = Standardization::fit(&train);
        train = fitted.apply(&train)?;
        test = fitted.apply(&test)?;
    }
    Ok(DatasetBundle {
        train,
        test: Some(test),
        theta_star: None,
        provenance: Provenance::File {
            path: path.display().to_string(),
            checksum,
            rows,
        },
    })
}

/// Writes rows as `features…,label` without the intercept column.
pub fn shard_to_csv(shard: &Shard) -> String {
    let x = shard.x();
    let mut out = String::new();
    for (i, y) in shard.y().iter().enumerate() {
        for v in &x.row(i)[1..] {
            out.push_str(&num(*v));
            out.push(',');
        }
        out.push_str(&num(*y));
        out.push('\n');
    }
    out
}

/// Sidecar `key=value` lines describing where a bundle came from.
pub fn provenance_text(bundle: &DatasetBundle, seed: u64) -> String {
    let mut out = format!("seed={seed}\n");
    match &bundle.provenance {
        Provenance::Synthetic(spec) => {
            let SyntheticSpec {
                experiment,
                total_rows,
                features,
                covariance,
                theta_star,
                seed: spec_seed,
            } = spec;
            let _ = writeln!(out, "spec={}", experiment.name());
            let _ = writeln!(out, "rows={total_rows}");
            let _ = writeln!(out, "features={features}");
            let _ = writeln!(out, "covariance={covariance:?}");
            let rule = match theta_star {
                ThetaStar::Sphere { norm } => format!("sphere(norm={})", num(*norm)),
                ThetaStar::LeadingOnes { support } => format!("leading_ones(support={support})"),
                ThetaStar::Given(_) => "given".to_string(),
            };
            let _ = writeln!(out, "theta_star_rule={rule}");
            let _ = writeln!(out, "spec_seed={spec_seed}");
        }
        Provenance::File { path, checksum, rows } => {
            let _ = writeln!(out, "spec=file");
            let _ = writeln!(out, "path={path}");
            let _ = writeln!(out, "checksum=sha256:{checksum}");
            let _ = writeln!(out, "rows={rows}");
        }
    }
    let _ = writeln!(out, "train_rows={}", bundle.train.len());
    if let Some(test) = &bundle.test {
        let _ = writeln!(out, "test_rows={}", test.len());
    }
    out
}

/// Dumps `bundle` as `<stem>_train.csv`, optional `<stem>_test.csv`, and
/// `<stem>.provenance`.
pub fn dump_bundle(bundle: &DatasetBundle, seed: u64, dir: &Path, stem: &str) -> Result<()> {
    let write = |name: String, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))
    };
    write(format!("{stem}_train.csv"), shard_to_csv(&bundle.train))?;
    if let Some(test) = &bundle.test {
        write(format!("{stem}_test.csv"), shard_to_csv(test))?;
    }
    write(format!("{stem}.provenance"), provenance_text(bundle, seed))
}
