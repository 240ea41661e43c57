//! Dense matrix CSV, problem JSON documents and report envelopes.
//!
//! Matrices are written row-major with a `# rows=m cols=n` header line.
//! Numbers use Rust's shortest round-trip formatting, so a write/read cycle
//! is lossless.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SonError};
use crate::problem::{CostMatrix, KernelWeights, Marginals, ProblemSpec};

/// Version stamped into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

pub fn format_matrix_csv(grid: &Array2<f64>) -> String {
    let (m, n) = grid.dim();
    let mut out = format!("# rows={m} cols={n}\n");
    for row in grid.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// 0/1 grid with the same header.
pub fn format_bool_csv(grid: &Array2<bool>) -> String {
    let (m, n) = grid.dim();
    let mut out = format!("# rows={m} cols={n}\n");
    for row in grid.rows() {
        let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix('#')?.trim();
    let mut rows = None;
    let mut cols = None;
    for part in rest.split_whitespace() {
        if let Some(v) = part.strip_prefix("rows=") {
            rows = v.parse().ok();
        } else if let Some(v) = part.strip_prefix("cols=") {
            cols = v.parse().ok();
        }
    }
    Some((rows?, cols?))
}

/// Parses a dense grid. The shape header is optional; when present it must
/// match the data.
pub fn parse_matrix_csv(text: &str) -> Result<Array2<f64>> {
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            if header.is_none() && rows.is_empty() {
                header = parse_header(t);
            }
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = t.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| SonError::Parse {
            line,
            message: e.to_string(),
        })?;
        if let Some(first) = rows.first() {
            if first.len() != vals.len() {
                return Err(SonError::Parse {
                    line,
                    message: format!("row has {} fields, expected {}", vals.len(), first.len()),
                });
            }
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(SonError::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    let (m, n) = (rows.len(), rows[0].len());
    if let Some((hm, hn)) = header {
        if (hm, hn) != (m, n) {
            return Err(SonError::Parse {
                line: 1,
                message: format!("header says {hm}x{hn} but data is {m}x{n}"),
            });
        }
    }
    Ok(Array2::from_shape_fn((m, n), |(i, j)| rows[i][j]))
}

pub fn write_matrix_csv(path: impl AsRef<Path>, grid: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_matrix_csv(grid)).map_err(|e| SonError::io(path, e))
}

pub fn write_bool_csv(path: impl AsRef<Path>, grid: &Array2<bool>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_bool_csv(grid)).map_err(|e| SonError::io(path, e))
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SonError::io(path, e))?;
    parse_matrix_csv(&text)
}

/// Pairwise weights carried by a problem document, before scaling by
/// `lambda_rows` / `lambda_cols`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// 1 off the diagonal.
    Constant,
    /// No regularization.
    Zeros,
    /// Square weight matrices in CSV, relative to the document.
    Files { rows_path: PathBuf, cols_path: PathBuf },
}

/// On-disk form of a [`ProblemSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub cost_path: PathBuf,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub lambda: f64,
    #[serde(default = "one")]
    pub lambda_rows: f64,
    #[serde(default = "one")]
    pub lambda_cols: f64,
    #[serde(default)]
    pub theta: Option<f64>,
    pub kernel: KernelSpec,
}

fn one() -> f64 {
    1.0
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ProblemDocument {
    /// Builds the spec, reading referenced CSV files relative to `base_dir`.
    pub fn into_spec(self, base_dir: &Path) -> Result<ProblemSpec> {
        let cost = CostMatrix::new(read_matrix_csv(resolve(base_dir, &self.cost_path))?)?;
        let marginals = Marginals::new(Array1::from(self.mu), Array1::from(self.nu))?;
        let (m, n) = (cost.rows(), cost.cols());
        let kernels = match &self.kernel {
            KernelSpec::Constant => KernelWeights::constant(m, n, self.lambda_rows, self.lambda_cols)?,
            KernelSpec::Zeros => KernelWeights::zeros(m, n),
            KernelSpec::Files { rows_path, cols_path } => {
                let r = read_matrix_csv(resolve(base_dir, rows_path))? * self.lambda_rows;
                let s = read_matrix_csv(resolve(base_dir, cols_path))? * self.lambda_cols;
                KernelWeights::new(r, s)?
            }
        };
        ProblemSpec::new(cost, marginals, kernels, self.lambda, self.theta)
    }
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SonError::io(path, e))?;
    let doc: ProblemDocument = serde_json::from_str(&text)?;
    doc.into_spec(path.parent().unwrap_or(Path::new(".")))
}

/// Writes `problem.json`, `cost.csv`, `kernel_rows.csv` and `kernel_cols.csv` into `dir`.
pub fn save_problem(dir: impl AsRef<Path>, spec: &ProblemSpec) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| SonError::io(dir, e))?;
    write_matrix_csv(dir.join("cost.csv"), &spec.cost.view().to_owned())?;
    write_matrix_csv(dir.join("kernel_rows.csv"), spec.kernels.rows())?;
    write_matrix_csv(dir.join("kernel_cols.csv"), spec.kernels.cols())?;
    let doc = ProblemDocument {
        cost_path: "cost.csv".into(),
        mu: spec.marginals.mu().to_vec(),
        nu: spec.marginals.nu().to_vec(),
        lambda: spec.lambda,
        lambda_rows: 1.0,
        lambda_cols: 1.0,
        theta: spec.theta,
        kernel: KernelSpec::Files {
            rows_path: "kernel_rows.csv".into(),
            cols_path: "kernel_cols.csv".into(),
        },
    };
    let path = dir.join("problem.json");
    write_json(&path, &doc)?;
    Ok(path)
}

/// Wraps a payload as `{"schema_version": .., ...payload}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut s = to_json_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| SonError::io(path, e))
}
