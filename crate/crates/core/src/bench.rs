//! Learning-stoppage sweeps and their CSV output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::config::{ConfigError, ConfigFile};
use crate::gradient::GdMethod;
use crate::simulator::{run_full_session, SessionConfig};

pub const CSV_HEADER: [&str; 6] = ["method", "lambda", "iterations", "elapsed_ms", "final_ep", "status"];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    pub methods: Vec<GdMethod>,
    pub repetitions: usize,
    pub template: SessionConfig,
}

impl SweepSpec {
    pub const DEFAULT_LAMBDAS: [f64; 5] = [0.9, 0.7, 0.5, 0.3, 0.1];

    pub fn new(template: SessionConfig) -> Self {
        SweepSpec {
            lambdas: Self::DEFAULT_LAMBDAS.to_vec(),
            methods: vec![GdMethod::Batch, GdMethod::Stochastic],
            repetitions: 3,
            template,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.lambdas.is_empty() {
            return Err(BenchError::Invalid("lambda list is empty".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(BenchError::Invalid(format!("lambda {l} must be positive")));
        }
        if self.lambdas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(BenchError::Invalid("lambdas must be strictly descending".into()));
        }
        if self.methods.is_empty() {
            return Err(BenchError::Invalid("no methods".into()));
        }
        if self.repetitions == 0 {
            return Err(BenchError::Invalid("repetitions must be at least 1".into()));
        }
        Ok(())
    }

    /// Reads a sweep file: a run config plus `lambdas`, `methods` and `repetitions`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let (file, base) = ConfigFile::load(path)?;
        Self::from_file(&file, &base)
    }

    pub fn from_file(file: &ConfigFile, base: &Path) -> Result<Self, BenchError> {
        let mut spec = SweepSpec::new(file.session(base)?);
        if let Some(l) = &file.lambdas {
            spec.lambdas = l.clone();
        }
        if let Some(m) = &file.methods {
            spec.methods = m
                .iter()
                .map(|s| s.parse::<GdMethod>().map_err(|e| BenchError::Invalid(e.to_string())))
                .collect::<Result<_, _>>()?;
        }
        if let Some(r) = file.repetitions {
            spec.repetitions = r;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Error,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowStatus::Ok => "OK",
            RowStatus::Error => "ERROR",
        })
    }
}

impl FromStr for RowStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OK" => Ok(RowStatus::Ok),
            "ERROR" => Ok(RowStatus::Error),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: GdMethod,
    pub lambda: f64,
    pub iterations: Option<usize>,
    /// Best of the repetitions.
    pub elapsed_ms: Option<f64>,
    pub final_ep: Option<f64>,
    pub status: RowStatus,
    /// Failure message for `ERROR` rows; not written to the CSV.
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(method: GdMethod, lambda: f64, error: String) -> Self {
        SweepRow {
            method,
            lambda,
            iterations: None,
            elapsed_ms: None,
            final_ep: None,
            status: RowStatus::Error,
            error: Some(error),
        }
    }
}

/// Runs every (method, λ) cell sequentially. Rows come back sorted by method
/// name, then by descending λ. Failed cells become `ERROR` rows.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, BenchError> {
    spec.validate()?;
    let mut methods = spec.methods.clone();
    methods.sort_by_key(|m| m.as_str());
    methods.dedup();

    let mut rows = Vec::with_capacity(methods.len() * spec.lambdas.len());
    for &method in &methods {
        for &lambda in &spec.lambdas {
            let mut cfg = spec.template.clone();
            cfg.gd.method = method;
            cfg.gd.lambda = lambda;
            rows.push(run_cell(&cfg, spec.repetitions));
        }
    }
    Ok(rows)
}

fn run_cell(cfg: &SessionConfig, repetitions: usize) -> SweepRow {
    let (method, lambda) = (cfg.gd.method, cfg.gd.lambda);
    let mut best: Option<(usize, f64, f64)> = None;
    for rep in 0..repetitions {
        let stats = match run_full_session(cfg) {
            Ok(r) => r.stats,
            Err(e) => {
                log::warn!("{method} lambda={lambda}: {e}");
                return SweepRow::failed(method, lambda, e.to_string());
            }
        };
        let ms = stats.elapsed.as_secs_f64() * 1e3;
        log::debug!("{method} lambda={lambda} rep {rep}: {} iterations, {ms:.3} ms", stats.iterations);
        best = match best {
            None => Some((stats.iterations, stats.final_ep, ms)),
            Some((it, ep, _)) if it != stats.iterations || ep != stats.final_ep => {
                return SweepRow::failed(method, lambda, "repetitions disagree".into());
            }
            Some((it, ep, b)) => Some((it, ep, b.min(ms))),
        };
    }
    let (iterations, final_ep, ms) = best.expect("at least one repetition");
    SweepRow {
        method,
        lambda,
        iterations: Some(iterations),
        elapsed_ms: Some(ms),
        final_ep: Some(final_ep),
        status: RowStatus::Ok,
        error: None,
    }
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        w.write_record([
            r.method.as_str().to_string(),
            r.lambda.to_string(),
            opt(r.iterations.map(|i| i.to_string())),
            opt(r.elapsed_ms.map(|m| format!("{m:.3}"))),
            opt(r.final_ep.map(|e| e.to_string())),
            r.status.to_string(),
        ])?;
    }
    w.flush().map_err(|e| BenchError::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    })
}

pub fn write_sweep_csv_file(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<(), BenchError> {
    let path = path.as_ref();
    let io = |e: std::io::Error| BenchError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    write_sweep_csv(rows, std::fs::File::create(path).map_err(io)?)
}

/// Parses a CSV produced by [`write_sweep_csv`].
pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>, BenchError> {
    let path: PathBuf = path.as_ref().into();
    let mut r = csv::Reader::from_path(&path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(BenchError::Invalid(format!("unexpected header {header:?}")));
    }
    let bad = |line: usize, m: String| BenchError::Invalid(format!("{}: record {line}: {m}", path.display()));
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| -> Result<Option<f64>, BenchError> {
            match field(k) {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|e| bad(i + 1, format!("{}: {e}", CSV_HEADER[k]))),
            }
        };
        rows.push(SweepRow {
            method: field(0).parse().map_err(|e: crate::gradient::GdError| bad(i + 1, e.to_string()))?,
            lambda: num(1)?.ok_or_else(|| bad(i + 1, "missing lambda".into()))?,
            iterations: match field(2) {
                "" => None,
                s => Some(s.parse().map_err(|e| bad(i + 1, format!("iterations: {e}")))?),
            },
            elapsed_ms: num(3)?,
            final_ep: num(4)?,
            status: field(5).parse().map_err(|e| bad(i + 1, e))?,
            error: None,
        });
    }
    Ok(rows)
}
