//! Flat TOML run and sweep configuration.
//!
//! ```toml
//! dataset = "data/employees.csv"   # or "toy", or omit and set synthetic_n
//! method = "stochastic"
//! lambda = 0.5
//! df = 10
//! transport = "socket"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::dataset::{PartitionSpec, SyntheticSpec};
use crate::gradient::{BatchAggregate, GdConfig, GdMethod};
use crate::protocol::{CipherAlgorithm, CipherConfig};
use crate::rdf::{DisguisePolicy, DEFAULT_SUBJECT_BASE, ONTOLOGY_NAMESPACE};
use crate::simulator::{DatasetSource, SessionConfig, TransportKind};

pub const DEFAULT_PASSPHRASE: &str = "ppgd-key";
pub const DEFAULT_RDF_DIR: &str = "rdf_out";
pub const DEFAULT_VALUE_RANGE: (f64, f64) = (10.0, 100.0);

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Syntax { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Raw file contents. Every key is optional; [`ConfigFile::session`] fills defaults.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: Option<String>,
    #[serde(alias = "seed")]
    pub synthetic_seed: Option<u64>,
    pub synthetic_n: Option<usize>,
    pub value_lo: Option<f64>,
    pub value_hi: Option<f64>,
    pub categories: Option<Vec<String>>,
    pub party_a: Option<Vec<String>>,
    pub party_b: Option<Vec<String>>,
    pub df: Option<f64>,
    pub df_a: Option<f64>,
    pub df_b: Option<f64>,
    pub cipher: Option<String>,
    pub key: Option<String>,
    pub method: Option<String>,
    pub eta_s: Option<f64>,
    pub eta_b: Option<f64>,
    #[serde(alias = "minimization_factor")]
    pub lambda: Option<f64>,
    pub max_iterations: Option<usize>,
    pub divergence_window: Option<usize>,
    pub batch_aggregate: Option<String>,
    pub transport: Option<String>,
    pub port: Option<u16>,
    pub rdf_dir: Option<String>,
    pub inline_rdf: Option<bool>,
    pub swap_roles: Option<bool>,
    pub namespace: Option<String>,
    pub subject_base: Option<String>,
    // sweep-only
    pub lambdas: Option<Vec<f64>>,
    pub methods: Option<Vec<String>>,
    pub repetitions: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax {
            path: origin.to_string(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, PathBuf), ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::parse(&text, &path.display().to_string())?, base))
    }

    /// Builds a session config; `base` anchors relative paths.
    pub fn session(&self, base: &Path) -> Result<SessionConfig, ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };

        let dataset = match (self.dataset.as_deref(), self.synthetic_n) {
            (Some(_), Some(_)) => return Err(invalid("set either dataset or synthetic_n, not both".into())),
            (Some("toy"), None) => DatasetSource::Toy,
            (Some(p), None) => DatasetSource::Csv(resolve(p)),
            (None, Some(n)) => {
                let (dlo, dhi) = DEFAULT_VALUE_RANGE;
                let mut spec = SyntheticSpec::employee(
                    self.synthetic_seed.unwrap_or(0),
                    n,
                    self.value_lo.unwrap_or(dlo),
                    self.value_hi.unwrap_or(dhi),
                );
                if let Some(c) = &self.categories {
                    spec.categories = c.clone();
                }
                DatasetSource::Synthetic(spec)
            }
            (None, None) => return Err(invalid("no dataset: set dataset or synthetic_n".into())),
        };

        let partition = match (&self.party_a, &self.party_b, &dataset) {
            (Some(a), Some(b), _) => PartitionSpec::new(a.iter(), b.iter()),
            (None, None, DatasetSource::Toy) => crate::dataset::toy_partition(),
            (None, None, _) => PartitionSpec::employee(),
            _ => return Err(invalid("party_a and party_b must be given together".into())),
        };

        let df = |specific: Option<f64>| {
            DisguisePolicy::new(specific.or(self.df).unwrap_or(DisguisePolicy::DEFAULT_DF))
                .map_err(|e| invalid(e.to_string()))
        };

        let algorithm = match &self.cipher {
            Some(c) => c.parse::<CipherAlgorithm>().map_err(|e| invalid(e.to_string()))?,
            None => CipherAlgorithm::default(),
        };
        let key = self.key.as_deref().unwrap_or(DEFAULT_PASSPHRASE);

        let mut gd = GdConfig::default();
        if let Some(m) = &self.method {
            gd.method = m.parse::<GdMethod>().map_err(|e| invalid(e.to_string()))?;
        }
        gd.eta_s = self.eta_s.unwrap_or(gd.eta_s);
        gd.eta_b = self.eta_b.unwrap_or(gd.eta_b);
        gd.lambda = self.lambda.unwrap_or(gd.lambda);
        gd.max_iterations = self.max_iterations.unwrap_or(gd.max_iterations);
        gd.divergence_window = self.divergence_window.unwrap_or(gd.divergence_window);
        if let Some(a) = &self.batch_aggregate {
            gd.batch_aggregate = a.parse::<BatchAggregate>().map_err(|e| invalid(e.to_string()))?;
        }
        gd.validate().map_err(|e| invalid(e.to_string()))?;

        let transport = parse_transport(self.transport.as_deref().unwrap_or("inproc"), self.port.unwrap_or(0))?;

        Ok(SessionConfig {
            dataset,
            partition,
            disguise_a: df(self.df_a)?,
            disguise_b: df(self.df_b)?,
            cipher: CipherConfig::from_passphrase(algorithm, key),
            gd,
            transport,
            rdf_dir: resolve(self.rdf_dir.as_deref().unwrap_or(DEFAULT_RDF_DIR)),
            inline_rdf: self.inline_rdf.unwrap_or(false),
            swap_roles: self.swap_roles.unwrap_or(false),
            namespace: self.namespace.clone().unwrap_or_else(|| ONTOLOGY_NAMESPACE.into()),
            subject_base: self.subject_base.clone().unwrap_or_else(|| DEFAULT_SUBJECT_BASE.into()),
        })
    }
}

pub fn parse_transport(name: &str, port: u16) -> Result<TransportKind, ConfigError> {
    match name {
        "inproc" | "in-process" => Ok(TransportKind::InProcess),
        "socket" | "tcp" => Ok(TransportKind::Socket { port }),
        other => Err(ConfigError::Invalid(format!(
            "unknown transport {other:?} (expected inproc or socket)"
        ))),
    }
}

/// Loads a run configuration from disk.
pub fn load_session_config(path: impl AsRef<Path>) -> Result<SessionConfig, ConfigError> {
    let (file, base) = ConfigFile::load(path)?;
    file.session(&base)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(text: &str) -> Result<SessionConfig, ConfigError> {
        ConfigFile::parse(text, "test.toml")?.session(Path::new("/cfg"))
    }

    #[test]
    fn defaults_applied_when_unspecified() {
        let cfg = session("dataset = \"toy\"").unwrap();
        assert_eq!(cfg.gd.eta_s, 0.00001);
        assert_eq!(cfg.gd.eta_b, 0.000001);
        assert_eq!(cfg.disguise_a.df(), 10.0);
        assert_eq!(cfg.disguise_b.df(), 10.0);
        assert_eq!(cfg.gd.method, GdMethod::Stochastic);
        assert_eq!(cfg.transport, TransportKind::InProcess);
        assert_eq!(cfg.cipher, CipherConfig::from_passphrase(CipherAlgorithm::DesEcbPkcs7, DEFAULT_PASSPHRASE));
        assert_eq!(cfg.partition, crate::dataset::toy_partition());
        assert_eq!(cfg.rdf_dir, PathBuf::from("/cfg/rdf_out"));
    }

    #[test]
    fn explicit_values_and_aliases() {
        let cfg = session(
            r#"
            synthetic_n = 12
            seed = 7
            value_lo = 1.0
            value_hi = 2.0
            method = "batch"
            minimization_factor = 0.25
            df_a = 0
            df = 3
            transport = "socket"
            port = 4100
            rdf_dir = "/tmp/x"
            batch_aggregate = "mean"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.gd.lambda, 0.25);
        assert_eq!(cfg.gd.method, GdMethod::Batch);
        assert_eq!(cfg.gd.batch_aggregate, BatchAggregate::Mean);
        assert_eq!((cfg.disguise_a.df(), cfg.disguise_b.df()), (0.0, 3.0));
        assert_eq!(cfg.transport, TransportKind::Socket { port: 4100 });
        assert_eq!(cfg.rdf_dir, PathBuf::from("/tmp/x"));
        match cfg.dataset {
            DatasetSource::Synthetic(s) => assert_eq!((s.seed, s.n), (7, 12)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "dataset = \"toy\"\nlambda = 0",
            "dataset = \"toy\"\nlambda = -1",
            "dataset = \"toy\"\ndf = -1",
            "dataset = \"toy\"\nmethod = \"newton\"",
            "dataset = \"toy\"\ntransport = \"pigeon\"",
            "dataset = \"toy\"\nparty_a = [\"Basic\"]",
            "",
            "dataset = \"toy\"\nsynthetic_n = 3",
        ] {
            assert!(matches!(session(text), Err(ConfigError::Invalid(_))), "{text:?}");
        }
        assert!(matches!(session("dataset = \"toy\"\nbogus = 1"), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn relative_dataset_path() {
        let cfg = session("dataset = \"data/t.csv\"").unwrap();
        assert_eq!(cfg.dataset, DatasetSource::Csv(PathBuf::from("/cfg/data/t.csv")));
        assert_eq!(cfg.partition, PartitionSpec::employee());
    }
}
