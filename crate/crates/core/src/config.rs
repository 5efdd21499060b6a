//! Experiment configuration: a flat `key = value` text format with `[section]` headers.
//!
//! ```text
//! # comment
//! [data]
//! input = data/sample.csv
//! [training]
//! epochs = 10
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Unknown sections or
//! keys are errors. Relative paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterConfig, NetworkModel, SyncMode};
use crate::ingest::{CsvSchema, EmbedderConfig, LabelAction, Sentiment, TextEncoding};
use crate::model::Hyperparams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputFormat {
    /// Labeled text CSV, embedded by the pipeline.
    #[default]
    Csv,
    /// Precomputed `dim=<d>` embedding file.
    Embeddings,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationSource {
    /// Simulated compute seconds: deterministic.
    #[default]
    Simulated,
    /// Measured wall-clock seconds.
    Wall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSettings {
    /// Example count for `cost-only` mode, where no data is read.
    pub examples: Option<u64>,
    pub calibration: CalibrationSource,
    pub knee_max_workers: u64,
    /// Fixed unit costs for `cost-only` mode; derived from the node model when unset.
    pub c_pre: Option<f64>,
    pub c_emb: Option<f64>,
    pub c_fwd: Option<f64>,
    pub c_bwd: Option<f64>,
    pub c_upd: Option<f64>,
}

impl Default for CostSettings {
    fn default() -> Self {
        Self {
            examples: None,
            calibration: CalibrationSource::Simulated,
            knee_max_workers: 64,
            c_pre: None,
            c_emb: None,
            c_fwd: None,
            c_bwd: None,
            c_upd: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub checkpoints: bool,
    pub transfers: bool,
    /// Also write wall-clock timings to `timings.json`. Off by default since timings
    /// differ between runs.
    pub timings: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), checkpoints: true, transfers: true, timings: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub input: Option<PathBuf>,
    pub input_format: InputFormat,
    pub schema: CsvSchema,
    pub subsample: Option<usize>,
    pub embedder: EmbedderConfig,
    pub hyperparams: Hyperparams,
    pub cluster: ClusterConfig,
    pub network: NetworkModel,
    pub cost: CostSettings,
    /// Not part of the fingerprint: where results go does not change them.
    #[serde(skip)]
    pub output: OutputSettings,
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError::Parse { line, message: format!("bad value for {key}: {value:?} ({e})") })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::Parse { line, message: format!("bad boolean for {key}: {value:?}") }),
    }
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<String>, ConfigError> {
    let items: Vec<String> =
        value.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(ConfigError::Parse { line, message: format!("{key} needs at least one value") });
    }
    Ok(items)
}

fn parse_byte(line: usize, key: &str, value: &str) -> Result<u8, ConfigError> {
    match value {
        "tab" | "\\t" => Ok(b'\t'),
        v if v.len() == 1 && v.is_ascii() => Ok(v.as_bytes()[0]),
        _ => Err(ConfigError::Parse { line, message: format!("{key} must be one ASCII character or 'tab'") }),
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let Some(input) = &self.input {
            if input.is_relative() {
                self.input = Some(base.join(input));
            }
        }
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut section = String::new();
        let mut labels: BTreeMap<String, LabelAction> = BTreeMap::new();
        let mut labels_line = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with(';') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Parse { line, message: "unterminated section header".into() })?
                    .trim();
                if !["data", "embedder", "training", "cluster", "network", "cost", "output"].contains(&name) {
                    return Err(ConfigError::Parse { line, message: format!("unknown section [{name}]") });
                }
                section = name.to_owned();
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse { line, message: format!("expected key = value, got {trimmed:?}") })?;
            let (key, value) = (key.trim(), value.trim());
            if section.is_empty() {
                return Err(ConfigError::Parse { line, message: format!("{key} appears before any [section]") });
            }
            if let Some(action) = label_action(key).filter(|_| section == "data") {
                for label in parse_list(line, key, value)? {
                    labels.insert(label, action);
                }
                labels_line = Some(line);
                continue;
            }
            cfg.set(line, &section, key, value)?;
        }
        if let Some(line) = labels_line {
            if !labels.values().any(|a| *a == LabelAction::Keep(Sentiment::Negative))
                || !labels.values().any(|a| *a == LabelAction::Keep(Sentiment::Positive))
            {
                return Err(ConfigError::Parse { line, message: "both negative and positive labels are required".into() });
            }
            cfg.schema.label_map = labels;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value;
        match (section, key) {
            ("data", "input") => self.input = Some(PathBuf::from(v)),
            ("data", "format") => {
                self.input_format = match v {
                    "csv" => InputFormat::Csv,
                    "embeddings" => InputFormat::Embeddings,
                    _ => return Err(ConfigError::Parse { line, message: format!("format must be csv or embeddings, got {v:?}") }),
                }
            }
            ("data", "label_column") => self.schema.label_column = parse_value(line, key, v)?,
            ("data", "text_column") => self.schema.text_column = parse_value(line, key, v)?,
            ("data", "id_column") => {
                self.schema.id_column = if v == "none" { None } else { Some(parse_value(line, key, v)?) }
            }
            ("data", "delimiter") => self.schema.delimiter = parse_byte(line, key, v)?,
            ("data", "quote") => self.schema.quote = parse_byte(line, key, v)?,
            ("data", "has_header") => self.schema.has_header = parse_bool(line, key, v)?,
            ("data", "encoding") => {
                self.schema.encoding = match v {
                    "utf8" | "utf-8" => TextEncoding::Utf8Lossy,
                    "latin1" | "iso-8859-1" => TextEncoding::Latin1,
                    _ => return Err(ConfigError::Parse { line, message: format!("unknown encoding {v:?}") }),
                }
            }
            ("data", "subsample") => self.subsample = Some(parse_value(line, key, v)?),
            ("embedder", "dimension") => self.embedder.dimension = parse_value(line, key, v)?,
            ("embedder", "ngram_orders") => {
                self.embedder.ngram_orders = parse_list(line, key, v)?
                    .iter()
                    .map(|s| parse_value(line, key, s))
                    .collect::<Result<_, _>>()?
            }
            ("embedder", "hash_seed") => self.embedder.hash_seed = parse_value(line, key, v)?,
            ("training", "learning_rate") => self.hyperparams.learning_rate = parse_value(line, key, v)?,
            ("training", "batch_size") => self.hyperparams.batch_size = parse_value(line, key, v)?,
            ("training", "epochs") => self.hyperparams.epochs = parse_value(line, key, v)?,
            ("training", "train_fraction") => self.hyperparams.train_fraction = parse_value(line, key, v)?,
            ("training", "l2") => self.hyperparams.l2 = parse_value(line, key, v)?,
            ("training", "shuffle_seed") => self.hyperparams.shuffle_seed = parse_value(line, key, v)?,
            ("cluster", "workers") => self.cluster.worker_count = parse_value(line, key, v)?,
            ("cluster", "cores_per_worker") => self.cluster.cores_per_worker = parse_value(line, key, v)?,
            ("cluster", "ram_gb_per_worker") => self.cluster.ram_gb_per_worker = parse_value(line, key, v)?,
            ("cluster", "master_cores") => self.cluster.master_cores = parse_value(line, key, v)?,
            ("cluster", "master_ram_gb") => self.cluster.master_ram_gb = parse_value(line, key, v)?,
            ("cluster", "core_ops_per_second") => self.cluster.core_ops_per_second = parse_value(line, key, v)?,
            ("cluster", "sync_mode") => {
                self.cluster.sync_mode = match v {
                    "synchronous" => SyncMode::Synchronous,
                    "local_epochs" => SyncMode::LocalEpochs,
                    _ => {
                        return Err(ConfigError::Parse {
                            line,
                            message: format!("sync_mode must be synchronous or local_epochs, got {v:?}"),
                        })
                    }
                }
            }
            ("network", "bandwidth_gbps") => self.network.link_bandwidth_gbps = parse_value(line, key, v)?,
            ("network", "latency_us") => self.network.link_latency_us = parse_value(line, key, v)?,
            ("network", "record_bytes") => self.network.record_bytes = Some(parse_value(line, key, v)?),
            ("network", "float_bytes") => self.network.float_bytes = parse_value(line, key, v)?,
            ("cost", "examples") => self.cost.examples = Some(parse_value(line, key, v)?),
            ("cost", "calibration") => {
                self.cost.calibration = match v {
                    "simulated" => CalibrationSource::Simulated,
                    "wall" => CalibrationSource::Wall,
                    _ => return Err(ConfigError::Parse { line, message: format!("calibration must be simulated or wall, got {v:?}") }),
                }
            }
            ("cost", "knee_max_workers") => self.cost.knee_max_workers = parse_value(line, key, v)?,
            ("cost", "c_pre") => self.cost.c_pre = Some(parse_value(line, key, v)?),
            ("cost", "c_emb") => self.cost.c_emb = Some(parse_value(line, key, v)?),
            ("cost", "c_fwd") => self.cost.c_fwd = Some(parse_value(line, key, v)?),
            ("cost", "c_bwd") => self.cost.c_bwd = Some(parse_value(line, key, v)?),
            ("cost", "c_upd") => self.cost.c_upd = Some(parse_value(line, key, v)?),
            ("output", "dir") => self.output.dir = PathBuf::from(v),
            ("output", "checkpoints") => self.output.checkpoints = parse_bool(line, key, v)?,
            ("output", "transfers") => self.output.transfers = parse_bool(line, key, v)?,
            ("output", "timings") => self.output.timings = parse_bool(line, key, v)?,
            _ => return Err(ConfigError::Parse { line, message: format!("unknown key {section}.{key}") }),
        }
        Ok(())
    }

    /// Checks every nested invariant.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.embedder.validate().map_err(|e| invalid(&e))?;
        self.hyperparams.validate().map_err(|e| invalid(&e))?;
        self.cluster.validate().map_err(|e| invalid(&e))?;
        self.network.validate().map_err(|e| invalid(&e))?;
        if self.subsample == Some(0) {
            return Err(ConfigError::Invalid("subsample must be at least 1".into()));
        }
        if self.cost.knee_max_workers == 0 {
            return Err(ConfigError::Invalid("knee_max_workers must be at least 1".into()));
        }
        for c in [self.cost.c_pre, self.cost.c_emb, self.cost.c_fwd, self.cost.c_bwd, self.cost.c_upd].into_iter().flatten() {
            if !(c.is_finite() && c >= 0.0) {
                return Err(ConfigError::Invalid(format!("unit costs must be nonnegative, got {c}")));
            }
        }
        Ok(())
    }
}

fn label_action(key: &str) -> Option<LabelAction> {
    match key {
        "negative_labels" => Some(LabelAction::Keep(Sentiment::Negative)),
        "positive_labels" => Some(LabelAction::Keep(Sentiment::Positive)),
        "neutral_labels" => Some(LabelAction::Drop),
        _ => None,
    }
}
