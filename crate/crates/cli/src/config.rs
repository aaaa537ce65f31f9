//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments win, so
//! command-line overrides are applied by parsing them after the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use absa_core::exec::ExecMode;
use absa_core::graph::{AdjacencyNorm, InverseRelations};
use absa_core::model::{EncoderKind, MessagePassing, ModelConfig, ABLATION_ROWS};
use absa_core::training::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}: {message}")]
    Line {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("`{key}`: {message}")]
    Key { key: String, message: String },
    #[error("{key} = {path}: file not found")]
    MissingPath { key: String, path: PathBuf },
}

/// Input and output locations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Paths {
    pub train: Option<PathBuf>,
    /// When absent, a dev split is drawn from the training file.
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Word vectors in text format (`word v1 v2 ...`).
    pub general_vectors: Option<PathBuf>,
    pub domain_vectors: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: Paths,
    pub seeds: Vec<u64>,
    /// Coordinates sampled per tensor by `gradcheck`; 0 checks every coordinate.
    pub gradcheck_coords: usize,
    pub gradcheck_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            paths: Paths {
                out_dir: PathBuf::from("runs"),
                ..Default::default()
            },
            seeds: vec![1],
            gradcheck_coords: 12,
            gradcheck_step: 1e-3,
        }
    }
}

/// Every accepted key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: [&str; 33] = [
    "hidden",
    "relation_dim",
    "rounds",
    "cnn_windows",
    "gcn_layers",
    "encoder",
    "message_passing",
    "opinion_passing",
    "general_dim",
    "domain_embeddings",
    "domain_dim",
    "embedding_dropout",
    "hidden_dropout",
    "inverse_relations",
    "adjacency_norm",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
    "dev_fraction",
    "exec",
    "grad_clip",
    "target_dev_f1",
    "seeds",
    "train",
    "dev",
    "test",
    "general_vectors",
    "domain_vectors",
    "checkpoint",
    "out_dir",
    "gradcheck_coords",
    "gradcheck_step",
];

fn parse<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse `{value}`: {e}"))
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true/false or on/off, got `{value}`")),
    }
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect()
}

fn parse_optional<T: FromStr>(value: &str) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    if value == "none" || value.is_empty() {
        Ok(None)
    } else {
        parse(value).map(Some)
    }
}

fn parse_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn lowercase_enum<T: serde::de::DeserializeOwned>(value: &str, allowed: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| format!("expected one of {allowed}, got `{value}`"))
}

impl RunConfig {
    /// Sets one key; the error message does not repeat the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        let m = &mut self.model;
        let t = &mut self.train;
        let p = &mut self.paths;
        match key {
            "hidden" => m.hidden = parse(value)?,
            "relation_dim" => m.relation_dim = parse(value)?,
            "rounds" => m.rounds = parse(value)?,
            "cnn_windows" => m.cnn_windows = parse_list(value)?,
            "gcn_layers" => m.gcn_layers = parse(value)?,
            "encoder" => m.encoder = value.parse::<EncoderKind>().map_err(|e| e.to_string())?,
            "message_passing" => m.message_passing = value.parse::<MessagePassing>().map_err(|e| e.to_string())?,
            "opinion_passing" => m.opinion_passing = parse_bool(value)?,
            "general_dim" => m.general_dim = parse(value)?,
            "domain_embeddings" => m.domain_embeddings = parse_bool(value)?,
            "domain_dim" => m.domain_dim = parse(value)?,
            "embedding_dropout" => m.embedding_dropout = parse(value)?,
            "hidden_dropout" => m.hidden_dropout = parse(value)?,
            "inverse_relations" => {
                m.inverse_relations = lowercase_enum::<InverseRelations>(value, "distinct, shared")?
            }
            "adjacency_norm" => m.adjacency_norm = lowercase_enum::<AdjacencyNorm>(value, "none, row")?,
            "learning_rate" => t.learning_rate = parse(value)?,
            "batch_size" => t.batch_size = parse(value)?,
            "max_epochs" => t.max_epochs = parse(value)?,
            "patience" => t.patience = parse(value)?,
            "dev_fraction" => t.dev_fraction = parse(value)?,
            "exec" => t.exec = lowercase_enum::<ExecMode>(value, "sequential, parallel")?,
            "grad_clip" => t.grad_clip = parse_optional(value)?,
            "target_dev_f1" => t.target_dev_f1 = parse_optional(value)?,
            "seeds" => {
                let seeds: Vec<u64> = parse_list(value)?;
                if seeds.is_empty() {
                    return Err("at least one seed is required".into());
                }
                self.seeds = seeds;
            }
            "train" => p.train = parse_path(value),
            "dev" => p.dev = parse_path(value),
            "test" => p.test = parse_path(value),
            "general_vectors" => p.general_vectors = parse_path(value),
            "domain_vectors" => p.domain_vectors = parse_path(value),
            "checkpoint" => p.checkpoint = parse_path(value),
            "out_dir" => p.out_dir = PathBuf::from(value),
            "gradcheck_coords" => self.gradcheck_coords = parse(value)?,
            "gradcheck_step" => self.gradcheck_step = parse(value)?,
            _ => return Err(format!("unknown key; accepted keys are {}", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str, source_name: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ConfigError::Line {
                source_name: source_name.to_string(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            self.set(key, value).map_err(|m| err(format!("`{key}`: {m}")))?;
        }
        Ok(())
    }

    /// Applies a single `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Key {
            key: assignment.to_string(),
            message: "override must look like key=value".into(),
        })?;
        let key = key.trim();
        self.set(key, value).map_err(|message| ConfigError::Key {
            key: key.to_string(),
            message,
        })
    }

    pub fn parse_text(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text, source_name)?;
        Ok(c)
    }

    /// Writes every key; [`RunConfig::parse_text`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let p = &self.paths;
        let path = |x: &Option<PathBuf>| x.as_ref().map_or(String::new(), |p| p.display().to_string());
        let opt = |x: Option<f64>| x.map_or("none".to_string(), |v| v.to_string());
        let join = |xs: Vec<String>| xs.join(",");
        let values: [String; 33] = [
            m.hidden.to_string(),
            m.relation_dim.to_string(),
            m.rounds.to_string(),
            join(m.cnn_windows.iter().map(ToString::to_string).collect()),
            m.gcn_layers.to_string(),
            m.encoder.to_string(),
            m.message_passing.to_string(),
            m.opinion_passing.to_string(),
            m.general_dim.to_string(),
            m.domain_embeddings.to_string(),
            m.domain_dim.to_string(),
            m.embedding_dropout.to_string(),
            m.hidden_dropout.to_string(),
            serde_json::to_value(m.inverse_relations).unwrap().as_str().unwrap().to_string(),
            serde_json::to_value(m.adjacency_norm).unwrap().as_str().unwrap().to_string(),
            t.learning_rate.to_string(),
            t.batch_size.to_string(),
            t.max_epochs.to_string(),
            t.patience.to_string(),
            t.dev_fraction.to_string(),
            serde_json::to_value(t.exec).unwrap().as_str().unwrap().to_string(),
            opt(t.grad_clip),
            opt(t.target_dev_f1),
            join(self.seeds.iter().map(ToString::to_string).collect()),
            path(&p.train),
            path(&p.dev),
            path(&p.test),
            path(&p.general_vectors),
            path(&p.domain_vectors),
            path(&p.checkpoint),
            p.out_dir.display().to_string(),
            self.gradcheck_coords.to_string(),
            self.gradcheck_step.to_string(),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(out, "{k} = {v}").expect("writing to a string");
        }
        out
    }

    /// Value checks plus the ablation grid. Model settings must match one of the six
    /// ablation rows.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let key_err = |key: &str, e: absa_core::Error| ConfigError::Key {
            key: key.to_string(),
            message: e.to_string(),
        };
        self.model.validate().map_err(|e| key_err("model", e))?;
        self.train.validate().map_err(|e| key_err("training", e))?;
        if self.model.ablation_row().is_none() {
            return Err(ConfigError::Key {
                key: "encoder".into(),
                message: format!(
                    "encoder={}, opinion_passing={}, message_passing={} is not one of the ablation rows ({})",
                    self.model.encoder,
                    self.model.opinion_passing,
                    self.model.message_passing,
                    ABLATION_ROWS.join("; ")
                ),
            });
        }
        if !(self.gradcheck_step > 0.0) {
            return Err(ConfigError::Key {
                key: "gradcheck_step".into(),
                message: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Checks that every named path that is set exists.
    pub fn require_existing(&self, keys: &[&str]) -> Result<(), ConfigError> {
        for &key in keys {
            let path = match key {
                "train" => &self.paths.train,
                "dev" => &self.paths.dev,
                "test" => &self.paths.test,
                "general_vectors" => &self.paths.general_vectors,
                "domain_vectors" => &self.paths.domain_vectors,
                "checkpoint" => &self.paths.checkpoint,
                _ => continue,
            };
            if let Some(path) = path {
                if !Path::new(path).exists() {
                    return Err(ConfigError::MissingPath {
                        key: key.to_string(),
                        path: path.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}
