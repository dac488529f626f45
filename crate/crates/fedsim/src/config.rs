//! Experiment configuration: JSON with unknown keys rejected.

use std::path::{Path, PathBuf};

use fedsim_core::data::Scheme;
use fedsim_core::federation::FedConfig;
use fedsim_core::model::{ModelKind, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian blobs; the test set is a separate draw of the same blobs.
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        separation: f64,
        noise_sd: f64,
        /// Test rows per class; defaults to `per_class`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_per_class: Option<usize>,
        /// Data seed; defaults to the experiment's `base_seed`. Fixed across
        /// trials, so trials differ in split, init and SGD order only.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// One CSV file; a stratified `test_fraction` of it is held out for
    /// evaluation.
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackboneConfig {
    Logistic,
    Mlp { hidden: usize },
}

impl BackboneConfig {
    fn kind(self, inputs: usize, classes: usize) -> ModelKind {
        match self {
            BackboneConfig::Logistic => ModelKind::Logistic { inputs, classes },
            BackboneConfig::Mlp { hidden } => ModelKind::Mlp {
                inputs,
                hidden,
                classes,
            },
        }
    }
}

/// Model family; input width and class count come from the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Logistic,
    Mlp {
        hidden: usize,
    },
    /// Frozen backbone (left at its initialization) plus a trainable head.
    Adapter {
        backbone: BackboneConfig,
    },
    /// Trainable prompt appended to each row of a frozen inner model.
    SoftPrompt {
        prompt_len: usize,
        inner: BackboneConfig,
    },
}

impl ModelConfig {
    pub fn spec(self, inputs: usize, classes: usize) -> fedsim_core::Result<ModelSpec> {
        let kind = match self {
            ModelConfig::Logistic => BackboneConfig::Logistic.kind(inputs, classes),
            ModelConfig::Mlp { hidden } => BackboneConfig::Mlp { hidden }.kind(inputs, classes),
            ModelConfig::Adapter { backbone } => ModelKind::Adapter {
                backbone: Box::new(backbone.kind(inputs, classes)),
                head_classes: classes,
            },
            ModelConfig::SoftPrompt { prompt_len, inner } => ModelKind::SoftPrompt {
                inner: Box::new(inner.kind(inputs + prompt_len, classes)),
                prompt_len,
            },
        };
        ModelSpec::new(kind)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryStat {
    /// Trial with the highest final accuracy.
    #[default]
    Best,
    /// Middle trial by final accuracy; lower middle for even counts.
    Median,
}

/// Fresh private rows per round for every client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinualConfig {
    /// Rows per class drawn from the client's unused private rows at the
    /// start of each round after the first.
    pub per_class: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected json or csv)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Report file; stdout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    /// Directory receiving one JSON-lines network trace per entry and trial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub clients: usize,
    pub partition: Scheme,
    /// Rows per class kept in the public shard and in every private shard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_shot: Option<usize>,
    pub federation: FedConfig,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub summary: SummaryStat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continual: Option<ContinualConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn bad(field: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    /// Parses JSON, naming the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            bad(if path == "." || path == "?" { "<root>" } else { &path }, e.into_inner().to_string())
        })
    }

    /// Reads and validates a config file. Relative dataset paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("<file>", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let DatasetConfig::Csv { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn data_seed(&self) -> u64 {
        match &self.dataset {
            DatasetConfig::Blobs { seed, .. } | DatasetConfig::Csv { seed, .. } => seed.unwrap_or(self.base_seed),
        }
    }

    /// Field-level checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(bad("trials", "must be >= 1"));
        }
        if self.clients == 0 {
            return Err(bad("clients", "must be >= 1"));
        }
        match &self.dataset {
            DatasetConfig::Blobs {
                classes,
                per_class,
                dim,
                separation,
                noise_sd,
                test_per_class,
                ..
            } => {
                if *classes < 2 {
                    return Err(bad("dataset.classes", "must be >= 2"));
                }
                if *per_class == 0 || *test_per_class == Some(0) {
                    return Err(bad("dataset.per_class", "must be >= 1"));
                }
                if *dim == 0 {
                    return Err(bad("dataset.dim", "must be >= 1"));
                }
                if !separation.is_finite() {
                    return Err(bad("dataset.separation", "must be finite"));
                }
                if !(noise_sd.is_finite() && *noise_sd >= 0.0) {
                    return Err(bad("dataset.noise_sd", "must be finite and >= 0"));
                }
                if classes * per_class < self.clients + 1 {
                    return Err(bad(
                        "dataset.per_class",
                        format!("{} rows cannot supply {} shards", classes * per_class, self.clients + 1),
                    ));
                }
            }
            DatasetConfig::Csv {
                path, test_fraction, ..
            } => {
                if !path.is_file() {
                    return Err(bad("dataset.path", format!("{} is not a readable file", path.display())));
                }
                if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                    return Err(bad("dataset.test_fraction", "must lie in (0, 1)"));
                }
            }
        }
        match self.model {
            ModelConfig::Mlp { hidden: 0 }
            | ModelConfig::Adapter {
                backbone: BackboneConfig::Mlp { hidden: 0 },
            }
            | ModelConfig::SoftPrompt {
                inner: BackboneConfig::Mlp { hidden: 0 },
                ..
            } => return Err(bad("model.hidden", "must be >= 1")),
            ModelConfig::SoftPrompt { prompt_len: 0, .. } => return Err(bad("model.prompt_len", "must be >= 1")),
            _ => {}
        }
        match self.partition {
            Scheme::LabelShard { shards_per_client: 0 } => {
                return Err(bad("partition.shards_per_client", "must be >= 1"));
            }
            Scheme::Dirichlet { alpha } if !(alpha.is_finite() && alpha > 0.0) => {
                return Err(bad("partition.alpha", "must be finite and > 0"));
            }
            _ => {}
        }
        if self.k_shot == Some(0) {
            return Err(bad("k_shot", "must be >= 1"));
        }
        if let Some(ContinualConfig { per_class: 0 }) = self.continual {
            return Err(bad("continual.per_class", "must be >= 1"));
        }
        self.federation.validate(self.clients).map_err(|e| match e {
            fedsim_core::Error::Config { field, reason } => bad(&format!("federation.{field}"), reason),
            other => bad("federation", other.to_string()),
        })
    }
}
