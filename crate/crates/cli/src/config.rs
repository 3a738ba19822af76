//! Run configuration: a TOML file with one section per stage, overridable
//! through `TREND_<SECTION>_<KEY>` environment variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trend_core::corpus::{AdapterConfig, CorpusFormat, DEFAULT_SPEAKER_CAP};
use trend_core::heads::DEFAULT_MAX_SPAN_LEN;
use trend_core::training::{LossWeights, ScheduleConfig, TrainConfig};
use trend_core::{Backbone, Result, TrendError};

pub const ENV_PREFIX: &str = "TREND_";
const SECTIONS: [&str; 5] = ["data", "model", "training", "transfer", "output"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub transfer: TransferSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub ontology: PathBuf,
    /// Adapter description; a trigger-annotated corpus with default field
    /// names when absent.
    #[serde(default)]
    pub adapter: Option<PathBuf>,
    pub train: PathBuf,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_speaker_cap")]
    pub speaker_cap: usize,
    #[serde(default = "default_true")]
    pub lowercase: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub backbone: Backbone,
    /// Directory with `config.json`, `vocab.txt` and `model.safetensors`;
    /// required for the base and large backbones.
    pub pretrained: Option<PathBuf>,
    pub max_span_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub w_trigger: f64,
    pub w_relation: f64,
    pub w_binary: f64,
    /// Backbone-dependent default when absent.
    pub tf_trigger: Option<f64>,
    pub tf_gate: Option<f64>,
    pub grad_clip: Option<f64>,
    pub force_gate_on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    /// Keep gate and span parameters fixed while fine-tuning.
    pub freeze_trigger_path: bool,
    /// Seed of the new relation head; the training seed when absent.
    pub head_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

fn default_max_len() -> usize {
    512
}

fn default_speaker_cap() -> usize {
    DEFAULT_SPEAKER_CAP
}

fn default_true() -> bool {
    true
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            backbone: Backbone::Tiny,
            pretrained: None,
            max_span_len: DEFAULT_MAX_SPAN_LEN,
        }
    }
}

impl Default for TrainingSection {
    fn default() -> Self {
        let w = LossWeights::default();
        TrainingSection {
            learning_rate: 3e-5,
            epochs: 30,
            batch_size: 8,
            seed: 42,
            w_trigger: w.w_trigger,
            w_relation: w.w_relation,
            w_binary: w.w_binary,
            tf_trigger: None,
            tf_gate: None,
            grad_clip: None,
            force_gate_on: false,
        }
    }
}

impl Default for TransferSection {
    fn default() -> Self {
        TransferSection {
            freeze_trigger_path: true,
            head_seed: None,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("runs/default"),
        }
    }
}

/// Parses a TOML scalar the way it would appear in a file, else as a string.
fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `TREND_<SECTION>_<KEY>=value` overrides to a parsed table.
/// Variables naming no known section are ignored.
pub fn apply_overrides(
    table: &mut toml::Table,
    vars: impl IntoIterator<Item = (String, String)>,
) -> Result<()> {
    for (name, raw) in vars {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let lower = rest.to_ascii_lowercase();
        let Some((section, key)) = lower.split_once('_') else {
            continue;
        };
        if !SECTIONS.contains(&section) || key.is_empty() {
            continue;
        }
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(sec) = entry else {
            return Err(TrendError::Config(format!("[{section}] is not a table")));
        };
        sec.insert(key.to_string(), env_value(&raw));
    }
    Ok(())
}

fn parse_section<T: serde::de::DeserializeOwned>(table: &toml::Table, name: &str) -> Result<T> {
    let value = match table.get(name) {
        None => toml::Value::Table(toml::Table::new()),
        Some(v @ toml::Value::Table(_)) => v.clone(),
        Some(_) => return Err(TrendError::Config(format!("[{name}] must be a table"))),
    };
    value
        .try_into()
        .map_err(|e: toml::de::Error| TrendError::Config(format!("[{name}]: {e}")))
}

impl Config {
    /// Reads `path`, applies overrides from the process environment and
    /// resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_env(path, std::env::vars())
    }

    pub fn load_with_env(
        path: &Path,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            TrendError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut table: toml::Table = toml::from_str(&text)
            .map_err(|e| TrendError::Config(format!("{}: {e}", path.display())))?;
        apply_overrides(&mut table, vars)?;
        let mut cfg = Self::from_table(&table).map_err(|e| match e {
            TrendError::Config(m) => TrendError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_table(table: &toml::Table) -> Result<Self> {
        if let Some(unknown) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(TrendError::Config(format!("unknown section [{unknown}]")));
        }
        Ok(Config {
            data: parse_section(table, "data")?,
            model: parse_section(table, "model")?,
            training: parse_section(table, "training")?,
            transfer: parse_section(table, "transfer")?,
            output: parse_section(table, "output")?,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.ontology);
        fix(&mut self.data.train);
        self.data.adapter.as_mut().map(fix);
        self.data.dev.as_mut().map(fix);
        self.model.pretrained.as_mut().map(fix);
        fix(&mut self.output.dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.max_len < 8 {
            return Err(TrendError::Config(format!(
                "max_len {} is too small",
                self.data.max_len
            )));
        }
        if self.model.max_span_len == 0 {
            return Err(TrendError::Config("max_span_len must be > 0".into()));
        }
        if self.model.backbone != Backbone::Tiny && self.model.pretrained.is_none() {
            return Err(TrendError::Config(format!(
                "backbone {} needs [model] pretrained = <dir>",
                self.model.backbone.as_str()
            )));
        }
        self.train_config().validate()
    }

    pub fn adapter(&self) -> Result<AdapterConfig> {
        match &self.data.adapter {
            Some(p) => AdapterConfig::from_file(p),
            None => Ok(AdapterConfig::new(CorpusFormat::TriggerAnnotated)),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        let defaults = ScheduleConfig::for_backbone(self.model.backbone);
        TrainConfig {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: t.seed,
            weights: LossWeights {
                w_trigger: t.w_trigger,
                w_relation: t.w_relation,
                w_binary: t.w_binary,
            },
            schedule: ScheduleConfig {
                tf_trigger: t.tf_trigger.unwrap_or(defaults.tf_trigger),
                tf_gate: t.tf_gate.unwrap_or(defaults.tf_gate),
            },
            backbone: self.model.backbone,
            grad_clip: t.grad_clip,
            frozen_prefixes: Vec::new(),
            force_gate_on: t.force_gate_on,
        }
    }

    /// The configuration as recorded in checkpoint manifests.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}
