//! Resolution of run settings: command-line flag, then config file, then
//! built-in default.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use socialrec::hetgraph::DEFAULT_ITEM_LINK_THRESHOLD;
use socialrec::model::ModelConfig;
use socialrec::trainer::{Monitor, TrainConfig};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MonitorArg {
    Validation,
    Train,
}

impl From<MonitorArg> for Monitor {
    fn from(m: MonitorArg) -> Self {
        match m {
            MonitorArg::Validation => Monitor::Validation,
            MonitorArg::Train => Monitor::Train,
        }
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct ModelFlags {
    /// Embedding size.
    #[arg(long, visible_alias = "d")]
    pub dim: Option<usize>,
    /// Aggregation layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Fraction of neighbors sampled per node.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Use the user embedding as the query.
    #[arg(long)]
    pub ablate_query: bool,
    /// Aggregate every neighbor.
    #[arg(long)]
    pub ablate_sampling: bool,
    /// Uniform attention over sampled neighbors.
    #[arg(long)]
    pub ablate_attention: bool,
    /// Jaccard similarity above which two items are linked.
    #[arg(long)]
    pub item_link_threshold: Option<f64>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct TrainFlags {
    #[arg(long, visible_alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Epochs without improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Split that drives early stopping.
    #[arg(long, value_enum)]
    pub monitor: Option<MonitorArg>,
    /// Worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// JSON config file, or a manifest from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Contents of a config file; every field optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dim: Option<usize>,
    pub layers: Option<usize>,
    pub gamma: Option<f64>,
    pub ablate_query: Option<bool>,
    pub ablate_sampling: Option<bool>,
    pub ablate_attention: Option<bool>,
    pub item_link_threshold: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub weight_decay: Option<f64>,
    pub patience: Option<usize>,
    pub max_epochs: Option<usize>,
    pub seed: Option<u64>,
    pub monitor: Option<Monitor>,
    pub workers: Option<usize>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
}

impl From<&RunConfig> for FileConfig {
    fn from(r: &RunConfig) -> Self {
        FileConfig {
            dim: Some(r.model.dim),
            layers: Some(r.model.layers),
            gamma: Some(r.model.gamma),
            ablate_query: Some(r.model.ablate_query),
            ablate_sampling: Some(r.model.ablate_sampling),
            ablate_attention: Some(r.model.ablate_attention),
            item_link_threshold: Some(r.item_link_threshold),
            learning_rate: Some(r.train.learning_rate),
            batch_size: Some(r.train.batch_size),
            weight_decay: Some(r.train.weight_decay),
            patience: Some(r.train.patience),
            max_epochs: Some(r.train.max_epochs),
            seed: Some(r.train.seed),
            monitor: Some(r.train.monitor),
            workers: Some(r.train.workers),
            adam_beta1: Some(r.train.adam_beta1),
            adam_beta2: Some(r.train.adam_beta2),
            adam_eps: Some(r.train.adam_eps),
        }
    }
}

/// Reads a flat config file, or the `config` (or `config.base`) object of
/// a manifest.
pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::usage(format!("{}: {e}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    match value.get("config") {
        Some(cfg) => {
            let run = cfg.get("base").unwrap_or(cfg);
            let run: RunConfig = serde_json::from_value(run.clone()).map_err(bad)?;
            Ok(FileConfig::from(&run))
        }
        None => serde_json::from_value(value).map_err(bad),
    }
}

/// Fully resolved settings of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub item_link_threshold: f64,
}

impl RunConfig {
    pub fn resolve(model: &ModelFlags, train: &TrainFlags) -> Result<Self, CliError> {
        let file = match &train.config {
            Some(path) => load_file(path)?,
            None => FileConfig::default(),
        };
        let md = ModelConfig::default();
        let td = TrainConfig::default();
        let run = RunConfig {
            model: ModelConfig {
                dim: model.dim.or(file.dim).unwrap_or(md.dim),
                layers: model.layers.or(file.layers).unwrap_or(md.layers),
                gamma: model.gamma.or(file.gamma).unwrap_or(md.gamma),
                ablate_query: model.ablate_query || file.ablate_query.unwrap_or(false),
                ablate_sampling: model.ablate_sampling || file.ablate_sampling.unwrap_or(false),
                ablate_attention: model.ablate_attention || file.ablate_attention.unwrap_or(false),
                eval_deterministic: false,
            },
            train: TrainConfig {
                learning_rate: train
                    .learning_rate
                    .or(file.learning_rate)
                    .unwrap_or(td.learning_rate),
                batch_size: train
                    .batch_size
                    .or(file.batch_size)
                    .unwrap_or(td.batch_size),
                weight_decay: train
                    .weight_decay
                    .or(file.weight_decay)
                    .unwrap_or(td.weight_decay),
                patience: train.patience.or(file.patience).unwrap_or(td.patience),
                max_epochs: train
                    .max_epochs
                    .or(file.max_epochs)
                    .unwrap_or(td.max_epochs),
                seed: train.seed.or(file.seed).unwrap_or(td.seed),
                adam_beta1: file.adam_beta1.unwrap_or(td.adam_beta1),
                adam_beta2: file.adam_beta2.unwrap_or(td.adam_beta2),
                adam_eps: file.adam_eps.unwrap_or(td.adam_eps),
                monitor: train
                    .monitor
                    .map(Monitor::from)
                    .or(file.monitor)
                    .unwrap_or(td.monitor),
                workers: train.workers.or(file.workers).unwrap_or(td.workers),
            },
            item_link_threshold: model
                .item_link_threshold
                .or(file.item_link_threshold)
                .unwrap_or(DEFAULT_ITEM_LINK_THRESHOLD),
        };
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.item_link_threshold) {
            return Err(CliError::usage("item link threshold must be in [0,1]"));
        }
        Ok(())
    }
}

/// Parses a comma-separated list.
pub fn parse_csv<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| CliError::usage(format!("invalid {what} value {s:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"dim": 8, "gamma": 0.3, "max_epochs": 7}"#).unwrap();
        let model = ModelFlags {
            gamma: Some(0.6),
            ..Default::default()
        };
        let train = TrainFlags {
            config: Some(path),
            ..Default::default()
        };
        let run = RunConfig::resolve(&model, &train).unwrap();
        assert_eq!(run.model.dim, 8);
        assert_eq!(run.model.gamma, 0.6);
        assert_eq!(run.train.max_epochs, 7);
        assert_eq!(run.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn manifest_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunConfig::resolve(
            &ModelFlags {
                dim: Some(4),
                ablate_sampling: true,
                ..Default::default()
            },
            &TrainFlags {
                seed: Some(9),
                ..Default::default()
            },
        )
        .unwrap();
        let path = dir.path().join("manifest.json");
        fs::write(&path, serde_json::json!({ "config": run }).to_string()).unwrap();
        let again = RunConfig::resolve(
            &ModelFlags::default(),
            &TrainFlags {
                config: Some(path),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(run, again);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"dimension": 8}"#).unwrap();
        assert!(load_file(&path).is_err());
    }

    #[test]
    fn csv_lists() {
        assert_eq!(
            parse_csv::<f64>("0.6, 0.2,0.2", "split").unwrap(),
            vec![0.6, 0.2, 0.2]
        );
        assert!(parse_csv::<usize>("4,x", "dim").is_err());
    }
}
