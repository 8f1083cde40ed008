//! Grid search, ablation and sensitivity runs over independent trials.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, Split};
use crate::error::{Error, Result};
use crate::hetgraph::HetGraph;
use crate::model::{ModelConfig, ModelParams};
use crate::seed;
use crate::trainer::{evaluate, labeled_pairs, train, EvalReport, TrainConfig};

/// Hyperparameters that vary between trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub gamma: f64,
    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub layers: usize,
}

impl TrialConfig {
    pub fn from_configs(model: &ModelConfig, train: &TrainConfig) -> Self {
        TrialConfig {
            gamma: model.gamma,
            dim: model.dim,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            layers: model.layers,
        }
    }

    fn key(&self) -> String {
        format!(
            "gamma={};dim={};lr={};batch={};layers={}",
            self.gamma, self.dim, self.learning_rate, self.batch_size, self.layers
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gammas: Vec<f64>,
    pub dims: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub layers: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            gammas: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            dims: vec![8, 16, 32, 64, 128, 256],
            learning_rates: vec![0.0005, 0.001, 0.005, 0.01, 0.05, 0.1],
            batch_sizes: vec![32, 64, 128, 256, 512],
            layers: vec![1],
        }
    }
}

impl GridSpec {
    /// Cartesian product in axis order (gamma outermost).
    pub fn trials(&self) -> Vec<TrialConfig> {
        let mut out = Vec::new();
        for &gamma in &self.gammas {
            for &dim in &self.dims {
                for &learning_rate in &self.learning_rates {
                    for &batch_size in &self.batch_sizes {
                        for &layers in &self.layers {
                            out.push(TrialConfig {
                                gamma,
                                dim,
                                learning_rate,
                                batch_size,
                                layers,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty()
            || self.dims.is_empty()
            || self.learning_rates.is_empty()
            || self.batch_sizes.is_empty()
            || self.layers.is_empty()
        {
            return Err(Error::config("every grid axis needs at least one value"));
        }
        Ok(())
    }
}

/// Model variant under the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Full,
    /// User embedding as the query.
    NoQuery,
    /// Every neighbor aggregated.
    NoSampling,
    /// Uniform attention.
    NoAttention,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoQuery,
        Variant::NoSampling,
        Variant::NoAttention,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoQuery => "no_query",
            Variant::NoSampling => "no_sampling",
            Variant::NoAttention => "no_attention",
        }
    }

    pub fn apply(self, cfg: &ModelConfig) -> ModelConfig {
        ModelConfig {
            ablate_query: self == Variant::NoQuery,
            ablate_sampling: self == Variant::NoSampling,
            ablate_attention: self == Variant::NoAttention,
            ..cfg.clone()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Shared settings of a batch of trials.
#[derive(Clone, Debug, PartialEq)]
pub struct HarnessConfig {
    pub seed: u64,
    /// Trials run concurrently; each trial trains single-threaded.
    pub workers: usize,
    /// Supplies everything not set by the trial (epochs, patience, decay...).
    pub base_model: ModelConfig,
    pub base_train: TrainConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            seed: 0,
            workers: 1,
            base_model: ModelConfig::default(),
            base_train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial: TrialConfig,
    pub variant: Variant,
    pub seed: u64,
    /// `None` when the trial succeeded.
    pub error: Option<String>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val: Option<EvalReport>,
    pub test: Option<EvalReport>,
}

impl TrialResult {
    pub fn val_rmse(&self) -> f64 {
        self.val.map_or(f64::INFINITY, |v| v.rmse)
    }
}

/// Seed of a trial: a hash of the run seed and the trial's hyperparameters,
/// independent of the variant so that ablations share initialisation and
/// sampling streams.
pub fn trial_seed(run_seed: u64, trial: &TrialConfig) -> u64 {
    seed::derive_str(run_seed, &trial.key())
}

fn run_trial(
    ds: &Dataset,
    g: &HetGraph,
    trial: TrialConfig,
    variant: Variant,
    hcfg: &HarnessConfig,
) -> TrialResult {
    let seed = trial_seed(hcfg.seed, &trial);
    let mut result = TrialResult {
        trial,
        variant,
        seed,
        error: None,
        best_epoch: 0,
        epochs_run: 0,
        val: None,
        test: None,
    };
    let model_cfg = variant.apply(&ModelConfig {
        dim: trial.dim,
        layers: trial.layers,
        gamma: trial.gamma,
        ..hcfg.base_model.clone()
    });
    let train_cfg = TrainConfig {
        learning_rate: trial.learning_rate,
        batch_size: trial.batch_size,
        seed: seed::derive(seed, &[2]),
        workers: 1,
        ..hcfg.base_train.clone()
    };
    let outcome = (|| -> Result<_> {
        let params = ModelParams::init(
            &model_cfg,
            g.num_users(),
            g.num_items(),
            g.num_relations(),
            seed::derive(seed, &[1]),
        )?;
        let out = train(params, &model_cfg, &train_cfg, g, ds)?;
        let test_pairs = labeled_pairs(ds, g, Split::Test)?;
        let test = if test_pairs.is_empty() {
            None
        } else {
            Some(evaluate(
                &out.params,
                &model_cfg.for_eval(),
                g,
                &test_pairs,
            )?)
        };
        Ok((out, test))
    })();
    match outcome {
        Ok((out, test)) => {
            result.best_epoch = out.best_epoch;
            result.epochs_run = out.history.len();
            result.val = out
                .history
                .get(out.best_epoch.wrapping_sub(1))
                .and_then(|r| r.val);
            result.test = test;
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result
}

fn run_all(
    ds: &Dataset,
    g: &HetGraph,
    jobs: Vec<(TrialConfig, Variant)>,
    hcfg: &HarnessConfig,
) -> Result<Vec<TrialResult>> {
    if hcfg.workers == 0 {
        return Err(Error::config("workers must be at least 1"));
    }
    hcfg.base_train.validate()?;
    let run = |&(t, v): &(TrialConfig, Variant)| run_trial(ds, g, t, v, hcfg);
    if hcfg.workers == 1 {
        return Ok(jobs.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(hcfg.workers)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(run).collect()))
}

/// Orders by validation RMSE, then smaller dimension, then lower learning
/// rate. Failed trials sort last.
pub fn rank(results: &mut [TrialResult]) {
    results.sort_by(|a, b| {
        a.error
            .is_some()
            .cmp(&b.error.is_some())
            .then(a.val_rmse().total_cmp(&b.val_rmse()))
            .then(a.trial.dim.cmp(&b.trial.dim))
            .then(a.trial.learning_rate.total_cmp(&b.trial.learning_rate))
    });
}

/// Trains every grid point, or a seeded subset of `budget` points, and
/// returns the results ranked.
pub fn run_grid(
    ds: &Dataset,
    g: &HetGraph,
    spec: &GridSpec,
    budget: Option<usize>,
    hcfg: &HarnessConfig,
) -> Result<Vec<TrialResult>> {
    spec.validate()?;
    let mut trials = spec.trials();
    if let Some(budget) = budget {
        if budget == 0 {
            return Err(Error::config("budget must be at least 1"));
        }
        if budget < trials.len() {
            let mut rng = seed::rng(seed::derive(hcfg.seed, &[0x6772_6964]));
            let mut keep = sample(&mut rng, trials.len(), budget).into_vec();
            keep.sort_unstable();
            trials = keep.into_iter().map(|i| trials[i]).collect();
        }
    }
    let jobs = trials.into_iter().map(|t| (t, Variant::Full)).collect();
    let mut results = run_all(ds, g, jobs, hcfg)?;
    rank(&mut results);
    Ok(results)
}

/// Full model and the three ablated variants with identical seeds.
pub fn run_ablation(
    ds: &Dataset,
    g: &HetGraph,
    trial: TrialConfig,
    hcfg: &HarnessConfig,
) -> Result<Vec<TrialResult>> {
    let jobs = Variant::ALL.iter().map(|&v| (trial, v)).collect();
    run_all(ds, g, jobs, hcfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Gamma,
    Dim,
    LearningRate,
    BatchSize,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Gamma => "gamma",
            Axis::Dim => "dim",
            Axis::LearningRate => "learning_rate",
            Axis::BatchSize => "batch_size",
        }
    }

    pub fn apply(self, trial: TrialConfig, value: f64) -> Result<TrialConfig> {
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(format!(
                    "{} must be a positive integer, got {v}",
                    self.name()
                )))
            }
        };
        Ok(match self {
            Axis::Gamma => TrialConfig {
                gamma: value,
                ..trial
            },
            Axis::Dim => TrialConfig {
                dim: count(value)?,
                ..trial
            },
            Axis::LearningRate => TrialConfig {
                learning_rate: value,
                ..trial
            },
            Axis::BatchSize => TrialConfig {
                batch_size: count(value)?,
                ..trial
            },
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(Axis::Gamma),
            "dim" | "d" => Ok(Axis::Dim),
            "learning_rate" | "lr" => Ok(Axis::LearningRate),
            "batch_size" | "batch" => Ok(Axis::BatchSize),
            other => Err(Error::config(format!(
                "unknown axis {other:?}; expected gamma, dim, learning_rate or batch_size"
            ))),
        }
    }
}

/// Varies one hyperparameter around `base`. Repeated values run once.
pub fn run_sensitivity(
    ds: &Dataset,
    g: &HetGraph,
    base: TrialConfig,
    axis: Axis,
    values: &[f64],
    hcfg: &HarnessConfig,
) -> Result<Vec<TrialResult>> {
    let mut seen: Vec<f64> = Vec::new();
    for &v in values {
        if !seen.contains(&v) {
            seen.push(v);
        }
    }
    if seen.is_empty() {
        return Err(Error::config("sensitivity needs at least one value"));
    }
    let jobs = seen
        .iter()
        .map(|&v| Ok((axis.apply(base, v)?, Variant::Full)))
        .collect::<Result<Vec<_>>>()?;
    run_all(ds, g, jobs, hcfg)
}

fn fmt_metric(m: Option<EvalReport>, f: impl Fn(EvalReport) -> f64) -> String {
    m.map_or_else(|| "NA".into(), |r| f(r).to_string())
}

/// One row per trial.
pub fn write_results(path: &Path, results: &[TrialResult]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "variant\tgamma\tdim\tlearning_rate\tbatch_size\tlayers\tseed\tstatus\tbest_epoch\tepochs\tval_rmse\tval_mae\ttest_rmse\ttest_mae"
    )
    .map_err(io)?;
    for r in results {
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("failed: {}", e.replace(['\t', '\n'], " ")),
        };
        let t = &r.trial;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{status}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.variant,
            t.gamma,
            t.dim,
            t.learning_rate,
            t.batch_size,
            t.layers,
            r.seed,
            r.best_epoch,
            r.epochs_run,
            fmt_metric(r.val, |m| m.rmse),
            fmt_metric(r.val, |m| m.mae),
            fmt_metric(r.test, |m| m.rmse),
            fmt_metric(r.test, |m| m.mae),
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::build_graph;
    use crate::synthetic::{planted_inconsistency, PlantedConfig};

    fn small() -> (Dataset, HetGraph) {
        let ds = planted_inconsistency(&PlantedConfig {
            users: 16,
            items: 8,
            ratings_per_user: 4,
            ..Default::default()
        })
        .unwrap();
        let g = build_graph(&ds, 0.5).unwrap();
        (ds, g)
    }

    fn quick() -> HarnessConfig {
        HarnessConfig {
            seed: 3,
            base_train: TrainConfig {
                max_epochs: 2,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(GridSpec::default().trials().len(), 900);
        let empty = GridSpec {
            layers: vec![],
            ..Default::default()
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn ranking_breaks_ties_by_dim_then_rate() {
        let mk = |rmse: Option<f64>, dim, lr| TrialResult {
            trial: TrialConfig {
                gamma: 0.5,
                dim,
                learning_rate: lr,
                batch_size: 8,
                layers: 1,
            },
            variant: Variant::Full,
            seed: 0,
            error: rmse.is_none().then(|| "boom".into()),
            best_epoch: 1,
            epochs_run: 1,
            val: rmse.map(|r| EvalReport {
                rmse: r,
                mae: r,
                count: 1,
            }),
            test: None,
        };
        let mut rs = vec![
            mk(None, 4, 0.1),
            mk(Some(1.0), 16, 0.1),
            mk(Some(1.0), 8, 0.1),
            mk(Some(1.0), 8, 0.01),
            mk(Some(0.5), 64, 0.1),
        ];
        rank(&mut rs);
        let order: Vec<_> = rs
            .iter()
            .map(|r| (r.trial.dim, r.trial.learning_rate))
            .collect();
        assert_eq!(
            order,
            vec![(64, 0.1), (8, 0.01), (8, 0.1), (16, 0.1), (4, 0.1)]
        );
    }

    #[test]
    fn budget_subsamples_deterministically() {
        let (ds, g) = small();
        let spec = GridSpec {
            gammas: vec![0.5, 1.0],
            dims: vec![2, 4],
            learning_rates: vec![0.01],
            batch_sizes: vec![8, 16],
            layers: vec![1],
        };
        let a = run_grid(&ds, &g, &spec, Some(3), &quick()).unwrap();
        let b = run_grid(
            &ds,
            &g,
            &spec,
            Some(3),
            &HarnessConfig {
                workers: 3,
                ..quick()
            },
        )
        .unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.error.is_none()));
        assert!(run_grid(&ds, &g, &spec, Some(0), &quick()).is_err());
    }

    #[test]
    fn failed_trials_are_recorded() {
        let (ds, g) = small();
        let base = TrialConfig {
            gamma: 0.5,
            dim: 2,
            learning_rate: 0.01,
            batch_size: 8,
            layers: 1,
        };
        let rs = run_sensitivity(&ds, &g, base, Axis::Gamma, &[0.5, 1.5, 0.5], &quick()).unwrap();
        assert_eq!(rs.len(), 2);
        assert!(rs[0].error.is_none());
        assert_eq!(rs[1].error.as_deref(), Some("gamma must be in [0,1]"));
        assert!(run_sensitivity(&ds, &g, base, Axis::Dim, &[2.5], &quick()).is_err());
    }

    #[test]
    fn ablation_shares_seeds() {
        let (ds, g) = small();
        let base = TrialConfig {
            gamma: 0.5,
            dim: 2,
            learning_rate: 0.01,
            batch_size: 8,
            layers: 1,
        };
        let rs = run_ablation(&ds, &g, base, &quick()).unwrap();
        let labels: Vec<_> = rs.iter().map(|r| r.variant.label()).collect();
        assert_eq!(labels, ["full", "no_query", "no_sampling", "no_attention"]);
        assert!(rs.iter().all(|r| r.seed == rs[0].seed && r.test.is_some()));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ablation.tsv");
        write_results(&path, &rs).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn axis_parsing() {
        assert_eq!("lr".parse::<Axis>().unwrap(), Axis::LearningRate);
        assert!("depth".parse::<Axis>().is_err());
    }
}
