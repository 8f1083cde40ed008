use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use socialrec::dataio::{
    assign_splits, filter_and_index, fingerprint, fingerprint_files, parse_edges, read_dataset,
    write_dataset, Dataset, EdgeFormat, Split,
};
use socialrec::gradcheck::{self, Report};
use socialrec::harness::{self, Axis, GridSpec, HarnessConfig, TrialConfig, TrialResult};
use socialrec::hetgraph::{build_graph, HetGraph, DEFAULT_ITEM_LINK_THRESHOLD};
use socialrec::model::{load_checkpoint, save_checkpoint, ModelParams};
use socialrec::seed;
use socialrec::trainer::{self, evaluate_clipped, labeled_pairs, write_history, EvalReport};

use crate::config::{parse_csv, RunConfig};
use crate::manifest::{DatasetInfo, RunManifest};
use crate::{
    AblateArgs, CliError, EvaluateArgs, GradcheckArgs, GridArgs, IngestArgs, SensitivityArgs,
    TrainArgs,
};

const CHECKPOINT_DIR: &str = "checkpoint";
const HISTORY_FILE: &str = "history.tsv";
const GRAPH_SETTINGS_FILE: &str = "graph.json";

/// Graph construction settings stored next to a checkpoint.
#[derive(Serialize, Deserialize)]
struct GraphSettings {
    item_link_threshold: f64,
}

fn init_seed(run_seed: u64) -> u64 {
    seed::derive(run_seed, &[1])
}

fn train_seed(run_seed: u64) -> u64 {
    seed::derive(run_seed, &[2])
}

fn load_data(dir: &Path) -> Result<(Dataset, DatasetInfo), CliError> {
    let ds = read_dataset(dir)?;
    let info = DatasetInfo {
        path: dir.to_path_buf(),
        fingerprint: fingerprint(dir)?,
    };
    Ok((ds, info))
}

fn report_line(label: &str, r: &EvalReport) -> String {
    format!("{label} rmse={:.6} mae={:.6} n={}", r.rmse, r.mae, r.count)
}

fn rating_range(ds: &Dataset) -> (f64, f64) {
    let lo = ds.rating_levels.first().copied().unwrap_or(0) as f64;
    let hi = ds.rating_levels.last().copied().unwrap_or(0) as f64;
    (lo, hi)
}

pub fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let fractions: Vec<f64> = parse_csv(&a.splits, "split fraction")?;
    let fractions: [f64; 3] = fractions
        .try_into()
        .map_err(|_| CliError::usage("--splits needs exactly three fractions"))?;
    let format: EdgeFormat = a.format.parse()?;

    let input = fingerprint_files(&[a.ratings.clone(), a.trust.clone()])?;
    #[derive(Serialize)]
    struct IngestConfig<'a> {
        ratings: &'a Path,
        trust: &'a Path,
        format: &'a str,
        fractions: [f64; 3],
        seed: u64,
    }
    let cfg = IngestConfig {
        ratings: &a.ratings,
        trust: &a.trust,
        format: &a.format,
        fractions,
        seed: a.seed,
    };
    let mut manifest = RunManifest::new("ingest", &cfg)?
        .seed("split", a.seed)
        .artifact("dataset", a.out.clone());
    manifest.dataset = Some(DatasetInfo {
        path: a.ratings.clone(),
        fingerprint: input,
    });

    let (ratings, trust) = parse_edges(&a.ratings, &a.trust, format)?;
    let ds = filter_and_index(&ratings, &trust)?;
    let ds = assign_splits(ds, fractions, a.seed)?;
    manifest.write(&a.out)?;
    write_dataset(&ds, &a.out)?;

    let levels: Vec<String> = ds.rating_levels.iter().map(i64::to_string).collect();
    let sizes = ds.split_sizes().unwrap_or_default();
    println!("users={}", ds.num_users());
    println!("items={}", ds.num_items());
    println!("social_links={}", ds.social.len());
    println!("ratings={}", ds.ratings.len());
    println!("rating_levels={}", levels.join(","));
    println!("relations={}", ds.rating_levels.len() + 2);
    println!(
        "splits train={} val={} test={}",
        sizes[0], sizes[1], sizes[2]
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let run = RunConfig::resolve(&a.model, &a.train)?;
    let (ds, info) = load_data(&a.data)?;

    let checkpoint = a.out.join(CHECKPOINT_DIR);
    let history_path = a.out.join(HISTORY_FILE);
    let mut manifest = RunManifest::new("train", &run)?
        .seed("run", run.train.seed)
        .seed("init", init_seed(run.train.seed))
        .seed("train", train_seed(run.train.seed))
        .artifact("checkpoint", checkpoint.clone())
        .artifact("history", history_path.clone());
    if a.dump_graph {
        manifest = manifest.artifact("graph", a.out.join("graph.tsv"));
    }
    manifest.dataset = Some(info);
    manifest.write(&a.out)?;

    let g = build_graph(&ds, run.item_link_threshold)?;
    if a.dump_graph {
        g.write_tsv(&a.out.join("graph.tsv"))?;
    }
    let params = ModelParams::init(
        &run.model,
        g.num_users(),
        g.num_items(),
        g.num_relations(),
        init_seed(run.train.seed),
    )?;
    let train_cfg = trainer::TrainConfig {
        seed: train_seed(run.train.seed),
        ..run.train.clone()
    };
    let quiet = a.quiet;
    let outcome = trainer::train_with_observer(params, &run.model, &train_cfg, &g, &ds, |r| {
        if !quiet {
            let val = r
                .val
                .map_or_else(|| "NA".to_string(), |v| format!("{:.6}", v.rmse));
            eprintln!(
                "epoch {:>4}  train_loss {:.6}  val_rmse {val}",
                r.epoch, r.train_loss
            );
        }
    })?;

    save_checkpoint(&checkpoint, &outcome.params, &run.model)?;
    write_graph_settings(&checkpoint, run.item_link_threshold)?;
    write_history(&history_path, &outcome.history, a.record_elapsed)?;
    println!(
        "best_epoch={} epochs={}",
        outcome.best_epoch,
        outcome.history.len()
    );

    let test = labeled_pairs(&ds, &g, Split::Test)?;
    if test.is_empty() {
        println!("test: no ratings in split");
    } else {
        let (lo, hi) = if a.clip_predictions {
            rating_range(&ds)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        };
        let r = evaluate_clipped(&outcome.params, &run.model.for_eval(), &g, &test, lo, hi)?;
        println!("{}", report_line("test", &r));
    }
    Ok(())
}

fn write_graph_settings(dir: &Path, threshold: f64) -> Result<(), CliError> {
    let path = dir.join(GRAPH_SETTINGS_FILE);
    let text = serde_json::to_string(&GraphSettings {
        item_link_threshold: threshold,
    })
    .map_err(|e| CliError::failure(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn read_graph_settings(dir: &Path) -> Result<Option<GraphSettings>, CliError> {
    let path = dir.join(GRAPH_SETTINGS_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let split: Split = a.split.parse()?;
    let (params, cfg) = load_checkpoint(&a.checkpoint)?;
    let threshold = match a.item_link_threshold {
        Some(t) => t,
        None => read_graph_settings(&a.checkpoint)?
            .map_or(DEFAULT_ITEM_LINK_THRESHOLD, |s| s.item_link_threshold),
    };
    let ds = read_dataset(&a.data)?;
    let g = build_graph(&ds, threshold)?;
    params.check_shape(g.num_users(), g.num_items(), g.num_relations())?;
    let pairs = labeled_pairs(&ds, &g, split)?;
    if pairs.is_empty() {
        return Err(CliError::usage(format!("split {split} has no ratings")));
    }
    let (lo, hi) = if a.clip_predictions {
        rating_range(&ds)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let r = evaluate_clipped(&params, &cfg.for_eval(), &g, &pairs, lo, hi)?;
    println!("{}", report_line(split.as_str(), &r));
    Ok(())
}

fn harness_config(run: &RunConfig) -> HarnessConfig {
    HarnessConfig {
        seed: run.train.seed,
        workers: run.train.workers,
        base_model: run.model.clone(),
        base_train: run.train.clone(),
    }
}

fn print_results(results: &[TrialResult]) {
    for r in results {
        let val = r
            .val
            .map_or_else(|| "NA".into(), |v| format!("{:.6}", v.rmse));
        let test = r
            .test
            .map_or_else(|| "NA".into(), |v| format!("{:.6}", v.rmse));
        let status = r.error.as_deref().unwrap_or("ok");
        println!(
            "{:<13} gamma={} d={} lr={} batch={} layers={}  val_rmse={val} test_rmse={test}  {status}",
            r.variant.label(),
            r.trial.gamma,
            r.trial.dim,
            r.trial.learning_rate,
            r.trial.batch_size,
            r.trial.layers
        );
    }
}

fn prepare(
    data: &Path,
    out: &Path,
    command: &str,
    config: serde_json::Value,
    results: &Path,
    run: &RunConfig,
) -> Result<(Dataset, HetGraph), CliError> {
    let (ds, info) = load_data(data)?;
    let mut manifest = RunManifest::new(command, config)?
        .seed("run", run.train.seed)
        .artifact("results", results.to_path_buf());
    manifest.dataset = Some(info);
    manifest.write(out)?;
    let g = build_graph(&ds, run.item_link_threshold)?;
    Ok((ds, g))
}

fn axis_values<T: std::str::FromStr>(
    flag: &Option<String>,
    what: &str,
    default: Vec<T>,
) -> Result<Vec<T>, CliError> {
    match flag {
        Some(text) => parse_csv(text, what),
        None => Ok(default),
    }
}

pub fn gridsearch(a: GridArgs) -> Result<(), CliError> {
    let run = RunConfig::resolve(&a.model, &a.train)?;
    let d = GridSpec::default();
    let spec = GridSpec {
        gammas: axis_values(&a.gammas, "gamma", d.gammas)?,
        dims: axis_values(&a.dims, "dim", d.dims)?,
        learning_rates: axis_values(&a.learning_rates, "learning rate", d.learning_rates)?,
        batch_sizes: axis_values(&a.batch_sizes, "batch size", d.batch_sizes)?,
        layers: axis_values(&a.layer_counts, "layer count", d.layers)?,
    };
    spec.validate()?;
    if a.budget == Some(0) {
        return Err(CliError::usage("budget must be at least 1"));
    }
    let results_path = a.out.join("grid_results.tsv");
    let config = serde_json::json!({ "base": run, "grid": spec, "budget": a.budget });
    let (ds, g) = prepare(&a.data, &a.out, "gridsearch", config, &results_path, &run)?;
    let results = harness::run_grid(&ds, &g, &spec, a.budget, &harness_config(&run))?;
    harness::write_results(&results_path, &results)?;
    print_results(&results[..results.len().min(5)]);
    println!(
        "trials={} results={}",
        results.len(),
        results_path.display()
    );
    Ok(())
}

pub fn ablate(a: AblateArgs) -> Result<(), CliError> {
    let run = RunConfig::resolve(&a.model, &a.train)?;
    let results_path = a.out.join("ablation.tsv");
    let config = serde_json::json!({ "base": run });
    let (ds, g) = prepare(&a.data, &a.out, "ablate", config, &results_path, &run)?;
    let trial = TrialConfig::from_configs(&run.model, &run.train);
    let results = harness::run_ablation(&ds, &g, trial, &harness_config(&run))?;
    harness::write_results(&results_path, &results)?;
    print_results(&results);
    Ok(())
}

pub fn sensitivity(a: SensitivityArgs) -> Result<(), CliError> {
    let run = RunConfig::resolve(&a.model, &a.train)?;
    let axis: Axis = a.axis.parse()?;
    let values: Vec<f64> = parse_csv(&a.values, axis.name())?;
    if values.is_empty() {
        return Err(CliError::usage("--values needs at least one value"));
    }
    let results_path: PathBuf = a.out.join(format!("sensitivity_{}.tsv", axis.name()));
    let config = serde_json::json!({ "base": run, "axis": axis.name(), "values": values });
    let (ds, g) = prepare(&a.data, &a.out, "sensitivity", config, &results_path, &run)?;
    let trial = TrialConfig::from_configs(&run.model, &run.train);
    let results = harness::run_sensitivity(&ds, &g, trial, axis, &values, &harness_config(&run))?;
    harness::write_results(&results_path, &results)?;
    print_results(&results);
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> Result<(), CliError> {
    let opts = gradcheck::Options {
        corrupt: a.corrupt,
        ..Default::default()
    };
    let fixed_scale = a.d.is_some() || a.nodes.is_some() || a.layers.is_some();
    let report = if fixed_scale {
        let dim = a.d.unwrap_or(3);
        let nodes = a.nodes.unwrap_or(6);
        let layers = a.layers.unwrap_or(1);
        if dim == 0 || layers == 0 || nodes < 2 {
            return Err(CliError::usage(
                "gradcheck needs d >= 1, layers >= 1 and at least 2 nodes",
            ));
        }
        let mut total = Report { groups: Vec::new() };
        for i in 0..a.count.unwrap_or(8) {
            let inst_seed = seed::derive(a.seed, &[i as u64]);
            let inst = gradcheck::random_instance(
                inst_seed,
                dim,
                layers,
                nodes,
                gradcheck::flag_combination(i % 8),
            )?;
            total.absorb(gradcheck::check_instance(
                &inst,
                seed::derive(inst_seed, &[2]),
                &opts,
            )?);
        }
        println!(
            "instances={} d={dim} nodes={nodes} layers={layers}",
            a.count.unwrap_or(8)
        );
        total
    } else {
        let count = a.count.unwrap_or(20);
        println!("instances={count} (d in 2..=4, layers in 1..=2, 4-6 nodes)");
        gradcheck::run_suite(count, a.seed, &opts)?
    };
    print!("{report}");
    let failing: Vec<String> = report
        .failing(a.tolerance)
        .iter()
        .map(|g| g.group.name())
        .collect();
    if failing.is_empty() {
        println!(
            "max relative error {:.3e} <= {:.0e}: ok",
            report.max_error(),
            a.tolerance
        );
        Ok(())
    } else {
        Err(CliError::failure(format!(
            "gradient check failed (tolerance {:.0e}) for: {}",
            a.tolerance,
            failing.join(", ")
        )))
    }
}
