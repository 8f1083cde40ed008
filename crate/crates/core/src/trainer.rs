//! Training loop, Adam with decoupled weight decay, early stopping and
//! RMSE/MAE evaluation.
//!
//! The optimised objective is the per-batch mean squared error; the loss
//! reported in the history is its square root (RMSE). Both share the same
//! minimisers and the MSE gradient has no singularity at zero loss.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, Split};
use crate::error::{Error, Result};
use crate::hetgraph::{HetGraph, NodeId};
use crate::model::{
    backward, forward, predict_rating, ForwardTrace, GradAccumulator, ModelConfig, ModelParams,
};
use crate::seed;

pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-4;
pub const DEFAULT_PATIENCE: usize = 5;

/// Split whose deterministic RMSE drives early stopping and snapshotting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monitor {
    #[default]
    Validation,
    Train,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub monitor: Monitor,
    /// Threads used for per-example work inside a batch. Results do not
    /// depend on this value.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 128,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            patience: DEFAULT_PATIENCE,
            max_epochs: 100,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            monitor: Monitor::Validation,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight decay must be non-negative"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max epochs must be at least 1"));
        }
        for (name, b) in [
            ("adam beta1", self.adam_beta1),
            ("adam beta2", self.adam_beta2),
        ] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(format!("{name} must be in (0,1)")));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::config("adam eps must be positive"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        Ok(())
    }
}

/// RMSE of a batch.
pub fn batch_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_batch(predictions, targets)?;
    let sq: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok((sq / predictions.len() as f64).sqrt())
}

/// Per-example gradient of the batch mean squared error: `2 (p - t) / B`.
pub fn loss_gradient(predictions: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    check_batch(predictions, targets)?;
    let b = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| 2.0 * (p - t) / b)
        .collect())
}

fn check_batch(predictions: &[f64], targets: &[f64]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::contract(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    Ok(())
}

/// Adam moment buffers, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: ModelParams,
    pub second: ModelParams,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            step: 0,
            first: ModelParams::zeros_like(params),
            second: ModelParams::zeros_like(params),
        }
    }
}

/// One Adam update over the touched coordinates of `grads`.
///
/// Decoupled weight decay `theta -= lr * wd * theta` is applied to touched
/// coordinates only; untouched embedding rows keep their values and moments.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradAccumulator,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let slices = grads.slices();
    for (group, _, g) in &slices {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(group.name()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.adam_beta1.powi(t);
    let bc2 = 1.0 - cfg.adam_beta2.powi(t);
    let (lr, b1, b2) = (cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
    let decay = lr * cfg.weight_decay;
    for (group, offset, g) in slices {
        let range = offset..offset + g.len();
        let theta = &mut params.group_mut(group)[range.clone()];
        let m = &mut state.first.group_mut(group)[range.clone()];
        let v = &mut state.second.group_mut(group)[range];
        for i in 0..g.len() {
            theta[i] -= decay * theta[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    pub count: usize,
}

pub fn metrics(predictions: &[f64], targets: &[f64]) -> Result<EvalReport> {
    check_batch(predictions, targets)?;
    let n = predictions.len() as f64;
    let (sq, abs) = predictions
        .iter()
        .zip(targets)
        .fold((0.0, 0.0), |(sq, abs), (p, t)| {
            let r = t - p;
            (sq + r * r, abs + r.abs())
        });
    Ok(EvalReport {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        count: predictions.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledPair {
    pub user: NodeId,
    pub item: NodeId,
    pub rating: f64,
}

pub fn labeled_pairs(ds: &Dataset, g: &HetGraph, split: Split) -> Result<Vec<LabeledPair>> {
    Ok(ds
        .split_ratings(split)?
        .into_iter()
        .map(|r| LabeledPair {
            user: g.user_node(r.user),
            item: g.item_node(r.item),
            rating: r.rating as f64,
        })
        .collect())
}

fn predict_all(
    params: &ModelParams,
    cfg: &ModelConfig,
    g: &HetGraph,
    pairs: &[LabeledPair],
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<f64>> {
    let one = |p: &LabeledPair| predict_rating(params, cfg, g, p.user, p.item);
    match pool {
        Some(pool) => pool.install(|| pairs.par_iter().map(one).collect()),
        None => pairs.iter().map(one).collect(),
    }
}

/// Scores every pair in deterministic mode; predictions are not clipped.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    g: &HetGraph,
    pairs: &[LabeledPair],
) -> Result<EvalReport> {
    evaluate_with(params, cfg, g, pairs, None)
}

/// [`evaluate`] with predictions clamped to `[lo, hi]` before scoring.
pub fn evaluate_clipped(
    params: &ModelParams,
    cfg: &ModelConfig,
    g: &HetGraph,
    pairs: &[LabeledPair],
    lo: f64,
    hi: f64,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::contract("cannot evaluate an empty pair list"));
    }
    let preds: Vec<f64> = predict_all(params, cfg, g, pairs, None)?
        .into_iter()
        .map(|p| p.clamp(lo, hi))
        .collect();
    let targets: Vec<f64> = pairs.iter().map(|p| p.rating).collect();
    metrics(&preds, &targets)
}

fn evaluate_with(
    params: &ModelParams,
    cfg: &ModelConfig,
    g: &HetGraph,
    pairs: &[LabeledPair],
    pool: Option<&rayon::ThreadPool>,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::contract("cannot evaluate an empty pair list"));
    }
    let preds = predict_all(params, cfg, g, pairs, pool)?;
    let targets: Vec<f64> = pairs.iter().map(|p| p.rating).collect();
    metrics(&preds, &targets)
}

/// Patience counter over a monitored error; improvement is strict.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> Observation {
        let improved = value < self.best;
        if improved {
            self.best = value;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Observation {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// RMSE of the stochastic training predictions over the epoch.
    pub train_loss: f64,
    pub val: Option<EvalReport>,
    /// Deterministic RMSE on the monitored split.
    pub monitored_rmse: f64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_rmse: f64,
}

const EPOCH_TAG: u64 = 0x45_50_4f_43_48;

struct BatchResult {
    sq_err: f64,
    grads: GradAccumulator,
}

fn run_batch(
    params: &ModelParams,
    cfg: &ModelConfig,
    g: &HetGraph,
    batch: &[(LabeledPair, u64)],
    pool: Option<&rayon::ThreadPool>,
) -> Result<BatchResult> {
    let fwd = |(p, s): &(LabeledPair, u64)| -> Result<ForwardTrace> {
        forward(params, cfg, g, p.user, p.item, &mut seed::rng(*s))
    };
    let traces: Vec<ForwardTrace> = match pool {
        Some(pool) => pool.install(|| batch.par_iter().map(fwd).collect::<Result<_>>())?,
        None => batch.iter().map(fwd).collect::<Result<_>>()?,
    };
    let preds: Vec<f64> = traces.iter().map(|t| t.prediction).collect();
    let targets: Vec<f64> = batch.iter().map(|(p, _)| p.rating).collect();
    let upstream = loss_gradient(&preds, &targets)?;
    let bwd = |(trace, up): (&ForwardTrace, &f64)| backward(params, cfg, trace, *up);
    let per_example: Vec<GradAccumulator> = match pool {
        Some(pool) => pool.install(|| {
            traces
                .par_iter()
                .zip(upstream.par_iter())
                .map(bwd)
                .collect::<Result<_>>()
        })?,
        None => traces
            .iter()
            .zip(&upstream)
            .map(bwd)
            .collect::<Result<_>>()?,
    };
    // fixed reduction order keeps results independent of thread count
    let mut grads = GradAccumulator::new(params.dim, params.layers());
    for gr in &per_example {
        grads.merge(gr);
    }
    let sq_err = preds
        .iter()
        .zip(&targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(BatchResult { sq_err, grads })
}

pub fn train(
    params: ModelParams,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    g: &HetGraph,
    ds: &Dataset,
) -> Result<TrainOutcome> {
    train_with_observer(params, model_cfg, train_cfg, g, ds, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_observer(
    mut params: ModelParams,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    g: &HetGraph,
    ds: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    params.check_shape(g.num_users(), g.num_items(), g.num_relations())?;
    let train_cfg_model = ModelConfig {
        eval_deterministic: false,
        ..model_cfg.clone()
    };
    let eval_cfg = model_cfg.for_eval();

    let train_pairs = labeled_pairs(ds, g, Split::Train)?;
    if train_pairs.is_empty() {
        return Err(Error::config("train split is empty"));
    }
    let val_pairs = labeled_pairs(ds, g, Split::Validation)?;
    if train_cfg.monitor == Monitor::Validation && val_pairs.is_empty() {
        return Err(Error::config(
            "validation split is empty; use the train monitor or a non-zero validation fraction",
        ));
    }
    let pool = if train_cfg.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(train_cfg.workers)
                .build()
                .map_err(|e| Error::config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let pool = pool.as_ref();

    let mut state = AdamState::new(&params);
    let mut stopper = EarlyStopping::new(train_cfg.patience.max(1));
    let mut best = params.clone();
    let mut history = Vec::new();
    let start = Instant::now();

    for epoch in 1..=train_cfg.max_epochs {
        let epoch_tag = epoch as u64;
        let mut order: Vec<usize> = (0..train_pairs.len()).collect();
        order.shuffle(&mut seed::rng(seed::derive(
            train_cfg.seed,
            &[EPOCH_TAG, epoch_tag],
        )));
        let examples: Vec<(LabeledPair, u64)> = order
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                (
                    train_pairs[i],
                    seed::derive(train_cfg.seed, &[epoch_tag, pos as u64]),
                )
            })
            .collect();

        let mut sq_err = 0.0;
        for batch in examples.chunks(train_cfg.batch_size) {
            let out = run_batch(&params, &train_cfg_model, g, batch, pool)?;
            sq_err += out.sq_err;
            adam_step(&mut params, &out.grads, &mut state, train_cfg)?;
        }
        let train_loss = (sq_err / examples.len() as f64).sqrt();

        let val = if val_pairs.is_empty() {
            None
        } else {
            Some(evaluate_with(&params, &eval_cfg, g, &val_pairs, pool)?)
        };
        let monitored_rmse = match train_cfg.monitor {
            Monitor::Validation => val.expect("validated above").rmse,
            Monitor::Train => evaluate_with(&params, &eval_cfg, g, &train_pairs, pool)?.rmse,
        };
        let obs = stopper.observe(epoch, monitored_rmse);
        if obs.improved {
            best.clone_from(&params);
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val,
            monitored_rmse,
            elapsed_secs: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.push(record);
        if obs.stop {
            break;
        }
    }

    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch: stopper.best_epoch(),
        best_rmse: stopper.best(),
    })
}

/// Writes `epoch, train_loss, val_rmse, val_mae, elapsed_seconds`.
/// Wall-clock time is written as `NA` unless `record_elapsed` is set, so
/// that repeated runs produce identical files.
pub fn write_history(path: &Path, history: &[EpochRecord], record_elapsed: bool) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "epoch\ttrain_loss\tval_rmse\tval_mae\telapsed_seconds").map_err(io)?;
    for r in history {
        let (rmse, mae) = match r.val {
            Some(v) => (v.rmse.to_string(), v.mae.to_string()),
            None => ("NA".into(), "NA".into()),
        };
        let elapsed = if record_elapsed {
            format!("{:.3}", r.elapsed_secs)
        } else {
            "NA".into()
        };
        writeln!(w, "{}\t{}\t{rmse}\t{mae}\t{elapsed}", r.epoch, r.train_loss).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamGroup;
    use proptest::prelude::*;

    #[test]
    fn batch_loss_examples() {
        assert_eq!(batch_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(batch_loss(&[3.0, 5.0], &[4.0, 4.0]).unwrap(), 1.0);
        assert_eq!(batch_loss(&[2.5], &[4.0]).unwrap(), 1.5);
        assert!(matches!(batch_loss(&[], &[]), Err(Error::Contract(_))));
        assert!(matches!(
            batch_loss(&[1.0], &[1.0, 2.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn loss_gradient_examples() {
        assert_eq!(loss_gradient(&[4.0], &[4.0]).unwrap(), vec![0.0]);
        assert_eq!(loss_gradient(&[5.0], &[3.0]).unwrap(), vec![4.0]);
        assert!(loss_gradient(&[], &[]).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let preds = [1.3, 4.2, 2.9];
        let targets = [1.0, 5.0, 3.0];
        let mse = |p: &[f64]| -> f64 {
            p.iter()
                .zip(&targets)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / p.len() as f64
        };
        let grad = loss_gradient(&preds, &targets).unwrap();
        let h = 1e-5;
        for i in 0..preds.len() {
            let mut plus = preds;
            let mut minus = preds;
            plus[i] += h;
            minus[i] -= h;
            let numeric = (mse(&plus) - mse(&minus)) / (2.0 * h);
            assert!((numeric - grad[i]).abs() < 1e-8, "{numeric} vs {}", grad[i]);
        }
    }

    fn scalar_params(theta: f64) -> ModelParams {
        let mut p = ModelParams::zeros(1, 1, 1, 0, 0);
        p.node_emb[0] = theta;
        p
    }

    fn scalar_grad(g: f64) -> GradAccumulator {
        let mut acc = GradAccumulator::new(1, 1);
        acc.node_emb.insert(0, vec![g]);
        acc
    }

    fn adam_cfg(lr: f64, wd: f64) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            weight_decay: wd,
            ..Default::default()
        }
    }

    #[test]
    fn adam_zero_gradient_no_decay() {
        let mut p = ModelParams::init(
            &ModelConfig {
                dim: 2,
                ..Default::default()
            },
            2,
            2,
            3,
            1,
        )
        .unwrap();
        let before = p.clone();
        let mut state = AdamState::new(&p);
        let mut grads = GradAccumulator::new(2, 1);
        grads.node_emb.insert(1, vec![0.0, 0.0]);
        grads.layer_w[0] = Some(vec![0.0; 8]);
        adam_step(&mut p, &grads, &mut state, &adam_cfg(0.1, 0.0)).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step() {
        let mut p = scalar_params(1.0);
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &scalar_grad(1.0), &mut state, &adam_cfg(0.1, 0.0)).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps)
        assert!((p.node_emb[0] - 0.9).abs() < 1e-7);
        assert!((p.node_emb[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn adam_decay_only() {
        let mut p = scalar_params(1.0);
        let mut state = AdamState::new(&p);
        adam_step(
            &mut p,
            &scalar_grad(0.0),
            &mut state,
            &adam_cfg(0.1, 0.0001),
        )
        .unwrap();
        assert!((p.node_emb[0] - 0.99999).abs() < 1e-15);
    }

    #[test]
    fn adam_sparse_rows_untouched() {
        let cfg = ModelConfig {
            dim: 2,
            ..Default::default()
        };
        let mut p = ModelParams::init(&cfg, 2, 2, 3, 1).unwrap();
        let before = p.clone();
        let mut state = AdamState::new(&p);
        let mut grads = GradAccumulator::new(2, 1);
        grads.node_emb.insert(2, vec![0.5, -0.5]);
        adam_step(&mut p, &grads, &mut state, &adam_cfg(0.1, 0.01)).unwrap();
        assert_eq!(p.node(NodeId(0)), before.node(NodeId(0)));
        assert_eq!(p.node(NodeId(3)), before.node(NodeId(3)));
        assert_ne!(p.node(NodeId(2)), before.node(NodeId(2)));
        assert_eq!(p.layer_w, before.layer_w);
        assert_eq!(state.first.node(NodeId(0)), &[0.0, 0.0]);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = scalar_params(1.0);
        let mut state = AdamState::new(&p);
        let err = adam_step(
            &mut p,
            &scalar_grad(f64::NAN),
            &mut state,
            &adam_cfg(0.1, 0.0),
        )
        .unwrap_err();
        assert_eq!(
            err.to_string(),
            format!(
                "non-finite gradient in parameter group {}",
                ParamGroup::NodeEmb.name()
            )
        );
        assert_eq!(p.node_emb[0], 1.0);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn early_stopping_trace() {
        let seq = [1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99];
        let mut es = EarlyStopping::new(5);
        let mut stopped_at = None;
        for (i, &v) in seq.iter().enumerate() {
            if es.observe(i + 1, v).stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(7));
        assert_eq!(es.best_epoch(), 2);
        assert_eq!(es.best(), 0.9);
    }

    #[test]
    fn early_stopping_ties_consume_patience() {
        let mut es = EarlyStopping::new(2);
        assert!(es.observe(1, 1.0).improved);
        assert!(!es.observe(2, 1.0).improved);
        assert!(es.observe(3, 1.0).stop);
    }

    #[test]
    fn metric_examples() {
        let r = metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((r.rmse, r.mae, r.count), (0.0, 0.0, 2));
        let r = metrics(&[2.0, 2.0], &[3.0, 1.0]).unwrap();
        assert_eq!((r.rmse, r.mae), (1.0, 1.0));
        let r = metrics(&[3.0, 3.0], &[3.0, 5.0]).unwrap();
        assert!((r.rmse - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.mae, 1.0);
        assert!(metrics(&[], &[]).is_err());
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                adam_beta1: 1.0,
                ..Default::default()
            },
            TrainConfig {
                adam_eps: 0.0,
                ..Default::default()
            },
            TrainConfig {
                weight_decay: -1.0,
                ..Default::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    proptest! {
        #[test]
        fn mae_never_exceeds_rmse(res in prop::collection::vec(-10.0f64..10.0, 1..50)) {
            let preds = vec![0.0; res.len()];
            let r = metrics(&preds, &res).unwrap();
            prop_assert!(r.mae <= r.rmse * (1.0 + 1e-12) + 1e-300);
        }
    }
}
