//! Forward pass: query construction, consistency-scored neighbor sampling,
//! relation attention, layer aggregation and the inner-product prediction.

use std::collections::HashMap;

use rand::Rng;

use super::{concat, dot, matvec_t, relu, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::hetgraph::{HetGraph, NodeId, NodeKind, RelationId};
use crate::seed;

/// Builds the query shared by both sides of a (user, item) pair.
///
/// Returns `(pre_activation, query)`; the pre-activation is `None` when the
/// query layer is ablated and the user embedding is used directly.
pub fn build_query(
    params: &ModelParams,
    cfg: &ModelConfig,
    u: NodeId,
    t: NodeId,
) -> Result<(Option<Vec<f64>>, Vec<f64>)> {
    for v in [u, t] {
        if v.0 >= params.num_nodes() {
            return Err(Error::Lookup {
                index: v.0,
                len: params.num_nodes(),
            });
        }
    }
    if params.node_kind(u) != NodeKind::User || params.node_kind(t) != NodeKind::Item {
        return Err(Error::contract(format!(
            "query expects (user, item), got ({:?}, {:?})",
            params.node_kind(u),
            params.node_kind(t)
        )));
    }
    if cfg.ablate_query {
        return Ok((None, params.node(u).to_vec()));
    }
    let x = concat(params.node(u), params.node(t));
    let pre = matvec_t(&params.query_w, &x, params.dim);
    let q = relu(&pre);
    Ok((Some(pre), q))
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Consistency scores `exp(-||q - h_i||^2)` kept in shifted form.
///
/// `shifted[i] = exp(-(sq_dist[i] - min_dist))`, so the largest shifted
/// score is exactly 1 and the raw score is `shifted[i] * exp(-min_dist)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyScores {
    pub sq_dist: Vec<f64>,
    pub min_dist: f64,
    pub shifted: Vec<f64>,
}

impl ConsistencyScores {
    pub fn raw(&self) -> Vec<f64> {
        let scale = (-self.min_dist).exp();
        self.shifted.iter().map(|s| s * scale).collect()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.shifted.iter().sum();
        self.shifted.iter().map(|s| s / total).collect()
    }
}

pub fn consistency_scores(query: &[f64], cand_embs: &[&[f64]]) -> ConsistencyScores {
    let sq_dist: Vec<f64> = cand_embs
        .iter()
        .map(|h| squared_distance(query, h))
        .collect();
    let min_dist = sq_dist.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted = sq_dist.iter().map(|d| (-(d - min_dist)).exp()).collect();
    ConsistencyScores {
        sq_dist,
        min_dist,
        shifted,
    }
}

/// Softmax of `-sq_dist`, i.e. consistency scores normalised over the full
/// candidate set.
pub fn sampling_probabilities(sq_dist: &[f64]) -> Vec<f64> {
    if sq_dist.is_empty() {
        return Vec::new();
    }
    let min = sq_dist.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = sq_dist.iter().map(|d| (-(d - min)).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Number of neighbors drawn for a node of the given degree:
/// `min(deg, max(1, ceil(gamma * deg)))`, zero for isolated nodes.
pub fn sample_count(degree: usize, gamma: f64) -> usize {
    if degree == 0 {
        return 0;
    }
    // the slack absorbs products like 0.6 * 5 landing just above an integer
    let q = (gamma * degree as f64 - 1e-9).ceil().max(1.0) as usize;
    q.min(degree)
}

/// Outcome of sampling one node's neighborhood. `chosen` holds ascending
/// positions into the candidate list.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampling {
    pub probs: Vec<f64>,
    pub chosen: Vec<usize>,
}

fn weighted_draws<R: Rng + ?Sized>(probs: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let mut weights = probs.to_vec();
    let mut taken = vec![false; probs.len()];
    let mut chosen = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 && total.is_finite() {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in weights.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every remaining weight underflowed; fall back to uniform
            let remaining: Vec<usize> = (0..probs.len()).filter(|&i| !taken[i]).collect();
            remaining[rng.gen_range(0..remaining.len())]
        };
        taken[pick] = true;
        weights[pick] = 0.0;
        chosen.push(pick);
    }
    chosen.sort_unstable();
    chosen
}

/// Selects neighbors of one node for one layer.
///
/// Probabilities are the consistency scores normalised over every
/// candidate. Training draws `sample_count` candidates without replacement
/// by sequential weighted draws; evaluation mode takes the top-scoring
/// candidates (ties by ascending node index); the sampling ablation keeps
/// every candidate. The generator is only consulted in training mode.
pub fn sample_neighbors<R: Rng + ?Sized>(
    candidates: &[(NodeId, RelationId)],
    cand_embs: &[&[f64]],
    query: &[f64],
    cfg: &ModelConfig,
    rng: &mut R,
) -> Sampling {
    debug_assert_eq!(candidates.len(), cand_embs.len());
    let scores = consistency_scores(query, cand_embs);
    let probs = sampling_probabilities(&scores.sq_dist);
    let deg = candidates.len();
    let chosen = if cfg.ablate_sampling {
        (0..deg).collect()
    } else {
        let q = sample_count(deg, cfg.gamma);
        if q == deg {
            (0..deg).collect()
        } else if cfg.eval_deterministic {
            let mut order: Vec<usize> = (0..deg).collect();
            order.sort_by(|&a, &b| {
                scores.sq_dist[a]
                    .total_cmp(&scores.sq_dist[b])
                    .then(candidates[a].0.cmp(&candidates[b].0))
            });
            order.truncate(q);
            order.sort_unstable();
            order
        } else {
            weighted_draws(&probs, q, rng)
        }
    };
    Sampling { probs, chosen }
}

/// Softmax over `w_att^T (h_i ++ e_{r_i})`; uniform under the attention
/// ablation.
pub fn relation_attention(
    params: &ModelParams,
    cfg: &ModelConfig,
    neigh_embs: &[&[f64]],
    neigh_rels: &[RelationId],
) -> Vec<f64> {
    let q = neigh_embs.len();
    if q == 0 {
        return Vec::new();
    }
    if cfg.ablate_attention {
        return vec![1.0 / q as f64; q];
    }
    let d = params.dim;
    let (w_h, w_r) = params.att_w.split_at(d);
    let logits: Vec<f64> = neigh_embs
        .iter()
        .zip(neigh_rels)
        .map(|(h, &r)| dot(w_h, h) + dot(w_r, params.relation(r)))
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerOutput {
    pub agg: Vec<f64>,
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// `h = ReLU(W^T (h_prev ++ sum_i alpha_i h_i))` for zero-based `layer`.
pub fn aggregate_layer(
    params: &ModelParams,
    layer: usize,
    h_prev: &[f64],
    neigh_embs: &[&[f64]],
    alphas: &[f64],
) -> Result<LayerOutput> {
    let d = params.dim;
    let w = params
        .layer_w
        .get(layer)
        .ok_or_else(|| Error::contract(format!("no layer {}", layer + 1)))?;
    if h_prev.len() != d
        || neigh_embs.len() != alphas.len()
        || neigh_embs.iter().any(|h| h.len() != d)
    {
        return Err(Error::contract("aggregate_layer: shape mismatch"));
    }
    let mut agg = vec![0.0; d];
    for (h, &a) in neigh_embs.iter().zip(alphas) {
        for (o, x) in agg.iter_mut().zip(h.iter()) {
            *o += a * x;
        }
    }
    let pre = matvec_t(w, &concat(h_prev, &agg), d);
    let hidden = relu(&pre);
    Ok(LayerOutput { agg, pre, hidden })
}

/// One computed `(node, layer)` hidden state, `layer >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStep {
    pub node: NodeId,
    pub layer: usize,
    /// Sampling probabilities over the node's full candidate list.
    pub probs: Vec<f64>,
    pub sampled: Vec<(NodeId, RelationId)>,
    pub alphas: Vec<f64>,
    pub agg: Vec<f64>,
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Everything the backward pass needs from one forward call.
///
/// `steps` is in completion order: every step appears after the steps it
/// reads from.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub user: NodeId,
    pub item: NodeId,
    pub dim: usize,
    pub layers: usize,
    pub query_pre: Option<Vec<f64>>,
    pub query: Vec<f64>,
    pub steps: Vec<LayerStep>,
    index: HashMap<(NodeId, usize), usize>,
    pub prediction: f64,
}

fn hidden_in<'a>(
    params: &'a ModelParams,
    steps: &'a [LayerStep],
    index: &HashMap<(NodeId, usize), usize>,
    v: NodeId,
    layer: usize,
) -> &'a [f64] {
    if layer == 0 {
        params.node(v)
    } else {
        &steps[index[&(v, layer)]].hidden
    }
}

impl ForwardTrace {
    pub fn step(&self, v: NodeId, layer: usize) -> Option<&LayerStep> {
        self.index.get(&(v, layer)).map(|&i| &self.steps[i])
    }

    /// `h_v^(layer)`; layer 0 reads the embedding table.
    pub fn hidden<'a>(&'a self, params: &'a ModelParams, v: NodeId, layer: usize) -> &'a [f64] {
        hidden_in(params, &self.steps, &self.index, v, layer)
    }

    /// Recomputes the prediction under `params` with every sampled
    /// neighbor set frozen. Also returns the smallest |pre-activation| over
    /// all layer ReLUs, and their sign pattern.
    pub fn replay(&self, params: &ModelParams, cfg: &ModelConfig) -> Replay {
        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(self.steps.len());
        let mut signs = Vec::new();
        let mut min_abs_pre = f64::INFINITY;
        for step in &self.steps {
            let lookup = |v: NodeId, l: usize| -> &[f64] {
                if l == 0 {
                    params.node(v)
                } else {
                    &hidden[self.index[&(v, l)]]
                }
            };
            let embs: Vec<&[f64]> = step
                .sampled
                .iter()
                .map(|&(c, _)| lookup(c, step.layer - 1))
                .collect();
            let rels: Vec<RelationId> = step.sampled.iter().map(|&(_, r)| r).collect();
            let alphas = relation_attention(params, cfg, &embs, &rels);
            let out = aggregate_layer(
                params,
                step.layer - 1,
                lookup(step.node, step.layer - 1),
                &embs,
                &alphas,
            )
            .expect("trace shapes match params");
            for &p in &out.pre {
                min_abs_pre = min_abs_pre.min(p.abs());
                signs.push(p > 0.0);
            }
            hidden.push(out.hidden);
        }
        let top = |v: NodeId| -> &[f64] {
            if self.layers == 0 {
                params.node(v)
            } else {
                &hidden[self.index[&(v, self.layers)]]
            }
        };
        Replay {
            prediction: dot(top(self.user), top(self.item)),
            min_abs_pre,
            signs,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub prediction: f64,
    pub min_abs_pre: f64,
    pub signs: Vec<bool>,
}

struct Pass<'a, R: ?Sized> {
    params: &'a ModelParams,
    cfg: &'a ModelConfig,
    g: &'a HetGraph,
    query: Vec<f64>,
    rng: &'a mut R,
    steps: Vec<LayerStep>,
    index: HashMap<(NodeId, usize), usize>,
}

impl<R: Rng + ?Sized> Pass<'_, R> {
    fn ensure(&mut self, v: NodeId, layer: usize) -> Result<()> {
        if layer == 0 || self.index.contains_key(&(v, layer)) {
            return Ok(());
        }
        let g = self.g;
        let candidates = g.adj(v);
        for &(c, _) in candidates {
            self.ensure(c, layer - 1)?;
        }
        self.ensure(v, layer - 1)?;

        let Pass {
            params,
            cfg,
            query,
            rng,
            steps,
            index,
            ..
        } = self;
        let cand_embs: Vec<&[f64]> = candidates
            .iter()
            .map(|&(c, _)| hidden_in(params, steps, index, c, layer - 1))
            .collect();
        let sampling = sample_neighbors(candidates, &cand_embs, query, cfg, &mut **rng);
        let sampled: Vec<(NodeId, RelationId)> =
            sampling.chosen.iter().map(|&p| candidates[p]).collect();
        let embs: Vec<&[f64]> = sampling.chosen.iter().map(|&p| cand_embs[p]).collect();
        let rels: Vec<RelationId> = sampled.iter().map(|&(_, r)| r).collect();
        let alphas = relation_attention(params, cfg, &embs, &rels);
        let out = aggregate_layer(
            params,
            layer - 1,
            hidden_in(params, steps, index, v, layer - 1),
            &embs,
            &alphas,
        )?;
        let step = LayerStep {
            node: v,
            layer,
            probs: sampling.probs,
            sampled,
            alphas,
            agg: out.agg,
            pre: out.pre,
            hidden: out.hidden,
        };
        index.insert((v, layer), steps.len());
        steps.push(step);
        Ok(())
    }
}

/// Runs the model on one (user, item) pair and records a trace.
///
/// Hidden states are memoised per (node, layer) within the call, so a node
/// reached from both sides is computed (and sampled) once.
pub fn forward<R: Rng + ?Sized>(
    params: &ModelParams,
    cfg: &ModelConfig,
    g: &HetGraph,
    u: NodeId,
    t: NodeId,
    rng: &mut R,
) -> Result<ForwardTrace> {
    g.check(u)?;
    g.check(t)?;
    params.check_shape(g.num_users(), g.num_items(), g.num_relations())?;
    if params.layers() != cfg.layers || params.dim != cfg.dim {
        return Err(Error::contract(format!(
            "config (d={}, L={}) does not match parameters (d={}, L={})",
            cfg.dim,
            cfg.layers,
            params.dim,
            params.layers()
        )));
    }
    let (query_pre, query) = build_query(params, cfg, u, t)?;
    let mut pass = Pass {
        params,
        cfg,
        g,
        query,
        rng,
        steps: Vec::new(),
        index: HashMap::new(),
    };
    pass.ensure(u, cfg.layers)?;
    pass.ensure(t, cfg.layers)?;
    let Pass {
        query,
        steps,
        index,
        ..
    } = pass;
    let prediction = dot(
        hidden_in(params, &steps, &index, u, cfg.layers),
        hidden_in(params, &steps, &index, t, cfg.layers),
    );
    Ok(ForwardTrace {
        user: u,
        item: t,
        dim: params.dim,
        layers: cfg.layers,
        query_pre,
        query,
        steps,
        index,
        prediction,
    })
}

/// Deterministic-mode prediction; unclipped.
pub fn predict_rating(
    params: &ModelParams,
    cfg: &ModelConfig,
    g: &HetGraph,
    u: NodeId,
    t: NodeId,
) -> Result<f64> {
    // evaluation mode never draws from the generator
    let mut rng = seed::rng(0);
    Ok(forward(params, &cfg.for_eval(), g, u, t, &mut rng)?.prediction)
}
