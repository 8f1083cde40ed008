//! Model parameters, configuration and the forward/backward passes.

mod backward;
mod checkpoint;
mod forward;

use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::{NodeId, NodeKind, RelationId};
use crate::seed;

pub use backward::{backward, GradAccumulator};
pub use checkpoint::{load_checkpoint, save_checkpoint, CONFIG_FILE, PARAMS_FILE};
pub use forward::{
    aggregate_layer, build_query, consistency_scores, forward, predict_rating, relation_attention,
    sample_count, sample_neighbors, sampling_probabilities, squared_distance, ConsistencyScores,
    ForwardTrace, LayerOutput, LayerStep, Replay, Sampling,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding size `d`.
    pub dim: usize,
    /// Number of aggregation layers `L`.
    pub layers: usize,
    /// Fraction of each node's neighbors sampled per layer.
    pub gamma: f64,
    /// Variant A: use the user embedding as the query.
    pub ablate_query: bool,
    /// Variant B: aggregate every neighbor.
    pub ablate_sampling: bool,
    /// Variant C: uniform attention weights.
    pub ablate_attention: bool,
    /// Select the top-scoring neighbors instead of sampling.
    pub eval_deterministic: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 16,
            layers: 1,
            gamma: 0.8,
            ablate_query: false,
            ablate_sampling: false,
            ablate_attention: false,
            eval_deterministic: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dim must be at least 1"));
        }
        if self.layers == 0 {
            return Err(Error::config("layers must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma must be in [0,1]"));
        }
        Ok(())
    }

    pub fn for_eval(&self) -> ModelConfig {
        ModelConfig {
            eval_deterministic: true,
            ..self.clone()
        }
    }
}

/// Identifies one trainable tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    NodeEmb,
    RelEmb,
    QueryW,
    /// Zero-based layer index.
    LayerW(usize),
    AttW,
}

impl ParamGroup {
    pub fn name(&self) -> String {
        match self {
            ParamGroup::NodeEmb => "node_emb".into(),
            ParamGroup::RelEmb => "rel_emb".into(),
            ParamGroup::QueryW => "w_query".into(),
            ParamGroup::LayerW(l) => format!("w_layer[{}]", l + 1),
            ParamGroup::AttW => "w_att".into(),
        }
    }
}

/// All trainable tensors.
///
/// Embeddings are stored node-major (`node_emb[v * d..(v + 1) * d]` is the
/// embedding of node `v`); weight matrices are `2d x d` row-major and map a
/// concatenated `2d` input `x` to `W^T x`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dim: usize,
    pub num_users: usize,
    pub num_items: usize,
    pub num_relations: usize,
    pub node_emb: Vec<f64>,
    pub rel_emb: Vec<f64>,
    pub query_w: Vec<f64>,
    pub layer_w: Vec<Vec<f64>>,
    pub att_w: Vec<f64>,
}

fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ModelParams {
    pub fn zeros(
        dim: usize,
        layers: usize,
        num_users: usize,
        num_items: usize,
        num_relations: usize,
    ) -> Self {
        let nodes = num_users + num_items;
        ModelParams {
            dim,
            num_users,
            num_items,
            num_relations,
            node_emb: vec![0.0; nodes * dim],
            rel_emb: vec![0.0; num_relations * dim],
            query_w: vec![0.0; 2 * dim * dim],
            layer_w: vec![vec![0.0; 2 * dim * dim]; layers],
            att_w: vec![0.0; 2 * dim],
        }
    }

    pub fn zeros_like(other: &ModelParams) -> Self {
        Self::zeros(
            other.dim,
            other.layers(),
            other.num_users,
            other.num_items,
            other.num_relations,
        )
    }

    /// Uniform Glorot initialisation; deterministic in `seed`.
    pub fn init(
        cfg: &ModelConfig,
        num_users: usize,
        num_items: usize,
        num_relations: usize,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let mut p = Self::zeros(d, cfg.layers, num_users, num_items, num_relations);
        let mut rng = seed::rng(seed);
        let mut fill = |buf: &mut [f64], bound: f64| {
            let dist = Uniform::new_inclusive(-bound, bound);
            for x in buf.iter_mut() {
                *x = dist.sample(&mut rng);
            }
        };
        fill(&mut p.node_emb, glorot_bound(d, d));
        fill(&mut p.rel_emb, glorot_bound(d, d));
        fill(&mut p.query_w, glorot_bound(2 * d, d));
        for w in &mut p.layer_w {
            fill(w, glorot_bound(2 * d, d));
        }
        fill(&mut p.att_w, glorot_bound(2 * d, 1));
        Ok(p)
    }

    pub fn layers(&self) -> usize {
        self.layer_w.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn node_kind(&self, v: NodeId) -> NodeKind {
        if v.0 < self.num_users {
            NodeKind::User
        } else {
            NodeKind::Item
        }
    }

    pub fn node(&self, v: NodeId) -> &[f64] {
        &self.node_emb[v.0 * self.dim..(v.0 + 1) * self.dim]
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        &self.rel_emb[r.0 * self.dim..(r.0 + 1) * self.dim]
    }

    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut g = vec![ParamGroup::NodeEmb, ParamGroup::RelEmb, ParamGroup::QueryW];
        g.extend((0..self.layers()).map(ParamGroup::LayerW));
        g.push(ParamGroup::AttW);
        g
    }

    pub fn group(&self, g: ParamGroup) -> &[f64] {
        match g {
            ParamGroup::NodeEmb => &self.node_emb,
            ParamGroup::RelEmb => &self.rel_emb,
            ParamGroup::QueryW => &self.query_w,
            ParamGroup::LayerW(l) => &self.layer_w[l],
            ParamGroup::AttW => &self.att_w,
        }
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        match g {
            ParamGroup::NodeEmb => &mut self.node_emb,
            ParamGroup::RelEmb => &mut self.rel_emb,
            ParamGroup::QueryW => &mut self.query_w,
            ParamGroup::LayerW(l) => &mut self.layer_w[l],
            ParamGroup::AttW => &mut self.att_w,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.groups()
            .into_iter()
            .all(|g| self.group(g).iter().all(|x| x.is_finite()))
    }

    /// Checks that this parameter set fits a graph with the given shape.
    pub fn check_shape(
        &self,
        num_users: usize,
        num_items: usize,
        num_relations: usize,
    ) -> Result<()> {
        if self.num_users != num_users
            || self.num_items != num_items
            || self.num_relations != num_relations
        {
            return Err(Error::contract(format!(
                "parameters sized for m={}, n={}, R={} but graph has m={num_users}, n={num_items}, R={num_relations}",
                self.num_users, self.num_items, self.num_relations
            )));
        }
        Ok(())
    }
}

/// `W^T x` for a row-major `rows x cols` matrix.
pub(crate) fn matvec_t(w: &[f64], x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, &xi) in w.chunks_exact(cols).zip(x) {
        if xi != 0.0 {
            for (o, &wij) in out.iter_mut().zip(row) {
                *o += wij * xi;
            }
        }
    }
    out
}

pub(crate) fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}
