//! Hand-derived backward pass.
//!
//! Sampled neighbor sets and sampling probabilities are constants: no
//! gradient reaches the query or the consistency scores, so the query map
//! receives an all-zero gradient. ReLU has derivative 0 at 0.

use std::collections::{BTreeMap, HashMap};

use super::{concat, dot, ForwardTrace, ModelConfig, ModelParams, ParamGroup};
use crate::error::{Error, Result};
use crate::hetgraph::NodeId;

/// Sparse gradient buffers. Embedding gradients are kept per touched row;
/// dense groups are `None` when the trace did not touch them.
#[derive(Clone, Debug, PartialEq)]
pub struct GradAccumulator {
    pub dim: usize,
    pub node_emb: BTreeMap<usize, Vec<f64>>,
    pub rel_emb: BTreeMap<usize, Vec<f64>>,
    pub query_w: Option<Vec<f64>>,
    pub layer_w: Vec<Option<Vec<f64>>>,
    pub att_w: Option<Vec<f64>>,
}

fn add_into(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

fn merge_dense(dst: &mut Option<Vec<f64>>, src: &Option<Vec<f64>>) {
    if let Some(src) = src {
        match dst {
            Some(d) => add_into(d, src, 1.0),
            None => *dst = Some(src.clone()),
        }
    }
}

impl GradAccumulator {
    pub fn new(dim: usize, layers: usize) -> Self {
        GradAccumulator {
            dim,
            node_emb: BTreeMap::new(),
            rel_emb: BTreeMap::new(),
            query_w: None,
            layer_w: vec![None; layers],
            att_w: None,
        }
    }

    fn node_row(&mut self, v: NodeId) -> &mut Vec<f64> {
        let d = self.dim;
        self.node_emb.entry(v.0).or_insert_with(|| vec![0.0; d])
    }

    /// Adds `other` into `self`, touching the union of both.
    pub fn merge(&mut self, other: &GradAccumulator) {
        for (&v, g) in &other.node_emb {
            let d = self.dim;
            add_into(
                self.node_emb.entry(v).or_insert_with(|| vec![0.0; d]),
                g,
                1.0,
            );
        }
        for (&r, g) in &other.rel_emb {
            let d = self.dim;
            add_into(
                self.rel_emb.entry(r).or_insert_with(|| vec![0.0; d]),
                g,
                1.0,
            );
        }
        merge_dense(&mut self.query_w, &other.query_w);
        for (dst, src) in self.layer_w.iter_mut().zip(&other.layer_w) {
            merge_dense(dst, src);
        }
        merge_dense(&mut self.att_w, &other.att_w);
    }

    /// Touched gradient slices as `(group, offset into the group, values)`.
    pub fn slices(&self) -> Vec<(ParamGroup, usize, &[f64])> {
        let d = self.dim;
        let mut out: Vec<(ParamGroup, usize, &[f64])> = Vec::new();
        out.extend(
            self.node_emb
                .iter()
                .map(|(&v, g)| (ParamGroup::NodeEmb, v * d, g.as_slice())),
        );
        out.extend(
            self.rel_emb
                .iter()
                .map(|(&r, g)| (ParamGroup::RelEmb, r * d, g.as_slice())),
        );
        if let Some(g) = &self.query_w {
            out.push((ParamGroup::QueryW, 0, g));
        }
        for (l, g) in self.layer_w.iter().enumerate() {
            if let Some(g) = g {
                out.push((ParamGroup::LayerW(l), 0, g));
            }
        }
        if let Some(g) = &self.att_w {
            out.push((ParamGroup::AttW, 0, g));
        }
        out
    }

    /// Dense copy shaped like `params`, zeros where untouched.
    pub fn to_dense(&self, params: &ModelParams) -> ModelParams {
        let mut dense = ModelParams::zeros_like(params);
        for (group, offset, g) in self.slices() {
            dense.group_mut(group)[offset..offset + g.len()].copy_from_slice(g);
        }
        dense
    }

    pub fn is_zero(&self) -> bool {
        self.slices()
            .iter()
            .all(|(_, _, g)| g.iter().all(|&x| x == 0.0))
    }
}

/// Routes a hidden-state gradient either to the embedding table (layer 0)
/// or to the pending gradient of a computed step.
fn push(
    grads: &mut GradAccumulator,
    dh: &mut HashMap<(NodeId, usize), Vec<f64>>,
    v: NodeId,
    layer: usize,
    g: &[f64],
    scale: f64,
) {
    if layer == 0 {
        add_into(grads.node_row(v), g, scale);
    } else {
        let d = grads.dim;
        add_into(
            dh.entry((v, layer)).or_insert_with(|| vec![0.0; d]),
            g,
            scale,
        );
    }
}

/// Gradients of `upstream * prediction` with respect to every parameter the
/// trace touched.
pub fn backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    trace: &ForwardTrace,
    upstream: f64,
) -> Result<GradAccumulator> {
    let d = params.dim;
    if trace.dim != d || trace.layers != params.layers() || trace.layers != cfg.layers {
        return Err(Error::contract(format!(
            "trace (d={}, L={}) does not match parameters (d={d}, L={})",
            trace.dim,
            trace.layers,
            params.layers()
        )));
    }
    let top = trace.layers;
    let mut grads = GradAccumulator::new(d, top);
    for g in &mut grads.layer_w {
        *g = Some(vec![0.0; 2 * d * d]);
    }
    if !cfg.ablate_query {
        grads.query_w = Some(vec![0.0; 2 * d * d]);
    }
    if !cfg.ablate_attention {
        grads.att_w = Some(vec![0.0; 2 * d]);
    }

    let mut dh: HashMap<(NodeId, usize), Vec<f64>> = HashMap::new();

    let h_user = trace.hidden(params, trace.user, top).to_vec();
    let h_item = trace.hidden(params, trace.item, top).to_vec();
    push(&mut grads, &mut dh, trace.user, top, &h_item, upstream);
    push(&mut grads, &mut dh, trace.item, top, &h_user, upstream);

    let (w_att_h, w_att_r) = params.att_w.split_at(d);
    for step in trace.steps.iter().rev() {
        let Some(g_hidden) = dh.remove(&(step.node, step.layer)) else {
            continue;
        };
        let l = step.layer;
        let dpre: Vec<f64> = g_hidden
            .iter()
            .zip(&step.pre)
            .map(|(g, &p)| if p > 0.0 { *g } else { 0.0 })
            .collect();

        let h_prev = trace.hidden(params, step.node, l - 1);
        let z = concat(h_prev, &step.agg);
        let w = &params.layer_w[l - 1];
        let gw = grads.layer_w[l - 1]
            .as_mut()
            .expect("layer gradients allocated");
        let mut dz = vec![0.0; 2 * d];
        for (i, &zi) in z.iter().enumerate() {
            let row = &w[i * d..(i + 1) * d];
            let grow = &mut gw[i * d..(i + 1) * d];
            for j in 0..d {
                grow[j] += zi * dpre[j];
            }
            dz[i] = dot(row, &dpre);
        }
        push(&mut grads, &mut dh, step.node, l - 1, &dz[..d], 1.0);
        let dagg = &dz[d..];

        let embs: Vec<&[f64]> = step
            .sampled
            .iter()
            .map(|&(c, _)| trace.hidden(params, c, l - 1))
            .collect();
        let dalpha: Vec<f64> = embs.iter().map(|h| dot(dagg, h)).collect();
        for (k, &(c, _)) in step.sampled.iter().enumerate() {
            push(&mut grads, &mut dh, c, l - 1, dagg, step.alphas[k]);
        }

        if cfg.ablate_attention || step.sampled.is_empty() {
            continue;
        }
        // softmax Jacobian: ds_k = alpha_k (dalpha_k - sum_j alpha_j dalpha_j)
        let mean: f64 = step.alphas.iter().zip(&dalpha).map(|(a, g)| a * g).sum();
        for (k, &(c, r)) in step.sampled.iter().enumerate() {
            let ds = step.alphas[k] * (dalpha[k] - mean);
            let ga = grads.att_w.as_mut().expect("attention gradient allocated");
            add_into(&mut ga[..d], embs[k], ds);
            add_into(&mut ga[d..], params.relation(r), ds);
            push(&mut grads, &mut dh, c, l - 1, w_att_h, ds);
            let row = grads.rel_emb.entry(r.0).or_insert_with(|| vec![0.0; d]);
            add_into(row, w_att_r, ds);
        }
    }
    Ok(grads)
}
