//! Central finite-difference verification of the analytic backward pass.
//!
//! A tiny random graph is built, one stochastic forward pass fixes the
//! sampled neighbor sets, and every parameter coordinate is perturbed by
//! `±step` while replaying the frozen trace. Coordinates whose perturbation
//! flips any layer ReLU are skipped, since the finite difference straddles
//! a kink there.

use std::fmt;

use rand::Rng;

use crate::dataio::{filter_and_index, RatingRecord, Split, SplitInfo, TrustRecord};
use crate::error::Result;
use crate::hetgraph::{build_graph, HetGraph, NodeId};
use crate::model::{
    backward, forward, ForwardTrace, GradAccumulator, ModelConfig, ModelParams, ParamGroup,
};
use crate::seed;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so that near-zero gradients are
/// compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

pub struct Instance {
    pub graph: HetGraph,
    pub params: ModelParams,
    pub cfg: ModelConfig,
    pub user: NodeId,
    pub item: NodeId,
}

/// Random instance with `nodes` total nodes split between users and items.
pub fn random_instance(
    seed: u64,
    dim: usize,
    layers: usize,
    nodes: usize,
    cfg_flags: [bool; 3],
) -> Result<Instance> {
    let mut rng = seed::rng(seed);
    let nodes = nodes.max(2);
    let num_users = (nodes / 2).max(1);
    let num_items = nodes - num_users;
    let users: Vec<String> = (0..num_users).map(|u| format!("u{u}")).collect();
    let items: Vec<String> = (0..num_items).map(|i| format!("i{i}")).collect();

    let mut ratings = Vec::new();
    // every item rated at least once, then a few extra edges
    for item in &items {
        ratings.push(RatingRecord {
            user: users[rng.gen_range(0..num_users)].clone(),
            item: item.clone(),
            rating: rng.gen_range(1..=3),
        });
    }
    for _ in 0..nodes {
        ratings.push(RatingRecord {
            user: users[rng.gen_range(0..num_users)].clone(),
            item: items[rng.gen_range(0..num_items)].clone(),
            rating: rng.gen_range(1..=3),
        });
    }
    let mut trust = Vec::new();
    for u in 0..num_users {
        let other = if num_users > 1 {
            (u + 1) % num_users
        } else {
            u
        };
        trust.push(TrustRecord {
            src: users[u].clone(),
            dst: users[other].clone(),
        });
    }
    if num_users == 1 {
        // a social-only partner keeps the single rater linked
        trust.push(TrustRecord {
            src: users[0].clone(),
            dst: "friend".into(),
        });
    }
    let mut ds = filter_and_index(&ratings, &trust)?;
    ds.splits = Some(SplitInfo {
        seed,
        fractions: [1.0, 0.0, 0.0],
        assignment: vec![Split::Train; ds.ratings.len()],
    });
    let graph = build_graph(&ds, 0.5)?;

    let cfg = ModelConfig {
        dim,
        layers,
        gamma: 0.5,
        ablate_query: cfg_flags[0],
        ablate_sampling: cfg_flags[1],
        ablate_attention: cfg_flags[2],
        eval_deterministic: false,
    };
    let params = ModelParams::init(
        &cfg,
        graph.num_users(),
        graph.num_items(),
        graph.num_relations(),
        seed::derive(seed, &[1]),
    )?;
    let rating = &ds.ratings[rng.gen_range(0..ds.ratings.len())];
    let user = graph.user_node(rating.user);
    let item = graph.item_node(rng.gen_range(0..graph.num_items()));
    Ok(Instance {
        graph,
        params,
        cfg,
        user,
        item,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub group: ParamGroup,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub groups: Vec<GroupReport>,
}

impl Report {
    pub fn max_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn failing(&self, tolerance: f64) -> Vec<&GroupReport> {
        self.groups
            .iter()
            .filter(|g| g.max_rel_error > tolerance)
            .collect()
    }

    /// Combines reports group-wise, keeping the worst error.
    pub fn absorb(&mut self, other: Report) {
        for g in other.groups {
            match self.groups.iter_mut().find(|x| x.group == g.group) {
                Some(x) => {
                    x.max_rel_error = x.max_rel_error.max(g.max_rel_error);
                    x.checked += g.checked;
                    x.skipped += g.skipped;
                }
                None => self.groups.push(g),
            }
        }
        self.groups.sort_by_key(|g| g.group);
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>14} {:>8} {:>8}",
            "group", "max_rel_err", "checked", "skipped"
        )?;
        for g in &self.groups {
            writeln!(
                f,
                "{:<12} {:>14.3e} {:>8} {:>8}",
                g.group.name(),
                g.max_rel_error,
                g.checked,
                g.skipped
            )?;
        }
        Ok(())
    }
}

/// Compares `analytic` against central differences of the frozen trace.
pub fn compare(
    params: &ModelParams,
    cfg: &ModelConfig,
    trace: &ForwardTrace,
    analytic: &GradAccumulator,
    step: f64,
) -> Report {
    let dense = analytic.to_dense(params);
    let base = trace.replay(params, cfg);
    let mut perturbed = params.clone();
    let mut groups = Vec::new();
    for group in params.groups() {
        let mut report = GroupReport {
            group,
            max_rel_error: 0.0,
            checked: 0,
            skipped: 0,
        };
        for i in 0..params.group(group).len() {
            let orig = params.group(group)[i];
            perturbed.group_mut(group)[i] = orig + step;
            let plus = trace.replay(&perturbed, cfg);
            perturbed.group_mut(group)[i] = orig - step;
            let minus = trace.replay(&perturbed, cfg);
            perturbed.group_mut(group)[i] = orig;
            if plus.signs != base.signs || minus.signs != base.signs {
                report.skipped += 1;
                continue;
            }
            let numeric = (plus.prediction - minus.prediction) / (2.0 * step);
            let err = relative_error(dense.group(group)[i], numeric);
            report.max_rel_error = report.max_rel_error.max(err);
            report.checked += 1;
        }
        groups.push(report);
    }
    Report { groups }
}

#[derive(Clone, Debug)]
pub struct Options {
    pub step: f64,
    /// Adds a fixed offset to one analytic coordinate; negative control.
    pub corrupt: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            step: DEFAULT_STEP,
            corrupt: false,
        }
    }
}

/// Runs one instance: stochastic forward, analytic backward, frozen replay.
pub fn check_instance(inst: &Instance, seed: u64, opts: &Options) -> Result<Report> {
    let mut rng = seed::rng(seed);
    let trace = forward(
        &inst.params,
        &inst.cfg,
        &inst.graph,
        inst.user,
        inst.item,
        &mut rng,
    )?;
    let mut grads = backward(&inst.params, &inst.cfg, &trace, 1.0)?;
    if opts.corrupt {
        if let Some(w) = grads.layer_w[0].as_mut() {
            w[0] += 1e-2;
        }
    }
    Ok(compare(&inst.params, &inst.cfg, &trace, &grads, opts.step))
}

/// Ablation flags (query, sampling, attention) for combination `k` of 8.
pub fn flag_combination(k: usize) -> [bool; 3] {
    [k & 1 != 0, k & 2 != 0, k & 4 != 0]
}

/// The standard suite: `count` instances cycling through every ablation
/// combination, `d` in {2, 3, 4}, `L` in {1, 2} and at most six nodes.
pub fn run_suite(count: usize, seed: u64, opts: &Options) -> Result<Report> {
    let mut total = Report { groups: Vec::new() };
    for i in 0..count {
        let flags = flag_combination(i % 8);
        let dim = 2 + i % 3;
        let layers = 1 + (i / 8) % 2;
        let nodes = 4 + i % 3;
        let inst_seed = seed::derive(seed, &[i as u64]);
        let inst = random_instance(inst_seed, dim, layers, nodes, flags)?;
        total.absorb(check_instance(&inst, seed::derive(inst_seed, &[2]), opts)?);
    }
    Ok(total)
}
