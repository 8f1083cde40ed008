//! Heterogeneous user/item graph with one relation per rating level plus a
//! social and an item-item relation, stored as CSR adjacency.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dataio::{Dataset, Split};
use crate::error::{Error, Result};

/// Dense node index. Users occupy `[0, m)`, items `[m, m + n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    User,
    Item,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelationKind {
    Rating(i64),
    Social,
    ItemItem,
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationKind::Rating(v) => write!(f, "rating={v}"),
            RelationKind::Social => f.write_str("social"),
            RelationKind::ItemItem => f.write_str("item-item"),
        }
    }
}

pub const DEFAULT_ITEM_LINK_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct HetGraph {
    num_users: usize,
    num_items: usize,
    /// Index `r` describes relation `RelationId(r)`: rating levels in
    /// ascending order, then social, then item-item.
    relations: Vec<RelationKind>,
    offsets: Vec<usize>,
    edges: Vec<(NodeId, RelationId)>,
}

impl HetGraph {
    /// Builds a graph from explicit per-node adjacency. Lists are sorted by
    /// (relation, neighbor) and deduplicated; symmetry and kind constraints
    /// are validated.
    pub fn from_adjacency(
        num_users: usize,
        num_items: usize,
        relations: Vec<RelationKind>,
        mut adjacency: Vec<Vec<(NodeId, RelationId)>>,
    ) -> Result<Self> {
        let total = num_users + num_items;
        if adjacency.len() != total {
            return Err(Error::contract(format!(
                "adjacency has {} lists for {total} nodes",
                adjacency.len()
            )));
        }
        let mut offsets = Vec::with_capacity(total + 1);
        let mut edges = Vec::new();
        offsets.push(0);
        for list in &mut adjacency {
            list.sort_by_key(|&(w, r)| (r, w));
            list.dedup();
            edges.extend_from_slice(list);
            offsets.push(edges.len());
        }
        let g = HetGraph {
            num_users,
            num_items,
            relations,
            offsets,
            edges,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        for v in 0..self.num_nodes() {
            let v = NodeId(v);
            for &(w, r) in self.adj(v) {
                if w.0 >= self.num_nodes() || r.0 >= self.relations.len() {
                    return Err(Error::contract(format!("edge {v:?}->{w:?} out of range")));
                }
                if !self.kinds_allowed(v, w, r) {
                    return Err(Error::contract(format!(
                        "edge {v:?}->{w:?} violates kind constraint of {}",
                        self.relations[r.0]
                    )));
                }
                if self
                    .adj(w)
                    .binary_search_by_key(&(r, v), |&(x, s)| (s, x))
                    .is_err()
                {
                    return Err(Error::contract(format!(
                        "edge {v:?}->{w:?} is not symmetric"
                    )));
                }
            }
        }
        Ok(())
    }

    fn kinds_allowed(&self, v: NodeId, w: NodeId, r: RelationId) -> bool {
        match (self.relations[r.0], self.kind(v), self.kind(w)) {
            (RelationKind::Social, NodeKind::User, NodeKind::User) => v != w,
            (RelationKind::ItemItem, NodeKind::Item, NodeKind::Item) => v != w,
            (RelationKind::Rating(_), a, b) => a != b,
            _ => false,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn relations(&self) -> &[RelationKind] {
        &self.relations
    }

    pub fn relation_kind(&self, r: RelationId) -> RelationKind {
        self.relations[r.0]
    }

    pub fn user_node(&self, user: usize) -> NodeId {
        debug_assert!(user < self.num_users);
        NodeId(user)
    }

    pub fn item_node(&self, item: usize) -> NodeId {
        debug_assert!(item < self.num_items);
        NodeId(self.num_users + item)
    }

    pub fn kind(&self, v: NodeId) -> NodeKind {
        if v.0 < self.num_users {
            NodeKind::User
        } else {
            NodeKind::Item
        }
    }

    pub fn check(&self, v: NodeId) -> Result<()> {
        if v.0 < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::Lookup {
                index: v.0,
                len: self.num_nodes(),
            })
        }
    }

    /// Full candidate neighbor list of `v`, sorted by (relation, neighbor).
    pub fn neighbors(&self, v: NodeId) -> Result<&[(NodeId, RelationId)]> {
        self.check(v)?;
        Ok(self.adj(v))
    }

    /// Unchecked variant of [`neighbors`](Self::neighbors); panics when out of range.
    pub fn adj(&self, v: NodeId) -> &[(NodeId, RelationId)] {
        &self.edges[self.offsets[v.0]..self.offsets[v.0 + 1]]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.offsets[v.0 + 1] - self.offsets[v.0]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes())
            .map(|v| self.degree(NodeId(v)))
            .max()
            .unwrap_or(0)
    }

    pub fn count_relation(&self, kind: RelationKind) -> usize {
        self.edges
            .iter()
            .filter(|(_, r)| self.relations[r.0] == kind)
            .count()
    }

    /// Writes `src\tdst\trelation_index`, one line per directed edge.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for v in 0..self.num_nodes() {
            for &(u, r) in self.adj(NodeId(v)) {
                writeln!(w, "{v}\t{}\t{}", u.0, r.0).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Jaccard similarity of two sorted, deduplicated index lists.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    common as f64 / (a.len() + b.len() - common) as f64
}

/// Item pairs `(i, j)`, `i < j`, whose train-split rater sets have Jaccard
/// similarity strictly above `threshold`. Only co-rated pairs are scored.
pub fn item_links(
    raters: &[Vec<usize>],
    rated_by_user: &[Vec<usize>],
    threshold: f64,
) -> Vec<(usize, usize)> {
    let mut links = Vec::new();
    let mut common: HashMap<usize, usize> = HashMap::new();
    for (i, users) in raters.iter().enumerate() {
        common.clear();
        for &u in users {
            for &j in &rated_by_user[u] {
                if j > i {
                    *common.entry(j).or_insert(0) += 1;
                }
            }
        }
        let mut partners: Vec<(usize, usize)> = common.iter().map(|(&j, &c)| (j, c)).collect();
        partners.sort_unstable();
        for (j, c) in partners {
            let union = users.len() + raters[j].len() - c;
            if c as f64 / union as f64 > threshold {
                links.push((i, j));
            }
        }
    }
    links
}

/// Builds the message-passing graph from the train split of `ds`.
pub fn build_graph(ds: &Dataset, item_link_threshold: f64) -> Result<HetGraph> {
    if !(0.0..=1.0).contains(&item_link_threshold) {
        return Err(Error::config(format!(
            "item link threshold must be in [0,1], got {item_link_threshold}"
        )));
    }
    let info = ds
        .splits
        .as_ref()
        .ok_or_else(|| Error::contract("build_graph requires a dataset with splits assigned"))?;
    let m = ds.num_users();
    let n = ds.num_items();

    let mut relations: Vec<RelationKind> = ds
        .rating_levels
        .iter()
        .map(|&v| RelationKind::Rating(v))
        .collect();
    let social = RelationId(relations.len());
    let item_item = RelationId(relations.len() + 1);
    relations.push(RelationKind::Social);
    relations.push(RelationKind::ItemItem);
    let level_rel: HashMap<i64, RelationId> = ds
        .rating_levels
        .iter()
        .enumerate()
        .map(|(k, &v)| (v, RelationId(k)))
        .collect();

    let mut adjacency: Vec<Vec<(NodeId, RelationId)>> = vec![Vec::new(); m + n];
    let mut raters: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut rated_by_user: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (r, split) in ds.ratings.iter().zip(&info.assignment) {
        if *split != Split::Train {
            continue;
        }
        let rel = *level_rel.get(&r.rating).ok_or_else(|| {
            Error::contract(format!("rating {} not among rating levels", r.rating))
        })?;
        let (u, t) = (NodeId(r.user), NodeId(m + r.item));
        adjacency[u.0].push((t, rel));
        adjacency[t.0].push((u, rel));
        raters[r.item].push(r.user);
        rated_by_user[r.user].push(r.item);
    }
    for list in raters.iter_mut().chain(rated_by_user.iter_mut()) {
        list.sort_unstable();
        list.dedup();
    }

    for &(a, b) in &ds.social {
        if a == b {
            continue;
        }
        adjacency[a].push((NodeId(b), social));
        adjacency[b].push((NodeId(a), social));
    }

    for (i, j) in item_links(&raters, &rated_by_user, item_link_threshold) {
        adjacency[m + i].push((NodeId(m + j), item_item));
        adjacency[m + j].push((NodeId(m + i), item_item));
    }

    HetGraph::from_adjacency(m, n, relations, adjacency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{filter_and_index, RatingRecord, SplitInfo, TrustRecord};

    fn dataset(ratings: &[(&str, &str, i64)], trust: &[(&str, &str)]) -> Dataset {
        let r: Vec<_> = ratings
            .iter()
            .map(|&(u, i, v)| RatingRecord {
                user: u.into(),
                item: i.into(),
                rating: v,
            })
            .collect();
        let t: Vec<_> = trust
            .iter()
            .map(|&(a, b)| TrustRecord {
                src: a.into(),
                dst: b.into(),
            })
            .collect();
        let mut ds = filter_and_index(&r, &t).unwrap();
        ds.splits = Some(SplitInfo {
            seed: 0,
            fractions: [1.0, 0.0, 0.0],
            assignment: vec![Split::Train; ds.ratings.len()],
        });
        ds
    }

    #[test]
    fn identical_rater_sets_link_items() {
        let ds = dataset(
            &[("a", "x", 1), ("b", "x", 2), ("a", "y", 3), ("b", "y", 4)],
            &[("a", "b")],
        );
        let g = build_graph(&ds, 0.5).unwrap();
        let x = g.item_node(0);
        let y = g.item_node(1);
        let ii = RelationId(g.num_relations() - 1);
        assert!(g.neighbors(x).unwrap().contains(&(y, ii)));
        assert!(g.neighbors(y).unwrap().contains(&(x, ii)));
    }

    #[test]
    fn one_third_overlap_does_not_link() {
        let ds = dataset(
            &[("a", "x", 1), ("b", "x", 1), ("c", "x", 1), ("a", "y", 1)],
            &[("a", "b"), ("b", "c")],
        );
        let g = build_graph(&ds, 0.5).unwrap();
        assert_eq!(g.count_relation(RelationKind::ItemItem), 0);
        assert!((jaccard(&[0, 1, 2], &[0]) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn six_levels_give_eight_relations() {
        let ratings: Vec<(String, String, i64)> = (0..6)
            .map(|v| (format!("u{}", v % 2), format!("i{v}"), v))
            .collect();
        let borrowed: Vec<_> = ratings
            .iter()
            .map(|(u, i, v)| (u.as_str(), i.as_str(), *v))
            .collect();
        let ds = dataset(&borrowed, &[("u0", "u1")]);
        let g = build_graph(&ds, 0.5).unwrap();
        assert_eq!(g.num_relations(), 8);
    }

    #[test]
    fn user_neighbors_include_social_and_rating() {
        let ds = dataset(&[("a", "x", 5)], &[("a", "b")]);
        let g = build_graph(&ds, 0.5).unwrap();
        let a = g.user_node(0);
        let b = g.user_node(1);
        let x = g.item_node(0);
        let nb = g.neighbors(a).unwrap();
        assert_eq!(nb.len(), 2);
        assert!(nb.contains(&(b, RelationId(1))));
        assert!(nb.contains(&(x, RelationId(0))));
        assert_eq!(g.relation_kind(RelationId(0)), RelationKind::Rating(5));
        assert_eq!(g.relation_kind(RelationId(1)), RelationKind::Social);
    }

    #[test]
    fn isolated_item_and_out_of_range() {
        let mut ds = dataset(&[("a", "x", 5), ("b", "y", 4)], &[("a", "b")]);
        ds.splits.as_mut().unwrap().assignment[1] = Split::Test;
        let g = build_graph(&ds, 0.5).unwrap();
        assert!(g.neighbors(g.item_node(1)).unwrap().is_empty());
        assert!(matches!(
            g.neighbors(NodeId(99)),
            Err(Error::Lookup { index: 99, .. })
        ));
    }

    #[test]
    fn threshold_validated_and_splits_required() {
        let ds = dataset(&[("a", "x", 5)], &[("a", "b")]);
        assert!(matches!(build_graph(&ds, 1.5), Err(Error::Config(_))));
        let mut unsplit = ds.clone();
        unsplit.splits = None;
        assert!(build_graph(&unsplit, 0.5).is_err());
    }

    #[test]
    fn asymmetric_adjacency_rejected() {
        let adj = vec![vec![(NodeId(1), RelationId(0))], vec![]];
        let err = HetGraph::from_adjacency(2, 0, vec![RelationKind::Social], adj).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
