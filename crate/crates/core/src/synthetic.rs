//! Seeded synthetic datasets for tests and benchmarks.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    assign_splits, filter_and_index, Dataset, RatingRecord, TrustRecord, DEFAULT_FRACTIONS,
};
use crate::error::{Error, Result};
use crate::seed;

fn user(u: usize) -> String {
    format!("u{u}")
}

fn item(i: usize) -> String {
    format!("i{i}")
}

/// Uniformly random ratings (1..=5) and trust links. Every user rates at
/// least one item, every item is rated, and a ring of trust links keeps
/// every user connected. All ratings are assigned to the train split.
pub fn random_fixture(
    users: usize,
    items: usize,
    ratings: usize,
    social: usize,
    seed: u64,
) -> Result<Dataset> {
    if users < 2 || items == 0 {
        return Err(Error::config(
            "fixture needs at least two users and one item",
        ));
    }
    if ratings < users.max(items) || ratings > users * items {
        return Err(Error::config(format!(
            "cannot place {ratings} distinct ratings on {users} users and {items} items"
        )));
    }
    let max_social = users * (users - 1) / 2;
    if social < users.min(max_social) || social > max_social {
        return Err(Error::config(format!(
            "cannot place {social} undirected trust links on {users} users"
        )));
    }
    let mut rng = seed::rng(seed);

    let mut pairs = BTreeSet::new();
    for k in 0..users.max(items) {
        pairs.insert((k % users, k % items));
    }
    while pairs.len() < ratings {
        pairs.insert((rng.gen_range(0..users), rng.gen_range(0..items)));
    }
    let mut pairs: Vec<_> = pairs.into_iter().collect();
    pairs.shuffle(&mut rng);
    let rating_records: Vec<RatingRecord> = pairs
        .into_iter()
        .map(|(u, i)| RatingRecord {
            user: user(u),
            item: item(i),
            rating: rng.gen_range(1..=5),
        })
        .collect();

    let mut links = BTreeSet::new();
    for u in 0..users {
        let v = (u + 1) % users;
        links.insert((u.min(v), u.max(v)));
    }
    while links.len() < social {
        let a = rng.gen_range(0..users);
        let b = rng.gen_range(0..users);
        if a != b {
            links.insert((a.min(b), a.max(b)));
        }
    }
    let trust: Vec<TrustRecord> = links
        .into_iter()
        .map(|(a, b)| TrustRecord {
            src: user(a),
            dst: user(b),
        })
        .collect();

    let ds = filter_and_index(&rating_records, &trust)?;
    assign_splits(ds, [1.0, 0.0, 0.0], seed)
}

/// Two communities with opposite tastes, joined by many cross-community
/// trust links whose endpoints disagree on every shared item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub users: usize,
    pub items: usize,
    pub ratings_per_user: usize,
    /// Trust links per user inside its own community.
    pub same_group_links: usize,
    /// Trust links per user into the other community.
    pub cross_group_links: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            users: 120,
            items: 60,
            ratings_per_user: 8,
            same_group_links: 2,
            cross_group_links: 4,
            seed: 0,
        }
    }
}

/// Community of user or item index `k`.
pub fn community(k: usize) -> usize {
    k % 2
}

/// Users like items of their own community (4 or 5) and dislike the rest
/// (1 or 2). Splits use the default fractions.
pub fn planted_inconsistency(cfg: &PlantedConfig) -> Result<Dataset> {
    if cfg.users < 4
        || cfg.items < 2
        || cfg.ratings_per_user == 0
        || cfg.ratings_per_user > cfg.items
    {
        return Err(Error::config(
            "planted benchmark needs at least 4 users, 2 items and 1..=items ratings per user",
        ));
    }
    let per_group = cfg.users / 2;
    if cfg.same_group_links >= per_group || cfg.cross_group_links > cfg.users - per_group {
        return Err(Error::config(
            "too many trust links per user for the community size",
        ));
    }
    let mut rng = seed::rng(cfg.seed);

    let mut ratings = Vec::new();
    let all_items: Vec<usize> = (0..cfg.items).collect();
    let mut rated = vec![false; cfg.items];
    for u in 0..cfg.users {
        for &i in all_items.choose_multiple(&mut rng, cfg.ratings_per_user) {
            rated[i] = true;
            let liked = community(u) == community(i);
            let rating = if liked {
                rng.gen_range(4..=5)
            } else {
                rng.gen_range(1..=2)
            };
            ratings.push(RatingRecord {
                user: user(u),
                item: item(i),
                rating,
            });
        }
    }
    for (i, _) in rated.iter().enumerate().filter(|(_, r)| !**r) {
        let u = rng.gen_range(0..cfg.users);
        let rating = if community(u) == community(i) { 5 } else { 1 };
        ratings.push(RatingRecord {
            user: user(u),
            item: item(i),
            rating,
        });
    }

    let mut trust = Vec::new();
    for u in 0..cfg.users {
        let same: Vec<usize> = (0..cfg.users)
            .filter(|&v| v != u && community(v) == community(u))
            .collect();
        let cross: Vec<usize> = (0..cfg.users)
            .filter(|&v| community(v) != community(u))
            .collect();
        for (pool, count) in [
            (&same, cfg.same_group_links),
            (&cross, cfg.cross_group_links),
        ] {
            for &v in pool.choose_multiple(&mut rng, count) {
                trust.push(TrustRecord {
                    src: user(u),
                    dst: user(v),
                });
            }
        }
    }

    let ds = filter_and_index(&ratings, &trust)?;
    assign_splits(ds, DEFAULT_FRACTIONS, seed::derive(cfg.seed, &[7]))
}
