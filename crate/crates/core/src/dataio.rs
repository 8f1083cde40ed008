//! Edge-file ingestion and the canonical on-disk dataset.
//!
//! Raw input is two tab-separated files: ratings (`user\titem\trating`) and
//! trust (`user\tuser`). Users without any trust edge are dropped together
//! with their ratings, items left unrated are dropped, and the survivors are
//! densely indexed in first-appearance order. Rating edges are then split
//! into train/validation/test with a seeded shuffle.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const NODES_FILE: &str = "nodes.tsv";
pub const RATINGS_FILE: &str = "ratings.tsv";
pub const SOCIAL_FILE: &str = "social.tsv";
pub const META_FILE: &str = "meta.json";

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.6, 0.2, 0.2];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatingRecord {
    pub user: String,
    pub item: String,
    pub rating: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TrustRecord {
    pub src: String,
    pub dst: String,
}

/// Supported raw edge-file layouts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EdgeFormat {
    /// `user\titem\trating` and `user\tuser`, `#` comments.
    #[default]
    Tsv3,
}

impl FromStr for EdgeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv3" => Ok(EdgeFormat::Tsv3),
            other => Err(Error::config(format!("unknown edge format '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!(
                "unknown split '{other}' (expected train, val or test)"
            ))),
        }
    }
}

/// Bijection between external string ids and dense indices.
#[derive(Clone, Debug, Default)]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl PartialEq for IdIndex {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
    }
}

impl IdIndex {
    /// Returns the index of `id`, assigning the next one if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&idx) = self.lookup.get(id) {
            return idx;
        }
        let idx = self.ids.len();
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), idx);
        idx
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn external(&self, idx: usize) -> Option<&str> {
        self.ids.get(idx).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.ids.iter().enumerate().map(|(i, s)| (i, s.as_str()))
    }
}

/// A rating edge with dense user and item indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub rating: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub seed: u64,
    pub fractions: [f64; 3],
    pub assignment: Vec<Split>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub users: IdIndex,
    pub items: IdIndex,
    /// Sorted distinct rating values.
    pub rating_levels: Vec<i64>,
    pub ratings: Vec<Rating>,
    /// Directed, deduplicated trust pairs.
    pub social: Vec<(usize, usize)>,
    pub splits: Option<SplitInfo>,
}

impl Dataset {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    /// Ratings assigned to `split`, in dataset order.
    pub fn split_ratings(&self, split: Split) -> Result<Vec<Rating>> {
        let info = self
            .splits
            .as_ref()
            .ok_or_else(|| Error::contract("dataset has no split assignment"))?;
        Ok(self
            .ratings
            .iter()
            .zip(&info.assignment)
            .filter(|(_, &s)| s == split)
            .map(|(r, _)| *r)
            .collect())
    }

    pub fn split_sizes(&self) -> Option<[usize; 3]> {
        let info = self.splits.as_ref()?;
        let mut sizes = [0; 3];
        for s in &info.assignment {
            sizes[match s {
                Split::Train => 0,
                Split::Validation => 1,
                Split::Test => 2,
            }] += 1;
        }
        Some(sizes)
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn split_fields<'a>(path: &Path, line_no: usize, line: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != n {
        return Err(parse_error(
            path,
            line_no,
            format!("expected {n} tab-separated fields, found {}", fields.len()),
        ));
    }
    if let Some(pos) = fields.iter().position(|f| f.is_empty()) {
        return Err(parse_error(
            path,
            line_no,
            format!("field {} is empty", pos + 1),
        ));
    }
    Ok(fields)
}

/// Parses a rating file. Duplicate (user, item) lines keep the last rating.
pub fn parse_ratings(path: &Path, format: EdgeFormat) -> Result<Vec<RatingRecord>> {
    let EdgeFormat::Tsv3 = format;
    let text = read_text(path)?;
    let mut records: Vec<RatingRecord> = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    let mut any = false;
    for (line_no, line) in data_lines(&text) {
        any = true;
        let f = split_fields(path, line_no, line, 3)?;
        let rating: i64 = f[2].trim().parse().map_err(|_| {
            parse_error(
                path,
                line_no,
                format!("rating '{}' is not an integer", f[2]),
            )
        })?;
        let key = (f[0].to_owned(), f[1].to_owned());
        match seen.get(&key) {
            Some(&pos) => records[pos].rating = rating,
            None => {
                seen.insert(key, records.len());
                records.push(RatingRecord {
                    user: f[0].to_owned(),
                    item: f[1].to_owned(),
                    rating,
                });
            }
        }
    }
    if !any {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok(records)
}

/// Parses a trust file. Self-edges are dropped and exact duplicates collapse.
pub fn parse_trust(path: &Path, format: EdgeFormat) -> Result<Vec<TrustRecord>> {
    let EdgeFormat::Tsv3 = format;
    let text = read_text(path)?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut any = false;
    for (line_no, line) in data_lines(&text) {
        any = true;
        let f = split_fields(path, line_no, line, 2)?;
        if f[0] == f[1] {
            continue;
        }
        let rec = TrustRecord {
            src: f[0].to_owned(),
            dst: f[1].to_owned(),
        };
        if seen.insert(rec.clone()) {
            records.push(rec);
        }
    }
    if !any {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok(records)
}

pub fn parse_edges(
    rating_path: &Path,
    trust_path: &Path,
    format: EdgeFormat,
) -> Result<(Vec<RatingRecord>, Vec<TrustRecord>)> {
    Ok((
        parse_ratings(rating_path, format)?,
        parse_trust(trust_path, format)?,
    ))
}

/// Removes users without trust edges (and their ratings), drops items left
/// unrated, and assigns dense indices in first-appearance order: users from
/// the rating stream first, then trust-only users.
pub fn filter_and_index(ratings: &[RatingRecord], trust: &[TrustRecord]) -> Result<Dataset> {
    let mut linked: HashSet<&str> = HashSet::new();
    for t in trust.iter().filter(|t| t.src != t.dst) {
        linked.insert(&t.src);
        linked.insert(&t.dst);
    }
    if linked.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut users = IdIndex::default();
    let mut items = IdIndex::default();
    let mut out_ratings: Vec<Rating> = Vec::new();
    let mut pair_pos: HashMap<(usize, usize), usize> = HashMap::new();
    let mut levels = BTreeSet::new();
    for r in ratings.iter().filter(|r| linked.contains(r.user.as_str())) {
        let user = users.intern(&r.user);
        let item = items.intern(&r.item);
        match pair_pos.get(&(user, item)) {
            Some(&pos) => out_ratings[pos].rating = r.rating,
            None => {
                pair_pos.insert((user, item), out_ratings.len());
                out_ratings.push(Rating {
                    user,
                    item,
                    rating: r.rating,
                });
            }
        }
    }
    levels.extend(out_ratings.iter().map(|r| r.rating));

    let mut social = Vec::new();
    let mut seen = HashSet::new();
    for t in trust.iter().filter(|t| t.src != t.dst) {
        let a = users.intern(&t.src);
        let b = users.intern(&t.dst);
        if seen.insert((a, b)) {
            social.push((a, b));
        }
    }

    Ok(Dataset {
        users,
        items,
        rating_levels: levels.into_iter().collect(),
        ratings: out_ratings,
        social,
        splits: None,
    })
}

/// Per-split edge counts: each fraction's count is floored, the remainder
/// goes to train.
pub fn split_counts(total: usize, fractions: [f64; 3]) -> [usize; 3] {
    let val = (fractions[1] * total as f64).floor() as usize;
    let test = (fractions[2] * total as f64).floor() as usize;
    let val = val.min(total);
    let test = test.min(total - val);
    [total - val - test, val, test]
}

fn validate_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::config(format!(
            "split fractions must be non-negative, got {fractions:?}"
        )));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

/// Shuffles rating edges with a generator seeded from `seed` and labels
/// them train/validation/test by cumulative position.
pub fn assign_splits(mut ds: Dataset, fractions: [f64; 3], seed: u64) -> Result<Dataset> {
    validate_fractions(fractions)?;
    let total = ds.ratings.len();
    let [train, val, _] = split_counts(total, fractions);
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut assignment = vec![Split::Train; total];
    for (pos, &edge) in order.iter().enumerate() {
        assignment[edge] = if pos < train {
            Split::Train
        } else if pos < train + val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    ds.splits = Some(SplitInfo {
        seed,
        fractions,
        assignment,
    });
    Ok(ds)
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    m: usize,
    n: usize,
    rating_levels: Vec<i64>,
    num_ratings: usize,
    num_social: usize,
    seed: Option<u64>,
    fractions: Option<[f64; 3]>,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes the canonical dataset directory.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(NODES_FILE);
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "# index\texternal_id\tkind").map_err(io)?;
    for (i, id) in ds.users.iter() {
        writeln!(w, "{i}\t{id}\tuser").map_err(io)?;
    }
    for (i, id) in ds.items.iter() {
        writeln!(w, "{i}\t{id}\titem").map_err(io)?;
    }
    w.flush().map_err(io)?;

    let path = dir.join(RATINGS_FILE);
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "# user_idx\titem_idx\trating\tsplit").map_err(io)?;
    for (k, r) in ds.ratings.iter().enumerate() {
        let split = ds
            .splits
            .as_ref()
            .map_or("none", |s| s.assignment[k].as_str());
        writeln!(w, "{}\t{}\t{}\t{}", r.user, r.item, r.rating, split).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let path = dir.join(SOCIAL_FILE);
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "# src_idx\tdst_idx").map_err(io)?;
    for (a, b) in &ds.social {
        writeln!(w, "{a}\t{b}").map_err(io)?;
    }
    w.flush().map_err(io)?;

    let meta = Meta {
        m: ds.num_users(),
        n: ds.num_items(),
        rating_levels: ds.rating_levels.clone(),
        num_ratings: ds.ratings.len(),
        num_social: ds.social.len(),
        seed: ds.splits.as_ref().map(|s| s.seed),
        fractions: ds.splits.as_ref().map(|s| s.fractions),
    };
    let path = dir.join(META_FILE);
    let text = serde_json::to_string_pretty(&meta).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn parse_index(path: &Path, line: usize, field: &str, bound: usize) -> Result<usize> {
    let idx: usize = field
        .parse()
        .map_err(|_| parse_error(path, line, format!("'{field}' is not an index")))?;
    if idx >= bound {
        return Err(parse_error(
            path,
            line,
            format!("index {idx} out of range (< {bound})"),
        ));
    }
    Ok(idx)
}

/// Reads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join(META_FILE);
    let meta: Meta =
        serde_json::from_str(&read_text(&meta_path)?).map_err(|source| Error::Json {
            path: meta_path.clone(),
            source,
        })?;

    let path = dir.join(NODES_FILE);
    let text = read_text(&path)?;
    let mut users = IdIndex::default();
    let mut items = IdIndex::default();
    for (line_no, line) in data_lines(&text) {
        let f = split_fields(&path, line_no, line, 3)?;
        let (index, expected) = match f[2] {
            "user" => (users.intern(f[1]), users.len() - 1),
            "item" => (items.intern(f[1]), items.len() - 1),
            other => {
                return Err(parse_error(
                    &path,
                    line_no,
                    format!("unknown kind '{other}'"),
                ))
            }
        };
        if f[0] != index.to_string() || index != expected {
            return Err(parse_error(
                &path,
                line_no,
                "node indices must be dense and in order",
            ));
        }
    }
    if users.len() != meta.m || items.len() != meta.n {
        return Err(parse_error(&path, 0, "node counts disagree with meta.json"));
    }

    let path = dir.join(RATINGS_FILE);
    let text = read_text(&path)?;
    let mut ratings = Vec::new();
    let mut assignment = Vec::new();
    let mut unassigned = false;
    for (line_no, line) in data_lines(&text) {
        let f = split_fields(&path, line_no, line, 4)?;
        let user = parse_index(&path, line_no, f[0], meta.m)?;
        let item = parse_index(&path, line_no, f[1], meta.n)?;
        let rating = f[2]
            .parse()
            .map_err(|_| parse_error(&path, line_no, "rating is not an integer"))?;
        ratings.push(Rating { user, item, rating });
        if f[3] == "none" {
            unassigned = true;
        } else {
            assignment.push(
                f[3].parse::<Split>()
                    .map_err(|e| parse_error(&path, line_no, e.to_string()))?,
            );
        }
    }

    let path = dir.join(SOCIAL_FILE);
    let text = read_text(&path)?;
    let mut social = Vec::new();
    for (line_no, line) in data_lines(&text) {
        let f = split_fields(&path, line_no, line, 2)?;
        social.push((
            parse_index(&path, line_no, f[0], meta.m)?,
            parse_index(&path, line_no, f[1], meta.m)?,
        ));
    }

    let splits = match (meta.seed, meta.fractions, unassigned) {
        (Some(seed), Some(fractions), false) => Some(SplitInfo {
            seed,
            fractions,
            assignment,
        }),
        (None, None, _) if assignment.is_empty() => None,
        _ => {
            return Err(parse_error(
                &dir.join(RATINGS_FILE),
                0,
                "split labels disagree with meta.json",
            ))
        }
    };

    Ok(Dataset {
        users,
        items,
        rating_levels: meta.rating_levels,
        ratings,
        social,
        splits,
    })
}

/// SHA-256 over the canonical dataset files, hex encoded.
pub fn fingerprint(dir: &Path) -> Result<String> {
    let paths: Vec<PathBuf> = [META_FILE, NODES_FILE, RATINGS_FILE, SOCIAL_FILE]
        .iter()
        .map(|name| dir.join(name))
        .collect();
    fingerprint_files(&paths)
}

/// SHA-256 over the file names and contents, in the given order.
pub fn fingerprint_files(paths: &[PathBuf]) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for path in paths {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rr(user: &str, item: &str, rating: i64) -> RatingRecord {
        RatingRecord {
            user: user.into(),
            item: item.into(),
            rating,
        }
    }

    fn tr(src: &str, dst: &str) -> TrustRecord {
        TrustRecord {
            src: src.into(),
            dst: dst.into(),
        }
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn duplicate_rating_keeps_last() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.tsv", "u1\ti9\t4\nu1\ti9\t5\n");
        let recs = parse_ratings(&p, EdgeFormat::Tsv3).unwrap();
        assert_eq!(recs, vec![rr("u1", "i9", 5)]);
    }

    #[test]
    fn self_trust_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.tsv", "u1\tu1\n");
        assert!(parse_trust(&p, EdgeFormat::Tsv3).unwrap().is_empty());
    }

    #[test]
    fn distinct_lines_pass_through() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(dir.path(), "r.tsv", "# header\na\tx\t1\nb\tx\t2\nc\ty\t3\n");
        let t = write(dir.path(), "t.tsv", "a\tb\r\nb\tc\n");
        let (ratings, trust) = parse_edges(&r, &t, EdgeFormat::Tsv3).unwrap();
        assert_eq!(ratings.len(), 3);
        assert_eq!(trust.len(), 2);
        assert_eq!(trust[0], tr("a", "b"));
    }

    #[test]
    fn duplicate_trust_deduplicated() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.tsv", "a\tb\na\tb\nb\ta\n");
        assert_eq!(parse_trust(&p, EdgeFormat::Tsv3).unwrap().len(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.tsv", "a\tx\t1\n\nb\tx\n");
        match parse_ratings(&p, EdgeFormat::Tsv3) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let p = write(dir.path(), "r2.tsv", "a\tx\tfive\n");
        assert!(matches!(
            parse_ratings(&p, EdgeFormat::Tsv3),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.tsv", "# only a comment\n\n");
        assert!(matches!(
            parse_ratings(&p, EdgeFormat::Tsv3),
            Err(Error::EmptyInput(_))
        ));
        let p = write(dir.path(), "t.tsv", "");
        assert!(matches!(
            parse_trust(&p, EdgeFormat::Tsv3),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn missing_file_names_path() {
        let err = parse_ratings(Path::new("/nonexistent/r.tsv"), EdgeFormat::Tsv3).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/r.tsv"));
    }

    #[test]
    fn no_social_links_is_empty_dataset() {
        let err = filter_and_index(&[rr("a", "x", 3)], &[]).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
    }

    #[test]
    fn linked_users_kept() {
        let ds = filter_and_index(&[rr("a", "x", 3), rr("b", "x", 4)], &[tr("a", "b")]).unwrap();
        assert_eq!(ds.num_users(), 2);
        assert_eq!(ds.num_items(), 1);
        assert_eq!(ds.rating_levels, vec![3, 4]);
    }

    #[test]
    fn unlinked_user_and_orphan_item_removed() {
        let ds = filter_and_index(&[rr("a", "x", 3), rr("c", "y", 2)], &[tr("a", "b")]).unwrap();
        assert_eq!(ds.num_users(), 2);
        assert_eq!(ds.users.get("a"), Some(0));
        assert_eq!(ds.users.get("b"), Some(1));
        assert_eq!(ds.users.get("c"), None);
        assert_eq!(ds.num_items(), 1);
        assert_eq!(ds.items.get("y"), None);
        assert_eq!(ds.ratings.len(), 1);
        assert_eq!(ds.rating_levels, vec![3]);
    }

    #[test]
    fn rating_level_zero_is_kept() {
        let ds = filter_and_index(&[rr("a", "x", 0), rr("b", "x", 5)], &[tr("a", "b")]).unwrap();
        assert_eq!(ds.rating_levels, vec![0, 5]);
    }

    fn chain_dataset(edges: usize) -> Dataset {
        let ratings: Vec<_> = (0..edges)
            .map(|k| rr(&format!("u{}", k % 4), &format!("i{k}"), 1 + (k % 5) as i64))
            .collect();
        let trust = vec![tr("u0", "u1"), tr("u2", "u3")];
        filter_and_index(&ratings, &trust).unwrap()
    }

    #[test]
    fn split_sizes_exact_multiples() {
        let ds = assign_splits(chain_dataset(10), DEFAULT_FRACTIONS, 7).unwrap();
        assert_eq!(ds.split_sizes(), Some([6, 2, 2]));
    }

    #[test]
    fn split_remainder_goes_to_train() {
        let ds = assign_splits(chain_dataset(11), DEFAULT_FRACTIONS, 7).unwrap();
        assert_eq!(ds.split_sizes(), Some([7, 2, 2]));
    }

    #[test]
    fn split_is_deterministic() {
        let a = assign_splits(chain_dataset(50), DEFAULT_FRACTIONS, 3).unwrap();
        let b = assign_splits(chain_dataset(50), DEFAULT_FRACTIONS, 3).unwrap();
        assert_eq!(a.splits, b.splits);
        let c = assign_splits(chain_dataset(50), DEFAULT_FRACTIONS, 4).unwrap();
        assert_ne!(a.splits, c.splits);
    }

    #[test]
    fn bad_fractions_rejected() {
        assert!(matches!(
            assign_splits(chain_dataset(5), [1.2, -0.2, 0.0], 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            assign_splits(chain_dataset(5), [0.5, 0.2, 0.2], 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn round_trip_unsplit_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let ds = chain_dataset(7);
        write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
    }

    fn arb_records() -> impl Strategy<Value = (Vec<RatingRecord>, Vec<TrustRecord>)> {
        let ratings = prop::collection::vec((0u8..12, 0u8..10, 0i64..6), 1..60).prop_map(|v| {
            v.into_iter()
                .map(|(u, i, r)| rr(&format!("u{u}"), &format!("i{i}"), r))
                .collect::<Vec<_>>()
        });
        let trust = prop::collection::vec((0u8..15, 0u8..15), 1..30).prop_map(|v| {
            v.into_iter()
                .map(|(a, b)| tr(&format!("u{a}"), &format!("u{b}")))
                .collect::<Vec<_>>()
        });
        (ratings, trust)
    }

    proptest! {
        #[test]
        fn every_rating_user_is_socially_linked((ratings, trust) in arb_records()) {
            if let Ok(ds) = filter_and_index(&ratings, &trust) {
                let linked: HashSet<usize> =
                    ds.social.iter().flat_map(|&(a, b)| [a, b]).collect();
                for r in &ds.ratings {
                    prop_assert!(linked.contains(&r.user));
                }
                let rated: HashSet<usize> = ds.ratings.iter().map(|r| r.item).collect();
                prop_assert_eq!(rated.len(), ds.num_items());
            }
        }

        #[test]
        fn canonical_form_round_trips((ratings, trust) in arb_records(), seed in 0u64..1000) {
            if let Ok(ds) = filter_and_index(&ratings, &trust) {
                let ds = assign_splits(ds, DEFAULT_FRACTIONS, seed).unwrap();
                let dir = tempfile::tempdir().unwrap();
                write_dataset(&ds, dir.path()).unwrap();
                prop_assert_eq!(read_dataset(dir.path()).unwrap(), ds);
            }
        }

        #[test]
        fn splits_partition_edges(n in 0usize..200, seed in 0u64..50) {
            let counts = split_counts(n, DEFAULT_FRACTIONS);
            prop_assert_eq!(counts.iter().sum::<usize>(), n);
            if n > 0 {
                let ds = assign_splits(chain_dataset(n), DEFAULT_FRACTIONS, seed).unwrap();
                prop_assert_eq!(ds.split_sizes().unwrap(), counts);
                let mut pairs = HashSet::new();
                for r in &ds.ratings {
                    prop_assert!(pairs.insert((r.user, r.item)));
                }
            }
        }
    }
}
