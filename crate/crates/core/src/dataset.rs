//! Interaction datasets: dense ID assignment, deduplication and per-user splits.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Bidirectional map between external ID tokens and dense indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    index: HashMap<String, usize>,
    external: Vec<String>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index for `id`, assigning the next dense index on first sight.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&idx) = self.index.get(id) {
            return idx;
        }
        let idx = self.external.len();
        self.index.insert(id.to_owned(), idx);
        self.external.push(id.to_owned());
        idx
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn external(&self, idx: usize) -> &str {
        &self.external[idx]
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.external.iter().map(String::as_str)
    }

    /// Rebuild from external IDs listed in index order.
    pub fn from_ordered(ids: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate id {id:?} in id map")));
            }
        }
        Ok(IdMap {
            index,
            external: ids,
        })
    }
}

/// Which held-out pairs to evaluate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// Train/valid/test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let fr = SplitFractions { train, valid, test };
        fr.validate()?;
        Ok(fr)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.valid, self.test];
        if all.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Config(format!(
                "split fractions must be positive, got {all:?}"
            )));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }

    /// `(valid, test)` counts for a user with `n` distinct items. Train keeps
    /// the remainder and never drops below one item.
    pub fn held_out_counts(&self, n: usize) -> (usize, usize) {
        if n < MIN_ITEMS_FOR_HOLDOUT {
            return (0, 0);
        }
        let mut valid = (self.valid * n as f64).round() as usize;
        let mut test = (self.test * n as f64).round() as usize;
        while valid + test >= n {
            if test >= valid && test > 0 {
                test -= 1;
            } else {
                valid -= 1;
            }
        }
        (valid, test)
    }
}

/// Users with fewer distinct items than this are kept entirely in train.
pub const MIN_ITEMS_FOR_HOLDOUT: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub train_pairs: Vec<(usize, usize)>,
    pub valid_pairs: Vec<(usize, usize)>,
    pub test_pairs: Vec<(usize, usize)>,
    /// Sorted training items per user.
    pub user_train_items: Vec<Vec<usize>>,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
}

impl InteractionDataset {
    /// Assemble from already-split dense pairs. Pairs are sorted and
    /// `user_train_items` derived from `train_pairs`.
    pub fn from_parts(
        user_ids: IdMap,
        item_ids: IdMap,
        mut train_pairs: Vec<(usize, usize)>,
        mut valid_pairs: Vec<(usize, usize)>,
        mut test_pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        train_pairs.sort_unstable();
        valid_pairs.sort_unstable();
        test_pairs.sort_unstable();
        let num_users = user_ids.len();
        let num_items = item_ids.len();
        let mut user_train_items = vec![Vec::new(); num_users];
        for &(u, i) in &train_pairs {
            user_train_items[u].push(i);
        }
        let ds = InteractionDataset {
            num_users,
            num_items,
            train_pairs,
            valid_pairs,
            test_pairs,
            user_train_items,
            user_ids,
            item_ids,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks index ranges, disjointness and cold-start exclusion.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (name, pairs) in [
            ("train", &self.train_pairs),
            ("valid", &self.valid_pairs),
            ("test", &self.test_pairs),
        ] {
            for &(u, i) in pairs {
                if u >= self.num_users || i >= self.num_items {
                    return Err(Error::Config(format!(
                        "{name} pair ({u}, {i}) outside {} users x {} items",
                        self.num_users, self.num_items
                    )));
                }
                if !seen.insert((u, i)) {
                    return Err(Error::Config(format!(
                        "pair ({u}, {i}) appears twice across splits"
                    )));
                }
                if name != "train" && self.user_train_items[u].is_empty() {
                    return Err(Error::Config(format!(
                        "user {u} has {name} items but no training items"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_interactions(&self) -> usize {
        self.train_pairs.len() + self.valid_pairs.len() + self.test_pairs.len()
    }

    /// `|O| / (|U| * |I|)`
    pub fn density(&self) -> f64 {
        self.num_interactions() as f64 / (self.num_users as f64 * self.num_items as f64)
    }

    pub fn split_pairs(&self, split: Split) -> &[(usize, usize)] {
        match split {
            Split::Valid => &self.valid_pairs,
            Split::Test => &self.test_pairs,
        }
    }

    /// Held-out items grouped by user; users without any are absent.
    pub fn held_out_by_user(&self, split: Split) -> Vec<(usize, Vec<usize>)> {
        let mut grouped: Vec<(usize, Vec<usize>)> = Vec::new();
        for &(u, i) in self.split_pairs(split) {
            match grouped.last_mut() {
                Some((last, items)) if *last == u => items.push(i),
                _ => grouped.push((u, vec![i])),
            }
        }
        grouped
    }

    pub fn is_train_item(&self, user: usize, item: usize) -> bool {
        self.user_train_items[user].binary_search(&item).is_ok()
    }

    /// Human-readable summary mirroring the usual dataset statistics table.
    pub fn stats_line(&self) -> String {
        format!(
            "#user={} #item={} #inter.={} density={:.3}%",
            self.num_users,
            self.num_items,
            self.num_interactions(),
            100.0 * self.density()
        )
    }
}

/// Keep only users and items with at least `min` distinct interactions,
/// iterating until both constraints hold simultaneously.
pub fn filter_min_interactions(pairs: &[(String, String)], min: usize) -> Vec<(String, String)> {
    let mut kept: Vec<(String, String)> = {
        let mut seen = HashSet::new();
        pairs
            .iter()
            .filter(|p| seen.insert((p.0.as_str(), p.1.as_str())))
            .cloned()
            .collect()
    };
    if min <= 1 {
        return kept;
    }
    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for (u, i) in &kept {
            *user_deg.entry(u).or_default() += 1;
            *item_deg.entry(i).or_default() += 1;
        }
        let before = kept.len();
        let next: Vec<(String, String)> = kept
            .iter()
            .filter(|(u, i)| user_deg[u.as_str()] >= min && item_deg[i.as_str()] >= min)
            .cloned()
            .collect();
        if next.len() == before {
            return next;
        }
        kept = next;
    }
}

/// Dense-index, deduplicate and split raw `(user, item)` pairs.
///
/// IDs are assigned in order of first appearance. Each user's distinct items
/// are shuffled with a seeded generator and cut into valid/test/train.
pub fn build_dataset(
    pairs: &[(String, String)],
    split: SplitFractions,
    seed: u64,
) -> Result<InteractionDataset> {
    split.validate()?;
    if pairs.is_empty() {
        return Err(Error::Config("cannot build a dataset from zero pairs".into()));
    }
    let mut user_ids = IdMap::new();
    let mut item_ids = IdMap::new();
    let mut per_user: Vec<Vec<usize>> = Vec::new();
    let mut seen = HashSet::new();
    for (u, i) in pairs {
        let u = user_ids.intern(u);
        let i = item_ids.intern(i);
        if u == per_user.len() {
            per_user.push(Vec::new());
        }
        if seen.insert((u, i)) {
            per_user[u].push(i);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, Stream::Split, 0));
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for (u, items) in per_user.iter_mut().enumerate() {
        let (n_valid, n_test) = split.held_out_counts(items.len());
        if n_valid + n_test > 0 {
            items.shuffle(&mut rng);
        }
        let (v, rest) = items.split_at(n_valid);
        let (t, tr) = rest.split_at(n_test);
        valid.extend(v.iter().map(|&i| (u, i)));
        test.extend(t.iter().map(|&i| (u, i)));
        train.extend(tr.iter().map(|&i| (u, i)));
    }
    InteractionDataset::from_parts(user_ids, item_ids, train, valid, test)
}
