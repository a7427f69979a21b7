//! Full-ranking top-K evaluation with Recall@K and NDCG@K.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::backbone::PropagatedEmbeddings;
use crate::dataset::{InteractionDataset, Split};
use crate::error::{Error, Result};

/// Cutoffs reported by default.
pub const DEFAULT_CUTOFFS: [usize; 2] = [10, 20];

/// Descending score, ties to the lower index.
#[inline]
fn rank_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Top `k` items by `scores`, skipping items in the sorted `mask`.
pub fn topk_from_scores(scores: &[f64], k: usize, mask: &[usize]) -> Option<Vec<usize>> {
    let mut candidates: Vec<usize> = Vec::with_capacity(scores.len() - mask.len().min(scores.len()));
    let mut m = mask.iter().peekable();
    for i in 0..scores.len() {
        while m.peek().is_some_and(|&&x| x < i) {
            m.next();
        }
        if m.peek() == Some(&&i) {
            continue;
        }
        candidates.push(i);
    }
    if k > candidates.len() {
        return None;
    }
    if k == 0 {
        return Some(Vec::new());
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, |&a, &b| rank_order(scores, a, b));
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    Some(candidates)
}

/// The `k` highest-scoring items for `user`, excluding `mask` (sorted).
pub fn topk(emb: &PropagatedEmbeddings, user: usize, k: usize, mask: &[usize]) -> Result<Vec<usize>> {
    let scores = emb.user_scores(user);
    topk_from_scores(&scores, k, mask).ok_or_else(|| Error::NotEnoughCandidates {
        user,
        k,
        available: scores.len() - mask.len(),
    })
}

/// `|topk ∩ relevant| / |relevant|`; `relevant` must be sorted.
pub fn recall_at_k(topk: &[usize], relevant: &[usize]) -> f64 {
    let hits = topk
        .iter()
        .filter(|i| relevant.binary_search(i).is_ok())
        .count();
    hits as f64 / relevant.len() as f64
}

/// Binary-relevance NDCG with the ideal DCG truncated at `min(k, |relevant|)`.
pub fn ndcg_at_k(topk: &[usize], relevant: &[usize], k: usize) -> f64 {
    let discount = |rank: usize| 1.0 / ((rank + 2) as f64).log2();
    let dcg: f64 = topk
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(r, _)| discount(r))
        .sum();
    let idcg: f64 = (0..k.min(relevant.len())).map(discount).sum();
    dcg / idcg
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffMetrics {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
}

/// Metrics averaged uniformly over evaluated users.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMap {
    pub cutoffs: Vec<CutoffMetrics>,
    pub num_users: usize,
}

impl MetricMap {
    pub fn get(&self, k: usize) -> Option<&CutoffMetrics> {
        self.cutoffs.iter().find(|c| c.k == k)
    }

    pub fn recall(&self, k: usize) -> f64 {
        self.get(k).map_or(f64::NAN, |c| c.recall)
    }

    pub fn ndcg(&self, k: usize) -> f64 {
        self.get(k).map_or(f64::NAN, |c| c.ndcg)
    }
}

/// Per-user metrics for every cutoff, in `cutoffs` order.
pub fn user_metrics(
    emb: &PropagatedEmbeddings,
    ds: &InteractionDataset,
    user: usize,
    relevant: &[usize],
    cutoffs: &[usize],
) -> Vec<CutoffMetrics> {
    let mask = &ds.user_train_items[user];
    let kmax = cutoffs.iter().copied().max().unwrap_or(0);
    let available = ds.num_items - mask.len();
    let ranked = topk(emb, user, kmax.min(available), mask).expect("k clamped to candidates");
    cutoffs
        .iter()
        .map(|&k| {
            let head = &ranked[..k.min(ranked.len())];
            CutoffMetrics {
                k,
                recall: recall_at_k(head, relevant),
                ndcg: ndcg_at_k(head, relevant, k),
            }
        })
        .collect()
}

/// Average metrics over users with held-out items in `split`.
pub fn evaluate(
    emb: &PropagatedEmbeddings,
    ds: &InteractionDataset,
    split: Split,
    cutoffs: &[usize],
) -> Result<MetricMap> {
    let mut users = ds.held_out_by_user(split);
    if users.is_empty() {
        return Err(Error::NoEvalUsers);
    }
    if emb.users.rows() != ds.num_users || emb.items.rows() != ds.num_items {
        return Err(Error::Shape(format!(
            "embeddings cover {} users / {} items, dataset has {} / {}",
            emb.users.rows(),
            emb.items.rows(),
            ds.num_users,
            ds.num_items
        )));
    }
    for (_, items) in &mut users {
        items.sort_unstable();
    }
    let per_user: Vec<Vec<CutoffMetrics>> = users
        .par_iter()
        .map(|(u, relevant)| user_metrics(emb, ds, *u, relevant, cutoffs))
        .collect();
    let n = per_user.len() as f64;
    let cutoffs = cutoffs
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            let (mut recall, mut ndcg) = (0.0, 0.0);
            for row in &per_user {
                recall += row[c].recall;
                ndcg += row[c].ndcg;
            }
            CutoffMetrics {
                k,
                recall: recall / n,
                ndcg: ndcg / n,
            }
        })
        .collect();
    Ok(MetricMap {
        cutoffs,
        num_users: per_user.len(),
    })
}
