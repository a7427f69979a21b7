//! Brute-force reference implementations.
//!
//! Everything here is written against plain slices and edge lists so that it
//! shares no code with the `cfloss` engine it is used to check. Nothing in this
//! crate is fast; most routines are quadratic or worse on purpose.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    /// The function under differentiation returned NaN or infinity.
    NonFinite { coordinate: usize },
    /// Dense propagation was asked to build a matrix over more nodes than allowed.
    TooManyNodes { nodes: usize, cap: usize },
    /// Input shapes did not line up.
    Shape(String),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::NonFinite { coordinate } => {
                write!(f, "function is not finite near coordinate {coordinate}")
            }
            OracleError::TooManyNodes { nodes, cap } => {
                write!(f, "dense oracle capped at {cap} nodes, got {nodes}")
            }
            OracleError::Shape(msg) => write!(f, "shape mismatch: {msg}"),
        }
    }
}

impl std::error::Error for OracleError {}

/// Largest graph (users + items) accepted by [`dense_propagate`].
pub const DENSE_NODE_CAP: usize = 100;

/// Full softmax cross-entropy of `pos_index` against every entry of `all_scores`.
///
/// Computed as `logsumexp(scores) - scores[pos]` with the usual max shift.
pub fn full_softmax_ce(all_scores: &[f64], pos_index: usize) -> f64 {
    assert!(all_scores.len() >= 2, "need at least two items");
    assert!(pos_index < all_scores.len());
    let max = all_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = all_scores.iter().map(|s| (s - max).exp()).sum();
    max + sum.ln() - all_scores[pos_index]
}

/// Central finite-difference gradient of `f` at `point`.
pub fn fd_gradient<F>(f: F, point: &[f64], h: f64) -> Result<Vec<f64>, OracleError>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for k in 0..point.len() {
        x[k] = point[k] + h;
        let plus = f(&x);
        x[k] = point[k] - h;
        let minus = f(&x);
        x[k] = point[k];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(OracleError::NonFinite { coordinate: k });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Symmetric-normalized bipartite adjacency as a dense `(U+I) x (U+I)` matrix.
///
/// Users occupy rows `0..num_users`, items the rows after. Degrees are counted
/// from `edges` directly; duplicate edges are counted once.
pub fn dense_normalized_adjacency(
    num_users: usize,
    num_items: usize,
    edges: &[(usize, usize)],
) -> Result<Vec<Vec<f64>>, OracleError> {
    let n = num_users + num_items;
    if n > DENSE_NODE_CAP {
        return Err(OracleError::TooManyNodes {
            nodes: n,
            cap: DENSE_NODE_CAP,
        });
    }
    let mut connected = vec![vec![false; n]; n];
    for &(u, i) in edges {
        if u >= num_users || i >= num_items {
            return Err(OracleError::Shape(format!("edge ({u}, {i}) out of range")));
        }
        connected[u][num_users + i] = true;
        connected[num_users + i][u] = true;
    }
    let degree: Vec<usize> = connected
        .iter()
        .map(|row| row.iter().filter(|&&c| c).count())
        .collect();
    let mut dense = vec![vec![0.0; n]; n];
    for r in 0..n {
        for c in 0..n {
            if connected[r][c] {
                dense[r][c] = 1.0 / ((degree[r] * degree[c]) as f64).sqrt();
            }
        }
    }
    Ok(dense)
}

/// Mean of `A^k E` for `k = 0..=layers`, with `E` the user rows stacked above the item rows.
///
/// Returns `(users, items)` as row-major flat matrices of width `dim`.
pub fn dense_propagate(
    user_emb: &[f64],
    item_emb: &[f64],
    dim: usize,
    edges: &[(usize, usize)],
    layers: usize,
) -> Result<(Vec<f64>, Vec<f64>), OracleError> {
    if dim == 0 || !user_emb.len().is_multiple_of(dim) || !item_emb.len().is_multiple_of(dim) {
        return Err(OracleError::Shape("embedding length not a multiple of dim".into()));
    }
    let num_users = user_emb.len() / dim;
    let num_items = item_emb.len() / dim;
    let adj = dense_normalized_adjacency(num_users, num_items, edges)?;
    let n = num_users + num_items;

    let mut current: Vec<Vec<f64>> = user_emb
        .chunks(dim)
        .chain(item_emb.chunks(dim))
        .map(|r| r.to_vec())
        .collect();
    let mut total = current.clone();
    for _ in 0..layers {
        let mut next = vec![vec![0.0; dim]; n];
        for r in 0..n {
            for c in 0..n {
                if adj[r][c] != 0.0 {
                    for k in 0..dim {
                        next[r][k] += adj[r][c] * current[c][k];
                    }
                }
            }
        }
        for r in 0..n {
            for k in 0..dim {
                total[r][k] += next[r][k];
            }
        }
        current = next;
    }
    let scale = (layers + 1) as f64;
    let flat: Vec<f64> = total.into_iter().flatten().map(|x| x / scale).collect();
    let (users, items) = flat.split_at(num_users * dim);
    Ok((users.to_vec(), items.to_vec()))
}

/// Item indices ordered by descending score, ties by ascending index, with
/// `excluded` items dropped. Full sort; returns the first `k`.
pub fn brute_force_topk(scores: &[f64], excluded: &[usize], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len())
        .filter(|i| !excluded.contains(i))
        .collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Hits in `ranked` over the size of `relevant`.
pub fn brute_force_recall(ranked: &[usize], relevant: &[usize]) -> f64 {
    let hits = ranked.iter().filter(|i| relevant.contains(i)).count();
    hits as f64 / relevant.len() as f64
}

/// Binary-relevance NDCG with the ideal list truncated at `min(k, |relevant|)`.
pub fn brute_force_ndcg(ranked: &[usize], relevant: &[usize], k: usize) -> f64 {
    let mut dcg = 0.0;
    for (rank, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            dcg += 1.0 / ((rank + 2) as f64).log2();
        }
    }
    let ideal: f64 = (0..k.min(relevant.len()))
        .map(|rank| 1.0 / ((rank + 2) as f64).log2())
        .sum();
    dcg / ideal
}
