//! Symmetric-normalized bipartite adjacency in compressed sparse row form.

use crate::dataset::InteractionDataset;

/// One side of the bipartite graph: row `r` owns `indices[indptr[r]..indptr[r+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrRows {
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl CsrRows {
    pub fn num_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// `(neighbor, weight)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    pub fn degree(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }
}

/// Edge weights `1 / sqrt(deg(u) * deg(i))` over training pairs, stored from
/// both the user side and the item side.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub user_rows: CsrRows,
    pub item_rows: CsrRows,
}

impl NormalizedAdjacency {
    /// Build from deduplicated `(user, item)` edges.
    pub fn from_edges(num_users: usize, num_items: usize, edges: &[(usize, usize)]) -> Self {
        let mut user_deg = vec![0usize; num_users];
        let mut item_deg = vec![0usize; num_items];
        for &(u, i) in edges {
            user_deg[u] += 1;
            item_deg[i] += 1;
        }
        let weight = |u: usize, i: usize| 1.0 / ((user_deg[u] * item_deg[i]) as f64).sqrt();

        let user_rows = build_rows(num_users, &user_deg, edges.iter().map(|&(u, i)| (u, i)), weight);
        let item_rows = build_rows(
            num_items,
            &item_deg,
            edges.iter().map(|&(u, i)| (i, u)),
            |i, u| weight(u, i),
        );
        NormalizedAdjacency {
            user_rows,
            item_rows,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_rows.num_rows()
    }

    pub fn num_items(&self) -> usize {
        self.item_rows.num_rows()
    }

    pub fn num_edges(&self) -> usize {
        self.user_rows.nnz()
    }
}

fn build_rows(
    num_rows: usize,
    degree: &[usize],
    entries: impl Iterator<Item = (usize, usize)>,
    weight: impl Fn(usize, usize) -> f64,
) -> CsrRows {
    let mut indptr = vec![0usize; num_rows + 1];
    for r in 0..num_rows {
        indptr[r + 1] = indptr[r] + degree[r];
    }
    let nnz = indptr[num_rows];
    let mut fill = indptr.clone();
    let mut indices = vec![0usize; nnz];
    let mut weights = vec![0.0; nnz];
    for (r, c) in entries {
        let slot = fill[r];
        indices[slot] = c;
        weights[slot] = weight(r, c);
        fill[r] += 1;
    }
    for r in 0..num_rows {
        let span = indptr[r]..indptr[r + 1];
        let mut row: Vec<(usize, f64)> = indices[span.clone()]
            .iter()
            .copied()
            .zip(weights[span.clone()].iter().copied())
            .collect();
        row.sort_unstable_by_key(|e| e.0);
        for (k, (c, w)) in row.into_iter().enumerate() {
            indices[span.start + k] = c;
            weights[span.start + k] = w;
        }
    }
    CsrRows {
        indptr,
        indices,
        weights,
    }
}

/// Adjacency over the dataset's training pairs.
pub fn build_adjacency(ds: &InteractionDataset) -> NormalizedAdjacency {
    NormalizedAdjacency::from_edges(ds.num_users, ds.num_items, &ds.train_pairs)
}
