//! Embedding tables and LightGCN-style linear propagation.
//!
//! Matrix factorization is the zero-layer case: the propagated embeddings are
//! the raw tables and the adjoint is the identity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::adjacency::{CsrRows, NormalizedAdjacency};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_INIT_SCALE: f64 = 0.01;

/// Trainable user and item embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub users: Matrix,
    pub items: Matrix,
}

impl EmbeddingState {
    pub fn new(users: Matrix, items: Matrix) -> Result<Self> {
        if users.cols() == 0 || users.cols() != items.cols() {
            return Err(Error::Shape(format!(
                "embedding widths {} and {} must match and be positive",
                users.cols(),
                items.cols()
            )));
        }
        Ok(EmbeddingState { users, items })
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn num_users(&self) -> usize {
        self.users.rows()
    }

    pub fn num_items(&self) -> usize {
        self.items.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.users.is_finite() && self.items.is_finite()
    }
}

/// I.i.d. `N(0, scale^2)` entries from a generator seeded with `seed`.
pub fn init_embeddings(
    num_users: usize,
    num_items: usize,
    dim: usize,
    seed: u64,
    scale: f64,
) -> Result<EmbeddingState> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Config(format!("init scale must be positive, got {scale}")));
    }
    let normal = Normal::new(0.0, scale).expect("positive finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| {
        let data = (0..rows * dim).map(|_| normal.sample(&mut rng)).collect();
        Matrix::from_vec(rows, dim, data)
    };
    let users = draw(num_users);
    let items = draw(num_items);
    EmbeddingState::new(users, items)
}

/// Layer-averaged embeddings used for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedEmbeddings {
    pub users: Matrix,
    pub items: Matrix,
    pub layers: usize,
}

impl PropagatedEmbeddings {
    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn num_items(&self) -> usize {
        self.items.rows()
    }

    /// `s(u, i)`: dot product of the final user and item rows.
    #[inline]
    pub fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.users.row(user), self.items.row(item))
    }

    /// Scores for aligned `(users[b], items[b])` pairs.
    pub fn score_pairs(&self, users: &[usize], items: &[usize]) -> Result<Vec<f64>> {
        if users.len() != items.len() {
            return Err(Error::Shape(format!(
                "{} users against {} items",
                users.len(),
                items.len()
            )));
        }
        Ok(users
            .par_iter()
            .zip(items.par_iter())
            .map(|(&u, &i)| self.score(u, i))
            .collect())
    }

    /// Scores for `users[b]` against each of the `per_user` items in row `b`
    /// of the flattened `items` matrix.
    pub fn score_rows(&self, users: &[usize], items: &[usize], per_user: usize) -> Result<Vec<f64>> {
        if per_user == 0 || items.len() != users.len() * per_user {
            return Err(Error::Shape(format!(
                "{} item indices cannot be {} rows of {per_user}",
                items.len(),
                users.len()
            )));
        }
        let mut out = vec![0.0; items.len()];
        out.par_chunks_mut(per_user)
            .zip(items.par_chunks(per_user))
            .zip(users.par_iter())
            .for_each(|((out, row), &u)| {
                let user = self.users.row(u);
                for (o, &i) in out.iter_mut().zip(row) {
                    *o = dot(user, self.items.row(i));
                }
            });
        Ok(out)
    }

    /// All item scores for one user.
    pub fn user_scores(&self, user: usize) -> Vec<f64> {
        let u = self.users.row(user);
        (0..self.items.rows())
            .map(|i| dot(u, self.items.row(i)))
            .collect()
    }
}

fn check_dims(users: &Matrix, items: &Matrix, adj: &NormalizedAdjacency) -> Result<()> {
    if users.rows() != adj.num_users() || items.rows() != adj.num_items() {
        return Err(Error::Shape(format!(
            "embeddings are {}x{} users / {} items but graph has {} users / {} items",
            users.rows(),
            users.cols(),
            items.rows(),
            adj.num_users(),
            adj.num_items()
        )));
    }
    if users.cols() != items.cols() {
        return Err(Error::Shape("user and item widths differ".into()));
    }
    Ok(())
}

/// `out[r] = sum_c w(r, c) * src[c]` over the CSR rows.
fn spmm(rows: &CsrRows, src: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(rows.num_rows(), src.cols());
    let width = src.cols();
    out.as_mut_slice()
        .par_chunks_mut(width.max(1))
        .enumerate()
        .for_each(|(r, dst)| {
            for (c, w) in rows.row(r) {
                for (d, s) in dst.iter_mut().zip(src.row(c)) {
                    *d += w * s;
                }
            }
        });
    out
}

/// Mean over layers `0..=layers` of the symmetric-normalized operator applied
/// to `(users, items)`. One layer maps users to the weighted sum of their items
/// and items to the weighted sum of their users.
fn layer_mean(
    users: &Matrix,
    items: &Matrix,
    adj: &NormalizedAdjacency,
    layers: usize,
) -> (Matrix, Matrix) {
    let mut total_u = users.clone();
    let mut total_i = items.clone();
    if layers == 0 {
        return (total_u, total_i);
    }
    let mut cur_u = users.clone();
    let mut cur_i = items.clone();
    for _ in 0..layers {
        let next_u = spmm(&adj.user_rows, &cur_i);
        let next_i = spmm(&adj.item_rows, &cur_u);
        total_u.add_scaled(1.0, &next_u);
        total_i.add_scaled(1.0, &next_i);
        cur_u = next_u;
        cur_i = next_i;
    }
    let inv = 1.0 / (layers + 1) as f64;
    total_u.scale(inv);
    total_i.scale(inv);
    (total_u, total_i)
}

pub fn propagate(
    state: &EmbeddingState,
    adj: &NormalizedAdjacency,
    layers: usize,
) -> Result<PropagatedEmbeddings> {
    check_dims(&state.users, &state.items, adj)?;
    let (users, items) = layer_mean(&state.users, &state.items, adj, layers);
    Ok(PropagatedEmbeddings {
        users,
        items,
        layers,
    })
}

/// Pull gradients on the propagated embeddings back to the embedding tables.
///
/// The layer operator is symmetric, so its adjoint is the same layer mean
/// applied to the gradients.
pub fn backpropagate(
    grad_users: &Matrix,
    grad_items: &Matrix,
    adj: &NormalizedAdjacency,
    layers: usize,
) -> Result<(Matrix, Matrix)> {
    check_dims(grad_users, grad_items, adj)?;
    Ok(layer_mean(grad_users, grad_items, adj, layers))
}
