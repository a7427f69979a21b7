//! End-to-end gradient check on a random instance of at most ten nodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cfloss::adjacency::build_adjacency;
use cfloss::backbone::init_embeddings;
use cfloss::dataset::{IdMap, InteractionDataset};
use cfloss::loss::Loss;
use cfloss::matrix::Matrix;
use cfloss::sampler::{epoch_batches, TrainBatch};
use cfloss::trainer::batch_gradients;
use cfloss::{EmbeddingState, Result};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Entries smaller than this are compared absolutely rather than relatively.
pub const ERROR_FLOOR: f64 = 1e-4;
/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-4;

pub struct Instance {
    pub dataset: InteractionDataset,
    pub state: EmbeddingState,
    pub batch: TrainBatch,
}

/// 2-4 users and 3-6 items with every user holding at least one but not
/// all items, unit-scale embeddings, and one batch over all training pairs.
pub fn random_instance(seed: u64, negatives: usize, dim: usize) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num_users = rng.random_range(2..=4);
    let num_items = rng.random_range(3..=6);
    let mut train = Vec::new();
    for u in 0..num_users {
        let count = rng.random_range(1..num_items);
        let items = rand::seq::index::sample(&mut rng, num_items, count);
        train.extend(items.iter().map(|i| (u, i)));
    }
    train.sort_unstable();
    let ids = |n: usize, p: &str| IdMap::from_ordered((0..n).map(|k| format!("{p}{k}")).collect());
    let dataset = InteractionDataset::from_parts(
        ids(num_users, "u")?,
        ids(num_items, "i")?,
        train,
        Vec::new(),
        Vec::new(),
    )?;
    let state = init_embeddings(num_users, num_items, dim, rng.random(), 1.0)?;
    let pairs = dataset.train_pairs.len();
    let batch = epoch_batches(&dataset, pairs, negatives, rng.random(), 0)?
        .next()
        .expect("at least one training pair")?;
    Ok(Instance { dataset, state, batch })
}

#[derive(Debug, Clone)]
pub struct Report {
    pub loss: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.max_relative_error < TOLERANCE
    }
}

fn flatten(users: &Matrix, items: &Matrix) -> Vec<f64> {
    users.as_slice().iter().chain(items.as_slice()).copied().collect()
}

fn unflatten(flat: &[f64], like: &EmbeddingState) -> EmbeddingState {
    let split = like.users.as_slice().len();
    EmbeddingState {
        users: Matrix::from_vec(like.num_users(), like.dim(), flat[..split].to_vec()),
        items: Matrix::from_vec(like.num_items(), like.dim(), flat[split..].to_vec()),
    }
}

/// Compare analytic gradients of the batch loss with central differences.
pub fn check(instance: &Instance, loss: &Loss, layers: usize) -> Result<Report> {
    let adj = build_adjacency(&instance.dataset);
    let (value, gu, gi) = batch_gradients(&instance.state, &adj, layers, loss, &instance.batch, None)?;
    let analytic = flatten(&gu, &gi);
    let point = flatten(&instance.state.users, &instance.state.items);
    let f = |x: &[f64]| {
        let state = unflatten(x, &instance.state);
        batch_gradients(&state, &adj, layers, loss, &instance.batch, None)
            .map(|(l, _, _)| l)
            .unwrap_or(f64::NAN)
    };
    let numeric = cfloss_oracle::fd_gradient(f, &point, FD_STEP)
        .map_err(|e| cfloss::Error::Shape(format!("finite differences: {e}")))?;
    let max_relative_error = cfloss_oracle::max_relative_error(&analytic, &numeric, ERROR_FLOOR);
    Ok(Report {
        loss: value,
        analytic,
        numeric,
        max_relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cfloss::loss::{BPR_EPS, DEFAULT_MARGIN};

    #[test]
    fn instances_are_small_and_seeded() {
        for seed in 0..20 {
            let a = random_instance(seed, 3, 4).unwrap();
            let n = a.dataset.num_users + a.dataset.num_items;
            assert!(n <= 10);
            assert_eq!(a.batch.len(), a.dataset.train_pairs.len());
            let b = random_instance(seed, 3, 4).unwrap();
            assert_eq!(a.state, b.state);
            assert_eq!(a.batch, b.batch);
        }
    }

    #[test]
    fn passes_for_each_loss() {
        let cases = [
            (Loss::Bpr { eps: BPR_EPS }, 1),
            (Loss::Ssm, 4),
            (Loss::SimCe { margin: DEFAULT_MARGIN }, 4),
        ];
        for (loss, n) in cases {
            for layers in [0, 2] {
                let inst = random_instance(7, n, 3).unwrap();
                let r = check(&inst, &loss, layers).unwrap();
                assert!(r.passed(), "{loss:?} K={layers}: {}", r.max_relative_error);
            }
        }
    }

    #[test]
    fn inactive_hinge_has_zero_gradients() {
        let inst = random_instance(3, 4, 3).unwrap();
        let r = check(&inst, &Loss::SimCe { margin: -1e3 }, 2).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.analytic.iter().all(|&g| g == 0.0));
        assert!(r.numeric.iter().all(|&g| g == 0.0));
    }
}
