//! Seeded training batches with uniformly sampled unobserved negatives.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Negative counts searched in the negative-count sweep.
pub const NEGATIVE_GRID: [usize; 8] = [4, 8, 16, 32, 64, 128, 256, 512];

/// Redraw budget per sample, as a multiple of the negatives requested.
pub const RETRY_FACTOR: usize = 100;

/// `(user, positive, N negatives)` triples for one optimization step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainBatch {
    pub users: Vec<usize>,
    pub pos_items: Vec<usize>,
    /// Row-major `B x negatives`.
    pub neg_items: Vec<usize>,
    pub negatives: usize,
}

impl TrainBatch {
    pub fn new(
        users: Vec<usize>,
        pos_items: Vec<usize>,
        neg_items: Vec<usize>,
        negatives: usize,
    ) -> Result<Self> {
        if users.len() != pos_items.len() || neg_items.len() != users.len() * negatives {
            return Err(Error::Shape(format!(
                "batch of {} users, {} positives, {} negatives at {negatives} per sample",
                users.len(),
                pos_items.len(),
                neg_items.len()
            )));
        }
        Ok(TrainBatch {
            users,
            pos_items,
            neg_items,
            negatives,
        })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn neg_row(&self, b: usize) -> &[usize] {
        &self.neg_items[b * self.negatives..(b + 1) * self.negatives]
    }
}

/// Lazily produced batches for one epoch.
///
/// Training pairs are shuffled once with a generator keyed on `(seed, epoch)`;
/// the same generator then draws negatives as batches are consumed, so the
/// sequence is fully determined by `(dataset, batch_size, negatives, seed, epoch)`.
pub struct EpochBatches<'a> {
    ds: &'a InteractionDataset,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    negatives: usize,
    rng: ChaCha8Rng,
}

impl<'a> EpochBatches<'a> {
    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    fn draw_negatives(&mut self, user: usize, out: &mut Vec<usize>) -> Result<()> {
        let observed = &self.ds.user_train_items[user];
        let num_items = self.ds.num_items;
        let budget = RETRY_FACTOR * self.negatives;
        let mut redraws = 0;
        for _ in 0..self.negatives {
            loop {
                let item = self.rng.random_range(0..num_items);
                if observed.binary_search(&item).is_err() {
                    out.push(item);
                    break;
                }
                redraws += 1;
                if redraws > budget {
                    return Err(Error::NoNegatives {
                        user,
                        observed: observed.len(),
                        num_items,
                    });
                }
            }
        }
        Ok(())
    }
}

impl Iterator for EpochBatches<'_> {
    type Item = Result<TrainBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let n = end - self.cursor;
        let mut users = Vec::with_capacity(n);
        let mut pos_items = Vec::with_capacity(n);
        let mut neg_items = Vec::with_capacity(n * self.negatives);
        for k in self.cursor..end {
            let (u, i) = self.ds.train_pairs[self.order[k]];
            users.push(u);
            pos_items.push(i);
            if let Err(e) = self.draw_negatives(u, &mut neg_items) {
                self.cursor = self.order.len();
                return Some(Err(e));
            }
        }
        self.cursor = end;
        Some(Ok(TrainBatch {
            users,
            pos_items,
            neg_items,
            negatives: self.negatives,
        }))
    }
}

/// Batches for `epoch`. Fails up front if some training user has observed
/// every item, since no negative exists for them.
pub fn epoch_batches(
    ds: &InteractionDataset,
    batch_size: usize,
    negatives: usize,
    seed: u64,
    epoch: u64,
) -> Result<EpochBatches<'_>> {
    if batch_size == 0 || negatives == 0 {
        return Err(Error::Config(format!(
            "batch size ({batch_size}) and negatives ({negatives}) must be positive"
        )));
    }
    if let Some((user, items)) = ds
        .user_train_items
        .iter()
        .enumerate()
        .find(|(_, items)| !items.is_empty() && items.len() >= ds.num_items)
    {
        return Err(Error::NoNegatives {
            user,
            observed: items.len(),
            num_items: ds.num_items,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, Stream::Sampler, epoch));
    let mut order: Vec<usize> = (0..ds.train_pairs.len()).collect();
    order.shuffle(&mut rng);
    Ok(EpochBatches {
        ds,
        order,
        cursor: 0,
        batch_size,
        negatives,
        rng,
    })
}
