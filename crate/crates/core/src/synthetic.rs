//! Seeded block-preference interaction generator.
//!
//! Items are partitioned into contiguous blocks, and each block into
//! `sub_blocks` contiguous sub-blocks. Every user prefers `blocks_per_user`
//! distinct blocks and one sub-block inside each of them. An interaction
//! comes from one of the user's blocks with probability `in_block`, otherwise
//! from the whole catalogue; inside a block it comes from the preferred
//! sub-block with probability `in_sub`. Item popularity within a block or
//! sub-block follows a Zipf-like law with exponent `popularity`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub per_user: usize,
    pub blocks: usize,
    pub blocks_per_user: usize,
    pub sub_blocks: usize,
    pub in_block: f64,
    pub in_sub: f64,
    pub popularity: f64,
}

impl BlockConfig {
    /// 2000 users, 1000 items, 50 interactions each.
    pub fn desk_scale() -> Self {
        BlockConfig {
            num_users: 2000,
            num_items: 1000,
            per_user: 50,
            blocks: 10,
            blocks_per_user: 2,
            sub_blocks: 5,
            in_block: 0.9,
            in_sub: 0.7,
            popularity: 0.5,
        }
    }

    /// 20 users, 20 items.
    pub fn tiny() -> Self {
        BlockConfig {
            num_users: 20,
            num_items: 20,
            per_user: 5,
            blocks: 2,
            blocks_per_user: 1,
            sub_blocks: 1,
            in_block: 1.0,
            in_sub: 1.0,
            popularity: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.blocks > self.num_users || self.blocks > self.num_items {
            return Err(Error::Config(format!(
                "{} blocks for {} users and {} items",
                self.blocks, self.num_users, self.num_items
            )));
        }
        if self.blocks_per_user == 0 || self.blocks_per_user > self.blocks {
            return Err(Error::Config(format!(
                "{} blocks per user out of {}",
                self.blocks_per_user, self.blocks
            )));
        }
        if self.per_user == 0 || self.per_user > self.num_items {
            return Err(Error::Config(format!(
                "{} interactions per user with {} items",
                self.per_user, self.num_items
            )));
        }
        if self.sub_blocks == 0 || self.blocks * self.sub_blocks > self.num_items {
            return Err(Error::Config(format!(
                "{} sub-blocks per block for {} items in {} blocks",
                self.sub_blocks, self.num_items, self.blocks
            )));
        }
        for p in [self.in_block, self.in_sub] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("probability {p} outside [0, 1]")));
            }
        }
        if !(self.popularity.is_finite() && self.popularity >= 0.0) {
            return Err(Error::Config(format!("popularity exponent {}", self.popularity)));
        }
        Ok(())
    }

    /// Item range `[start, end)` of `block`.
    pub fn item_block(&self, block: usize) -> std::ops::Range<usize> {
        let start = block * self.num_items / self.blocks;
        let end = (block + 1) * self.num_items / self.blocks;
        start..end
    }

    /// Block of item `item`.
    pub fn block_of(&self, item: usize) -> usize {
        ((item + 1) * self.blocks - 1) / self.num_items
    }

    /// Item range of sub-block `sub` of `block`.
    pub fn sub_block(&self, block: usize, sub: usize) -> std::ops::Range<usize> {
        let range = self.item_block(block);
        let len = range.len();
        range.start + sub * len / self.sub_blocks..range.start + (sub + 1) * len / self.sub_blocks
    }
}

const MAX_MISSES: usize = 64;

/// Generate `(user, item)` pairs with string IDs `u{n}` / `i{n}`, listed user by user.
pub fn block_preferences(cfg: &BlockConfig, seed: u64) -> Result<Vec<(String, String)>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, Stream::Synthetic, 0));
    let zipf = |len: usize| {
        let weights = (1..=len).map(|r| (r as f64).powf(-cfg.popularity));
        WeightedIndex::new(weights).expect("non-empty positive weights")
    };
    let block_samplers: Vec<_> = (0..cfg.blocks).map(|b| zipf(cfg.item_block(b).len())).collect();
    let sub_samplers: Vec<Vec<_>> = (0..cfg.blocks)
        .map(|b| (0..cfg.sub_blocks).map(|s| zipf(cfg.sub_block(b, s).len())).collect())
        .collect();
    let mut pairs = Vec::with_capacity(cfg.num_users * cfg.per_user);
    let mut chosen = vec![false; cfg.num_items];
    for u in 0..cfg.num_users {
        let blocks = rand::seq::index::sample(&mut rng, cfg.blocks, cfg.blocks_per_user).into_vec();
        let subs: Vec<usize> = blocks.iter().map(|_| rng.random_range(0..cfg.sub_blocks)).collect();
        let mut items = Vec::with_capacity(cfg.per_user);
        // Duplicate draws are retried; after too many in a row the draw is
        // taken from the whole catalogue so saturated preferences cannot stall.
        let mut misses = 0;
        while items.len() < cfg.per_user {
            let item = if misses < MAX_MISSES && rng.random_bool(cfg.in_block) {
                let k = rng.random_range(0..blocks.len());
                let b = blocks[k];
                if rng.random_bool(cfg.in_sub) {
                    cfg.sub_block(b, subs[k]).start + sub_samplers[b][subs[k]].sample(&mut rng)
                } else {
                    cfg.item_block(b).start + block_samplers[b].sample(&mut rng)
                }
            } else {
                rng.random_range(0..cfg.num_items)
            };
            if chosen[item] {
                misses += 1;
            } else {
                chosen[item] = true;
                misses = 0;
                items.push(item);
            }
        }
        for &i in &items {
            chosen[i] = false;
            pairs.push((format!("u{u}"), format!("i{i}")));
        }
    }
    Ok(pairs)
}
