//! Optimization loop with validation-based early stopping and per-epoch timing.

use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, info};

use crate::adjacency::{build_adjacency, NormalizedAdjacency};
use crate::backbone::{backpropagate, init_embeddings, propagate, EmbeddingState, PropagatedEmbeddings};
use crate::dataset::{InteractionDataset, Split};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, MetricMap, DEFAULT_CUTOFFS};
use crate::loss::{accumulate_into, EmbeddingGrads, Loss, LossKind, BPR_EPS, DEFAULT_MARGIN};
use crate::matrix::Matrix;
use crate::optim::{Optimizer, OptimizerKind};
use crate::sampler::epoch_batches;
use crate::seed::{self, Stream};

/// Cutoff whose recall drives checkpoint selection.
pub const SELECTION_CUTOFF: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub negatives: usize,
    pub margin: f64,
    pub dim: usize,
    pub layers: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub eval_every: usize,
    pub init_scale: f64,
    /// Propagate once per epoch instead of once per batch. Gradients are then
    /// taken against stale propagated embeddings.
    pub cache_propagation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::SimCe,
            negatives: 64,
            margin: DEFAULT_MARGIN,
            dim: 64,
            layers: 2,
            lr: 1e-4,
            batch_size: 1024,
            max_epochs: 200,
            patience: 10,
            weight_decay: 1e-4,
            seed: 2024,
            optimizer: OptimizerKind::Adam,
            eval_every: 1,
            init_scale: 0.01,
            cache_propagation: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return fail(format!("learning rate must be finite and non-negative, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if self.patience == 0 {
            return fail("patience must be at least 1".into());
        }
        if self.eval_every == 0 {
            return fail("eval_every must be at least 1".into());
        }
        if self.negatives == 0 {
            return fail("need at least one negative".into());
        }
        if self.loss == LossKind::Bpr && self.negatives != 1 {
            return fail(format!(
                "bpr is defined with a single negative, got {}",
                self.negatives
            ));
        }
        if !self.margin.is_finite() {
            return fail(format!("margin must be finite, got {}", self.margin));
        }
        if self.dim == 0 {
            return fail("embedding dimension must be positive".into());
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return fail(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return fail(format!("init scale must be positive, got {}", self.init_scale));
        }
        Ok(())
    }

    pub fn loss_fn(&self) -> Loss {
        match self.loss {
            LossKind::Bpr => Loss::Bpr { eps: BPR_EPS },
            LossKind::Ssm => Loss::Ssm,
            LossKind::SimCe => Loss::SimCe { margin: self.margin },
        }
    }

    /// `key = value` lines covering every field.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "loss = {}", self.loss);
        let _ = writeln!(s, "negatives = {}", self.negatives);
        let _ = writeln!(s, "margin = {}", self.margin);
        let _ = writeln!(s, "dim = {}", self.dim);
        let _ = writeln!(s, "layers = {}", self.layers);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "batch = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.max_epochs);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "optimizer = {}", self.optimizer);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "init_scale = {}", self.init_scale);
        let _ = writeln!(s, "cache_propagation = {}", self.cache_propagation);
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Validation metrics, present on evaluation epochs.
    pub valid: Option<MetricMap>,
    /// Training wall time of the epoch, evaluation excluded.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<EpochRow>,
    /// Epoch with the highest validation Recall@20; earliest on ties.
    pub best_epoch: Option<usize>,
    pub best_valid: Option<MetricMap>,
    /// Test metrics of the selected checkpoint.
    pub test: Option<MetricMap>,
    pub total_seconds: f64,
    pub stopped_early: bool,
    pub approximate: bool,
    pub config_echo: String,
}

impl MetricsReport {
    /// Converged epoch in the sense of "epoch of best validation performance".
    pub fn converged_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.rows.iter().map(|r| r.seconds).sum::<f64>() / self.rows.len() as f64
        }
    }
}

pub struct TrainOutcome {
    /// Parameters of the selected checkpoint (the last state if nothing was evaluated).
    pub state: EmbeddingState,
    pub report: MetricsReport,
}

/// Forward pass, loss, and gradients on the embedding tables for one batch.
/// Returns the batch loss and `(grad_users, grad_items)`.
pub fn batch_gradients(
    state: &EmbeddingState,
    adj: &NormalizedAdjacency,
    layers: usize,
    loss: &Loss,
    batch: &crate::sampler::TrainBatch,
    cached: Option<&PropagatedEmbeddings>,
) -> Result<(f64, Matrix, Matrix)> {
    let owned;
    let emb = match cached {
        Some(e) => e,
        None => {
            owned = propagate(state, adj, layers)?;
            &owned
        }
    };
    let pos = emb.score_pairs(&batch.users, &batch.pos_items)?;
    let neg = emb.score_rows(&batch.users, &batch.neg_items, batch.negatives)?;
    let grad = loss.evaluate(&pos, &neg, batch.negatives)?;
    let mut g = EmbeddingGrads {
        users: Matrix::zeros(state.num_users(), state.dim()),
        items: Matrix::zeros(state.num_items(), state.dim()),
    };
    accumulate_into(&grad, batch, emb, &mut g)?;
    let (gu, gi) = backpropagate(&g.users, &g.items, adj, layers)?;
    Ok((grad.loss, gu, gi))
}

pub fn train(ds: &InteractionDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let adj = build_adjacency(ds);
    let mut state = init_embeddings(
        ds.num_users,
        ds.num_items,
        cfg.dim,
        seed::derive(cfg.seed, Stream::Init, 0),
        cfg.init_scale,
    )?;
    let mut optimizer = Optimizer::new(cfg.optimizer, &state, cfg.lr, cfg.weight_decay);
    let loss = cfg.loss_fn();
    let has_valid = !ds.valid_pairs.is_empty();
    let approximate = cfg.cache_propagation && cfg.layers > 0;

    let mut rows = Vec::new();
    let mut best: Option<(usize, MetricMap, EmbeddingState)> = None;
    let mut evals_since_best = 0;
    let mut stopped_early = false;
    let started = Instant::now();

    for epoch in 1..=cfg.max_epochs {
        let t0 = Instant::now();
        let cached = if approximate {
            Some(propagate(&state, &adj, cfg.layers)?)
        } else {
            None
        };
        let mut loss_sum = 0.0;
        let mut samples = 0usize;
        for (b, batch) in epoch_batches(ds, cfg.batch_size, cfg.negatives, cfg.seed, epoch as u64)?
            .enumerate()
        {
            let batch = batch?;
            let (batch_loss, gu, gi) =
                batch_gradients(&state, &adj, cfg.layers, &loss, &batch, cached.as_ref())?;
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite { what: "loss", epoch, batch: b });
            }
            if !gu.is_finite() || !gi.is_finite() {
                return Err(Error::NonFinite { what: "gradient", epoch, batch: b });
            }
            loss_sum += batch_loss * batch.len() as f64;
            samples += batch.len();
            optimizer.step(&mut state, &gu, &gi)?;
        }
        let seconds = t0.elapsed().as_secs_f64();
        let mean_loss = if samples > 0 { loss_sum / samples as f64 } else { 0.0 };

        let valid = if has_valid && epoch % cfg.eval_every == 0 {
            let emb = propagate(&state, &adj, cfg.layers)?;
            Some(evaluate(&emb, ds, Split::Valid, &DEFAULT_CUTOFFS)?)
        } else {
            None
        };
        debug!(
            "epoch {epoch}: loss {mean_loss:.6} recall@20 {:?} ({seconds:.2}s)",
            valid.as_ref().map(|m| m.recall(SELECTION_CUTOFF))
        );
        if let Some(m) = &valid {
            let r = m.recall(SELECTION_CUTOFF);
            let improved = best
                .as_ref()
                .is_none_or(|(_, b, _)| r > b.recall(SELECTION_CUTOFF));
            if improved {
                best = Some((epoch, m.clone(), state.clone()));
                evals_since_best = 0;
            } else {
                evals_since_best += 1;
            }
        }
        rows.push(EpochRow {
            epoch,
            mean_loss,
            valid,
            seconds,
        });
        if evals_since_best >= cfg.patience {
            stopped_early = true;
            info!("early stop after epoch {epoch}");
            break;
        }
    }

    let (best_epoch, best_valid, state) = match best {
        Some((e, m, s)) => (Some(e), Some(m), s),
        None => (None, None, state),
    };
    let test = if ds.test_pairs.is_empty() {
        None
    } else {
        let emb = propagate(&state, &adj, cfg.layers)?;
        Some(evaluate(&emb, ds, Split::Test, &DEFAULT_CUTOFFS)?)
    };
    let report = MetricsReport {
        rows,
        best_epoch,
        best_valid,
        test,
        total_seconds: started.elapsed().as_secs_f64(),
        stopped_early,
        approximate,
        config_echo: cfg.echo(),
    };
    Ok(TrainOutcome { state, report })
}
