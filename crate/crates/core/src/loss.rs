//! Ranking losses over one positive and `N` sampled negatives per sample,
//! with gradients taken with respect to the scores.
//!
//! Gradients in [`LossGrad`] are per-sample derivatives `dl_b / ds`; the batch
//! loss is the mean of the per-sample losses, so [`chain_to_embeddings`]
//! divides by the batch size.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::{axpy, Matrix};
use crate::backbone::PropagatedEmbeddings;
use crate::sampler::TrainBatch;

/// Guard added inside the BPR logarithm.
pub const BPR_EPS: f64 = 1e-5;
/// SimCE margin used when none is given.
pub const DEFAULT_MARGIN: f64 = 5.0;
/// Margin grid searched in the margin sweep.
pub const MARGIN_GRID: [f64; 3] = [1.0, 5.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Bpr,
    Ssm,
    SimCe,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpr" => Ok(LossKind::Bpr),
            "ssm" => Ok(LossKind::Ssm),
            "simce" => Ok(LossKind::SimCe),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Bpr => "bpr",
            LossKind::Ssm => "ssm",
            LossKind::SimCe => "simce",
        })
    }
}

/// Loss value and score gradients for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    /// Mean of `per_sample`.
    pub loss: f64,
    pub per_sample: Vec<f64>,
    /// `dl_b / ds_pos`, length `B`.
    pub d_pos: Vec<f64>,
    /// `dl_b / ds_neg[j]`, row-major `B x N`.
    pub d_neg: Vec<f64>,
    pub negatives: usize,
    /// SimCE only: the negative slot receiving gradient, `None` where the hinge is inactive.
    pub active: Option<Vec<Option<usize>>>,
}

impl LossGrad {
    pub fn batch_size(&self) -> usize {
        self.d_pos.len()
    }

    pub fn d_neg_row(&self, b: usize) -> &[f64] {
        &self.d_neg[b * self.negatives..(b + 1) * self.negatives]
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite()
            && self.d_pos.iter().all(|x| x.is_finite())
            && self.d_neg.iter().all(|x| x.is_finite())
    }

    fn from_parts(
        per_sample: Vec<f64>,
        d_pos: Vec<f64>,
        d_neg: Vec<f64>,
        negatives: usize,
        active: Option<Vec<Option<usize>>>,
    ) -> Self {
        let loss = mean(&per_sample);
        LossGrad {
            loss,
            per_sample,
            d_pos,
            d_neg,
            negatives,
            active,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn check_shapes(pos: &[f64], neg: &[f64], negatives: usize) -> Result<()> {
    if negatives == 0 {
        return Err(Error::Config("need at least one negative per sample".into()));
    }
    if pos.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if neg.len() != pos.len() * negatives {
        return Err(Error::Shape(format!(
            "{} negative scores for {} samples x {negatives} negatives",
            neg.len(),
            pos.len()
        )));
    }
    Ok(())
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `l = -ln(eps + sigmoid(s_pos - s_neg))`, one negative per sample.
pub fn bpr(pos: &[f64], neg: &[f64], eps: f64) -> Result<LossGrad> {
    check_shapes(pos, neg, 1)?;
    let n = pos.len();
    let mut per_sample = Vec::with_capacity(n);
    let mut d_pos = Vec::with_capacity(n);
    let mut d_neg = Vec::with_capacity(n);
    for (&p, &q) in pos.iter().zip(neg) {
        let sig = sigmoid(p - q);
        let guarded = eps + sig;
        per_sample.push(-guarded.ln());
        let dx = -sig * (1.0 - sig) / guarded;
        d_pos.push(dx);
        d_neg.push(-dx);
    }
    Ok(LossGrad::from_parts(per_sample, d_pos, d_neg, 1, None))
}

/// Sampled softmax: `l = ln(1 + sum_j exp(s_j - s_pos))`.
///
/// Evaluated as `m + ln(exp(-m) + sum_j exp(z_j - m))` with `z_j = s_j - s_pos`
/// and `m = max(0, max_j z_j)`.
pub fn ssm(pos: &[f64], neg: &[f64], negatives: usize) -> Result<LossGrad> {
    check_shapes(pos, neg, negatives)?;
    let mut per_sample = Vec::with_capacity(pos.len());
    let mut d_pos = Vec::with_capacity(pos.len());
    let mut d_neg = vec![0.0; neg.len()];
    for ((&p, row), grad) in pos
        .iter()
        .zip(neg.chunks(negatives))
        .zip(d_neg.chunks_mut(negatives))
    {
        let m = row.iter().map(|s| s - p).fold(0.0, f64::max);
        let base = (-m).exp();
        let mut total = base;
        for (g, s) in grad.iter_mut().zip(row) {
            *g = (s - p - m).exp();
            total += *g;
        }
        per_sample.push(m + total.ln());
        let mut mass = 0.0;
        for g in grad.iter_mut() {
            *g /= total;
            mass += *g;
        }
        d_pos.push(-mass);
    }
    Ok(LossGrad::from_parts(per_sample, d_pos, d_neg, negatives, None))
}

/// SimCE: `l = max(margin - s_pos + max_j s_j, 0)`.
///
/// Only the hardest negative (lowest index among ties) receives gradient, and
/// only when the hinge is strictly positive.
pub fn simce(pos: &[f64], neg: &[f64], negatives: usize, margin: f64) -> Result<LossGrad> {
    check_shapes(pos, neg, negatives)?;
    if !margin.is_finite() {
        return Err(Error::Config(format!("margin must be finite, got {margin}")));
    }
    let mut per_sample = Vec::with_capacity(pos.len());
    let mut d_pos = Vec::with_capacity(pos.len());
    let mut d_neg = vec![0.0; neg.len()];
    let mut active = Vec::with_capacity(pos.len());
    for (b, (&p, row)) in pos.iter().zip(neg.chunks(negatives)).enumerate() {
        let (hardest, &max) = row
            .iter()
            .enumerate()
            .fold((0, &row[0]), |best, cur| if cur.1 > best.1 { cur } else { best });
        let hinge = margin - p + max;
        if hinge > 0.0 {
            per_sample.push(hinge);
            d_pos.push(-1.0);
            d_neg[b * negatives + hardest] = 1.0;
            active.push(Some(hardest));
        } else {
            per_sample.push(0.0);
            d_pos.push(0.0);
            active.push(None);
        }
    }
    Ok(LossGrad::from_parts(
        per_sample,
        d_pos,
        d_neg,
        negatives,
        Some(active),
    ))
}

/// A configured loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    Bpr { eps: f64 },
    Ssm,
    SimCe { margin: f64 },
}

impl Loss {
    pub fn new(kind: LossKind, margin: f64) -> Self {
        match kind {
            LossKind::Bpr => Loss::Bpr { eps: BPR_EPS },
            LossKind::Ssm => Loss::Ssm,
            LossKind::SimCe => Loss::SimCe { margin },
        }
    }

    pub fn kind(&self) -> LossKind {
        match self {
            Loss::Bpr { .. } => LossKind::Bpr,
            Loss::Ssm => LossKind::Ssm,
            Loss::SimCe { .. } => LossKind::SimCe,
        }
    }

    pub fn evaluate(&self, pos: &[f64], neg: &[f64], negatives: usize) -> Result<LossGrad> {
        match *self {
            Loss::Bpr { eps } => {
                if negatives != 1 {
                    return Err(Error::Config(format!(
                        "bpr takes exactly one negative, got {negatives}"
                    )));
                }
                bpr(pos, neg, eps)
            }
            Loss::Ssm => ssm(pos, neg, negatives),
            Loss::SimCe { margin } => simce(pos, neg, negatives, margin),
        }
    }
}

/// Gradients of the batch-mean loss with respect to the propagated embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrads {
    pub users: Matrix,
    pub items: Matrix,
}

/// Chain score gradients through `s(u, i) = f(u) . f(i)`. Repeated indices accumulate.
pub fn chain_to_embeddings(
    grad: &LossGrad,
    batch: &TrainBatch,
    emb: &PropagatedEmbeddings,
) -> Result<EmbeddingGrads> {
    let mut out = EmbeddingGrads {
        users: Matrix::zeros(emb.users.rows(), emb.dim()),
        items: Matrix::zeros(emb.items.rows(), emb.dim()),
    };
    accumulate_into(grad, batch, emb, &mut out)?;
    Ok(out)
}

/// As [`chain_to_embeddings`], adding into existing buffers.
pub fn accumulate_into(
    grad: &LossGrad,
    batch: &TrainBatch,
    emb: &PropagatedEmbeddings,
    out: &mut EmbeddingGrads,
) -> Result<()> {
    let b = batch.len();
    if grad.batch_size() != b || grad.negatives != batch.negatives {
        return Err(Error::Shape(format!(
            "loss gradient is {}x{} but batch is {}x{}",
            grad.batch_size(),
            grad.negatives,
            b,
            batch.negatives
        )));
    }
    if b == 0 {
        return Ok(());
    }
    let scale = 1.0 / b as f64;
    for s in 0..b {
        let u = batch.users[s];
        let pos = batch.pos_items[s];
        let dp = scale * grad.d_pos[s];
        if dp != 0.0 {
            axpy(dp, emb.items.row(pos), out.users.row_mut(u));
            axpy(dp, emb.users.row(u), out.items.row_mut(pos));
        }
        for (&item, &dn) in batch.neg_row(s).iter().zip(grad.d_neg_row(s)) {
            if dn != 0.0 {
                let dn = scale * dn;
                axpy(dn, emb.items.row(item), out.users.row_mut(u));
                axpy(dn, emb.users.row(u), out.items.row_mut(item));
            }
        }
    }
    Ok(())
}
