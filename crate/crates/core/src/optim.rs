//! Row-lazy Adam and SGD over the embedding tables.
//!
//! A row is updated only if its gradient row has a nonzero entry in the current
//! step; untouched rows keep their parameters and moments (weight decay
//! included).

use std::fmt;
use std::str::FromStr;

use crate::backbone::EmbeddingState;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

/// Bias-corrected Adam update of a dense slice at step `step` (1-based).
/// Weight decay enters as an L2 term added to the gradient before the moments.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    weight_decay: f64,
) {
    let bias1 = 1.0 - BETA1.powf(step as f64);
    let bias2 = 1.0 - BETA2.powf(step as f64);
    for k in 0..params.len() {
        let g = grads[k] + weight_decay * params[k];
        m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
        v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
        let m_hat = m[k] / bias1;
        let v_hat = v[k] / bias2;
        params[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Matrix,
    v: Matrix,
}

impl Moments {
    fn like(p: &Matrix) -> Self {
        Moments {
            m: Matrix::zeros(p.rows(), p.cols()),
            v: Matrix::zeros(p.rows(), p.cols()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    step: u64,
    moments: Option<(Moments, Moments)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, state: &EmbeddingState, lr: f64, weight_decay: f64) -> Self {
        let moments = match kind {
            OptimizerKind::Adam => Some((Moments::like(&state.users), Moments::like(&state.items))),
            OptimizerKind::Sgd => None,
        };
        Optimizer {
            kind,
            lr,
            weight_decay,
            step: 0,
            moments,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Apply one update from gradients shaped like `state`.
    pub fn step(&mut self, state: &mut EmbeddingState, grad_users: &Matrix, grad_items: &Matrix) -> Result<()> {
        if !state.users.same_shape(grad_users) || !state.items.same_shape(grad_items) {
            return Err(Error::Shape("gradient shape differs from parameters".into()));
        }
        self.step += 1;
        let (lr, wd, step) = (self.lr, self.weight_decay, self.step);
        match (self.kind, self.moments.as_mut()) {
            (OptimizerKind::Adam, Some((mu, mi))) => {
                adam_rows(&mut state.users, grad_users, mu, step, lr, wd);
                adam_rows(&mut state.items, grad_items, mi, step, lr, wd);
            }
            _ => {
                sgd_rows(&mut state.users, grad_users, lr, wd);
                sgd_rows(&mut state.items, grad_items, lr, wd);
            }
        }
        Ok(())
    }
}

fn touched(row: &[f64]) -> bool {
    row.iter().any(|&g| g != 0.0)
}

fn adam_rows(params: &mut Matrix, grads: &Matrix, mom: &mut Moments, step: u64, lr: f64, wd: f64) {
    for r in 0..params.rows() {
        let g = grads.row(r);
        if touched(g) {
            adam_update(
                params.row_mut(r),
                g,
                mom.m.row_mut(r),
                mom.v.row_mut(r),
                step,
                lr,
                wd,
            );
        }
    }
}

fn sgd_rows(params: &mut Matrix, grads: &Matrix, lr: f64, wd: f64) {
    for r in 0..params.rows() {
        let g = grads.row(r);
        if touched(g) {
            for (p, g) in params.row_mut(r).iter_mut().zip(g) {
                *p -= lr * (g + wd * *p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02, 1e-3] {
            let (mut p, mut m, mut v) = ([1.0], [0.0], [0.0]);
            adam_update(&mut p, &[g], &mut m, &mut v, 1, 0.01, 0.0);
            let moved = p[0] - 1.0;
            assert!((moved + 0.01 * f64::signum(g)).abs() < 1e-7, "g={g} moved={moved}");
        }
    }

    #[test]
    fn matches_reference_sequence() {
        // Reference values from an independent arbitrary-precision implementation.
        let grads = [0.3, -1.2, 0.05, 2.0, -0.7, 0.0, 1.1, -0.4];
        let expected = [
            0.490_000_000_285_714_3,
            0.495_171_279_858_979_4,
            0.498_628_150_915_187_8,
            0.495_055_094_082_923_76,
            0.493_581_962_174_482_6,
            0.492_207_967_136_671_4,
            0.488_979_152_792_329_8,
            0.486_791_804_026_303_3,
        ];
        let (mut p, mut m, mut v) = ([0.5], [0.0], [0.0]);
        for (t, (&g, &want)) in grads.iter().zip(&expected).enumerate() {
            adam_update(&mut p, &[g], &mut m, &mut v, t as u64 + 1, 0.01, 0.1);
            assert!((p[0] - want).abs() < 1e-10, "step {}: {} vs {want}", t + 1, p[0]);
        }
    }

    #[test]
    fn untouched_rows_unchanged() {
        let mut state = crate::backbone::init_embeddings(3, 2, 2, 0, 1.0).unwrap();
        let before = state.clone();
        let mut gu = Matrix::zeros(3, 2);
        gu.row_mut(1)[0] = 0.5;
        let gi = Matrix::zeros(2, 2);
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let mut s = state.clone();
            let mut opt = Optimizer::new(kind, &s, 0.1, 0.01);
            opt.step(&mut s, &gu, &gi).unwrap();
            assert_eq!(s.users.row(0), before.users.row(0));
            assert_eq!(s.users.row(2), before.users.row(2));
            assert_ne!(s.users.row(1), before.users.row(1));
            assert_eq!(s.items, before.items);
        }
        let mut opt = Optimizer::new(OptimizerKind::Adam, &state, 0.1, 0.0);
        opt.step(&mut state, &Matrix::zeros(3, 2), &gi).unwrap();
        assert_eq!(state, before);
        assert_eq!(opt.steps(), 1);
    }
}
