//! Masked multi-head cross-entropy.
//!
//! The record at `t + 1` is a target for position `t` when it lies on the
//! piano side or is a bar marker. The family head is scored at every target;
//! a field head only where the target field is not IGNORE.

use ndarray::Array2;
use serde::Serialize;

use super::{head_sizes, NUM_HEADS};
use crate::tokenizer::{sides_of, Family, Side, TokenIds};
use crate::Scalar;

/// Class index per head, `None` where the head is masked.
pub type HeadTargets = [Option<usize>; NUM_HEADS];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    /// Mean over target positions of the summed head losses.
    pub total: f64,
    /// Contribution of each head to `total`.
    pub per_head: [f64; NUM_HEADS],
    pub target_positions: usize,
}

impl LossBreakdown {
    pub fn zero(target_positions: usize) -> Self {
        LossBreakdown {
            total: 0.0,
            per_head: [0.0; NUM_HEADS],
            target_positions,
        }
    }

    pub(crate) fn accumulate(&mut self, per_head: &[f64; NUM_HEADS]) {
        for (a, b) in self.per_head.iter_mut().zip(per_head) {
            *a += b;
        }
        self.total = self.per_head.iter().sum();
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.per_head.iter().all(|v| v.is_finite())
    }
}

fn is_target(next: &TokenIds, side: Side) -> bool {
    side == Side::Tgt || next.family() == Some(Family::Bar)
}

/// Targets for every position of `ids`; the last position never has one.
pub fn targets_for(ids: &[TokenIds]) -> Vec<Option<HeadTargets>> {
    let sides = sides_of(ids);
    (0..ids.len())
        .map(|t| {
            let next = ids.get(t + 1)?;
            if !is_target(next, sides[t + 1]) {
                return None;
            }
            let mut h: HeadTargets = [None; NUM_HEADS];
            h[0] = next.family().map(Family::index);
            for (f, &id) in next.0.iter().enumerate() {
                if id != 0 {
                    h[f + 1] = Some(id as usize);
                }
            }
            Some(h)
        })
        .collect()
}

pub fn count_targets(ids: &[TokenIds]) -> usize {
    targets_for(ids).iter().filter(|t| t.is_some()).count()
}

/// Mean log-vocabulary size of the active heads, which is the loss of a
/// model whose every head predicts the uniform distribution.
pub fn uniform_loss(batch: &[Vec<TokenIds>]) -> f64 {
    let sizes = head_sizes();
    let mut sum = 0.0;
    let mut count = 0usize;
    for ids in batch {
        for h in targets_for(ids).into_iter().flatten() {
            count += 1;
            sum += h
                .iter()
                .zip(sizes)
                .filter(|(t, _)| t.is_some())
                .map(|(_, v)| (v as f64).ln())
                .sum::<f64>();
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Head losses summed over positions and divided by `norm`. With `grad`, also
/// returns the gradient of that quantity with respect to every logit.
pub(crate) fn cross_entropy<T: Scalar>(
    logits: &[Array2<T>],
    targets: &[Option<HeadTargets>],
    norm: usize,
    grad: bool,
) -> ([f64; NUM_HEADS], Vec<Array2<T>>) {
    let mut sums = [0.0; NUM_HEADS];
    let mut dlogits: Vec<Array2<T>> = if grad {
        logits.iter().map(|l| Array2::zeros(l.dim())).collect()
    } else {
        Vec::new()
    };
    if norm == 0 {
        return (sums, dlogits);
    }
    let inv = T::one() / T::lit(norm as f64);
    for (t, tg) in targets.iter().enumerate() {
        let Some(tg) = tg else { continue };
        for h in 0..NUM_HEADS {
            let Some(c) = tg[h] else { continue };
            let row = logits[h].row(t);
            let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
            let z: T = row.fold(T::zero(), |acc, &v| acc + (v - max).exp());
            let lse = max + z.ln();
            sums[h] += (lse - row[c]).to_f64_exact() / norm as f64;
            if grad {
                let mut d = dlogits[h].row_mut(t);
                for (j, v) in row.iter().enumerate() {
                    d[j] = (*v - lse).exp() * inv;
                }
                d[c] -= inv;
            }
        }
    }
    (sums, dlogits)
}
