//! Mini-batch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::LossBreakdown;
use super::optim::{learning_rate, AdamW};
use super::{ModelError, Performer, TrainConfig, NUM_HEADS};
use crate::tokenizer::TokenIds;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub grad_norm: f64,
    pub loss: LossBreakdown,
}

/// Column names of the per-step metrics CSV.
pub fn metrics_header() -> String {
    let mut cols = vec![
        "step".to_string(),
        "epoch".into(),
        "lr".into(),
        "grad_norm".into(),
        "loss".into(),
    ];
    cols.push("loss_family".into());
    for f in crate::tokenizer::Field::ALL {
        cols.push(format!("loss_{}", f.name()));
    }
    debug_assert_eq!(cols.len(), 5 + NUM_HEADS);
    cols.join(",")
}

impl StepRecord {
    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.step.to_string(),
            self.epoch.to_string(),
            format!("{:e}", self.lr),
            format!("{:.6}", self.grad_norm),
            format!("{:.6}", self.loss.total),
        ];
        cols.extend(self.loss.per_head.iter().map(|v| format!("{v:.6}")));
        cols.join(",")
    }
}

/// Model, optimizer state and the shuffling stream.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: Performer<T>,
    pub opt: AdamW<T>,
    pub config: TrainConfig,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Performer<T>, config: TrainConfig) -> Self {
        let opt = AdamW::new(&model.params);
        let rng = ChaCha8Rng::seed_from_u64(model.config.seed);
        Trainer {
            model,
            opt,
            config,
            rng,
            epoch: 0,
        }
    }

    /// One optimizer update on `batch`. A non-finite loss or gradient leaves
    /// the parameters untouched.
    pub fn step(&mut self, batch: &[Vec<TokenIds>]) -> Result<StepRecord, ModelError> {
        let (loss, grads) = self.model.loss_and_grad(batch)?;
        let step = self.opt.step + 1;
        if !loss.is_finite() {
            return Err(ModelError::NonFinite {
                step,
                detail: format!("loss {} with head losses {:?}", loss.total, loss.per_head),
            });
        }
        if let Some((name, _, _)) = grads
            .tensors()
            .into_iter()
            .find(|(_, t, _)| t.iter().any(|v| !v.is_finite()))
        {
            return Err(ModelError::NonFinite {
                step,
                detail: format!("gradient of {name}"),
            });
        }
        let lr = learning_rate(&self.config, self.opt.step);
        let grad_norm = self.opt.update(&mut self.model.params, &grads, &self.config);
        Ok(StepRecord {
            step,
            epoch: self.epoch,
            lr,
            grad_norm,
            loss,
        })
    }

    fn done(&self) -> bool {
        self.config.max_steps.is_some_and(|m| self.opt.step >= m)
    }

    /// Runs the configured epochs over `windows`, reshuffling each epoch.
    /// `on_step` sees every record as it is produced.
    pub fn fit(
        &mut self,
        windows: &[Vec<TokenIds>],
        mut on_step: impl FnMut(&StepRecord),
    ) -> Result<Vec<StepRecord>, ModelError> {
        if windows.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let bs = self.config.batch_size.max(1);
        let mut records = Vec::new();
        while self.epoch < self.config.epochs && !self.done() {
            let mut order: Vec<usize> = (0..windows.len()).collect();
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(bs) {
                if self.done() {
                    break;
                }
                let batch: Vec<Vec<TokenIds>> = chunk.iter().map(|&i| windows[i].clone()).collect();
                let rec = self.step(&batch)?;
                on_step(&rec);
                records.push(rec);
            }
            if !self.done() {
                self.epoch += 1;
            }
        }
        Ok(records)
    }
}
