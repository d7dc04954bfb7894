//! JSON checkpoints holding the configuration, parameters, optimizer moments
//! and the shuffling stream position. Values are stored as f64, which holds
//! f32 weights exactly.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::AdamW;
use super::{ModelConfig, ModelError, Params, Performer, TrainConfig, Trainer};
use crate::Scalar;

pub const CHECKPOINT_FORMAT: &str = "covergen-checkpoint/1";

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    model: ModelConfig,
    train: TrainConfig,
    step: u64,
    epoch: usize,
    /// Word position of the shuffling stream, as a decimal string.
    rng_word_pos: String,
    params: Vec<TensorRecord>,
    adam_m: Vec<TensorRecord>,
    adam_v: Vec<TensorRecord>,
}

fn dump<T: Scalar>(p: &Params<T>) -> Vec<TensorRecord> {
    p.tensors()
        .into_iter()
        .map(|(name, t, _)| TensorRecord {
            name,
            shape: [t.nrows(), t.ncols()],
            data: t.iter().map(|v| v.to_f64_exact()).collect(),
        })
        .collect()
}

fn restore<T: Scalar>(into: &mut Params<T>, records: &[TensorRecord], what: &str) -> Result<(), ModelError> {
    let names: Vec<String> = into.tensors().into_iter().map(|(n, _, _)| n).collect();
    if names.len() != records.len() {
        return Err(ModelError::Checkpoint(format!(
            "{what}: expected {} tensors, found {}",
            names.len(),
            records.len()
        )));
    }
    for ((t, name), rec) in into.tensors_mut().into_iter().zip(&names).zip(records) {
        if &rec.name != name || rec.shape != [t.nrows(), t.ncols()] {
            return Err(ModelError::Checkpoint(format!(
                "{what}: expected {name} {:?}, found {} {:?}",
                t.dim(),
                rec.name,
                rec.shape
            )));
        }
        if let Some(i) = rec.data.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::Checkpoint(format!("{what}: {name}[{i}] is not finite")));
        }
        *t = Array2::from_shape_vec(
            (rec.shape[0], rec.shape[1]),
            rec.data.iter().map(|&v| T::from_f64_lossy(v)).collect(),
        )
        .map_err(|e| ModelError::Checkpoint(format!("{what}: {name}: {e}")))?;
    }
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(trainer: &Trainer<T>) -> String {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        model: trainer.model.config.clone(),
        train: trainer.config.clone(),
        step: trainer.opt.step,
        epoch: trainer.epoch,
        rng_word_pos: trainer.rng.get_word_pos().to_string(),
        params: dump(&trainer.model.params),
        adam_m: dump(&trainer.opt.m),
        adam_v: dump(&trainer.opt.v),
    };
    serde_json::to_string(&file).expect("checkpoint serializes")
}

pub fn load_checkpoint<T: Scalar>(text: &str) -> Result<Trainer<T>, ModelError> {
    let file: CheckpointFile = serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(ModelError::Checkpoint(format!("unknown format {:?}", file.format)));
    }
    file.model.validate()?;
    let mut model = Performer::<T>::new(file.model)?;
    restore(&mut model.params, &file.params, "params")?;
    let mut opt = AdamW::new(&model.params);
    restore(&mut opt.m, &file.adam_m, "adam_m")?;
    restore(&mut opt.v, &file.adam_v, "adam_v")?;
    opt.step = file.step;
    let word_pos: u128 = file
        .rng_word_pos
        .parse()
        .map_err(|_| ModelError::Checkpoint(format!("bad rng position {:?}", file.rng_word_pos)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
    rng.set_word_pos(word_pos);
    Ok(Trainer {
        model,
        opt,
        config: file.train,
        rng,
        epoch: file.epoch,
    })
}
