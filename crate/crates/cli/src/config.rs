//! Flat `key = value` training config. `#` starts a comment; the first
//! setting must be `version = 1`.
//!
//! ```text
//! version = 1
//! d_model = 64
//! n_layers = 2
//! lr = 3e-4
//! max_steps = 2000
//! ```

use anyhow::{anyhow, bail, Context, Result};
use covergen_core::performer::{ModelConfig, TrainConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow!("{key}: {e}"))
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut saw_version = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ctx = || format!("config line {}", i + 1);
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| anyhow!("expected key = value"))
                .with_context(ctx)?;
            if !saw_version {
                if k != "version" {
                    return Err(anyhow!("first setting must be version = {CONFIG_VERSION}")).with_context(ctx);
                }
                let ver: u32 = num(k, v).with_context(ctx)?;
                if ver != CONFIG_VERSION {
                    return Err(anyhow!("unsupported version {ver}")).with_context(ctx);
                }
                saw_version = true;
                continue;
            }
            cfg.set(k, v).with_context(ctx)?;
        }
        if !saw_version {
            bail!("config is missing version = {CONFIG_VERSION}");
        }
        cfg.model.validate()?;
        cfg.check_train()?;
        Ok(cfg)
    }

    fn set(&mut self, k: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match k {
            "d_model" => m.d_model = num(k, v)?,
            "n_layers" => m.n_layers = num(k, v)?,
            "n_heads" => m.n_heads = num(k, v)?,
            "d_ff" => m.d_ff = num(k, v)?,
            "max_len" => m.max_len = num(k, v)?,
            "seed" => m.seed = num(k, v)?,
            "field_embed" => {
                let widths: Vec<usize> = v.split(',').map(|w| num(k, w.trim())).collect::<Result<_>>()?;
                m.field_embed = widths
                    .try_into()
                    .map_err(|w: Vec<usize>| anyhow!("field_embed needs 8 widths, got {}", w.len()))?;
            }
            "lr" => t.lr = num(k, v)?,
            "warmup_steps" => t.warmup_steps = num(k, v)?,
            "grad_clip" => t.grad_clip = num(k, v)?,
            "weight_decay" => t.weight_decay = num(k, v)?,
            "beta1" => t.beta1 = num(k, v)?,
            "beta2" => t.beta2 = num(k, v)?,
            "adam_eps" => t.adam_eps = num(k, v)?,
            "batch_size" => t.batch_size = num(k, v)?,
            "epochs" => t.epochs = num(k, v)?,
            "max_steps" => t.max_steps = Some(num(k, v)?),
            "version" => bail!("version given twice"),
            _ => bail!("unknown key {k:?}"),
        }
        Ok(())
    }

    fn check_train(&self) -> Result<()> {
        let t = &self.train;
        if !(t.lr.is_finite() && t.lr > 0.0) {
            bail!("lr must be positive");
        }
        if !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) {
            bail!("betas must lie in [0, 1)");
        }
        if t.batch_size == 0 {
            bail!("batch_size must be positive");
        }
        Ok(())
    }
}
