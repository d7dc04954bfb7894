//! Parameter tensors and their initialisation.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{head_sizes, ModelConfig};
use crate::tokenizer::Field;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_g: Array2<T>,
    pub ln1_b: Array2<T>,
    pub wq: Array2<T>,
    pub bq: Array2<T>,
    pub wk: Array2<T>,
    pub bk: Array2<T>,
    pub wv: Array2<T>,
    pub bv: Array2<T>,
    pub wo: Array2<T>,
    pub bo: Array2<T>,
    pub ln2_g: Array2<T>,
    pub ln2_b: Array2<T>,
    pub w1: Array2<T>,
    pub b1: Array2<T>,
    pub w2: Array2<T>,
    pub b2: Array2<T>,
}

/// All trainable tensors. Biases and norm gains are `(1, n)` rows so they
/// broadcast over sequence positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    /// One `(vocab, width)` table per token field.
    pub field_embed: Vec<Array2<T>>,
    pub in_proj: Array2<T>,
    pub in_bias: Array2<T>,
    pub pos_embed: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub final_g: Array2<T>,
    pub final_b: Array2<T>,
    /// Output heads: token family first, then one per field.
    pub head_w: Vec<Array2<T>>,
    pub head_b: Vec<Array2<T>>,
}

fn normal<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<T> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || T::lit(dist.sample(rng)))
}

fn zeros<T: Scalar>(cols: usize) -> Array2<T> {
    Array2::zeros((1, cols))
}

fn ones<T: Scalar>(cols: usize) -> Array2<T> {
    Array2::from_elem((1, cols), T::one())
}

impl<T: Scalar> Params<T> {
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.d_model;
        let e = cfg.embed_width();
        let field_embed = Field::ALL
            .iter()
            .map(|f| normal(&mut rng, f.size(), cfg.field_embed[f.index()], 1.0))
            .collect();
        let in_proj = normal(&mut rng, e, d, 1.0 / (e as f64).sqrt());
        let pos_embed = normal(&mut rng, cfg.max_len, d, 0.1);
        let resid_scale = 1.0 / (2.0 * cfg.n_layers as f64).sqrt();
        let layers = (0..cfg.n_layers)
            .map(|_| {
                let sd = 1.0 / (d as f64).sqrt();
                let sff = 1.0 / (cfg.d_ff as f64).sqrt();
                LayerParams {
                    ln1_g: ones(d),
                    ln1_b: zeros(d),
                    wq: normal(&mut rng, d, d, sd),
                    bq: zeros(d),
                    wk: normal(&mut rng, d, d, sd),
                    bk: zeros(d),
                    wv: normal(&mut rng, d, d, sd),
                    bv: zeros(d),
                    wo: normal(&mut rng, d, d, sd * resid_scale),
                    bo: zeros(d),
                    ln2_g: ones(d),
                    ln2_b: zeros(d),
                    w1: normal(&mut rng, d, cfg.d_ff, sd),
                    b1: zeros(cfg.d_ff),
                    w2: normal(&mut rng, cfg.d_ff, d, sff * resid_scale),
                    b2: zeros(d),
                }
            })
            .collect();
        let sizes = head_sizes();
        let head_w = sizes.iter().map(|&v| normal(&mut rng, d, v, 0.02)).collect();
        let head_b = sizes.iter().map(|&v| zeros(v)).collect();
        Params {
            field_embed,
            in_proj,
            in_bias: zeros(d),
            pos_embed,
            layers,
            final_g: ones(d),
            final_b: zeros(d),
            head_w,
            head_b,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    /// Named tensors in a fixed order, with whether weight decay applies.
    pub fn tensors(&self) -> Vec<(String, &Array2<T>, bool)> {
        let mut v: Vec<(String, &Array2<T>, bool)> = Vec::new();
        for (f, t) in Field::ALL.iter().zip(&self.field_embed) {
            v.push((format!("embed.{}", f.name()), t, false));
        }
        v.push(("in_proj".into(), &self.in_proj, true));
        v.push(("in_bias".into(), &self.in_bias, false));
        v.push(("pos_embed".into(), &self.pos_embed, false));
        for (i, l) in self.layers.iter().enumerate() {
            let entries: [(&str, &Array2<T>, bool); 16] = [
                ("ln1_g", &l.ln1_g, false),
                ("ln1_b", &l.ln1_b, false),
                ("wq", &l.wq, true),
                ("bq", &l.bq, false),
                ("wk", &l.wk, true),
                ("bk", &l.bk, false),
                ("wv", &l.wv, true),
                ("bv", &l.bv, false),
                ("wo", &l.wo, true),
                ("bo", &l.bo, false),
                ("ln2_g", &l.ln2_g, false),
                ("ln2_b", &l.ln2_b, false),
                ("w1", &l.w1, true),
                ("b1", &l.b1, false),
                ("w2", &l.w2, true),
                ("b2", &l.b2, false),
            ];
            for (n, t, d) in entries {
                v.push((format!("layers.{i}.{n}"), t, d));
            }
        }
        v.push(("final_g".into(), &self.final_g, false));
        v.push(("final_b".into(), &self.final_b, false));
        for (h, (w, b)) in self.head_w.iter().zip(&self.head_b).enumerate() {
            v.push((format!("head.{h}.w"), w, true));
            v.push((format!("head.{h}.b"), b, false));
        }
        v
    }

    /// Same order as [`Params::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut v: Vec<&mut Array2<T>> = self.field_embed.iter_mut().collect();
        v.push(&mut self.in_proj);
        v.push(&mut self.in_bias);
        v.push(&mut self.pos_embed);
        for l in &mut self.layers {
            v.extend([
                &mut l.ln1_g,
                &mut l.ln1_b,
                &mut l.wq,
                &mut l.bq,
                &mut l.wk,
                &mut l.bk,
                &mut l.wv,
                &mut l.bv,
                &mut l.wo,
                &mut l.bo,
                &mut l.ln2_g,
                &mut l.ln2_b,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
            ]);
        }
        v.push(&mut self.final_g);
        v.push(&mut self.final_b);
        for (w, b) in self.head_w.iter_mut().zip(self.head_b.iter_mut()) {
            v.push(w);
            v.push(b);
        }
        v
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t, _)| t.len()).sum()
    }

    pub fn add_scaled(&mut self, other: &Params<T>, scale: T) {
        for (a, (_, b, _)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
    }
}
