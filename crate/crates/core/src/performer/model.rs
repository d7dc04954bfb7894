//! Decoder forward pass and hand-written backward pass.
//!
//! Pre-norm blocks: `x + attn(ln1(x))`, then `h + ffn(ln2(h))`, with a final
//! norm before the output heads. The FFN uses the tanh form of GeLU.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::loss::{count_targets, cross_entropy, targets_for, LossBreakdown};
use super::{ModelConfig, ModelError, Params, NUM_HEADS};
use crate::tokenizer::{Field, TokenIds};
use crate::Scalar;

const LN_EPS: f64 = 1e-5;

/// A decoder-only model over compound-word id records.
#[derive(Debug, Clone, PartialEq)]
pub struct Performer<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

struct LnCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

struct LayerCache<T> {
    ln1: LnCache<T>,
    a1: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    o: Array2<T>,
    ln2: LnCache<T>,
    a2: Array2<T>,
    u: Array2<T>,
    act: Array2<T>,
}

struct Cache<T> {
    ids: Vec<TokenIds>,
    emb: Array2<T>,
    layers: Vec<LayerCache<T>>,
    final_ln: LnCache<T>,
    z: Array2<T>,
}

fn layer_norm<T: Scalar>(x: &Array2<T>, g: &Array2<T>, b: &Array2<T>) -> (Array2<T>, LnCache<T>) {
    let (n, d) = x.dim();
    let dn = T::lit(d as f64);
    let mut xhat = Array2::zeros((n, d));
    let mut inv_std = Array1::zeros(n);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / dn;
        let var = row.fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / dn;
        let inv = T::one() / (var + T::lit(LN_EPS)).sqrt();
        inv_std[i] = inv;
        xhat.row_mut(i).assign(&row.mapv(|v| (v - mean) * inv));
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, inv_std })
}

/// Returns dx and accumulates the gain and shift gradients.
fn layer_norm_back<T: Scalar>(
    dy: &Array2<T>,
    cache: &LnCache<T>,
    g: &Array2<T>,
    dg: &mut Array2<T>,
    db: &mut Array2<T>,
) -> Array2<T> {
    let (n, d) = dy.dim();
    let dn = T::lit(d as f64);
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * g;
    let mut dx = Array2::zeros((n, d));
    for i in 0..n {
        let dr = dxhat.row(i);
        let xr = cache.xhat.row(i);
        let mean_d = dr.sum() / dn;
        let mean_dx = dr.dot(&xr) / dn;
        let inv = cache.inv_std[i];
        for j in 0..d {
            dx[[i, j]] = inv * (dr[j] - mean_d - xr[j] * mean_dx);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Scalar>(u: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    T::lit(0.5) * u * (T::one() + (c * (u + a * u * u * u)).tanh())
}

fn gelu_grad<T: Scalar>(u: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let t = (c * (u + a * u * u * u)).tanh();
    T::lit(0.5) * (T::one() + t) + T::lit(0.5) * u * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * u * u)
}

fn sum_rows<T: Scalar>(x: &Array2<T>) -> Array2<T> {
    x.sum_axis(Axis(0)).insert_axis(Axis(0))
}

/// Row-wise causal softmax of `scores` in place.
fn causal_softmax<T: Scalar>(scores: &mut Array2<T>) {
    let n = scores.nrows();
    for i in 0..n {
        let mut row = scores.row_mut(i);
        let max = row.iter().take(i + 1).fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for j in 0..n {
            if j <= i {
                let e = (row[j] - max).exp();
                row[j] = e;
                sum += e;
            } else {
                row[j] = T::zero();
            }
        }
        row.mapv_inplace(|v| v / sum);
    }
}

impl<T: Scalar> Performer<T> {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let params = Params::init(&config);
        Ok(Performer { config, params })
    }

    fn check_ids(&self, ids: &[TokenIds]) -> Result<(), ModelError> {
        if ids.len() > self.config.max_len {
            return Err(ModelError::SequenceTooLong {
                len: ids.len(),
                max: self.config.max_len,
            });
        }
        for r in ids {
            r.check_ranges()?;
        }
        Ok(())
    }

    fn embed_rows(&self, ids: &[TokenIds]) -> Array2<T> {
        let widths = &self.config.field_embed;
        let mut emb = Array2::zeros((ids.len(), self.config.embed_width()));
        for (t, r) in ids.iter().enumerate() {
            let mut off = 0;
            for f in Field::ALL {
                let w = widths[f.index()];
                emb.slice_mut(s![t, off..off + w])
                    .assign(&self.params.field_embed[f.index()].row(r.get(f) as usize));
                off += w;
            }
        }
        emb
    }

    /// Joint embedding of one record: per-field rows concatenated and
    /// projected to `d_model`. Position embeddings are not included.
    pub fn embed_super_token(&self, ids: &TokenIds) -> Result<Array1<T>, ModelError> {
        ids.check_ranges()?;
        let emb = self.embed_rows(std::slice::from_ref(ids));
        let x = emb.dot(&self.params.in_proj) + &self.params.in_bias;
        Ok(x.row(0).to_owned())
    }

    fn attention(
        &self,
        a: &Array2<T>,
        l: &super::params::LayerParams<T>,
    ) -> (Array2<T>, [Array2<T>; 4], Vec<Array2<T>>) {
        let n = a.nrows();
        let dh = self.config.head_dim();
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let q = a.dot(&l.wq) + &l.bq;
        let k = a.dot(&l.wk) + &l.bk;
        let v = a.dot(&l.wv) + &l.bv;
        let mut o = Array2::zeros((n, self.config.d_model));
        let mut probs = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut p = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            causal_softmax(&mut p);
            o.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let out = o.dot(&l.wo) + &l.bo;
        (out, [q, k, v, o], probs)
    }

    fn run(&self, ids: &[TokenIds]) -> (Vec<Array2<T>>, Cache<T>) {
        let n = ids.len();
        let p = &self.params;
        let emb = self.embed_rows(ids);
        let mut x = emb.dot(&p.in_proj) + &p.in_bias + p.pos_embed.slice(s![0..n, ..]);
        let mut layers = Vec::with_capacity(p.layers.len());
        for l in &p.layers {
            let (a1, ln1) = layer_norm(&x, &l.ln1_g, &l.ln1_b);
            let (attn, [q, k, v, o], probs) = self.attention(&a1, l);
            let h = &x + &attn;
            let (a2, ln2) = layer_norm(&h, &l.ln2_g, &l.ln2_b);
            let u = a2.dot(&l.w1) + &l.b1;
            let act = u.mapv(gelu);
            x = &h + &(act.dot(&l.w2) + &l.b2);
            layers.push(LayerCache {
                ln1,
                a1,
                q,
                k,
                v,
                probs,
                o,
                ln2,
                a2,
                u,
                act,
            });
        }
        let (z, final_ln) = layer_norm(&x, &p.final_g, &p.final_b);
        let logits = p.head_w.iter().zip(&p.head_b).map(|(w, b)| z.dot(w) + b).collect();
        (
            logits,
            Cache {
                ids: ids.to_vec(),
                emb,
                layers,
                final_ln,
                z,
            },
        )
    }

    /// Per-head logits, each `(len, head_vocab)`. Head 0 is the token family,
    /// heads 1..=8 follow the field order.
    pub fn forward(&self, ids: &[TokenIds]) -> Result<Vec<Array2<T>>, ModelError> {
        self.check_ids(ids)?;
        Ok(self.run(ids).0)
    }

    pub fn forward_batch(&self, batch: &[Vec<TokenIds>]) -> Result<Vec<Vec<Array2<T>>>, ModelError> {
        batch.iter().map(|ids| self.forward(ids)).collect()
    }

    fn backward(&self, cache: &Cache<T>, dlogits: &[Array2<T>], g: &mut Params<T>) {
        let p = &self.params;
        let n = cache.ids.len();
        let mut dz: Array2<T> = Array2::zeros((n, self.config.d_model));
        for (h, dl) in dlogits.iter().enumerate().take(NUM_HEADS) {
            g.head_w[h] += &cache.z.t().dot(dl);
            g.head_b[h] += &sum_rows(dl);
            dz += &dl.dot(&p.head_w[h].t());
        }
        let mut dx = layer_norm_back(&dz, &cache.final_ln, &p.final_g, &mut g.final_g, &mut g.final_b);

        let dh = self.config.head_dim();
        let scale = T::one() / T::lit(dh as f64).sqrt();
        for (li, (l, c)) in p.layers.iter().zip(&cache.layers).enumerate().rev() {
            let gl = &mut g.layers[li];
            // Feed-forward branch; the residual passes dx through unchanged.
            gl.w2 += &c.act.t().dot(&dx);
            gl.b2 += &sum_rows(&dx);
            let dact = dx.dot(&l.w2.t());
            let du = &dact * &c.u.mapv(gelu_grad);
            gl.w1 += &c.a2.t().dot(&du);
            gl.b1 += &sum_rows(&du);
            let da2 = du.dot(&l.w1.t());
            let mut dh1 = dx;
            dh1 += &layer_norm_back(&da2, &c.ln2, &l.ln2_g, &mut gl.ln2_g, &mut gl.ln2_b);

            // Attention branch.
            gl.wo += &c.o.t().dot(&dh1);
            gl.bo += &sum_rows(&dh1);
            let d_o = dh1.dot(&l.wo.t());
            let mut dq = Array2::zeros((n, self.config.d_model));
            let mut dk = Array2::zeros((n, self.config.d_model));
            let mut dv = Array2::zeros((n, self.config.d_model));
            for (h, probs) in c.probs.iter().enumerate() {
                let cols = s![.., h * dh..(h + 1) * dh];
                let doh = d_o.slice(cols);
                let dp = doh.dot(&c.v.slice(cols).t());
                dv.slice_mut(cols).assign(&probs.t().dot(&doh));
                let mut ds = Array2::zeros((n, n));
                for i in 0..n {
                    let mut dot = T::zero();
                    for j in 0..=i {
                        dot += dp[[i, j]] * probs[[i, j]];
                    }
                    for j in 0..=i {
                        ds[[i, j]] = probs[[i, j]] * (dp[[i, j]] - dot) * scale;
                    }
                }
                dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
            }
            let a1t: ArrayView2<'_, T> = c.a1.t();
            gl.wq += &a1t.dot(&dq);
            gl.wk += &a1t.dot(&dk);
            gl.wv += &a1t.dot(&dv);
            gl.bq += &sum_rows(&dq);
            gl.bk += &sum_rows(&dk);
            gl.bv += &sum_rows(&dv);
            let da1 = dq.dot(&l.wq.t()) + dk.dot(&l.wk.t()) + dv.dot(&l.wv.t());
            dx = dh1;
            dx += &layer_norm_back(&da1, &c.ln1, &l.ln1_g, &mut gl.ln1_g, &mut gl.ln1_b);
        }

        g.in_proj += &cache.emb.t().dot(&dx);
        g.in_bias += &sum_rows(&dx);
        {
            let mut pos = g.pos_embed.slice_mut(s![0..n, ..]);
            pos += &dx;
        }
        let demb = dx.dot(&p.in_proj.t());
        let widths = &self.config.field_embed;
        for (t, r) in cache.ids.iter().enumerate() {
            let mut off = 0;
            for f in Field::ALL {
                let w = widths[f.index()];
                let mut row = g.field_embed[f.index()].row_mut(r.get(f) as usize);
                row += &demb.slice(s![t, off..off + w]);
                off += w;
            }
        }
    }

    /// Mean over target positions of the summed per-head cross-entropy.
    pub fn loss(&self, batch: &[Vec<TokenIds>]) -> Result<LossBreakdown, ModelError> {
        let total = batch.iter().map(|ids| count_targets(ids)).sum::<usize>();
        let mut acc = LossBreakdown::zero(total);
        for ids in batch {
            self.check_ids(ids)?;
            let (logits, _) = self.run(ids);
            let (sums, _) = cross_entropy(&logits, &targets_for(ids), total, false);
            acc.accumulate(&sums);
        }
        Ok(acc)
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &[Vec<TokenIds>]) -> Result<(LossBreakdown, Params<T>), ModelError> {
        let total = batch.iter().map(|ids| count_targets(ids)).sum::<usize>();
        let mut acc = LossBreakdown::zero(total);
        let mut grads = self.params.zeros_like();
        for ids in batch {
            self.check_ids(ids)?;
            let (logits, cache) = self.run(ids);
            let (sums, dlogits) = cross_entropy(&logits, &targets_for(ids), total, true);
            acc.accumulate(&sums);
            if total > 0 {
                self.backward(&cache, &dlogits, &mut grads);
            }
        }
        Ok((acc, grads))
    }
}
