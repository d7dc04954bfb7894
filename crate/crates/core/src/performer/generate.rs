//! Bar-synchronous generation.
//!
//! Every lead-sheet bar is teacher-forced (`BAR_SRC, L^k, BAR_TGT`) and the
//! piano bar is sampled until the model emits a bar marker or a special
//! token. Sampling is constrained to the piano grammar: a note needs a metric
//! token earlier in the bar, and metric positions strictly increase.

use ndarray::ArrayView1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelError, Performer, SamplingConfig};
use crate::leadsheet::LeadSheet;
use crate::midi::{sort_notes, Bar, NoteEvent, STEPS_PER_BAR};
use crate::tokenizer::{build_interleaved, Family, Field, Side, SuperToken, TokenIds, Vocab};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    /// One piano bar per lead-sheet bar.
    pub piano: Vec<Bar>,
    /// The whole interleaved sequence, BOS to EOS.
    pub tokens: Vec<SuperToken>,
    pub warnings: Vec<String>,
}

/// Draws an index among `allowed` classes. Temperature 0 picks the arg-max,
/// lowest index first on ties.
pub fn sample_masked<T: Scalar>(
    logits: ArrayView1<'_, T>,
    allowed: impl Fn(usize) -> bool,
    cfg: &SamplingConfig,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let cands: Vec<(usize, f64)> = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| allowed(*i))
        .map(|(i, v)| (i, v.to_f64_exact()))
        .collect();
    if cands.is_empty() {
        return None;
    }
    if cfg.temperature <= 0.0 {
        let mut best = cands[0];
        for &c in &cands[1..] {
            if c.1 > best.1 {
                best = c;
            }
        }
        return Some(best.0);
    }
    let max = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<(usize, f64)> = cands
        .iter()
        .map(|&(i, v)| (i, ((v - max) / cfg.temperature).exp()))
        .collect();
    let z: f64 = probs.iter().map(|p| p.1).sum();
    for p in &mut probs {
        p.1 /= z;
    }
    probs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let top_p = cfg.top_p.clamp(f64::MIN_POSITIVE, 1.0);
    let mut cum = 0.0;
    let mut keep = probs.len();
    for (k, p) in probs.iter().enumerate() {
        cum += p.1;
        if cum >= top_p {
            keep = k + 1;
            break;
        }
    }
    probs.truncate(keep);
    let mass: f64 = probs.iter().map(|p| p.1).sum();
    let mut r = rng.gen::<f64>() * mass;
    for &(i, p) in &probs {
        if r < p {
            return Some(i);
        }
        r -= p;
    }
    probs.last().map(|p| p.0)
}

struct Context {
    bos: TokenIds,
    pairs: Vec<Vec<TokenIds>>,
}

impl Context {
    /// BOS, the most recent whole pairs that fit, then `current`.
    fn input(&self, current: &[TokenIds], max_len: usize) -> Option<Vec<TokenIds>> {
        let mut budget = max_len.checked_sub(1 + current.len())?;
        let mut start = self.pairs.len();
        while start > 0 && self.pairs[start - 1].len() <= budget {
            budget -= self.pairs[start - 1].len();
            start -= 1;
        }
        let mut out = vec![self.bos];
        for p in &self.pairs[start..] {
            out.extend_from_slice(p);
        }
        out.extend_from_slice(current);
        Some(out)
    }
}

impl<T: Scalar> Performer<T> {
    /// Generates one piano bar per bar of `lead`.
    pub fn generate(&self, lead: &LeadSheet, cfg: &SamplingConfig) -> Result<Generation, ModelError> {
        let vocab = Vocab::default();
        let n = lead.bars.len();
        let empty: Vec<Bar> = vec![Vec::new(); n];
        let prompt = build_interleaved(lead, Some(&empty), n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let max_len = self.config.max_len;

        let mut ctx = Context {
            bos: vocab.encode(&SuperToken::BOS),
            pairs: Vec::new(),
        };
        let mut tokens = vec![SuperToken::BOS];
        let mut piano = Vec::with_capacity(n);
        let mut warnings = Vec::new();

        for k in 0..n {
            let src: Vec<SuperToken> = prompt
                .tokens
                .iter()
                .zip(&prompt.bar_index)
                .zip(&prompt.side)
                .skip(1)
                .filter(|((_, &b), &s)| b as usize == k && s == Side::Src)
                .map(|((t, _), _)| *t)
                .chain(std::iter::once(SuperToken::BAR_TGT))
                .collect();
            let mut current: Vec<TokenIds> = src.iter().map(|t| vocab.encode(t)).collect();
            if 1 + current.len() >= max_len {
                return Err(ModelError::ContextOverflow {
                    bar: k,
                    needed: current.len() + 2,
                    max_len,
                });
            }
            tokens.extend(&src);

            let mut bar: Bar = Vec::new();
            let mut last_pos: Option<u8> = None;
            let mut sampled = 0usize;
            loop {
                if sampled >= cfg.max_tokens_per_bar {
                    warnings.push(format!("bar {k}: stopped after {sampled} tokens"));
                    break;
                }
                let Some(input) = ctx.input(&current, max_len) else {
                    warnings.push(format!("bar {k}: context full after {sampled} tokens"));
                    break;
                };
                let logits = self.forward(&input)?;
                let t = input.len() - 1;
                let more_positions = last_pos.is_none_or(|p| u32::from(p) + 1 < STEPS_PER_BAR);
                let family = sample_masked(
                    logits[0].row(t),
                    |i| match Family::ALL[i] {
                        Family::Spec | Family::Bar => true,
                        Family::Metric => more_positions,
                        Family::Note => last_pos.is_some(),
                    },
                    cfg,
                    &mut rng,
                )
                .map(|i| Family::ALL[i]);
                let head = |f: Field| logits[f.index() + 1].row(t);
                let tok = match family {
                    Some(Family::Metric) => {
                        // Position ids are `position + 1`.
                        let lo = last_pos.map_or(1, |p| usize::from(p) + 2);
                        let id = sample_masked(head(Field::Position), |i| i >= lo, cfg, &mut rng)
                            .expect("a later position exists");
                        let position = (id - 1) as u8;
                        last_pos = Some(position);
                        SuperToken::metric(position)
                    }
                    Some(Family::Note) => {
                        let mut draw = |f: Field| {
                            sample_masked(head(f), |i| i != 0, cfg, &mut rng).expect("field has non-ignore ids") as u32
                        };
                        let pitch = draw(Field::Pitch);
                        let duration = draw(Field::Duration);
                        let velocity = draw(Field::Velocity);
                        let tok = vocab.decode(&TokenIds([0, 0, 0, 0, 0, pitch, duration, velocity]))?;
                        if let SuperToken::Note {
                            pitch,
                            duration,
                            velocity,
                        } = tok
                        {
                            bar.push(NoteEvent {
                                bar: k as u32,
                                position: last_pos.expect("metric precedes note"),
                                duration,
                                pitch,
                                velocity,
                            });
                        }
                        tok
                    }
                    _ => break,
                };
                current.push(vocab.encode(&tok));
                tokens.push(tok);
                sampled += 1;
            }
            sort_notes(&mut bar);
            piano.push(bar);
            ctx.pairs.push(current);
        }
        tokens.push(SuperToken::EOS);
        Ok(Generation {
            piano,
            tokens,
            warnings,
        })
    }
}
