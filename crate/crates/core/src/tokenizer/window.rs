use std::ops::Range;

use log::warn;

use super::{InterleavedSequence, Side, SuperToken};

/// Cuts a sequence into training windows of whole bar pairs.
///
/// Every window is `BOS` followed by consecutive `(L^k, S^k)` pairs, plus `EOS`
/// when it reaches the end of the piece, and holds as many pairs as fit in
/// `max_len`. Window starts advance by `stride_bars` pairs; cutting stops once
/// a window reaches the last pair. A pair that cannot fit even alone is dropped
/// with a warning.
pub fn window(seq: &InterleavedSequence, max_len: usize, stride_bars: usize) -> Vec<InterleavedSequence> {
    let stride = stride_bars.max(1);
    let starts: Vec<usize> = seq
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == SuperToken::BAR_SRC)
        .map(|(i, _)| i)
        .collect();
    let eos_at = seq.tokens.iter().position(|t| *t == SuperToken::EOS);
    let tail = eos_at.unwrap_or(seq.len());
    let pairs: Vec<Range<usize>> = starts
        .iter()
        .enumerate()
        .map(|(k, &s)| s..starts.get(k + 1).copied().unwrap_or(tail))
        .collect();
    let n = pairs.len();
    let eos_cost = |e: usize| usize::from(e == n && eos_at.is_some());

    let mut out = Vec::new();
    let mut s = 0;
    while s < n {
        let mut len = 1;
        let mut e = s;
        while e < n && len + pairs[e].len() + eos_cost(e + 1) <= max_len {
            len += pairs[e].len();
            e += 1;
        }
        if e == s {
            warn!(
                "bar pair {s} needs {} tokens, more than max_len {max_len}; dropped",
                pairs[s].len() + 1 + eos_cost(s + 1)
            );
            s += 1;
            continue;
        }
        let mut w = InterleavedSequence::default();
        w.push(SuperToken::BOS, seq.bar_index[pairs[s].start], Side::Src);
        for i in pairs[s].start..pairs[e - 1].end {
            w.push(seq.tokens[i], seq.bar_index[i], seq.side[i]);
        }
        if e == n {
            if let Some(i) = eos_at {
                w.push(SuperToken::EOS, seq.bar_index[i], seq.side[i]);
            }
            out.push(w);
            break;
        }
        out.push(w);
        // Never step past pairs that did not fit, so every pair is covered.
        s += stride.min(e - s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leadsheet::{LeadSheet, LeadSheetBar};
    use crate::midi::NoteEvent;
    use crate::tokenizer::build_interleaved;

    fn piece(bars: usize, notes_per_bar: u8) -> InterleavedSequence {
        let lead = LeadSheet {
            tempo_bpm: 120.0,
            bars: vec![LeadSheetBar::default(); bars],
        };
        let piano: Vec<Vec<NoteEvent>> = (0..bars as u32)
            .map(|b| {
                (0..notes_per_bar)
                    .map(|p| NoteEvent {
                        bar: b,
                        position: p,
                        duration: 1,
                        pitch: 60,
                        velocity: 60,
                    })
                    .collect()
            })
            .collect();
        build_interleaved(&lead, Some(&piano), bars).unwrap()
    }

    #[test]
    fn short_sequence_is_one_window() {
        let seq = piece(1, 1);
        assert_eq!(seq.len(), 8);
        assert_eq!(window(&seq, 1024, 1), vec![seq]);
    }

    #[test]
    fn long_stride_still_covers_every_pair() {
        // Ten tokens per pair, so each window holds a single pair.
        let seq = piece(6, 3);
        let ws = window(&seq, 20, 6);
        let firsts: Vec<u32> = ws.iter().map(|w| w.bar_index[1]).collect();
        assert_eq!(firsts, [0, 1, 2, 3, 4, 5]);
        assert_eq!(window(&seq, 1024, 6).len(), 1);
    }

    #[test]
    fn windows_respect_max_len_and_bar_boundaries() {
        // Each pair: BAR_SRC, 2 anchors, BAR_TGT, 2×(metric, note) = 8 tokens.
        let seq = piece(5, 2);
        let ws = window(&seq, 20, 1);
        assert!(ws.len() > 1);
        for w in &ws {
            assert!(w.len() <= 20);
            assert_eq!(w.tokens[0], SuperToken::BOS);
            assert_eq!(w.tokens[1], SuperToken::BAR_SRC);
            let last = *w.tokens.last().unwrap();
            assert!(last == SuperToken::EOS || matches!(last, SuperToken::Note { .. }));
        }
        assert_eq!(ws.last().unwrap().tokens.last(), Some(&SuperToken::EOS));
        assert_eq!(ws[1].bar_index[1], 1);
    }

    #[test]
    fn oversized_pair_is_dropped() {
        let seq = piece(2, 12);
        assert!(window(&seq, 10, 1).is_empty());
    }
}
