//! Bar-wise interleaving of lead sheet and piano, and its inverse.

use super::{tempo_to_bin, Side, SpecKind, SuperToken, TempoBin, TokenError};
use crate::leadsheet::{enforce_monophony, ChordLabel, LeadSheet, LeadSheetBar, HALF_BAR};
use crate::midi::{sort_notes, Bar, NoteEvent, DEFAULT_TEMPO};

/// Interleaved token sequence with per-token bar index and side.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InterleavedSequence {
    pub tokens: Vec<SuperToken>,
    pub bar_index: Vec<u32>,
    pub side: Vec<Side>,
}

impl InterleavedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn push(&mut self, tok: SuperToken, bar: u32, side: Side) {
        self.tokens.push(tok);
        self.bar_index.push(bar);
        self.side.push(side);
    }

    fn extend(&mut self, toks: impl IntoIterator<Item = SuperToken>, bar: u32, side: Side) {
        for t in toks {
            self.push(t, bar, side);
        }
    }
}

fn note_token(n: &NoteEvent) -> SuperToken {
    SuperToken::Note {
        pitch: n.pitch,
        duration: n.duration,
        velocity: n.velocity,
    }
}

/// One metric token per occupied position followed by that position's notes
/// in ascending pitch. `tempo` goes on the first metric token when given.
pub fn encode_piano_bar(bar: &[NoteEvent], tempo: Option<TempoBin>) -> Vec<SuperToken> {
    let mut notes = bar.to_vec();
    sort_notes(&mut notes);
    let mut out = Vec::with_capacity(notes.len() * 2);
    let mut tempo = tempo;
    let mut current: Option<u8> = None;
    for n in &notes {
        if current != Some(n.position) {
            out.push(SuperToken::Metric {
                position: n.position,
                tempo: tempo.take(),
                chord: None,
            });
            current = Some(n.position);
        }
        out.push(note_token(n));
    }
    out
}

/// Chord anchors at positions 0 and 8 are always present; melody onsets get
/// their own metric tokens in between.
pub fn encode_leadsheet_bar(bar: &LeadSheetBar, tempo: Option<TempoBin>) -> Vec<SuperToken> {
    let half = HALF_BAR as u8;
    let mut out = vec![SuperToken::Metric {
        position: 0,
        tempo,
        chord: Some(bar.chords[0]),
    }];
    let mut current = 0u8;
    let mut second_anchor = false;
    for n in &bar.melody {
        if n.position >= half && !second_anchor {
            out.push(SuperToken::Metric {
                position: half,
                tempo: None,
                chord: Some(bar.chords[1]),
            });
            second_anchor = true;
            current = half;
        }
        if n.position != current {
            out.push(SuperToken::metric(n.position));
            current = n.position;
        }
        out.push(note_token(n));
    }
    if !second_anchor {
        out.push(SuperToken::Metric {
            position: half,
            tempo: None,
            chord: Some(bar.chords[1]),
        });
    }
    out
}

/// Builds `BOS, [BAR_SRC, L^k, BAR_TGT, S^k]…, EOS`. Without piano bars the
/// result is the generation prompt: it stops right after the first BAR_TGT.
/// A shorter side is padded with empty bars up to `num_bars`; anything longer
/// than `num_bars` is an error.
pub fn build_interleaved(
    lead: &LeadSheet,
    piano: Option<&[Bar]>,
    num_bars: usize,
) -> Result<InterleavedSequence, TokenError> {
    let tempo = Some(tempo_to_bin(lead.tempo_bpm));
    let mut seq = InterleavedSequence::default();
    seq.push(SuperToken::BOS, 0, Side::Src);

    let Some(piano) = piano else {
        let empty = LeadSheetBar::default();
        let first = lead.bars.first().unwrap_or(&empty);
        seq.push(SuperToken::BAR_SRC, 0, Side::Src);
        seq.extend(encode_leadsheet_bar(first, tempo), 0, Side::Src);
        seq.push(SuperToken::BAR_TGT, 0, Side::Tgt);
        return Ok(seq);
    };

    if lead.bars.len() > num_bars || piano.len() > num_bars {
        return Err(TokenError::BarCountMismatch {
            lead: lead.bars.len(),
            piano: piano.len(),
        });
    }
    let empty_lead = LeadSheetBar::default();
    for k in 0..num_bars {
        let lb = lead.bars.get(k).unwrap_or(&empty_lead);
        let kb = k as u32;
        seq.push(SuperToken::BAR_SRC, kb, Side::Src);
        seq.extend(
            encode_leadsheet_bar(lb, if k == 0 { tempo } else { None }),
            kb,
            Side::Src,
        );
        seq.push(SuperToken::BAR_TGT, kb, Side::Tgt);
        let pb = piano.get(k).map(Vec::as_slice).unwrap_or(&[]);
        seq.extend(encode_piano_bar(pb, None), kb, Side::Tgt);
    }
    seq.push(SuperToken::EOS, num_bars.saturating_sub(1) as u32, Side::Tgt);
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// First structural violation is an error.
    Strict,
    /// Malformed tokens are skipped and counted.
    Tolerant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub leadsheet: LeadSheet,
    pub piano: Vec<Bar>,
    pub skipped: usize,
}

#[derive(Default)]
struct BarState {
    melody: Vec<NoteEvent>,
    chords: [Option<ChordLabel>; 2],
    piano: Vec<NoteEvent>,
    position: Option<u8>,
    has_tgt: bool,
}

/// Inverse of [`build_interleaved`]. A missing EOS is accepted: every bar
/// whose BAR_TGT was reached is returned.
pub fn decode(tokens: &[SuperToken], mode: DecodeMode) -> Result<Decoded, TokenError> {
    let mut skipped = 0usize;
    let mut fail = |index: usize, reason: &str| -> Result<(), TokenError> {
        match mode {
            DecodeMode::Strict => Err(TokenError::Structure {
                index,
                reason: reason.to_string(),
            }),
            DecodeMode::Tolerant => {
                skipped += 1;
                Ok(())
            }
        }
    };

    let mut bars: Vec<BarState> = Vec::new();
    let mut side: Option<Side> = None;
    let mut tempo: Option<TempoBin> = None;
    let mut ended = false;

    for (i, tok) in tokens.iter().enumerate() {
        if i == 0 {
            if *tok != SuperToken::BOS {
                fail(i, "sequence must start with BOS")?;
            } else {
                continue;
            }
        }
        if ended {
            fail(i, "token after EOS")?;
            continue;
        }
        match *tok {
            SuperToken::Spec(SpecKind::Bos) => fail(i, "BOS inside sequence")?,
            SuperToken::Spec(SpecKind::Eos) => {
                if side != Some(Side::Tgt) && !bars.is_empty() {
                    fail(i, "EOS inside a lead-sheet span")?;
                }
                ended = true;
            }
            SuperToken::Bar(Side::Src) => {
                if side == Some(Side::Src) {
                    fail(i, "BAR_SRC inside a lead-sheet span")?;
                }
                bars.push(BarState::default());
                side = Some(Side::Src);
            }
            SuperToken::Bar(Side::Tgt) => match (side, bars.last_mut()) {
                (Some(Side::Src), Some(b)) => {
                    b.has_tgt = true;
                    b.position = None;
                    side = Some(Side::Tgt);
                }
                _ => fail(i, "BAR_TGT without a preceding lead-sheet span")?,
            },
            SuperToken::Metric {
                position,
                tempo: t,
                chord,
            } => {
                let Some(b) = bars.last_mut() else {
                    fail(i, "metric token before first bar")?;
                    continue;
                };
                if position >= 16 {
                    fail(i, "position out of range")?;
                    continue;
                }
                if matches!(b.position, Some(p) if position <= p) {
                    fail(i, "metric positions must increase within a bar")?;
                }
                if t.is_some() {
                    if tempo.is_none() && side == Some(Side::Src) {
                        tempo = t;
                    } else {
                        fail(i, "tempo only allowed on the first lead-sheet metric")?;
                    }
                }
                match (side, chord) {
                    (Some(Side::Src), Some(c)) if position == 0 || position == HALF_BAR as u8 => {
                        b.chords[usize::from(position != 0)] = Some(c);
                    }
                    (Some(Side::Src), Some(_)) => fail(i, "chord away from a half-bar anchor")?,
                    (Some(Side::Tgt), Some(_)) => fail(i, "chord on piano side")?,
                    _ => {}
                }
                b.position = Some(position);
            }
            SuperToken::Note {
                pitch,
                duration,
                velocity,
            } => {
                let Some(b) = bars.last_mut() else {
                    fail(i, "note before first bar")?;
                    continue;
                };
                let Some(position) = b.position else {
                    fail(i, "note before any metric token in bar")?;
                    continue;
                };
                let n = NoteEvent {
                    bar: (bars.len() - 1) as u32,
                    position,
                    duration,
                    pitch,
                    velocity,
                };
                if !n.is_valid() {
                    fail(i, "note field out of range")?;
                    continue;
                }
                let b = bars.last_mut().expect("checked above");
                match side {
                    Some(Side::Tgt) => b.piano.push(n),
                    _ => b.melody.push(n),
                }
            }
        }
    }

    let complete: Vec<BarState> = bars.into_iter().filter(|b| b.has_tgt).collect();
    let mut lead_bars = Vec::with_capacity(complete.len());
    let mut piano = Vec::with_capacity(complete.len());
    for (k, b) in complete.into_iter().enumerate() {
        if b.chords.iter().any(Option::is_none) {
            fail(tokens.len(), &format!("bar {k} lacks a chord anchor"))?;
        }
        let relabel = |mut v: Vec<NoteEvent>| {
            for n in &mut v {
                n.bar = k as u32;
            }
            v
        };
        let mut pb = relabel(b.piano);
        sort_notes(&mut pb);
        piano.push(pb);
        lead_bars.push(LeadSheetBar {
            melody: relabel(b.melody),
            chords: b.chords.map(|c| c.unwrap_or(ChordLabel::NoChord)),
        });
    }

    let mut melody: Vec<Vec<NoteEvent>> = lead_bars.iter_mut().map(|b| std::mem::take(&mut b.melody)).collect();
    if enforce_monophony(&mut melody) > 0 {
        fail(tokens.len(), "lead-sheet melody is not monophonic")?;
    }
    for (b, m) in lead_bars.iter_mut().zip(melody) {
        b.melody = m;
    }

    Ok(Decoded {
        leadsheet: LeadSheet {
            tempo_bpm: tempo.map_or(DEFAULT_TEMPO, super::bin_to_tempo),
            bars: lead_bars,
        },
        piano,
        skipped,
    })
}
