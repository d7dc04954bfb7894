//! Compound-word tokens over four token families.
//!
//! Every step of a sequence is one [`SuperToken`]. On the wire it is a fixed
//! record of eight per-field ids ([`TokenIds`]), with id 0 reserved in every
//! field for "not used by this family".

mod dataset;
mod interleave;
mod midi_like;
mod vocab;
mod window;

pub use dataset::{read_windows, sides_of, write_window_line, TokenWindow};
pub use interleave::{
    build_interleaved, decode, encode_leadsheet_bar, encode_piano_bar, DecodeMode, Decoded, InterleavedSequence,
};
pub use midi_like::{decode_midi_like, encode_midi_like, MidiLikeToken, MAX_TIME_SHIFT};
pub use vocab::{Field, TokenIds, Vocab, IGNORE, NUM_FIELDS, VOCAB_FORMAT};
pub use window::window;

use thiserror::Error;

use crate::leadsheet::ChordLabel;
use crate::midi::{MAX_TEMPO, MIN_TEMPO};

pub const TEMPO_STEP: f64 = 4.0;
pub const NUM_TEMPO_BINS: usize = 54;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenError {
    #[error("token {index}: {reason}")]
    Structure { index: usize, reason: String },
    #[error("field {field} id {id} out of range (size {size})")]
    IdOutOfRange { field: &'static str, id: u32, size: u32 },
    #[error("id record {0:?} matches no token family")]
    NoFamily([u32; NUM_FIELDS]),
    #[error("bar count mismatch: lead sheet has {lead} bars, piano has {piano}")]
    BarCountMismatch { lead: usize, piano: usize },
    #[error("line {line}: {reason}")]
    Dataset { line: usize, reason: String },
    #[error("unknown MIDI-like token {0:?}")]
    UnknownMidiLike(String),
}

/// Index into the 54 tempo values 32, 36, …, 244 BPM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TempoBin(u8);

impl TempoBin {
    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_TEMPO_BINS).then_some(TempoBin(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Clamps to 32–244 BPM and rounds to the nearest multiple of 4.
pub fn tempo_to_bin(bpm: f64) -> TempoBin {
    let bpm = if bpm.is_nan() {
        120.0
    } else {
        bpm.clamp(MIN_TEMPO, MAX_TEMPO)
    };
    let idx = ((bpm - MIN_TEMPO) / TEMPO_STEP).round() as usize;
    TempoBin(idx.min(NUM_TEMPO_BINS - 1) as u8)
}

pub fn bin_to_tempo(bin: TempoBin) -> f64 {
    MIN_TEMPO + TEMPO_STEP * bin.0 as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Spec,
    Bar,
    Metric,
    Note,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Spec, Family::Bar, Family::Metric, Family::Note];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpecKind {
    Bos,
    Eos,
}

/// Which half of a bar pair a token belongs to: lead sheet or piano.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Src,
    Tgt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SuperToken {
    Spec(SpecKind),
    Bar(Side),
    /// A time anchor inside the current bar. Lead-sheet anchors may carry a
    /// chord; the first anchor of a piece carries the tempo.
    Metric {
        position: u8,
        tempo: Option<TempoBin>,
        chord: Option<ChordLabel>,
    },
    /// A note sounding from the most recent metric position.
    Note {
        pitch: u8,
        duration: u8,
        velocity: u8,
    },
}

impl SuperToken {
    pub const BOS: SuperToken = SuperToken::Spec(SpecKind::Bos);
    pub const EOS: SuperToken = SuperToken::Spec(SpecKind::Eos);
    pub const BAR_SRC: SuperToken = SuperToken::Bar(Side::Src);
    pub const BAR_TGT: SuperToken = SuperToken::Bar(Side::Tgt);

    pub fn family(&self) -> Family {
        match self {
            SuperToken::Spec(_) => Family::Spec,
            SuperToken::Bar(_) => Family::Bar,
            SuperToken::Metric { .. } => Family::Metric,
            SuperToken::Note { .. } => Family::Note,
        }
    }

    pub fn metric(position: u8) -> Self {
        SuperToken::Metric {
            position,
            tempo: None,
            chord: None,
        }
    }
}
