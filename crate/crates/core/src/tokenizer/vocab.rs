use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Family, Side, SpecKind, SuperToken, TempoBin, TokenError, NUM_TEMPO_BINS};
use crate::leadsheet::ChordLabel;
use crate::midi::{MAX_DURATION, MAX_PITCH, MIN_PITCH, STEPS_PER_BAR};

pub const NUM_FIELDS: usize = 8;
/// Reserved id meaning "field not used" in every field.
pub const IGNORE: u32 = 0;
pub const VOCAB_FORMAT: &str = "covergen-cp-vocab/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    Spec,
    Bar,
    Position,
    Tempo,
    Chord,
    Pitch,
    Duration,
    Velocity,
}

impl Field {
    pub const ALL: [Field; NUM_FIELDS] = [
        Field::Spec,
        Field::Bar,
        Field::Position,
        Field::Tempo,
        Field::Chord,
        Field::Pitch,
        Field::Duration,
        Field::Velocity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Spec => "spec",
            Field::Bar => "bar",
            Field::Position => "position",
            Field::Tempo => "tempo",
            Field::Chord => "chord",
            Field::Pitch => "pitch",
            Field::Duration => "duration",
            Field::Velocity => "velocity",
        }
    }

    /// Table size including the reserved IGNORE id.
    pub fn size(self) -> usize {
        1 + match self {
            Field::Spec => 2,
            Field::Bar => 2,
            Field::Position => STEPS_PER_BAR as usize,
            Field::Tempo => NUM_TEMPO_BINS,
            Field::Chord => 109,
            Field::Pitch => (MAX_PITCH - MIN_PITCH) as usize + 1,
            Field::Duration => MAX_DURATION as usize,
            Field::Velocity => 128,
        }
    }

    /// Fields a token of `family` must set. Metric tempo and chord are optional
    /// and not listed.
    pub fn required_for(family: Family) -> &'static [Field] {
        match family {
            Family::Spec => &[Field::Spec],
            Family::Bar => &[Field::Bar],
            Family::Metric => &[Field::Position],
            Family::Note => &[Field::Pitch, Field::Duration, Field::Velocity],
        }
    }

    pub fn allowed_for(self, family: Family) -> bool {
        match family {
            Family::Metric => matches!(self, Field::Position | Field::Tempo | Field::Chord),
            f => Field::required_for(f).contains(&self),
        }
    }
}

/// Fixed-width id record: one id per field in [`Field::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct TokenIds(pub [u32; NUM_FIELDS]);

impl TokenIds {
    pub fn get(&self, f: Field) -> u32 {
        self.0[f.index()]
    }

    pub fn check_ranges(&self) -> Result<(), TokenError> {
        for f in Field::ALL {
            let id = self.get(f);
            if id as usize >= f.size() {
                return Err(TokenError::IdOutOfRange {
                    field: f.name(),
                    id,
                    size: f.size() as u32,
                });
            }
        }
        Ok(())
    }

    /// Family implied by which fields are set, if the record is well formed.
    pub fn family(&self) -> Option<Family> {
        let set = |f: Field| self.get(f) != IGNORE;
        Family::ALL.into_iter().find(|&fam| {
            Field::required_for(fam).iter().all(|&f| set(f))
                && Field::ALL.iter().all(|&f| !set(f) || f.allowed_for(fam))
        })
    }
}

fn chord_id(c: ChordLabel) -> u32 {
    match c {
        ChordLabel::NoChord => 1,
        ChordLabel::Chord { root, quality } => 2 + u32::from(root) * 9 + quality.index() as u32,
    }
}

pub(crate) fn encode_ids(tok: &SuperToken) -> TokenIds {
    let mut ids = [IGNORE; NUM_FIELDS];
    match *tok {
        SuperToken::Spec(k) => {
            ids[Field::Spec.index()] = match k {
                SpecKind::Bos => 1,
                SpecKind::Eos => 2,
            }
        }
        SuperToken::Bar(s) => {
            ids[Field::Bar.index()] = match s {
                Side::Src => 1,
                Side::Tgt => 2,
            }
        }
        SuperToken::Metric { position, tempo, chord } => {
            ids[Field::Position.index()] = u32::from(position) + 1;
            if let Some(t) = tempo {
                ids[Field::Tempo.index()] = t.index() as u32 + 1;
            }
            if let Some(c) = chord {
                ids[Field::Chord.index()] = chord_id(c);
            }
        }
        SuperToken::Note {
            pitch,
            duration,
            velocity,
        } => {
            ids[Field::Pitch.index()] = u32::from(pitch - MIN_PITCH) + 1;
            ids[Field::Duration.index()] = u32::from(duration);
            ids[Field::Velocity.index()] = u32::from(velocity) + 1;
        }
    }
    TokenIds(ids)
}

pub(crate) fn decode_ids(ids: &TokenIds) -> Result<SuperToken, TokenError> {
    ids.check_ranges()?;
    let fam = ids.family().ok_or(TokenError::NoFamily(ids.0))?;
    let g = |f: Field| ids.get(f);
    Ok(match fam {
        Family::Spec => SuperToken::Spec(if g(Field::Spec) == 1 {
            SpecKind::Bos
        } else {
            SpecKind::Eos
        }),
        Family::Bar => SuperToken::Bar(if g(Field::Bar) == 1 { Side::Src } else { Side::Tgt }),
        Family::Metric => SuperToken::Metric {
            position: (g(Field::Position) - 1) as u8,
            tempo: match g(Field::Tempo) {
                IGNORE => None,
                t => TempoBin::new(t as usize - 1),
            },
            chord: match g(Field::Chord) {
                IGNORE => None,
                c => ChordLabel::all().nth(c as usize - 1),
            },
        },
        Family::Note => SuperToken::Note {
            pitch: (g(Field::Pitch) - 1) as u8 + MIN_PITCH,
            duration: g(Field::Duration) as u8,
            velocity: (g(Field::Velocity) - 1) as u8,
        },
    })
}

fn field_token_names(f: Field) -> Vec<String> {
    let mut names = vec!["<ignore>".to_string()];
    match f {
        Field::Spec => names.extend(["BOS".into(), "EOS".into()]),
        Field::Bar => names.extend(["bar_src".into(), "bar_tgt".into()]),
        Field::Position => names.extend((0..STEPS_PER_BAR).map(|p| format!("pos_{p}"))),
        Field::Tempo => names.extend(
            (0..NUM_TEMPO_BINS)
                .map(|i| format!("tempo_{}", super::bin_to_tempo(TempoBin::new(i).expect("bin in range")))),
        ),
        Field::Chord => names.extend(ChordLabel::all().map(|c| format!("chord_{c}"))),
        Field::Pitch => names.extend((MIN_PITCH..=MAX_PITCH).map(|p| format!("pitch_{p}"))),
        Field::Duration => names.extend((1..=MAX_DURATION).map(|d| format!("dur_{d}"))),
        Field::Velocity => names.extend((0..=127).map(|v| format!("vel_{v}"))),
    }
    names
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct VocabFile {
    format: String,
    fields: Vec<FieldTable>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct FieldTable {
    name: String,
    tokens: Vec<String>,
}

/// Per-field id ↔ token-name tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tables: Vec<Vec<String>>,
    lookup: Vec<HashMap<String, u32>>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tables(Field::ALL.iter().map(|&f| field_token_names(f)).collect())
    }
}

impl Vocab {
    fn from_tables(tables: Vec<Vec<String>>) -> Self {
        let lookup = tables
            .iter()
            .map(|t| t.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect())
            .collect();
        Vocab { tables, lookup }
    }

    pub fn field_size(&self, f: Field) -> usize {
        self.tables[f.index()].len()
    }

    pub fn token_name(&self, f: Field, id: u32) -> Option<&str> {
        self.tables[f.index()].get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, f: Field, name: &str) -> Option<u32> {
        self.lookup[f.index()].get(name).copied()
    }

    pub fn encode(&self, tok: &SuperToken) -> TokenIds {
        encode_ids(tok)
    }

    pub fn decode(&self, ids: &TokenIds) -> Result<SuperToken, TokenError> {
        decode_ids(ids)
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            format: VOCAB_FORMAT.to_string(),
            fields: Field::ALL
                .iter()
                .map(|f| FieldTable {
                    name: f.name().to_string(),
                    tokens: self.tables[f.index()].clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocab serializes")
    }

    /// Loads a vocabulary file. Only files identical to the built-in
    /// vocabulary are accepted since the id arithmetic is fixed.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: VocabFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if file.format != VOCAB_FORMAT {
            return Err(format!("unsupported vocab format {:?}", file.format));
        }
        let names: Vec<&str> = file.fields.iter().map(|f| f.name.as_str()).collect();
        let want: Vec<&str> = Field::ALL.iter().map(|f| f.name()).collect();
        if names != want {
            return Err(format!("field order {names:?} does not match {want:?}"));
        }
        let v = Self::from_tables(file.fields.into_iter().map(|f| f.tokens).collect());
        if v != Vocab::default() {
            return Err("vocabulary tables differ from this build".into());
        }
        Ok(v)
    }
}
