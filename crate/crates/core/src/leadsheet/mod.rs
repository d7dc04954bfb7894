//! Lead sheets: a monophonic melody plus two chord symbols per bar.
//!
//! Lead sheets are either derived from a piano performance (skyline melody and
//! template chord recognition) or loaded from the JSON exchange format.

mod chords;
mod json;

pub use chords::{
    best_chord, half_bar_profiles, parse_pitch_class, recognize_chords, ChordLabel, ChordQuality, HalfBarProfile,
    HALF_BAR, PITCH_CLASS_NAMES,
};
pub use json::{load_leadsheet, save_leadsheet, LeadSheetError, DEFAULT_MELODY_VELOCITY};

use std::collections::BTreeMap;

use crate::midi::{Bar, NoteEvent, TimeGrid};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LeadSheetBar {
    pub melody: Vec<NoteEvent>,
    pub chords: [ChordLabel; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeadSheet {
    pub tempo_bpm: f64,
    pub bars: Vec<LeadSheetBar>,
}

impl LeadSheet {
    /// Checks sorting, monophony and per-note ranges. Monophony is checked
    /// across bar lines as well.
    pub fn validate(&self) -> Result<(), String> {
        let mut prev: Option<NoteEvent> = None;
        for (k, bar) in self.bars.iter().enumerate() {
            for n in &bar.melody {
                if n.bar as usize != k {
                    return Err(format!("bar {k}: note carries bar index {}", n.bar));
                }
                if !n.is_valid() {
                    return Err(format!("bar {k}: note out of range {n:?}"));
                }
                if let Some(p) = prev {
                    if n.start_step() <= p.start_step() {
                        return Err(format!("bar {k}: melody onsets not strictly increasing"));
                    }
                    if p.end_step() > n.start_step() {
                        return Err(format!("bar {k}: melody notes overlap"));
                    }
                }
                prev = Some(*n);
            }
        }
        Ok(())
    }
}

/// Makes a melody monophonic in place: among notes sharing an onset only the
/// highest survives, and any note still sounding at the next onset is cut
/// there. Returns the number of notes dropped or shortened.
pub fn enforce_monophony(melody: &mut [Vec<NoteEvent>]) -> usize {
    let mut changed = 0;
    let mut flat: Vec<NoteEvent> = melody.iter().flatten().copied().collect();
    flat.sort_by_key(|n| {
        (
            n.start_step(),
            std::cmp::Reverse(n.pitch),
            std::cmp::Reverse(n.duration),
        )
    });
    let before = flat.len();
    flat.dedup_by_key(|n| n.start_step());
    changed += before - flat.len();
    for i in 1..flat.len() {
        let next_start = flat[i].start_step();
        let prev = &mut flat[i - 1];
        if prev.end_step() > next_start {
            prev.duration = (next_start - prev.start_step()) as u8;
            changed += 1;
        }
    }
    for bar in melody.iter_mut() {
        bar.clear();
    }
    for n in flat {
        melody[n.bar as usize].push(n);
    }
    changed
}

/// Highest note at every onset, then overlaps cut left to right.
pub fn skyline_melody(bars: &[Bar]) -> Vec<Vec<NoteEvent>> {
    let mut melody: Vec<Vec<NoteEvent>> = bars
        .iter()
        .map(|bar| {
            let mut top: BTreeMap<u8, NoteEvent> = BTreeMap::new();
            for n in bar {
                top.entry(n.position)
                    .and_modify(|t| {
                        if (n.pitch, n.duration, n.velocity) > (t.pitch, t.duration, t.velocity) {
                            *t = *n;
                        }
                    })
                    .or_insert(*n);
            }
            top.into_values().collect()
        })
        .collect();
    enforce_monophony(&mut melody);
    melody
}

pub fn derive_leadsheet(bars: &[Bar], grid: &TimeGrid) -> LeadSheet {
    let melody = skyline_melody(bars);
    let chords = recognize_chords(bars);
    LeadSheet {
        tempo_bpm: grid.tempo_bpm,
        bars: melody
            .into_iter()
            .zip(chords)
            .map(|(melody, chords)| LeadSheetBar { melody, chords })
            .collect(),
    }
}
