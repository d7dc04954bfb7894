//! Piano MIDI ingestion and export on a fixed 4/4 sixteenth-note grid.
//!
//! The pipeline is `parse_midi` → `quantize` → `split_bars`, with
//! `write_midi` as the inverse for grid-aligned notes.

mod smf;

use std::collections::HashMap;

use log::warn;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use smf::{EventKind, TimedEvent};

pub const STEPS_PER_BAR: u32 = 16;
pub const STEPS_PER_BEAT: u32 = 4;
pub const MAX_DURATION: u8 = 32;
pub const MIN_PITCH: u8 = 21;
pub const MAX_PITCH: u8 = 108;
pub const MIN_TEMPO: f64 = 32.0;
pub const MAX_TEMPO: f64 = 244.0;
pub const DEFAULT_TEMPO: f64 = 120.0;
/// Resolution used by `write_midi`.
pub const WRITE_PPQ: u16 = 480;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MidiError {
    #[error("malformed MIDI at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("unsupported meter {numerator}/{denominator} at tick {tick}; only 4/4 is accepted")]
    UnsupportedMeter { numerator: u8, denominator: u32, tick: u64 },
    #[error("MIDI file contains no notes")]
    Empty,
}

/// A note as read from the file, in MIDI ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RawNote {
    pub onset_ticks: u64,
    pub offset_ticks: u64,
    pub pitch: u8,
    pub velocity: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub steps_per_bar: u32,
    pub ticks_per_step: Ratio<u64>,
    pub tempo_bpm: f64,
    pub num_bars: usize,
}

impl TimeGrid {
    /// Tempo is clamped into the representable range.
    pub fn new(ticks_per_quarter: u16, tempo_bpm: f64, num_bars: usize) -> Self {
        assert!(ticks_per_quarter > 0, "ticks per quarter must be positive");
        TimeGrid {
            steps_per_bar: STEPS_PER_BAR,
            ticks_per_step: Ratio::new(u64::from(ticks_per_quarter), u64::from(STEPS_PER_BEAT)),
            tempo_bpm: clamp_tempo(tempo_bpm),
            num_bars,
        }
    }

    /// The grid `write_midi` produces.
    pub fn with_tempo(tempo_bpm: f64, num_bars: usize) -> Self {
        Self::new(WRITE_PPQ, tempo_bpm, num_bars)
    }

    pub fn seconds_per_step(&self) -> f64 {
        60.0 / self.tempo_bpm / f64::from(STEPS_PER_BEAT)
    }

    /// Nearest grid step for a tick count; exact halves go to the earlier step.
    pub fn ticks_to_steps(&self, ticks: u64) -> u64 {
        round_half_down(Ratio::from_integer(ticks) / self.ticks_per_step)
    }
}

pub fn clamp_tempo(bpm: f64) -> f64 {
    if bpm.is_nan() {
        return DEFAULT_TEMPO;
    }
    bpm.clamp(MIN_TEMPO, MAX_TEMPO)
}

fn round_half_down(r: Ratio<u64>) -> u64 {
    let whole = r.to_integer();
    let frac = r - Ratio::from_integer(whole);
    if frac > Ratio::new(1, 2) {
        whole + 1
    } else {
        whole
    }
}

/// One grid-aligned piano note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NoteEvent {
    pub bar: u32,
    pub position: u8,
    pub duration: u8,
    pub pitch: u8,
    pub velocity: u8,
}

impl NoteEvent {
    /// Absolute onset in sixteenth steps from the start of the piece.
    pub fn start_step(&self) -> u32 {
        self.bar * STEPS_PER_BAR + u32::from(self.position)
    }

    pub fn end_step(&self) -> u32 {
        self.start_step() + u32::from(self.duration)
    }

    pub fn is_valid(&self) -> bool {
        u32::from(self.position) < STEPS_PER_BAR
            && (1..=MAX_DURATION).contains(&self.duration)
            && (MIN_PITCH..=MAX_PITCH).contains(&self.pitch)
            && self.velocity <= 127
    }

    /// Canonical ordering used throughout: onset, then pitch, then duration and velocity.
    pub fn sort_key(&self) -> (u32, u8, u8, u8) {
        (self.start_step(), self.pitch, self.duration, self.velocity)
    }
}

/// The notes whose onset falls in one bar.
pub type Bar = Vec<NoteEvent>;

pub fn sort_notes(notes: &mut [NoteEvent]) {
    notes.sort_by_key(NoteEvent::sort_key);
}

/// Reads a format 0 or 1 Standard MIDI File.
///
/// Notes are paired per track, channel and key. A second note-on for a key that
/// is still sounding closes the earlier note at the new onset. Tempo comes from
/// the first tempo event; later changes are ignored.
pub fn parse_midi(bytes: &[u8]) -> Result<(Vec<RawNote>, TimeGrid), MidiError> {
    let contents = smf::read(bytes)?;
    let ppq = contents.ticks_per_quarter;
    if contents.format == 0 && contents.tracks.len() > 1 {
        warn!("format 0 file declares {} tracks", contents.tracks.len());
    }

    let mut tempo: Option<(u64, u32)> = None;
    let mut ignored_tempo_changes = 0usize;
    let mut end_tick = 0u64;
    let mut notes = Vec::new();

    for track in &contents.tracks {
        let mut events: Vec<TimedEvent> = track.clone();
        // Offs first at equal ticks so repeated notes pair correctly.
        events.sort_by_key(|e| (e.tick, !matches!(e.kind, EventKind::NoteOff { .. })));

        let mut open: HashMap<(u8, u8), (u64, u8)> = HashMap::new();
        let mut track_end = 0u64;
        for ev in &events {
            track_end = track_end.max(ev.tick);
            match ev.kind {
                EventKind::NoteOn { channel, key, velocity } => {
                    if let Some((onset, vel)) = open.insert((channel, key), (ev.tick, velocity)) {
                        push_note(&mut notes, onset, ev.tick, key, vel);
                    }
                }
                EventKind::NoteOff { channel, key } => {
                    if let Some((onset, vel)) = open.remove(&(channel, key)) {
                        push_note(&mut notes, onset, ev.tick, key, vel);
                    }
                }
                EventKind::Tempo(us) => match tempo {
                    None => tempo = Some((ev.tick, us)),
                    Some((t, _)) if ev.tick < t => {
                        ignored_tempo_changes += 1;
                        tempo = Some((ev.tick, us));
                    }
                    Some((_, cur)) if cur != us => ignored_tempo_changes += 1,
                    Some(_) => {}
                },
                EventKind::TimeSignature { numerator, denominator } => {
                    if (numerator, denominator) != (4, 4) {
                        return Err(MidiError::UnsupportedMeter {
                            numerator,
                            denominator,
                            tick: ev.tick,
                        });
                    }
                }
                EventKind::EndOfTrack => {}
            }
        }
        let mut dangling: Vec<_> = open.into_iter().collect();
        dangling.sort_unstable();
        for ((_, key), (onset, vel)) in dangling {
            push_note(&mut notes, onset, track_end, key, vel);
        }
        end_tick = end_tick.max(track_end);
    }

    if ignored_tempo_changes > 0 {
        warn!("ignoring {ignored_tempo_changes} tempo change(s); constant tempo assumed");
    }
    if notes.is_empty() {
        return Err(MidiError::Empty);
    }
    notes.sort_by_key(|n| (n.onset_ticks, n.pitch, n.offset_ticks, n.velocity));

    let bpm = tempo.map_or(DEFAULT_TEMPO, |(_, us)| 60_000_000.0 / f64::from(us));
    let last_offset = notes.iter().map(|n| n.offset_ticks).max().unwrap_or(0);
    let span = last_offset.max(end_tick);
    let ticks_per_bar = u64::from(ppq) * u64::from(STEPS_PER_BAR / STEPS_PER_BEAT);
    let num_bars = span.div_ceil(ticks_per_bar).max(1) as usize;
    Ok((notes, TimeGrid::new(ppq, bpm, num_bars)))
}

fn push_note(notes: &mut Vec<RawNote>, onset: u64, offset: u64, pitch: u8, velocity: u8) {
    if offset > onset {
        notes.push(RawNote {
            onset_ticks: onset,
            offset_ticks: offset,
            pitch,
            velocity,
        });
    }
}

/// Snaps notes to the sixteenth grid.
pub fn quantize(notes: &[RawNote], grid: &TimeGrid) -> Vec<NoteEvent> {
    let mut out: Vec<NoteEvent> = notes
        .iter()
        .map(|n| {
            let start = grid.ticks_to_steps(n.onset_ticks);
            let dur = grid
                .ticks_to_steps(n.offset_ticks - n.onset_ticks)
                .clamp(1, u64::from(MAX_DURATION));
            NoteEvent {
                bar: (start / u64::from(STEPS_PER_BAR)) as u32,
                position: (start % u64::from(STEPS_PER_BAR)) as u8,
                duration: dur as u8,
                pitch: n.pitch.clamp(MIN_PITCH, MAX_PITCH),
                velocity: n.velocity.min(127),
            }
        })
        .collect();
    sort_notes(&mut out);
    out
}

/// Groups notes by the bar holding their onset. Notes are never split at bar
/// lines. The result has `grid.num_bars` bars, or more if a note starts later.
pub fn split_bars(notes: &[NoteEvent], grid: &TimeGrid) -> Vec<Bar> {
    let needed = notes
        .iter()
        .map(|n| n.bar as usize + 1)
        .max()
        .unwrap_or(0)
        .max(grid.num_bars);
    let mut bars = vec![Vec::new(); needed];
    for n in notes {
        bars[n.bar as usize].push(*n);
    }
    bars
}

/// Writes a format 0 file at 480 PPQ with a single tempo and a 4/4 time signature.
///
/// MIDI cannot express a sounding note with velocity 0, so such notes are
/// written with velocity 1.
pub fn write_midi(notes: &[NoteEvent], grid: &TimeGrid) -> Vec<u8> {
    let ticks_per_step = u64::from(WRITE_PPQ / STEPS_PER_BEAT as u16);
    let us_per_quarter = (60_000_000.0 / clamp_tempo(grid.tempo_bpm)).round() as u32;

    // (tick, class, key, event): class orders meta < note-off < note-on.
    let mut keyed: Vec<(u64, u8, u8, TimedEvent)> = vec![
        (
            0,
            0,
            0,
            TimedEvent {
                tick: 0,
                kind: EventKind::Tempo(us_per_quarter),
            },
        ),
        (
            0,
            0,
            1,
            TimedEvent {
                tick: 0,
                kind: EventKind::TimeSignature {
                    numerator: 4,
                    denominator: 4,
                },
            },
        ),
    ];
    let mut last = 0u64;
    for n in notes {
        let on = u64::from(n.start_step()) * ticks_per_step;
        let off = u64::from(n.end_step()) * ticks_per_step;
        last = last.max(off);
        keyed.push((
            on,
            2,
            n.pitch,
            TimedEvent {
                tick: on,
                kind: EventKind::NoteOn {
                    channel: 0,
                    key: n.pitch,
                    velocity: n.velocity.clamp(1, 127),
                },
            },
        ));
        keyed.push((
            off,
            1,
            n.pitch,
            TimedEvent {
                tick: off,
                kind: EventKind::NoteOff {
                    channel: 0,
                    key: n.pitch,
                },
            },
        ));
    }
    let end = last.max(grid.num_bars as u64 * u64::from(STEPS_PER_BAR) * ticks_per_step);
    keyed.push((
        end,
        3,
        0,
        TimedEvent {
            tick: end,
            kind: EventKind::EndOfTrack,
        },
    ));
    keyed.sort_by_key(|k| (k.0, k.1, k.2));
    let events: Vec<TimedEvent> = keyed.into_iter().map(|k| k.3).collect();
    smf::write_format0(WRITE_PPQ, &events)
}

/// `parse_midi` followed by `quantize` and `split_bars`.
pub fn load_bars(bytes: &[u8]) -> Result<(Vec<Bar>, TimeGrid), MidiError> {
    let (raw, grid) = parse_midi(bytes)?;
    let notes = quantize(&raw, &grid);
    let bars = split_bars(&notes, &grid);
    let grid = TimeGrid {
        num_bars: bars.len(),
        ..grid
    };
    Ok((bars, grid))
}
