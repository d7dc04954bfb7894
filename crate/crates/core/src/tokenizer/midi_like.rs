//! Flat event-stream encoding (note-on / note-off / time-shift / velocity) on
//! the same sixteenth grid, used as the token-count baseline.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use super::TokenError;
use crate::midi::{Bar, NoteEvent, MAX_DURATION, STEPS_PER_BAR};

/// Longest single time shift, in steps. Longer gaps use several tokens.
pub const MAX_TIME_SHIFT: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MidiLikeToken {
    NoteOn(u8),
    NoteOff(u8),
    TimeShift(u8),
    Velocity(u8),
}

impl fmt::Display for MidiLikeToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MidiLikeToken::NoteOn(p) => write!(f, "NoteOn_{p}"),
            MidiLikeToken::NoteOff(p) => write!(f, "NoteOff_{p}"),
            MidiLikeToken::TimeShift(s) => write!(f, "TimeShift_{s}"),
            MidiLikeToken::Velocity(v) => write!(f, "Velocity_{v}"),
        }
    }
}

impl FromStr for MidiLikeToken {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TokenError::UnknownMidiLike(s.to_string());
        let (kind, value) = s.split_once('_').ok_or_else(bad)?;
        let v: u8 = value.parse().map_err(|_| bad())?;
        match kind {
            "NoteOn" if v <= 127 => Ok(MidiLikeToken::NoteOn(v)),
            "NoteOff" if v <= 127 => Ok(MidiLikeToken::NoteOff(v)),
            "TimeShift" if (1..=MAX_TIME_SHIFT).contains(&v) => Ok(MidiLikeToken::TimeShift(v)),
            "Velocity" if v <= 127 => Ok(MidiLikeToken::Velocity(v)),
            _ => Err(bad()),
        }
    }
}

/// Velocity tokens are emitted only when the velocity changes. Note-offs sort
/// before note-ons at the same step.
pub fn encode_midi_like(bars: &[Bar]) -> Vec<MidiLikeToken> {
    // (step, is_on, pitch, duration, velocity)
    let mut events: Vec<(u32, bool, u8, u8, u8)> = Vec::new();
    for n in bars.iter().flatten() {
        events.push((n.start_step(), true, n.pitch, n.duration, n.velocity));
        events.push((n.end_step(), false, n.pitch, n.duration, n.velocity));
    }
    events.sort_unstable();

    let mut out = Vec::with_capacity(events.len() * 2);
    let mut now = 0u32;
    let mut velocity: Option<u8> = None;
    for (step, is_on, pitch, _, vel) in events {
        let mut gap = step - now;
        while gap > 0 {
            let s = gap.min(u32::from(MAX_TIME_SHIFT));
            out.push(MidiLikeToken::TimeShift(s as u8));
            gap -= s;
        }
        now = step;
        if is_on {
            if velocity != Some(vel) {
                out.push(MidiLikeToken::Velocity(vel));
                velocity = Some(vel);
            }
            out.push(MidiLikeToken::NoteOn(pitch));
        } else {
            out.push(MidiLikeToken::NoteOff(pitch));
        }
    }
    out
}

/// Inverse of [`encode_midi_like`]. Note-offs close the earliest open note of
/// the same pitch; notes left open are dropped. The result has at least
/// `num_bars` bars.
pub fn decode_midi_like(tokens: &[MidiLikeToken], num_bars: usize) -> Vec<Bar> {
    let mut now = 0u32;
    let mut velocity = 64u8;
    let mut open: HashMap<u8, VecDeque<(u32, u8)>> = HashMap::new();
    let mut notes = Vec::new();
    for tok in tokens {
        match *tok {
            MidiLikeToken::TimeShift(s) => now += u32::from(s),
            MidiLikeToken::Velocity(v) => velocity = v,
            MidiLikeToken::NoteOn(p) => open.entry(p).or_default().push_back((now, velocity)),
            MidiLikeToken::NoteOff(p) => {
                if let Some((start, vel)) = open.get_mut(&p).and_then(VecDeque::pop_front) {
                    if now > start {
                        notes.push(NoteEvent {
                            bar: start / STEPS_PER_BAR,
                            position: (start % STEPS_PER_BAR) as u8,
                            duration: (now - start).min(u32::from(MAX_DURATION)) as u8,
                            pitch: p,
                            velocity: vel,
                        });
                    }
                }
            }
        }
    }
    let needed = notes
        .iter()
        .map(|n| n.bar as usize + 1)
        .max()
        .unwrap_or(0)
        .max(num_bars);
    let mut bars = vec![Vec::new(); needed];
    for n in notes {
        bars[n.bar as usize].push(n);
    }
    for b in &mut bars {
        crate::midi::sort_notes(b);
    }
    bars
}
