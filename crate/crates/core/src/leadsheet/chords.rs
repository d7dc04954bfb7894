//! Half-bar chord recognition by pitch-class template matching.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::midi::{Bar, NoteEvent, STEPS_PER_BAR};

pub const HALF_BAR: u32 = STEPS_PER_BAR / 2;
/// Weight of histogram mass falling outside a template, in tenths.
pub const OFF_TEMPLATE_PENALTY_TENTHS: i64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChordQuality {
    Maj,
    Min,
    Dim,
    Aug,
    Sus2,
    Sus4,
    Dom7,
    Maj7,
    Min7,
}

impl ChordQuality {
    pub const ALL: [ChordQuality; 9] = [
        ChordQuality::Maj,
        ChordQuality::Min,
        ChordQuality::Dim,
        ChordQuality::Aug,
        ChordQuality::Sus2,
        ChordQuality::Sus4,
        ChordQuality::Dom7,
        ChordQuality::Maj7,
        ChordQuality::Min7,
    ];

    /// Intervals above the root.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            ChordQuality::Maj => &[0, 4, 7],
            ChordQuality::Min => &[0, 3, 7],
            ChordQuality::Dim => &[0, 3, 6],
            ChordQuality::Aug => &[0, 4, 8],
            ChordQuality::Sus2 => &[0, 2, 7],
            ChordQuality::Sus4 => &[0, 5, 7],
            ChordQuality::Dom7 => &[0, 4, 7, 10],
            ChordQuality::Maj7 => &[0, 4, 7, 11],
            ChordQuality::Min7 => &[0, 3, 7, 10],
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ChordQuality::Maj => "maj",
            ChordQuality::Min => "min",
            ChordQuality::Dim => "dim",
            ChordQuality::Aug => "aug",
            ChordQuality::Sus2 => "sus2",
            ChordQuality::Sus4 => "sus4",
            ChordQuality::Dom7 => "dom7",
            ChordQuality::Maj7 => "maj7",
            ChordQuality::Min7 => "min7",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.name() == name)
    }
}

pub const PITCH_CLASS_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

pub fn parse_pitch_class(name: &str) -> Option<u8> {
    if let Some(i) = PITCH_CLASS_NAMES.iter().position(|n| *n == name) {
        return Some(i as u8);
    }
    let flat = match name {
        "Db" => 1,
        "Eb" => 3,
        "Fb" => 4,
        "E#" => 5,
        "Gb" => 6,
        "Ab" => 8,
        "Bb" => 10,
        "Cb" => 11,
        "B#" => 0,
        _ => return None,
    };
    Some(flat)
}

/// A chord symbol, or the explicit absence of one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum ChordLabel {
    #[default]
    NoChord,
    Chord {
        root: u8,
        quality: ChordQuality,
    },
}

impl ChordLabel {
    pub fn new(root: u8, quality: ChordQuality) -> Self {
        assert!(root < 12, "root must be a pitch class");
        ChordLabel::Chord { root, quality }
    }

    /// Every label in vocabulary order: no-chord, then root-major over qualities.
    pub fn all() -> impl Iterator<Item = ChordLabel> {
        std::iter::once(ChordLabel::NoChord)
            .chain((0..12u8).flat_map(|r| ChordQuality::ALL.into_iter().map(move |q| ChordLabel::new(r, q))))
    }

    pub fn pitch_class_mask(self) -> u16 {
        match self {
            ChordLabel::NoChord => 0,
            ChordLabel::Chord { root, quality } => {
                quality.intervals().iter().fold(0u16, |m, i| m | 1 << ((root + i) % 12))
            }
        }
    }

    pub fn transpose(self, semitones: i32) -> Self {
        match self {
            ChordLabel::NoChord => self,
            ChordLabel::Chord { root, quality } => ChordLabel::Chord {
                root: (i32::from(root) + semitones).rem_euclid(12) as u8,
                quality,
            },
        }
    }
}

impl fmt::Display for ChordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChordLabel::NoChord => f.write_str("N"),
            ChordLabel::Chord { root, quality } => {
                write!(f, "{}:{}", PITCH_CLASS_NAMES[*root as usize], quality.name())
            }
        }
    }
}

/// Duration-weighted pitch-class histogram of one half-bar window, in steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HalfBarProfile {
    pub mass: [u32; 12],
    /// Lowest pitch sounding anywhere in the window.
    pub bass: Option<u8>,
}

impl HalfBarProfile {
    pub fn total(&self) -> u32 {
        self.mass.iter().sum()
    }

    /// `on − 0.3·off`, scaled by ten so comparisons are exact.
    pub fn score_tenths(&self, label: ChordLabel) -> i64 {
        let mask = label.pitch_class_mask();
        let (mut on, mut off) = (0i64, 0i64);
        for (pc, &m) in self.mass.iter().enumerate() {
            if mask & (1 << pc) != 0 {
                on += i64::from(m);
            } else {
                off += i64::from(m);
            }
        }
        10 * on - OFF_TEMPLATE_PENALTY_TENTHS * off
    }

    fn silent_template_tones(&self, label: ChordLabel) -> u32 {
        let mask = label.pitch_class_mask();
        (0..12)
            .filter(|pc| mask & (1 << pc) != 0 && self.mass[*pc] == 0)
            .count() as u32
    }
}

/// Histograms for every half bar of the piece, counting notes held in from
/// earlier windows.
pub fn half_bar_profiles(bars: &[Bar]) -> Vec<HalfBarProfile> {
    let windows = bars.len() * 2;
    let mut profiles = vec![HalfBarProfile::default(); windows];
    for note in bars.iter().flatten() {
        add_note(&mut profiles, note);
    }
    profiles
}

fn add_note(profiles: &mut [HalfBarProfile], note: &NoteEvent) {
    let (start, end) = (note.start_step(), note.end_step());
    let first = (start / HALF_BAR) as usize;
    let last = ((end - 1) / HALF_BAR) as usize;
    for w in first..=last.min(profiles.len().saturating_sub(1)) {
        let w0 = w as u32 * HALF_BAR;
        let overlap = end.min(w0 + HALF_BAR) - start.max(w0);
        let p = &mut profiles[w];
        p.mass[(note.pitch % 12) as usize] += overlap;
        p.bass = Some(p.bass.map_or(note.pitch, |b| b.min(note.pitch)));
    }
}

/// Best template for one window. Ties on score prefer the previous chord, then
/// the template with fewest silent tones, then a root equal to the bass pitch
/// class, then the smaller root, then quality order.
pub fn best_chord(profile: &HalfBarProfile, previous: Option<ChordLabel>) -> ChordLabel {
    if profile.total() == 0 {
        return ChordLabel::NoChord;
    }
    let scored: Vec<(ChordLabel, i64)> = ChordLabel::all()
        .skip(1)
        .map(|c| (c, profile.score_tenths(c)))
        .collect();
    let best = scored.iter().map(|(_, s)| *s).max().unwrap_or(i64::MIN);
    let mut tied = scored.into_iter().filter(|(_, s)| *s == best).map(|(c, _)| c);
    if let Some(prev) = previous {
        if tied.clone().any(|c| c == prev) {
            return prev;
        }
    }
    let bass_pc = profile.bass.map(|b| b % 12);
    tied.by_ref()
        .min_by_key(|c| match *c {
            ChordLabel::Chord { root, quality } => (
                profile.silent_template_tones(*c),
                Some(root) != bass_pc,
                root,
                quality.index(),
            ),
            ChordLabel::NoChord => unreachable!("no-chord is not a template"),
        })
        .unwrap_or(ChordLabel::NoChord)
}

/// Two chords per bar, one for each half.
pub fn recognize_chords(bars: &[Bar]) -> Vec<[ChordLabel; 2]> {
    let profiles = half_bar_profiles(bars);
    let mut previous: Option<ChordLabel> = None;
    let mut labels = Vec::with_capacity(profiles.len());
    for p in &profiles {
        let c = best_chord(p, previous);
        previous = match c {
            ChordLabel::NoChord => None,
            c => Some(c),
        };
        labels.push(c);
    }
    labels.chunks(2).map(|c| [c[0], c[1]]).collect()
}
