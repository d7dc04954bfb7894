//! Lead-sheet JSON exchange format.
//!
//! ```json
//! { "tempo_bpm": 120,
//!   "bars": [ { "melody": [ {"position": 0, "duration": 4, "pitch": 67} ],
//!               "chords": [ {"root": "C", "quality": "maj"}, {"root": null, "quality": null} ] } ] }
//! ```
//!
//! `velocity` is an optional per-note extension (default 100).

use log::warn;
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::{
    enforce_monophony, parse_pitch_class, ChordLabel, ChordQuality, LeadSheet, LeadSheetBar, PITCH_CLASS_NAMES,
};
use crate::midi::{clamp_tempo, NoteEvent, MAX_DURATION, MAX_PITCH, MIN_PITCH, STEPS_PER_BAR};

pub const DEFAULT_MELODY_VELOCITY: u8 = 100;

#[derive(Debug, Error)]
pub enum LeadSheetError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at {path}: {reason}")]
    Schema { path: String, reason: String },
}

fn schema(path: impl Into<String>, reason: impl Into<String>) -> LeadSheetError {
    LeadSheetError::Schema {
        path: path.into(),
        reason: reason.into(),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value, LeadSheetError> {
    obj.get(key)
        .ok_or_else(|| schema(format!("{path}.{key}"), "missing field"))
}

fn int_in(v: &Value, path: &str, lo: u64, hi: u64) -> Result<u8, LeadSheetError> {
    match v.as_u64() {
        Some(x) if (lo..=hi).contains(&x) => Ok(x as u8),
        _ => Err(schema(path, format!("expected integer in {lo}..={hi}, got {v}"))),
    }
}

/// Parses and validates a lead sheet. Overlapping melody notes are cut to keep
/// the melody monophonic; unknown chord qualities become no-chord. Both cases
/// are reported in the returned warnings and logged.
pub fn load_leadsheet(bytes: &[u8]) -> Result<(LeadSheet, Vec<String>), LeadSheetError> {
    let root: Value = serde_json::from_slice(bytes)?;
    let mut warnings = Vec::new();
    let obj = root.as_object().ok_or_else(|| schema("$", "expected object"))?;
    let tempo = field(obj, "$", "tempo_bpm")?
        .as_f64()
        .filter(|t| t.is_finite() && *t > 0.0)
        .ok_or_else(|| schema("$.tempo_bpm", "expected positive number"))?;
    let bars_v = field(obj, "$", "bars")?
        .as_array()
        .ok_or_else(|| schema("$.bars", "expected array"))?;

    let mut bars = Vec::with_capacity(bars_v.len());
    for (k, bv) in bars_v.iter().enumerate() {
        let bpath = format!("$.bars[{k}]");
        let bobj = bv.as_object().ok_or_else(|| schema(&bpath, "expected object"))?;
        let melody_v = field(bobj, &bpath, "melody")?
            .as_array()
            .ok_or_else(|| schema(format!("{bpath}.melody"), "expected array"))?;
        let mut melody = Vec::with_capacity(melody_v.len());
        for (i, nv) in melody_v.iter().enumerate() {
            let npath = format!("{bpath}.melody[{i}]");
            let nobj = nv.as_object().ok_or_else(|| schema(&npath, "expected object"))?;
            let position = int_in(
                field(nobj, &npath, "position")?,
                &format!("{npath}.position"),
                0,
                u64::from(STEPS_PER_BAR) - 1,
            )?;
            let duration = int_in(
                field(nobj, &npath, "duration")?,
                &format!("{npath}.duration"),
                1,
                u64::from(MAX_DURATION),
            )?;
            let pitch = int_in(
                field(nobj, &npath, "pitch")?,
                &format!("{npath}.pitch"),
                u64::from(MIN_PITCH),
                u64::from(MAX_PITCH),
            )?;
            let velocity = match nobj.get("velocity") {
                None | Some(Value::Null) => DEFAULT_MELODY_VELOCITY,
                Some(v) => int_in(v, &format!("{npath}.velocity"), 0, 127)?,
            };
            melody.push(NoteEvent {
                bar: k as u32,
                position,
                duration,
                pitch,
                velocity,
            });
        }

        let chords_v = field(bobj, &bpath, "chords")?
            .as_array()
            .ok_or_else(|| schema(format!("{bpath}.chords"), "expected array"))?;
        if chords_v.len() != 2 {
            return Err(schema(
                format!("{bpath}.chords"),
                format!("expected exactly 2 chords, got {}", chords_v.len()),
            ));
        }
        let mut chords = [ChordLabel::NoChord; 2];
        for (j, cv) in chords_v.iter().enumerate() {
            let cpath = format!("{bpath}.chords[{j}]");
            chords[j] = parse_chord(cv, &cpath, &mut warnings)?;
        }
        bars.push(LeadSheetBar { melody, chords });
    }

    let mut melody: Vec<Vec<NoteEvent>> = bars.iter_mut().map(|b| std::mem::take(&mut b.melody)).collect();
    let cut = enforce_monophony(&mut melody);
    if cut > 0 {
        warnings.push(format!("{cut} overlapping melody note(s) truncated or dropped"));
    }
    for (b, m) in bars.iter_mut().zip(melody) {
        b.melody = m;
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok((
        LeadSheet {
            tempo_bpm: clamp_tempo(tempo),
            bars,
        },
        warnings,
    ))
}

fn parse_chord(cv: &Value, path: &str, warnings: &mut Vec<String>) -> Result<ChordLabel, LeadSheetError> {
    let cobj = cv.as_object().ok_or_else(|| schema(path, "expected object"))?;
    let root = match cobj.get("root") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => {
            Some(parse_pitch_class(s).ok_or_else(|| schema(format!("{path}.root"), format!("unknown root {s:?}")))?)
        }
        Some(other) => {
            return Err(schema(
                format!("{path}.root"),
                format!("expected string or null, got {other}"),
            ))
        }
    };
    let quality = match cobj.get("quality") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => match ChordQuality::from_name(s) {
            Some(q) => Some(q),
            None => {
                warnings.push(format!("{path}.quality: unknown quality {s:?} mapped to no-chord"));
                return Ok(ChordLabel::NoChord);
            }
        },
        Some(other) => {
            return Err(schema(
                format!("{path}.quality"),
                format!("expected string or null, got {other}"),
            ))
        }
    };
    match (root, quality) {
        (None, None) => Ok(ChordLabel::NoChord),
        (Some(r), Some(q)) => Ok(ChordLabel::new(r, q)),
        _ => Err(schema(path, "root and quality must both be null or both be set")),
    }
}

pub fn save_leadsheet(sheet: &LeadSheet) -> String {
    let bars: Vec<Value> = sheet
        .bars
        .iter()
        .map(|b| {
            let melody: Vec<Value> = b
                .melody
                .iter()
                .map(|n| json!({"position": n.position, "duration": n.duration, "pitch": n.pitch, "velocity": n.velocity}))
                .collect();
            let chords: Vec<Value> = b
                .chords
                .iter()
                .map(|c| match c {
                    ChordLabel::NoChord => json!({"root": null, "quality": null}),
                    ChordLabel::Chord { root, quality } => {
                        json!({"root": PITCH_CLASS_NAMES[*root as usize], "quality": quality.name()})
                    }
                })
                .collect();
            json!({"melody": melody, "chords": chords})
        })
        .collect();
    serde_json::to_string_pretty(&json!({"tempo_bpm": sheet.tempo_bpm, "bars": bars})).expect("lead sheet serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let sheet = LeadSheet {
            tempo_bpm: 96.0,
            bars: vec![
                LeadSheetBar {
                    melody: vec![NoteEvent {
                        bar: 0,
                        position: 2,
                        duration: 6,
                        pitch: 72,
                        velocity: 64,
                    }],
                    chords: [ChordLabel::new(9, ChordQuality::Min7), ChordLabel::NoChord],
                },
                LeadSheetBar::default(),
            ],
        };
        let (back, warnings) = load_leadsheet(save_leadsheet(&sheet).as_bytes()).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(back, sheet);
    }

    #[test]
    fn overlapping_melody_is_truncated() {
        let src = br#"{"tempo_bpm": 120, "bars": [{"melody": [
            {"position": 0, "duration": 8, "pitch": 60},
            {"position": 4, "duration": 2, "pitch": 62}],
            "chords": [{"root": null, "quality": null}, {"root": null, "quality": null}]}]}"#;
        let (sheet, warnings) = load_leadsheet(src).unwrap();
        assert_eq!(sheet.bars[0].melody[0].duration, 4);
        assert_eq!(sheet.bars[0].melody[0].velocity, DEFAULT_MELODY_VELOCITY);
        assert_eq!(warnings.len(), 1);
        sheet.validate().unwrap();
    }

    #[test]
    fn unknown_quality_becomes_no_chord() {
        let src = br#"{"tempo_bpm": 120, "bars": [{"melody": [],
            "chords": [{"root": "B", "quality": "m7b5"}, {"root": "Bb", "quality": "dom7"}]}]}"#;
        let (sheet, warnings) = load_leadsheet(src).unwrap();
        assert_eq!(
            sheet.bars[0].chords,
            [ChordLabel::NoChord, ChordLabel::new(10, ChordQuality::Dom7)]
        );
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("m7b5"));
    }

    #[test]
    fn schema_errors_carry_json_path() {
        let cases: [(&[u8], &str); 4] = [
            (br#"{"bars": []}"#, "$.tempo_bpm"),
            (br#"{"tempo_bpm": 1, "bars": [{"melody": [{"position": 16, "duration": 1, "pitch": 60}], "chords": []}]}"#, "$.bars[0].melody[0].position"),
            (br#"{"tempo_bpm": 1, "bars": [{"melody": [], "chords": [{"root": null, "quality": null}]}]}"#, "$.bars[0].chords"),
            (br#"{"tempo_bpm": 1, "bars": [{"melody": [], "chords": [{"root": "H", "quality": "maj"}, {"root": null, "quality": null}]}]}"#, "$.bars[0].chords[0].root"),
        ];
        for (src, want) in cases {
            match load_leadsheet(src) {
                Err(LeadSheetError::Schema { path, .. }) => assert_eq!(path, want),
                other => panic!("expected schema error at {want}, got {other:?}"),
            }
        }
    }
}
