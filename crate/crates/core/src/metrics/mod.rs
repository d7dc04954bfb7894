//! Melody chroma accuracy between a piano top line and a reference f0 contour.

use serde::Serialize;
use thiserror::Error;

use crate::midi::{NoteEvent, TimeGrid, STEPS_PER_BAR};
use crate::Scalar;

pub const DEFAULT_HOP_SECONDS: f64 = 0.01;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("reference contour has no voiced frames in the compared range")]
    UndefinedMetric,
    #[error("hop size must be positive and finite")]
    BadHop,
    #[error("contour frame {0} is not finite")]
    NonFinite(usize),
    #[error("contour CSV: {0}")]
    Csv(String),
}

/// Frame-wise fundamental frequency; values ≤ 0 mark unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Contour<T> {
    pub hop_seconds: T,
    pub frames: Vec<T>,
}

impl<T: Scalar> F0Contour<T> {
    pub fn new(hop_seconds: T, frames: Vec<T>) -> Result<Self, MetricError> {
        if !(hop_seconds > T::zero() && hop_seconds.is_finite()) {
            return Err(MetricError::BadHop);
        }
        if let Some(i) = frames.iter().position(|f| !f.is_finite()) {
            return Err(MetricError::NonFinite(i));
        }
        Ok(F0Contour { hop_seconds, frames })
    }

    /// Contour whose every voiced frame is the exact frequency of the given
    /// semitone.
    pub fn from_semitones(hop_seconds: T, track: &[Option<u8>]) -> Result<Self, MetricError> {
        let frames = track
            .iter()
            .map(|m| m.map_or(T::zero(), |m| semitone_to_hz(T::lit(f64::from(m)))))
            .collect();
        Self::new(hop_seconds, frames)
    }

    /// Reads `time_sec,f0_hz` rows. The hop is the spacing of the first two
    /// rows and must hold for every row within 1 % of a hop.
    pub fn from_csv(text: &str) -> Result<Self, MetricError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| MetricError::Csv(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["time_sec", "f0_hz"] {
            return Err(MetricError::Csv(format!(
                "expected header time_sec,f0_hz, got {:?}",
                headers
            )));
        }
        let mut times = Vec::new();
        let mut frames = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| MetricError::Csv(e.to_string()))?;
            let parse = |j: usize| -> Result<f64, MetricError> {
                rec.get(j)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| MetricError::Csv(format!("row {}: bad number in column {}", i + 2, j + 1)))
            };
            times.push(parse(0)?);
            frames.push(T::lit(parse(1)?));
        }
        let hop = match times.as_slice() {
            [t0, t1, ..] => t1 - t0,
            _ => DEFAULT_HOP_SECONDS,
        };
        if hop.is_nan() || hop <= 0.0 {
            return Err(MetricError::BadHop);
        }
        for (i, t) in times.iter().enumerate() {
            if ((t - times[0]) - hop * i as f64).abs() > 0.01 * hop {
                return Err(MetricError::Csv(format!(
                    "row {}: rows are not uniformly spaced",
                    i + 2
                )));
            }
        }
        Self::new(T::lit(hop), frames)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_sec,f0_hz\n");
        for (i, f) in self.frames.iter().enumerate() {
            let t = self.hop_seconds.to_f64_exact() * i as f64;
            out.push_str(&format!("{t},{}\n", f.to_f64_exact()));
        }
        out
    }
}

pub fn semitone_to_hz<T: Scalar>(m: T) -> T {
    T::lit(440.0) * T::lit(2.0).powf((m - T::lit(69.0)) / T::lit(12.0))
}

pub fn hz_to_semitone<T: Scalar>(f: T) -> T {
    T::lit(69.0) + T::lit(12.0) * (f / T::lit(440.0)).log2()
}

/// Highest sounding MIDI pitch at each frame time `i · hop`, over the span of
/// `grid.num_bars` bars (extended to cover the last note).
pub fn top_line<T: Scalar>(notes: &[NoteEvent], grid: &TimeGrid, hop_seconds: T) -> Vec<Option<u8>> {
    let sec_per_step = T::lit(grid.seconds_per_step());
    let end_step = notes
        .iter()
        .map(NoteEvent::end_step)
        .max()
        .unwrap_or(0)
        .max(grid.num_bars as u32 * STEPS_PER_BAR);
    let total = T::lit(f64::from(end_step)) * sec_per_step;
    let num_frames = (total / hop_seconds).ceil().to_usize().unwrap_or(0);
    let mut frames: Vec<Option<u8>> = vec![None; num_frames];

    for n in notes {
        let on = T::lit(f64::from(n.start_step())) * sec_per_step;
        let off = T::lit(f64::from(n.end_step())) * sec_per_step;
        // Candidate range widened by one frame; the exact test decides.
        let first = (on / hop_seconds).floor().to_usize().unwrap_or(0).saturating_sub(1);
        let last = ((off / hop_seconds).ceil().to_usize().unwrap_or(0) + 1).min(num_frames);
        for (i, f) in frames.iter_mut().enumerate().take(last).skip(first) {
            let t = T::lit(i as f64) * hop_seconds;
            if on <= t && t < off && f.is_none_or(|p| n.pitch > p) {
                *f = Some(n.pitch);
            }
        }
    }
    frames
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McaReport {
    pub mca: f64,
    pub voiced_frames: usize,
    pub matched_frames: usize,
}

/// Octave-folded pitch-class distance in semitones, in `[0, 6]`.
pub fn chroma_distance<T: Scalar>(a: T, b: T) -> T {
    let twelve = T::lit(12.0);
    let d = (a - b).abs() % twelve;
    d.min(twelve - d)
}

/// Raw chroma accuracy: the share of reference-voiced frames where the
/// estimate is voiced and within half a semitone of the reference pitch class.
/// Estimate frames past its end count as unvoiced; estimate frames past the
/// end of the reference are ignored.
pub fn mca<T: Scalar>(estimate: &[Option<u8>], reference: &F0Contour<T>) -> Result<McaReport, MetricError> {
    let half = T::lit(0.5);
    let mut voiced = 0usize;
    let mut matched = 0usize;
    for (i, &f0) in reference.frames.iter().enumerate() {
        if f0 <= T::zero() {
            continue;
        }
        voiced += 1;
        if let Some(m) = estimate.get(i).copied().flatten() {
            let r = hz_to_semitone(f0);
            if chroma_distance(T::lit(f64::from(m)), r) <= half {
                matched += 1;
            }
        }
    }
    if voiced == 0 {
        return Err(MetricError::UndefinedMetric);
    }
    Ok(McaReport {
        mca: matched as f64 / voiced as f64,
        voiced_frames: voiced,
        matched_frames: matched,
    })
}
