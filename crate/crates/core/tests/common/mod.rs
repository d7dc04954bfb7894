//! Random generators shared by the integration tests.
#![allow(dead_code)]

use covergen_core::leadsheet::{ChordLabel, LeadSheet, LeadSheetBar};
use covergen_core::midi::{sort_notes, Bar, NoteEvent, MAX_DURATION, MAX_PITCH, MIN_PITCH, STEPS_PER_BAR};
use covergen_core::performer::Performer;
use covergen_core::tokenizer::{bin_to_tempo, TempoBin, TokenIds, NUM_TEMPO_BINS};
use rand::Rng;

pub fn random_note<R: Rng>(rng: &mut R, bar: u32, position: u8) -> NoteEvent {
    NoteEvent {
        bar,
        position,
        duration: rng.gen_range(1..=MAX_DURATION),
        pitch: rng.gen_range(MIN_PITCH..=MAX_PITCH),
        velocity: rng.gen_range(1..=127),
    }
}

/// Up to `max_notes` notes at random positions, sorted. Chords are likely.
pub fn random_bar<R: Rng>(rng: &mut R, bar: u32, max_notes: usize) -> Bar {
    let n = rng.gen_range(0..=max_notes);
    let mut notes: Bar = (0..n)
        .map(|_| {
            let pos = rng.gen_range(0..STEPS_PER_BAR as u8);
            random_note(rng, bar, pos)
        })
        .collect();
    sort_notes(&mut notes);
    notes
}

/// Notes at a handful of positions, each position holding 1 to 4 notes.
pub fn random_chordal_bar<R: Rng>(rng: &mut R, bar: u32) -> Bar {
    let mut notes = Vec::new();
    for pos in 0..STEPS_PER_BAR as u8 {
        if rng.gen_bool(0.3) {
            let k = rng.gen_range(1..=4);
            for _ in 0..k {
                notes.push(random_note(rng, bar, pos));
            }
        }
    }
    sort_notes(&mut notes);
    notes
}

pub fn random_chord<R: Rng>(rng: &mut R) -> ChordLabel {
    let all: Vec<ChordLabel> = ChordLabel::all().collect();
    all[rng.gen_range(0..all.len())]
}

/// A monophonic melody whose notes end inside their own bar.
pub fn random_melody_bar<R: Rng>(rng: &mut R, bar: u32) -> Vec<NoteEvent> {
    let mut out = Vec::new();
    let mut pos = rng.gen_range(0..4u8);
    while (pos as u32) < STEPS_PER_BAR && rng.gen_bool(0.8) {
        let room = STEPS_PER_BAR as u8 - pos;
        let duration = rng.gen_range(1..=room.min(6));
        out.push(NoteEvent {
            bar,
            position: pos,
            duration,
            pitch: rng.gen_range(55..=84),
            velocity: rng.gen_range(1..=127),
        });
        pos += duration + rng.gen_range(0..3);
    }
    out
}

pub fn random_leadsheet<R: Rng>(rng: &mut R, bars: usize) -> LeadSheet {
    LeadSheet {
        tempo_bpm: bin_to_tempo(TempoBin::new(rng.gen_range(0..NUM_TEMPO_BINS)).unwrap()),
        bars: (0..bars)
            .map(|k| LeadSheetBar {
                melody: random_melody_bar(rng, k as u32),
                chords: [random_chord(rng), random_chord(rng)],
            })
            .collect(),
    }
}

/// Random notes over `bars` bars with no two notes of one pitch overlapping
/// in time, so MIDI note pairing is unambiguous.
pub fn random_note_list<R: Rng>(rng: &mut R, bars: u32, count: usize) -> Vec<NoteEvent> {
    let mut out: Vec<NoteEvent> = Vec::new();
    for _ in 0..count {
        let (bar, pos) = (rng.gen_range(0..bars), rng.gen_range(0..STEPS_PER_BAR as u8));
        let n = random_note(rng, bar, pos);
        let clash = out
            .iter()
            .any(|o| o.pitch == n.pitch && o.start_step() < n.end_step() && n.start_step() < o.end_step());
        if !clash {
            out.push(n);
        }
    }
    sort_notes(&mut out);
    out
}

/// An accompaniment-style piece: a block chord on beats 1 and 3 from a
/// I-IV-V-I style progression plus a stepwise right-hand line on every beat.
pub fn synthetic_piece<R: Rng>(rng: &mut R, bars: u32) -> Vec<NoteEvent> {
    const PROGRESSION: [u8; 4] = [0, 5, 7, 0];
    let key = rng.gen_range(0..12u8);
    let mut notes = Vec::new();
    let mut line = 72 + rng.gen_range(0..5u8);
    for k in 0..bars {
        let root = 48 + (key + PROGRESSION[k as usize % 4]) % 12;
        for pos in [0u8, 8] {
            for iv in [0u8, 4, 7] {
                notes.push(NoteEvent {
                    bar: k,
                    position: pos,
                    duration: 8,
                    pitch: root + iv,
                    velocity: 60,
                });
            }
        }
        for pos in [0u8, 4, 8, 12] {
            line = (line as i16 + rng.gen_range(-2..=2i16)).clamp(66, 84) as u8;
            notes.push(NoteEvent {
                bar: k,
                position: pos,
                duration: 4,
                pitch: line,
                velocity: 80 + rng.gen_range(0..3) * 8,
            });
        }
    }
    sort_notes(&mut notes);
    notes
}

/// Per-position brute force of the skyline melody for one bar: at each of the
/// sixteen steps take the onset with the largest (pitch, duration, velocity),
/// then cut every chosen note at the next chosen onset.
pub fn skyline_oracle(bar: &[NoteEvent]) -> Vec<NoteEvent> {
    let mut chosen: Vec<NoteEvent> = Vec::new();
    for step in 0..STEPS_PER_BAR as u8 {
        let best = bar
            .iter()
            .filter(|n| n.position == step)
            .max_by_key(|n| (n.pitch, n.duration, n.velocity));
        if let Some(n) = best {
            chosen.push(*n);
        }
    }
    for i in 0..chosen.len().saturating_sub(1) {
        let gap = chosen[i + 1].position - chosen[i].position;
        chosen[i].duration = chosen[i].duration.min(gap);
    }
    chosen
}

/// Pitch-class mass of half bar `half` counted one step at a time.
pub fn half_bar_mass(bars: &[Bar], bar: usize, half: usize) -> [u32; 12] {
    let mut mass = [0u32; 12];
    let w0 = (bar as u32) * STEPS_PER_BAR + half as u32 * STEPS_PER_BAR / 2;
    for s in w0..w0 + STEPS_PER_BAR / 2 {
        for n in bars.iter().flatten() {
            if n.start_step() <= s && s < n.end_step() {
                mass[(n.pitch % 12) as usize] += 1;
            }
        }
    }
    mass
}

/// Every chord template reaching the maximal `10·on − 3·off` score, or
/// `[NoChord]` when nothing sounds.
pub fn chord_argmax_oracle(mass: &[u32; 12]) -> Vec<ChordLabel> {
    if mass.iter().all(|&m| m == 0) {
        return vec![ChordLabel::NoChord];
    }
    let scored: Vec<(ChordLabel, i64)> = ChordLabel::all()
        .filter(|c| *c != ChordLabel::NoChord)
        .map(|c| {
            let mask = c.pitch_class_mask();
            let (mut on, mut off) = (0i64, 0i64);
            for (pc, &m) in mass.iter().enumerate() {
                if mask & (1 << pc) != 0 {
                    on += m as i64;
                } else {
                    off += m as i64;
                }
            }
            (c, 10 * on - 3 * off)
        })
        .collect();
    let best = scored.iter().map(|s| s.1).max().unwrap();
    scored.into_iter().filter(|s| s.1 == best).map(|s| s.0).collect()
}

/// Six records whose targets reach every output head.
pub fn six_records() -> Vec<TokenIds> {
    vec![
        TokenIds([1, 0, 0, 0, 0, 0, 0, 0]),
        TokenIds([0, 2, 0, 0, 0, 0, 0, 0]),
        TokenIds([0, 0, 5, 23, 40, 0, 0, 0]),
        TokenIds([0, 0, 0, 0, 0, 40, 4, 81]),
        TokenIds([0, 1, 0, 0, 0, 0, 0, 0]),
        TokenIds([2, 0, 0, 0, 0, 0, 0, 0]),
    ]
}

/// Central-difference gradient against the analytic one, per tensor, as
/// `|a - n| / (|a| + |n|)` over the flattened tensor. When both norms sit
/// below the finite-difference resolution the tensor has no gradient on
/// either side and scores 0; the key bias is such a tensor, since softmax
/// cancels a shift shared by all keys.
pub fn gradient_check(model: &mut Performer<f64>, batch: &[Vec<TokenIds>], h: f64) -> Vec<(String, f64)> {
    let (_, grads) = model.loss_and_grad(batch).unwrap();
    let names: Vec<String> = model.params.tensors().into_iter().map(|(n, _, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads
        .tensors()
        .into_iter()
        .map(|(_, t, _)| t.iter().copied().collect())
        .collect();
    let mut out = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let len = analytic[ti].len();
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = model.params.tensors_mut()[ti].as_slice_mut().unwrap()[i];
            model.params.tensors_mut()[ti].as_slice_mut().unwrap()[i] = orig + h;
            let up = model.loss(batch).unwrap().total;
            model.params.tensors_mut()[ti].as_slice_mut().unwrap()[i] = orig - h;
            let down = model.loss(batch).unwrap().total;
            model.params.tensors_mut()[ti].as_slice_mut().unwrap()[i] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let diff: f64 = analytic[ti]
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let na: f64 = analytic[ti].iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = if na < 1e-7 && nn < 1e-7 { 0.0 } else { diff / (na + nn) };
        out.push((name.clone(), rel));
    }
    out
}
