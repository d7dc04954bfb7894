//! One check per acceptance criterion, each printed as a PASS or FAIL line.
//! Runs without the libtest harness so the report is always shown.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use covergen_core::leadsheet::{
    derive_leadsheet, recognize_chords, save_leadsheet, skyline_melody, ChordLabel, ChordQuality,
};
use covergen_core::metrics::{mca, top_line, F0Contour};
use covergen_core::midi::{load_bars, split_bars, write_midi, Bar, NoteEvent, TimeGrid};
use covergen_core::performer::{uniform_loss, ModelConfig, Performer, SamplingConfig, TrainConfig, Trainer};
use covergen_core::tokenizer::{
    build_interleaved, decode, encode_midi_like, encode_piano_bar, DecodeMode, SuperToken, TokenIds, Vocab,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn codec_round_trip() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut pairs = 0;
    while pairs < 500 {
        let n = rng.gen_range(1..=4);
        let lead = common::random_leadsheet(&mut rng, n);
        let piano: Vec<Bar> = (0..n as u32).map(|k| common::random_bar(&mut rng, k, 10)).collect();
        let seq = build_interleaved(&lead, Some(&piano), n).map_err(|e| e.to_string())?;
        let d = decode(&seq.tokens, DecodeMode::Strict).map_err(|e| format!("pair {pairs}: {e}"))?;
        check(d.leadsheet == lead && d.piano == piano, || {
            format!("pair {pairs} differs after decode")
        })?;
        pairs += n;
    }
    for i in 0..100 {
        let bars = rng.gen_range(1..=8);
        let count = rng.gen_range(1..=60);
        let notes = common::random_note_list(&mut rng, bars, count);
        let bytes = write_midi(&notes, &TimeGrid::with_tempo(rng.gen_range(40.0..200.0), bars as usize));
        let (back, _) = load_bars(&bytes).map_err(|e| format!("list {i}: {e}"))?;
        let flat: Vec<NoteEvent> = back.into_iter().flatten().collect();
        check(flat == notes, || format!("note list {i} changed through MIDI"))?;
    }
    let took = t0.elapsed();
    check(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!("{pairs} bar pairs and 100 MIDI lists exact in {took:.2?}"))
}

fn skyline_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for i in 0..200 {
        let bar = common::random_bar(&mut rng, 0, 14);
        let got = &skyline_melody(std::slice::from_ref(&bar))[0];
        check(*got == common::skyline_oracle(&bar), || format!("bar {i}: {bar:?}"))?;
    }
    Ok("200/200 bars match".into())
}

fn chord_properties() -> Outcome {
    let mut hits = 0;
    for root in 0..12u8 {
        for q in ChordQuality::ALL {
            let label = ChordLabel::Chord { root, quality: q };
            let bar: Bar = q
                .intervals()
                .iter()
                .map(|iv| NoteEvent {
                    bar: 0,
                    position: 0,
                    duration: 16,
                    pitch: 48 + root + iv,
                    velocity: 80,
                })
                .collect();
            let got = recognize_chords(&[bar])[0];
            check(got == [label, label], || {
                format!("{label} recognized as {} / {}", got[0], got[1])
            })?;
            hits += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let (mut bars_checked, mut halves) = (0, 0);
    while bars_checked < 100 {
        let bar: Bar = common::random_bar(&mut rng, 0, 6)
            .into_iter()
            .map(|n| NoteEvent {
                pitch: n.pitch.clamp(30, 96),
                ..n
            })
            .collect();
        let shift = rng.gen_range(-6..=6);
        let moved: Bar = bar
            .iter()
            .map(|n| NoteEvent {
                pitch: (n.pitch as i32 + shift) as u8,
                ..*n
            })
            .collect();
        let a = recognize_chords(std::slice::from_ref(&bar))[0];
        let b = recognize_chords(&[moved])[0];
        let mut used = false;
        for h in 0..2 {
            let best = common::chord_argmax_oracle(&common::half_bar_mass(std::slice::from_ref(&bar), 0, h));
            if best.len() == 1 && best[0] != ChordLabel::NoChord {
                check(a[h].transpose(shift) == b[h], || {
                    format!("{} shifted {shift} gave {}", a[h], b[h])
                })?;
                halves += 1;
                used = true;
            }
        }
        bars_checked += usize::from(used);
    }
    Ok(format!(
        "{hits}/108 block chords; {halves} unique-argmax halves over {bars_checked} bars rotate"
    ))
}

fn mca_validation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let est: Vec<Option<u8>> = (0..500)
        .map(|_| rng.gen_bool(0.8).then(|| rng.gen_range(40..90u8)))
        .collect();
    let reference = F0Contour::from_semitones(0.01f64, &est).map_err(|e| e.to_string())?;
    let shifted = |d: u8| -> Vec<Option<u8>> { est.iter().map(|m| m.map(|m| m + d)).collect() };
    let score = |e: &[Option<u8>]| mca(e, &reference).map(|r| r.mca).map_err(|e| e.to_string());
    let (same, up12, up1) = (score(&est)?, score(&shifted(12))?, score(&shifted(1))?);
    check(same == 1.0 && up12 == 1.0 && up1 == 0.0, || {
        format!("self {same}, +12 {up12}, +1 {up1}")
    })?;

    for trial in 0..100 {
        let truth: Vec<Option<u8>> = (0..200)
            .map(|_| rng.gen_bool(0.7).then(|| rng.gen_range(48..84u8)))
            .collect();
        let reference = F0Contour::from_semitones(0.01f64, &truth).map_err(|e| e.to_string())?;
        let mut order: Vec<usize> = (0..truth.len()).collect();
        order.shuffle(&mut rng);
        let mut e = truth.clone();
        let mut last = 1.0;
        for &i in &order[..60] {
            e[i] = if rng.gen_bool(0.5) {
                None
            } else {
                e[i].map(|m| m + rng.gen_range(1..=11))
            };
            let now = mca(&e, &reference).map_err(|e| e.to_string())?.mca;
            check(now <= last, || format!("trial {trial}: rose from {last} to {now}"))?;
            last = now;
        }
    }
    Ok("self 1.0, +12 1.0, +1 0.0; 100 corruption trials monotone".into())
}

fn model_numerics() -> Outcome {
    let cfg = ModelConfig {
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_ff: 16,
        max_len: 6,
        field_embed: [2, 2, 2, 2, 3, 3, 2, 3],
        seed: 7,
    };
    let mut model = Performer::<f64>::new(cfg).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for t in model.params.tensors_mut() {
        t.mapv_inplace(|v| v + 0.2 * (rng.gen::<f64>() - 0.5));
    }
    let report = common::gradient_check(&mut model, &[common::six_records()], 1e-5);
    let (worst_name, worst) = report
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .unwrap_or_default();
    check(worst <= 1e-4, || format!("{worst_name}: relative error {worst:e}"))?;

    let model = Performer::<f64>::new(ModelConfig {
        max_len: 64,
        ..cfg_small()
    })
    .map_err(|e| e.to_string())?;
    let vocab = Vocab::default();
    for trial in 0..20 {
        let lead = common::random_leadsheet(&mut rng, 3);
        let piano: Vec<Bar> = (0..3).map(|k| common::random_bar(&mut rng, k, 4)).collect();
        let mut ids: Vec<TokenIds> = build_interleaved(&lead, Some(&piano), 3)
            .map_err(|e| e.to_string())?
            .tokens
            .iter()
            .map(|t| vocab.encode(t))
            .collect();
        ids.truncate(64);
        let j = rng.gen_range(1..ids.len());
        let before = model.forward(&ids).map_err(|e| e.to_string())?;
        ids[j] = vocab.encode(&SuperToken::metric(rng.gen_range(0..16)));
        let after = model.forward(&ids).map_err(|e| e.to_string())?;
        for (b, a) in before.iter().zip(&after) {
            let same = (0..j).all(|t| b.row(t) == a.row(t));
            check(same, || format!("trial {trial}: prefix before {j} changed"))?;
        }
    }

    let model = Performer::<f32>::new(ModelConfig {
        max_len: 256,
        ..ModelConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let batch: Vec<Vec<TokenIds>> = (0..4)
        .map(|_| {
            let lead = common::random_leadsheet(&mut rng, 4);
            let piano: Vec<Bar> = (0..4).map(|k| common::random_bar(&mut rng, k, 6)).collect();
            build_interleaved(&lead, Some(&piano), 4)
                .unwrap()
                .tokens
                .iter()
                .map(|t| vocab.encode(t))
                .collect()
        })
        .collect();
    let loss = model.loss(&batch).map_err(|e| e.to_string())?.total;
    let uniform = uniform_loss(&batch);
    let rel = (loss - uniform).abs() / uniform;
    check(rel <= 0.1, || format!("initial loss {loss:.4} vs uniform {uniform:.4}"))?;
    Ok(format!(
        "worst gradient error {worst:.1e} ({worst_name}); 20 causality edits; initial loss {loss:.3} vs {uniform:.3}"
    ))
}

fn cfg_small() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 4,
        d_ff: 32,
        max_len: 64,
        field_embed: [4; 8],
        seed: 1,
    }
}

fn overfit_sanity() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let notes = common::synthetic_piece(&mut rng, 8);
    let grid = TimeGrid::with_tempo(100.0, 8);
    let bars = split_bars(&notes, &grid);
    let lead = derive_leadsheet(&bars, &grid);
    let ids: Vec<TokenIds> = build_interleaved(&lead, Some(&bars), 8)
        .map_err(|e| e.to_string())?
        .tokens
        .iter()
        .map(|t| Vocab::default().encode(t))
        .collect();
    let model = Performer::<f32>::new(ModelConfig {
        max_len: 512,
        ..ModelConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let mut trainer = Trainer::new(
        model,
        TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        },
    );
    let batch = vec![ids];
    let mut reached = None;
    let mut last = f64::NAN;
    for _ in 0..2000 {
        let r = trainer.step(&batch).map_err(|e| e.to_string())?;
        last = r.loss.total;
        if last < 0.1 {
            reached = Some(r.step);
            break;
        }
    }
    let step = reached.ok_or_else(|| format!("loss {last:.4} after 2000 steps"))?;
    let gen = trainer
        .model
        .generate(
            &lead,
            &SamplingConfig {
                temperature: 0.0,
                ..SamplingConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
    let took = t0.elapsed();
    check(gen.piano == bars, || {
        "greedy generation differs from the training bars".into()
    })?;
    check(took < Duration::from_secs(300), || format!("took {took:?}"))?;
    Ok(format!(
        "loss {last:.4} at step {step}; greedy output exact; {took:.1?}"
    ))
}

fn compactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let (mut strict, mut total_cp, mut total_ml) = (0, 0, 0);
    for i in 0..100 {
        let bar = if i % 2 == 0 {
            common::random_chordal_bar(&mut rng, 0)
        } else {
            common::random_bar(&mut rng, 0, 10)
        };
        let cp = encode_piano_bar(&bar, None).len();
        let ml = encode_midi_like(std::slice::from_ref(&bar)).len();
        check(cp <= ml, || format!("bar {i}: {cp} > {ml}"))?;
        if bar.windows(2).any(|w| w[0].position == w[1].position) {
            check(cp < ml, || format!("bar {i}: stacked notes but {cp} == {ml}"))?;
            strict += 1;
        }
        total_cp += cp;
        total_ml += ml;
    }
    Ok(format!(
        "{total_cp} vs {total_ml} tokens over 100 bars; {strict} stacked bars strictly smaller"
    ))
}

fn covergen(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_covergen"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.code() != Some(0) {
        return Err(format!(
            "{} exited {:?}: {}",
            args[0],
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let midi_dir = d.join("midi");
    std::fs::create_dir(&midi_dir).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    for i in 0..10 {
        let notes = common::synthetic_piece(&mut rng, 6);
        std::fs::write(
            midi_dir.join(format!("song{i:02}.mid")),
            write_midi(&notes, &TimeGrid::with_tempo(90.0, 6)),
        )
        .map_err(|e| e.to_string())?;
    }
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let ds = d.join("train.jsonl");
    let leads = d.join("leads");
    covergen(&[
        "build-dataset",
        "--midi-dir",
        &p(&midi_dir),
        "--out",
        &p(&ds),
        "--max-len",
        "256",
        "--leadsheet-dir",
        &p(&leads),
    ])?;
    let cfg = d.join("desk.cfg");
    std::fs::write(&cfg, "version = 1\nd_model = 32\nn_heads = 4\nd_ff = 64\nn_layers = 1\nmax_len = 256\nlr = 1e-3\nwarmup_steps = 20\nmax_steps = 150\nepochs = 1000\n")
        .map_err(|e| e.to_string())?;
    let ckpt = d.join("model.json");
    covergen(&[
        "train",
        "--dataset",
        &p(&ds),
        "--out",
        &p(&ckpt),
        "--config",
        &p(&cfg),
        "--metrics",
        &p(&d.join("m.csv")),
    ])?;
    let out_mid = d.join("cover.mid");
    covergen(&[
        "generate",
        "--leadsheet",
        &p(&leads.join("song00.json")),
        "--checkpoint",
        &p(&ckpt),
        "--out",
        &p(&out_mid),
        "--seed",
        "3",
    ])?;

    let (bars, grid) = load_bars(&std::fs::read(&out_mid).map_err(|e| e.to_string())?).or_else(|e| match e {
        covergen_core::midi::MidiError::Empty => Ok((Vec::new(), TimeGrid::with_tempo(90.0, 0))),
        e => Err(e.to_string()),
    })?;
    let lead_text = std::fs::read(leads.join("song00.json")).map_err(|e| e.to_string())?;
    let (lead, _) = covergen_core::leadsheet::load_leadsheet(&lead_text).map_err(|e| e.to_string())?;
    check(bars.len() <= lead.bars.len() + 2, || {
        format!("{} bars for a {}-bar lead sheet", bars.len(), lead.bars.len())
    })?;
    check(
        (grid.tempo_bpm - lead.tempo_bpm).abs() < 1e-3 || bars.is_empty(),
        || "tempo lost".into(),
    )?;

    let melody: Vec<NoteEvent> = lead.bars.iter().flat_map(|b| b.melody.clone()).collect();
    let ref_grid = TimeGrid::with_tempo(lead.tempo_bpm, lead.bars.len());
    let contour =
        F0Contour::from_semitones(0.01f64, &top_line(&melody, &ref_grid, 0.01f64)).map_err(|e| e.to_string())?;
    let f0 = d.join("song00.csv");
    std::fs::write(&f0, contour.to_csv()).map_err(|e| e.to_string())?;
    let report = covergen(&["eval-mca", "--midi", &p(&out_mid), "--f0", &p(&f0)])?;
    let v: serde_json::Value = serde_json::from_str(report.trim()).map_err(|e| e.to_string())?;
    let score = v["mca"].as_f64().ok_or("no mca in report")?;
    check((0.0..=1.0).contains(&score), || format!("mca {score}"))?;
    std::fs::write(d.join("lead_roundtrip.json"), save_leadsheet(&lead)).map_err(|e| e.to_string())?;
    Ok(format!(
        "4 stages exit 0; cover has {} bars, {} notes; MCA {score:.3}",
        bars.len(),
        bars.iter().map(Vec::len).sum::<usize>()
    ))
}

fn main() -> std::process::ExitCode {
    let criteria: [Criterion; 8] = [
        ("codec round trip", codec_round_trip),
        ("skyline oracle", skyline_oracle),
        ("chord properties", chord_properties),
        ("MCA validation", mca_validation),
        ("model numerics", model_numerics),
        ("overfit sanity", overfit_sanity),
        ("compactness", compactness),
        ("end-to-end pipeline", end_to_end),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                println!("FAIL [{}] {name}: {why}", i + 1);
                failed.push(*name);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: {}/{} criteria passed", criteria.len(), criteria.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
