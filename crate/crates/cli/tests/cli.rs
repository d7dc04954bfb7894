#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::{Command, Output};

use covergen_core::midi::{load_bars, write_midi, TimeGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn covergen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covergen"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_piece(path: &Path, seed: u64, bars: u32) {
    let notes = common::synthetic_piece(&mut ChaCha8Rng::seed_from_u64(seed), bars);
    std::fs::write(path, write_midi(&notes, &TimeGrid::with_tempo(96.0, bars as usize))).unwrap();
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(covergen(&[]).status.code(), Some(1));
    assert_eq!(covergen(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(covergen(&["generate", "--leadsheet", "x.json"]).status.code(), Some(1));
    assert_eq!(covergen(&["--help"]).status.code(), Some(0));
    assert_eq!(
        covergen(&["tokenize", "--midi", "a.mid", "--repr", "abc"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("junk.mid"), b"MThd\x00\x00").unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let out = covergen(&["build-dataset", "--midi-dir", &s(d), "--out", &s(&d.join("x.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        covergen(&["tokenize", "--midi", &s(&d.join("missing.mid"))])
            .status
            .code(),
        Some(2)
    );
    let out = covergen(&["tokenize", "--midi", &s(&d.join("junk.mid"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at byte"));
}

#[test]
fn corrupt_files_are_skipped_in_a_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_piece(&d.join("a.mid"), 1, 4);
    std::fs::write(d.join("b.mid"), b"not midi").unwrap();
    let out_path = d.join("ds.jsonl");
    let out = covergen(&[
        "build-dataset",
        "--midi-dir",
        d.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "--max-len",
        "64",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["files"], 1);
    assert_eq!(stats["skipped"], 1);
    assert!(stats["windows"].as_u64().unwrap() > 1);
    assert!(d.join("ds.vocab.json").exists());
}

#[test]
fn tokenize_detokenize_round_trip_both_representations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let midi = d.join("p.mid");
    write_piece(&midi, 4, 3);
    let original = load_bars(&std::fs::read(&midi).unwrap()).unwrap().0;
    for repr in ["cp", "midi-like"] {
        let tok = d.join(format!("{repr}.json"));
        let back = d.join(format!("{repr}.mid"));
        let t = covergen(&[
            "tokenize",
            "--midi",
            midi.to_str().unwrap(),
            "--repr",
            repr,
            "--out",
            tok.to_str().unwrap(),
        ]);
        assert_eq!(t.status.code(), Some(0));
        let u = covergen(&[
            "detokenize",
            "--tokens",
            tok.to_str().unwrap(),
            "--repr",
            repr,
            "--out",
            back.to_str().unwrap(),
        ]);
        assert_eq!(u.status.code(), Some(0), "{}", String::from_utf8_lossy(&u.stderr));
        assert_eq!(load_bars(&std::fs::read(&back).unwrap()).unwrap().0, original, "{repr}");
    }
}

#[test]
fn nan_learning_rate_is_a_config_error_and_overflow_is_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_piece(&d.join("a.mid"), 2, 2);
    let ds = d.join("ds.jsonl");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    assert_eq!(
        covergen(&[
            "build-dataset",
            "--midi-dir",
            &s(d),
            "--out",
            &s(&ds),
            "--max-len",
            "128"
        ])
        .status
        .code(),
        Some(0)
    );
    let cfg = d.join("bad.cfg");
    std::fs::write(&cfg, "version = 1\nlr = NaN\n").unwrap();
    let out = covergen(&[
        "train",
        "--dataset",
        &s(&ds),
        "--out",
        &s(&d.join("c.json")),
        "--config",
        &s(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(1));
    // A huge step size drives the weights to infinity within a few updates.
    std::fs::write(&cfg, "version = 1\nd_model = 16\nn_heads = 2\nd_ff = 32\nmax_len = 128\nlr = 1e30\nwarmup_steps = 0\ngrad_clip = 0\nepochs = 50\n").unwrap();
    let out = covergen(&[
        "train",
        "--dataset",
        &s(&ds),
        "--out",
        &s(&d.join("c.json")),
        "--config",
        &s(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}
