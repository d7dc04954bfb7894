//! Command implementations behind the `covergen` binary.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 unreadable or
//! invalid data, 3 numeric failure during training.

pub mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use covergen_core::leadsheet::{derive_leadsheet, load_leadsheet, save_leadsheet, LeadSheet};
use covergen_core::metrics::{mca, top_line, F0Contour, McaReport};
use covergen_core::midi::{load_bars, write_midi, Bar, MidiError, NoteEvent, TimeGrid, DEFAULT_TEMPO};
use covergen_core::performer::{
    load_checkpoint, metrics_header, save_checkpoint, ModelError, Performer, SamplingConfig, Trainer,
};
use covergen_core::tokenizer::{
    build_interleaved, decode, decode_midi_like, encode_midi_like, read_windows, window, write_window_line, DecodeMode,
    MidiLikeToken, SuperToken, TokenIds, TokenWindow, Vocab,
};

use config::PipelineConfig;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: e.into(),
    }
}

pub fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_DATA,
        error: e.into(),
    }
}

fn model_failure(e: ModelError) -> Failure {
    match e {
        ModelError::NonFinite { .. } => Failure {
            code: EXIT_NUMERIC,
            error: e.into(),
        },
        ModelError::Config(_) => usage(e),
        _ => data(e),
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "covergen", version, about = "Lead-sheet conditioned piano cover generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Repr {
    Cp,
    MidiLike,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize a directory of MIDI files into a JSONL window dataset.
    BuildDataset {
        #[arg(long)]
        midi_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1024)]
        max_len: usize,
        #[arg(long, default_value_t = 4)]
        stride_bars: usize,
        /// Also write each derived lead sheet as `<stem>.json` here.
        #[arg(long)]
        leadsheet_dir: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Train a model on a JSONL dataset and write a checkpoint.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Per-step loss CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Continue from this checkpoint; its model settings win.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate a piano MIDI file for a lead sheet.
    Generate {
        #[arg(long)]
        leadsheet: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0.9)]
        top_p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        max_tokens_per_bar: usize,
    },
    /// Melody chroma accuracy of MIDI top lines against f0 contours. With
    /// directories, files are paired by stem.
    EvalMca {
        #[arg(long)]
        midi: PathBuf,
        #[arg(long)]
        f0: PathBuf,
    },
    /// Encode one MIDI file as tokens (JSON).
    Tokenize {
        #[arg(long)]
        midi: PathBuf,
        #[arg(long, value_enum, default_value_t = Repr::Cp)]
        repr: Repr,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a token file written by `tokenize` back to MIDI.
    Detokenize {
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long, value_enum, default_value_t = Repr::Cp)]
        repr: Repr,
        #[arg(long)]
        out: PathBuf,
        /// Tempo for MIDI-like input, which carries none.
        #[arg(long, default_value_t = DEFAULT_TEMPO)]
        tempo: f64,
    },
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::BuildDataset {
            midi_dir,
            out,
            max_len,
            stride_bars,
            leadsheet_dir,
            jobs,
        } => build_dataset(&midi_dir, &out, max_len, stride_bars, leadsheet_dir.as_deref(), jobs),
        Command::Train {
            dataset,
            out,
            config,
            metrics,
            resume,
        } => train(&dataset, &out, config.as_deref(), metrics.as_deref(), resume.as_deref()),
        Command::Generate {
            leadsheet,
            checkpoint,
            out,
            temperature,
            top_p,
            seed,
            max_tokens_per_bar,
        } => {
            let sampling = SamplingConfig {
                temperature,
                top_p,
                seed,
                max_tokens_per_bar,
            };
            generate(&leadsheet, &checkpoint, &out, &sampling)
        }
        Command::EvalMca { midi, f0 } => eval_mca(&midi, &f0),
        Command::Tokenize { midi, repr, out } => tokenize(&midi, repr, out.as_deref()),
        Command::Detokenize {
            tokens,
            repr,
            out,
            tempo,
        } => detokenize(&tokens, repr, &out, tempo),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data)
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(data)
}

fn files_with_ext(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))
        .map_err(data)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// `data.jsonl` → `data.vocab.json`.
pub fn vocab_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("vocab.json")
}

#[derive(Debug, Serialize)]
struct DatasetStats {
    files: usize,
    skipped: usize,
    bars: usize,
    windows: usize,
    tokens: usize,
}

struct Piece {
    name: String,
    leadsheet: LeadSheet,
    windows: Vec<TokenWindow>,
    bars: usize,
}

fn piece_from_midi(path: &Path, max_len: usize, stride: usize, vocab: &Vocab) -> anyhow::Result<Piece> {
    let bytes = fs::read(path)?;
    let (bars, grid) = load_bars(&bytes)?;
    let leadsheet = derive_leadsheet(&bars, &grid);
    let seq = build_interleaved(&leadsheet, Some(&bars), bars.len())?;
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let windows = window(&seq, max_len, stride)
        .iter()
        .map(|w| TokenWindow::from_sequence(&name, w, vocab))
        .collect();
    Ok(Piece {
        name,
        leadsheet,
        windows,
        bars: bars.len(),
    })
}

fn build_dataset(
    dir: &Path,
    out: &Path,
    max_len: usize,
    stride: usize,
    leadsheet_dir: Option<&Path>,
    jobs: Option<usize>,
) -> CmdResult {
    if max_len < 8 || stride == 0 {
        return Err(usage(anyhow!(
            "--max-len must be at least 8 and --stride-bars positive"
        )));
    }
    let files = files_with_ext(dir, &["mid", "midi"])?;
    let vocab = Vocab::default();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(usage)?;
    let results: Vec<(PathBuf, anyhow::Result<Piece>)> = pool.install(|| {
        files
            .par_iter()
            .map(|p| (p.clone(), piece_from_midi(p, max_len, stride, &vocab)))
            .collect()
    });

    let mut stats = DatasetStats {
        files: 0,
        skipped: 0,
        bars: 0,
        windows: 0,
        tokens: 0,
    };
    let mut lines = String::new();
    if let Some(d) = leadsheet_dir {
        fs::create_dir_all(d)
            .with_context(|| format!("creating {}", d.display()))
            .map_err(data)?;
    }
    for (path, r) in results {
        match r {
            Ok(piece) => {
                stats.files += 1;
                stats.bars += piece.bars;
                for w in &piece.windows {
                    stats.windows += 1;
                    stats.tokens += w.ids.len();
                    lines.push_str(&write_window_line(w));
                    lines.push('\n');
                }
                if let Some(d) = leadsheet_dir {
                    write(
                        &d.join(format!("{}.json", stem(Path::new(&piece.name)))),
                        save_leadsheet(&piece.leadsheet),
                    )?;
                }
            }
            Err(e) => {
                stats.skipped += 1;
                warn!("skipping {}: {e:#}", path.display());
            }
        }
    }
    if stats.windows == 0 {
        return Err(data(anyhow!("no usable MIDI files in {}", dir.display())));
    }
    write(out, lines)?;
    write(&vocab_path(out), vocab.to_json())?;
    println!("{}", serde_json::to_string(&stats).expect("stats serialize"));
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Vec<TokenWindow>, Failure> {
    let vocab = Vocab::default();
    let vp = vocab_path(path);
    if vp.exists() {
        Vocab::from_json(&read_text(&vp)?).map_err(|e| data(anyhow!("{}: {e}", vp.display())))?;
    } else {
        warn!("{} not found; assuming the built-in vocabulary", vp.display());
    }
    read_windows(&read_text(path)?, &vocab)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data)
}

fn train(
    dataset: &Path,
    out: &Path,
    config: Option<&Path>,
    metrics: Option<&Path>,
    resume: Option<&Path>,
) -> CmdResult {
    let cfg = match config {
        Some(p) => PipelineConfig::parse(&read_text(p)?)
            .with_context(|| format!("config {}", p.display()))
            .map_err(usage)?,
        None => PipelineConfig::default(),
    };
    let windows = load_dataset(dataset)?;
    let mut trainer: Trainer<f32> = match resume {
        Some(p) => {
            let mut t = load_checkpoint(&read_text(p)?).map_err(model_failure)?;
            t.config = cfg.train.clone();
            t.epoch = 0;
            t
        }
        None => Trainer::new(
            Performer::new(cfg.model.clone()).map_err(model_failure)?,
            cfg.train.clone(),
        ),
    };
    let max_len = trainer.model.config.max_len;
    if let Some(w) = windows.iter().find(|w| w.ids.len() > max_len) {
        return Err(data(anyhow!(
            "window from {} has {} records, above max_len {max_len}; rebuild the dataset with --max-len {max_len}",
            w.piece_id,
            w.ids.len()
        )));
    }
    let ids: Vec<Vec<TokenIds>> = windows.into_iter().map(|w| w.ids).collect();
    info!(
        "training {} parameters on {} windows",
        trainer.model.params.num_parameters(),
        ids.len()
    );
    let mut csv = format!("{}\n", metrics_header());
    let result = trainer.fit(&ids, |r| {
        if r.step % 50 == 1 {
            info!("step {} loss {:.4}", r.step, r.loss.total);
        }
        csv.push_str(&r.csv_row());
        csv.push('\n');
    });
    if let Some(p) = metrics {
        write(p, &csv)?;
    }
    let records = result.map_err(model_failure)?;
    write(out, save_checkpoint(&trainer))?;
    if let Some(last) = records.last() {
        println!(
            "{}",
            serde_json::json!({"steps": last.step, "final_loss": last.loss.total})
        );
    }
    Ok(())
}

fn generate(leadsheet: &Path, checkpoint: &Path, out: &Path, sampling: &SamplingConfig) -> CmdResult {
    let (lead, warnings) = load_leadsheet(&read(leadsheet)?)
        .with_context(|| format!("lead sheet {}", leadsheet.display()))
        .map_err(data)?;
    for w in warnings {
        warn!("{w}");
    }
    let trainer: Trainer<f32> = load_checkpoint(&read_text(checkpoint)?)
        .with_context(|| format!("checkpoint {}", checkpoint.display()))
        .map_err(data)?;
    let gen = trainer.model.generate(&lead, sampling).map_err(model_failure)?;
    for w in &gen.warnings {
        warn!("{w}");
    }
    let notes: Vec<NoteEvent> = gen.piano.into_iter().flatten().collect();
    write(
        out,
        write_midi(&notes, &TimeGrid::with_tempo(lead.tempo_bpm, lead.bars.len())),
    )?;
    info!("wrote {} notes over {} bars", notes.len(), lead.bars.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct McaRow {
    song: String,
    #[serde(flatten)]
    report: McaReport,
}

fn mca_for(midi: &Path, f0: &Path) -> Result<McaReport, Failure> {
    // A silent cover is a valid estimate: it matches no frame.
    let (bars, grid) = match load_bars(&read(midi)?) {
        Err(MidiError::Empty) => (Vec::new(), TimeGrid::with_tempo(DEFAULT_TEMPO, 0)),
        r => r.with_context(|| midi.display().to_string()).map_err(data)?,
    };
    let contour = F0Contour::<f64>::from_csv(&read_text(f0)?)
        .with_context(|| f0.display().to_string())
        .map_err(data)?;
    let notes: Vec<NoteEvent> = bars.into_iter().flatten().collect();
    let est = top_line(&notes, &grid, contour.hop_seconds);
    mca(&est, &contour)
        .with_context(|| f0.display().to_string())
        .map_err(data)
}

fn eval_mca(midi: &Path, f0: &Path) -> CmdResult {
    if !midi.is_dir() {
        let r = mca_for(midi, f0)?;
        println!("{}", serde_json::to_string(&r).expect("report serializes"));
        return Ok(());
    }
    let mut rows = Vec::new();
    for m in files_with_ext(midi, &["mid", "midi"])? {
        let c = f0.join(format!("{}.csv", stem(&m)));
        if !c.exists() {
            warn!("no contour for {}", m.display());
            continue;
        }
        match mca_for(&m, &c) {
            Ok(report) => rows.push(McaRow { song: stem(&m), report }),
            Err(e) => warn!("{}: {e}", m.display()),
        }
    }
    if rows.is_empty() {
        return Err(data(anyhow!("no MIDI/contour pairs could be scored")));
    }
    for r in &rows {
        println!("{}", serde_json::to_string(r).expect("row serializes"));
    }
    let mean = rows.iter().map(|r| r.report.mca).sum::<f64>() / rows.len() as f64;
    println!("{}", serde_json::json!({"songs": rows.len(), "mean_mca": mean}));
    Ok(())
}

fn tokenize(midi: &Path, repr: Repr, out: Option<&Path>) -> CmdResult {
    let (bars, grid) = load_bars(&read(midi)?)
        .with_context(|| midi.display().to_string())
        .map_err(data)?;
    let text = match repr {
        Repr::Cp => {
            let lead = derive_leadsheet(&bars, &grid);
            let seq = build_interleaved(&lead, Some(&bars), bars.len()).map_err(data)?;
            let w = TokenWindow::from_sequence(&stem(midi), &seq, &Vocab::default());
            serde_json::to_string(&w).expect("window serializes")
        }
        Repr::MidiLike => {
            let toks: Vec<String> = encode_midi_like(&bars).iter().map(ToString::to_string).collect();
            serde_json::json!({"num_bars": bars.len(), "tempo_bpm": grid.tempo_bpm, "tokens": toks}).to_string()
        }
    };
    match out {
        Some(p) => write(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn detokenize(tokens: &Path, repr: Repr, out: &Path, tempo: f64) -> CmdResult {
    let text = read_text(tokens)?;
    let (bars, tempo): (Vec<Bar>, f64) = match repr {
        Repr::Cp => {
            let w: TokenWindow = serde_json::from_str(&text).map_err(data)?;
            let toks: Vec<SuperToken> = w.tokens(&Vocab::default()).map_err(data)?;
            let d = decode(&toks, DecodeMode::Tolerant).map_err(data)?;
            if d.skipped > 0 {
                warn!("skipped {} malformed tokens", d.skipped);
            }
            (d.piano, d.leadsheet.tempo_bpm)
        }
        Repr::MidiLike => {
            #[derive(serde::Deserialize)]
            struct File {
                num_bars: usize,
                tokens: Vec<String>,
            }
            let f: File = serde_json::from_str(&text).map_err(data)?;
            let toks: Vec<MidiLikeToken> = f
                .tokens
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_, _>>()
                .map_err(data)?;
            (decode_midi_like(&toks, f.num_bars), tempo)
        }
    };
    let n = bars.len();
    let notes: Vec<NoteEvent> = bars.into_iter().flatten().collect();
    write(out, write_midi(&notes, &TimeGrid::with_tempo(tempo, n)))
}
