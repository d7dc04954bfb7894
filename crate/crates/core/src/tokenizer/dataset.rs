//! JSON-lines token datasets: one window per line.

use serde::{Deserialize, Serialize};

use super::{Family, InterleavedSequence, Side, SuperToken, TokenError, TokenIds, Vocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenWindow {
    pub piece_id: String,
    pub ids: Vec<TokenIds>,
}

impl TokenWindow {
    pub fn from_sequence(piece_id: &str, seq: &InterleavedSequence, vocab: &Vocab) -> Self {
        TokenWindow {
            piece_id: piece_id.to_string(),
            ids: seq.tokens.iter().map(|t| vocab.encode(t)).collect(),
        }
    }

    pub fn tokens(&self, vocab: &Vocab) -> Result<Vec<SuperToken>, TokenError> {
        self.ids.iter().map(|r| vocab.decode(r)).collect()
    }
}

pub fn write_window_line(w: &TokenWindow) -> String {
    serde_json::to_string(w).expect("window serializes")
}

/// Parses a JSONL dataset, validating every id record. Errors carry the
/// 1-based line number.
pub fn read_windows(text: &str, vocab: &Vocab) -> Result<Vec<TokenWindow>, TokenError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| TokenError::Dataset { line: i + 1, reason };
        let w: TokenWindow = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        for (j, r) in w.ids.iter().enumerate() {
            vocab.decode(r).map_err(|e| err(format!("record {j}: {e}")))?;
        }
        out.push(w);
    }
    Ok(out)
}

/// Side of every record, recovered from the bar markers. BOS counts as
/// lead-sheet side and EOS as piano side.
pub fn sides_of(ids: &[TokenIds]) -> Vec<Side> {
    let mut side = Side::Src;
    ids.iter()
        .map(|r| {
            match r.family() {
                Some(Family::Bar) => {
                    side = if r.0[1] == 1 { Side::Src } else { Side::Tgt };
                }
                Some(Family::Spec) if r.0[0] == 2 => side = Side::Tgt,
                _ => {}
            }
            side
        })
        .collect()
}
