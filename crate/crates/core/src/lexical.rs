//! Per-word lexical fusion vectors: word embedding, disfluency one-hot,
//! unfilled-pause category and duration, and language-model probability.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{DisfluencyTag, Transcript};
use crate::nn::Tensor2;

pub const DEFAULT_EMBEDDING_DIM: usize = 100;
/// Short pauses are in [SHORT_PAUSE, LONG_PAUSE) seconds.
pub const SHORT_PAUSE: f64 = 0.5;
pub const LONG_PAUSE: f64 = 1.5;
/// Pause durations are clipped to this many seconds in the feature vector.
pub const PAUSE_CLIP: f64 = 10.0;

/// Pretrained word vectors read from the `token v1 … vE` text format.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vocab: HashMap<String, usize>,
    vectors: Tensor2<f32>,
    /// Lines dropped because their (case-folded) token was already present.
    pub ignored_duplicates: usize,
    /// SHA-256 of the source text, recorded in checkpoints.
    pub digest: String,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.vectors.cols
    }

    pub fn len(&self) -> usize {
        self.vectors.rows
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows == 0
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vocab.contains_key(&token.to_lowercase())
    }

    /// Case-folded lookup; out-of-vocabulary tokens map to the zero vector.
    pub fn embed(&self, token: &str) -> Vec<f32> {
        match self.vocab.get(&token.to_lowercase()) {
            Some(&i) => self.vectors.row(i).to_vec(),
            None => vec![0.0; self.dim()],
        }
    }
}

pub fn load_embeddings(text: &str) -> Result<EmbeddingTable> {
    let mut vocab = HashMap::new();
    let mut data = Vec::new();
    let mut dim = None;
    let mut ignored = 0;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<f32> = parts
            .map(|v| v.parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Line {
                line: line_no,
                message: format!("bad float: {e}"),
            })?;
        let e = *dim.get_or_insert(values.len());
        if values.len() != e || e == 0 {
            return Err(Error::Line {
                line: line_no,
                message: format!("expected {e} values, found {}", values.len()),
            });
        }
        let key = token.to_lowercase();
        if vocab.contains_key(&key) {
            ignored += 1;
            continue;
        }
        vocab.insert(key, vocab.len());
        data.extend(values);
    }
    let dim = dim.unwrap_or(0);
    let rows = vocab.len();
    Ok(EmbeddingTable {
        vocab,
        vectors: Tensor2::from_vec(rows, dim, data)?,
        ignored_duplicates: ignored,
        digest: format!("{:x}", Sha256::digest(text.as_bytes())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PauseCategory {
    None,
    Short,
    Long,
}

impl PauseCategory {
    pub fn of(duration: f64) -> Self {
        if duration >= LONG_PAUSE {
            PauseCategory::Long
        } else if duration >= SHORT_PAUSE {
            PauseCategory::Short
        } else {
            PauseCategory::None
        }
    }

    /// Position in the one-hot encoding `(none, SP, LP)`.
    pub fn index(self) -> usize {
        self as usize
    }
}

/// One entry per patient token, in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct PauseAnnotation {
    pub durations: Vec<f64>,
    pub categories: Vec<PauseCategory>,
}

/// Unfilled pause before each patient word: the gap since the previous
/// patient word, provided no other speaker's word falls between them. The
/// first patient word, and any word following another speaker, get 0.
pub fn compute_pauses(transcript: &Transcript) -> PauseAnnotation {
    let mut durations = Vec::new();
    let mut prev_end: Option<f64> = None;
    for tok in &transcript.tokens {
        if tok.speaker != transcript.patient_speaker {
            prev_end = None;
            continue;
        }
        let d = prev_end.map_or(0.0, |end| (tok.start - end).max(0.0));
        durations.push(d);
        prev_end = Some(tok.end);
    }
    let categories = durations.iter().map(|d| PauseCategory::of(*d)).collect();
    PauseAnnotation { durations, categories }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalFlags {
    pub disfl: bool,
    pub pause: bool,
    pub lm_prob: bool,
    /// Feed ln(p) instead of p.
    #[serde(default)]
    pub lm_log: bool,
}

impl Default for LexicalFlags {
    fn default() -> Self {
        LexicalFlags {
            disfl: true,
            pause: true,
            lm_prob: true,
            lm_log: false,
        }
    }
}

impl LexicalFlags {
    pub fn words_only() -> Self {
        LexicalFlags {
            disfl: false,
            pause: false,
            lm_prob: false,
            lm_log: false,
        }
    }

    /// Named blocks and their widths, in row order.
    pub fn layout(&self, embedding_dim: usize) -> Vec<(String, usize)> {
        let mut out = vec![("embedding".to_string(), embedding_dim)];
        if self.disfl {
            out.push(("disfl".into(), 3));
        }
        if self.pause {
            out.push(("pause_category".into(), 3));
            out.push(("pause_duration".into(), 1));
        }
        if self.lm_prob {
            out.push(("lm_prob".into(), 1));
        }
        out
    }

    pub fn width(&self, embedding_dim: usize) -> usize {
        self.layout(embedding_dim).iter().map(|(_, w)| w).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalSequence {
    pub session_id: String,
    /// One row per patient word.
    pub steps: Tensor2<f64>,
    pub layout: Vec<(String, usize)>,
    /// Patient words with no LM probability (encoded as 0).
    pub lm_prob_missing: usize,
}

impl LexicalSequence {
    /// True when the LM block is enabled but no word carried a probability.
    pub fn lm_prob_disabled(&self) -> bool {
        self.layout.iter().any(|(n, _)| n == "lm_prob") && self.lm_prob_missing == self.steps.rows
    }
}

pub fn assemble_lexical(
    transcript: &Transcript,
    pauses: &PauseAnnotation,
    table: &EmbeddingTable,
    flags: LexicalFlags,
) -> Result<LexicalSequence> {
    let patient: Vec<_> = transcript.patient_tokens().collect();
    if patient.is_empty() {
        return Err(Error::validation(format!(
            "session {}: no words from patient speaker {:?}",
            transcript.session_id, transcript.patient_speaker
        )));
    }
    if pauses.durations.len() != patient.len() {
        return Err(Error::shape(format!(
            "{} pause entries for {} patient words",
            pauses.durations.len(),
            patient.len()
        )));
    }
    let e = table.dim();
    let width = flags.width(e);
    let mut steps = Tensor2::zeros(patient.len(), width);
    let mut lm_missing = 0;
    for (r, tok) in patient.iter().enumerate() {
        let row = steps.row_mut(r);
        for (dst, v) in row[..e].iter_mut().zip(table.embed(&tok.text)) {
            *dst = v as f64;
        }
        let mut at = e;
        if flags.disfl {
            let tag = tok.disfl_tag.unwrap_or(DisfluencyTag::Fluent);
            row[at + tag.index()] = 1.0;
            at += 3;
        }
        if flags.pause {
            row[at + pauses.categories[r].index()] = 1.0;
            row[at + 3] = pauses.durations[r].clamp(0.0, PAUSE_CLIP);
            at += 4;
        }
        if flags.lm_prob {
            row[at] = match tok.lm_prob {
                Some(p) if flags.lm_log => p.max(1e-6).ln(),
                Some(p) => p,
                None => {
                    lm_missing += 1;
                    0.0
                }
            };
        }
    }
    Ok(LexicalSequence {
        session_id: transcript.session_id.clone(),
        steps,
        layout: flags.layout(e),
        lm_prob_missing: lm_missing,
    })
}

/// Per-word CSV dump with one column per feature.
pub fn lexical_csv(seq: &LexicalSequence) -> String {
    let mut names = Vec::new();
    for (block, w) in &seq.layout {
        match block.as_str() {
            "disfl" => names.extend(["disfl.fluent", "disfl.edit_term", "disfl.repair_onset"].map(String::from)),
            "pause_category" => names.extend(["pause.none", "pause.sp", "pause.lp"].map(String::from)),
            "embedding" => names.extend((0..*w).map(|i| format!("emb{i}"))),
            other => names.push(other.to_string()),
        }
    }
    let mut out = names.join(",");
    out.push('\n');
    for r in 0..seq.steps.rows {
        let row: Vec<String> = seq.steps.row(r).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
