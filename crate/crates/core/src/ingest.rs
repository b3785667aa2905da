//! Parsing and validation of the external inputs: ASR hypotheses, acoustic
//! frame matrices and the session manifest.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame rate of the acoustic feature matrices.
pub const FRAME_RATE_HZ: f64 = 100.0;

/// Disfluency tag produced by an upstream tagger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisfluencyTag {
    Fluent,
    EditTerm,
    RepairOnset,
}

impl DisfluencyTag {
    /// Position in the one-hot encoding `(fluent, edit_term, repair_onset)`.
    pub fn index(self) -> usize {
        match self {
            DisfluencyTag::Fluent => 0,
            DisfluencyTag::EditTerm => 1,
            DisfluencyTag::RepairOnset => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DisfluencyTag::Fluent => "fluent",
            DisfluencyTag::EditTerm => "edit_term",
            DisfluencyTag::RepairOnset => "repair_onset",
        }
    }
}

impl FromStr for DisfluencyTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fluent" => Ok(DisfluencyTag::Fluent),
            "edit_term" => Ok(DisfluencyTag::EditTerm),
            "repair_onset" => Ok(DisfluencyTag::RepairOnset),
            other => Err(format!("unknown disfluency tag {other:?}")),
        }
    }
}

impl fmt::Display for DisfluencyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordToken {
    pub text: String,
    /// Seconds from session start.
    pub start: f64,
    pub end: f64,
    pub speaker: String,
    pub asr_conf: f64,
    pub lm_prob: Option<f64>,
    pub disfl_tag: Option<DisfluencyTag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub session_id: String,
    /// Sorted by start time; ties keep input order.
    pub tokens: Vec<WordToken>,
    pub patient_speaker: String,
}

impl Transcript {
    pub fn patient_tokens(&self) -> impl Iterator<Item = &WordToken> {
        self.tokens
            .iter()
            .filter(move |t| t.speaker == self.patient_speaker)
    }

    pub fn patient_token_count(&self) -> usize {
        self.patient_tokens().count()
    }
}

// Wire format of the ASR JSON file.

#[derive(Serialize, Deserialize)]
struct AsrFile {
    session_id: String,
    turns: Vec<AsrTurn>,
}

#[derive(Serialize, Deserialize)]
struct AsrTurn {
    speaker: String,
    words: Vec<AsrWord>,
}

#[derive(Serialize, Deserialize)]
struct AsrWord {
    w: String,
    start: f64,
    end: f64,
    conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lm_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    disfl: Option<String>,
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    // serde_json reports 1-based line and column.
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    text.len()
}

fn is_probability(x: f64) -> bool {
    x.is_finite() && (0.0..=1.0).contains(&x)
}

/// Parses one ASR hypothesis file. `patient_speaker` names the speaker id
/// whose words are featurized; it comes from the manifest.
pub fn parse_asr(text: &str, patient_speaker: &str) -> Result<Transcript> {
    let file: AsrFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;

    let mut tokens = Vec::new();
    let mut index = 0usize;
    for turn in file.turns {
        for word in turn.words {
            let bad = |what: &str| Error::validation(format!("token {index} ({:?}): {what}", word.w));
            if !word.start.is_finite() || word.start < 0.0 {
                return Err(bad("start must be finite and >= 0"));
            }
            if !word.end.is_finite() || word.end < word.start {
                return Err(bad("end precedes start"));
            }
            if !is_probability(word.conf) {
                return Err(bad("conf outside [0,1]"));
            }
            if let Some(p) = word.lm_prob {
                if !is_probability(p) {
                    return Err(bad("lm_prob outside [0,1]"));
                }
            }
            let disfl_tag = match word.disfl.as_deref() {
                None => None,
                Some(s) => Some(s.parse::<DisfluencyTag>().map_err(|e| bad(&e))?),
            };
            tokens.push(WordToken {
                text: word.w,
                start: word.start,
                end: word.end,
                speaker: turn.speaker.clone(),
                asr_conf: word.conf,
                lm_prob: word.lm_prob,
                disfl_tag,
            });
            index += 1;
        }
    }
    // Stable: equal start times keep their input order.
    tokens.sort_by(|a, b| a.start.total_cmp(&b.start));

    Ok(Transcript {
        session_id: file.session_id,
        tokens,
        patient_speaker: patient_speaker.to_string(),
    })
}

/// Writes a transcript back into the ASR JSON format, grouping consecutive
/// same-speaker tokens into turns.
pub fn serialize_asr(transcript: &Transcript) -> String {
    let mut turns: Vec<AsrTurn> = Vec::new();
    for tok in &transcript.tokens {
        let word = AsrWord {
            w: tok.text.clone(),
            start: tok.start,
            end: tok.end,
            conf: tok.asr_conf,
            lm_prob: tok.lm_prob,
            disfl: tok.disfl_tag.map(|t| t.as_str().to_string()),
        };
        match turns.last_mut() {
            Some(turn) if turn.speaker == tok.speaker => turn.words.push(word),
            _ => turns.push(AsrTurn {
                speaker: tok.speaker.clone(),
                words: vec![word],
            }),
        }
    }
    let file = AsrFile {
        session_id: transcript.session_id.clone(),
        turns,
    };
    serde_json::to_string(&file).expect("ASR file serializes")
}

/// T×F acoustic frames, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub session_id: String,
    pub feature_names: Vec<String>,
    pub frames: Vec<f64>,
    pub rate_hz: f64,
}

impl FrameMatrix {
    pub fn n_frames(&self) -> usize {
        if self.feature_names.is_empty() {
            0
        } else {
            self.frames.len() / self.feature_names.len()
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let f = self.n_features();
        &self.frames[t * f..(t + 1) * f]
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.frames[t * self.n_features() + j]
    }
}

/// Parses a frames CSV: a header of feature names followed by one row per
/// 10 ms frame. Empty cells, and cells holding NaN or infinities, are
/// segments without audio data and become 0.0.
pub fn parse_frames(text: &str, session_id: &str) -> Result<FrameMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = reader.headers().map_err(|e| Error::Row {
        row: 1,
        message: e.to_string(),
    })?;
    let feature_names: Vec<String> = header.iter().map(str::to_string).collect();
    if feature_names.is_empty() || feature_names.iter().all(|n| n.is_empty()) {
        return Err(Error::Row {
            row: 1,
            message: "missing header of feature names".into(),
        });
    }
    let width = feature_names.len();

    let mut frames = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Row {
            row: line,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Row {
                row: line,
                message: format!("expected {width} cells, found {}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let value = if cell.is_empty() {
                0.0
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Row {
                    row: line,
                    message: format!("column {} ({}): non-numeric cell {cell:?}", j + 1, feature_names[j]),
                })?;
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            };
            frames.push(value);
        }
    }

    Ok(FrameMatrix {
        session_id: session_id.to_string(),
        feature_names,
        frames,
        rate_hz: FRAME_RATE_HZ,
    })
}

/// Serializes a frame matrix as CSV with the same layout `parse_frames` reads.
pub fn write_frames(frames: &FrameMatrix, decimals: usize) -> String {
    let mut out = frames.feature_names.join(",");
    out.push('\n');
    for t in 0..frames.n_frames() {
        let row: Vec<String> = frames.row(t).iter().map(|v| format!("{v:.decimals$}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub frames_path: String,
    pub asr_path: String,
    pub patient_speaker: String,
    pub ad_label: Option<u8>,
    pub mmse: Option<u8>,
    pub decline_label: Option<u8>,
}

pub const MANIFEST_HEADER: [&str; 7] = [
    "session_id",
    "frames_path",
    "asr_path",
    "patient_speaker",
    "ad",
    "mmse",
    "decline",
];

fn parse_optional(cell: &str, row: usize, column: &str, max: u8) -> Result<Option<u8>> {
    if cell.is_empty() {
        return Ok(None);
    }
    let v: i64 = cell.parse().map_err(|_| Error::Row {
        row,
        message: format!("{column}: not an integer: {cell:?}"),
    })?;
    if v < 0 || v > max as i64 {
        return Err(Error::Row {
            row,
            message: format!("{column}: {v} outside [0,{max}]"),
        });
    }
    Ok(Some(v as u8))
}

/// Reads the session manifest. Records come back in file row order.
pub fn load_manifest(text: &str) -> Result<Vec<SessionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Row {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut cols = [0usize; 7];
    for (k, name) in MANIFEST_HEADER.iter().enumerate() {
        cols[k] = header.iter().position(|h| h == *name).ok_or_else(|| Error::Row {
            row: 1,
            message: format!("missing column {name:?}"),
        })?;
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let cell = |k: usize| rec.get(cols[k]).unwrap_or("");
        let session_id = cell(0).to_string();
        if session_id.is_empty() {
            return Err(Error::Row {
                row,
                message: "empty session_id".into(),
            });
        }
        if !seen.insert(session_id.clone()) {
            return Err(Error::Row {
                row,
                message: format!("duplicate session_id {session_id:?}"),
            });
        }
        let ad_label = parse_optional(cell(4), row, "ad", 1)?;
        let mmse = parse_optional(cell(5), row, "mmse", 30)?;
        let decline_label = parse_optional(cell(6), row, "decline", 1)?;
        if ad_label.is_none() && mmse.is_none() && decline_label.is_none() {
            return Err(Error::Row {
                row,
                message: format!("session {session_id:?}: no label"),
            });
        }
        records.push(SessionRecord {
            session_id,
            frames_path: cell(1).to_string(),
            asr_path: cell(2).to_string(),
            patient_speaker: cell(3).to_string(),
            ad_label,
            mmse,
            decline_label,
        });
    }
    Ok(records)
}

pub fn write_manifest(records: &[SessionRecord]) -> String {
    let opt = |v: Option<u8>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = MANIFEST_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.session_id,
            r.frames_path,
            r.asr_path,
            r.patient_speaker,
            opt(r.ad_label),
            opt(r.mmse),
            opt(r.decline_label)
        ));
    }
    out
}
