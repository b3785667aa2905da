//! Synthetic corpus in the on-disk input formats, with a tunable amount of
//! class signal in pauses, LM probabilities and a few frame features.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::{
    parse_asr, parse_frames, serialize_asr, write_manifest, DisfluencyTag, SessionRecord, Transcript, WordToken,
    FRAME_RATE_HZ,
};
use crate::lexical::{load_embeddings, EmbeddingTable, LexicalFlags, DEFAULT_EMBEDDING_DIM};
use crate::pipeline::{Dataset, FeaturizeConfig};

pub const PATIENT: &str = "PAR";
pub const INTERVIEWER: &str = "INV";

const PATIENT_WORDS: [&str; 40] = [
    "the", "boy", "is", "on", "a", "stool", "and", "he", "cookie", "jar", "girl", "reaching", "mother", "washing",
    "dishes", "water", "sink", "overflowing", "floor", "window", "curtains", "plate", "falling", "taking", "cookies",
    "kitchen", "she", "um", "uh", "there", "little", "out", "that", "going", "to", "fall", "something", "outside",
    "drying", "cupboard",
];
const INTERVIEWER_WORDS: [&str; 4] = ["mhm", "okay", "anything", "else"];
const FRAME_FEATURES: [&str; 8] = [
    "f0_mean", "loudness", "jitter", "shimmer", "hnr", "mfcc1", "mfcc2", "mfcc3",
];
/// Frame features whose mean moves with the class.
const SHIFTED_FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_sessions: usize,
    /// 0 = no class signal, 1 = full shift.
    pub separation: f64,
    pub embedding_dim: usize,
    /// Patient words per session drawn from this inclusive range.
    pub words: (usize, usize),
}

impl SynthConfig {
    pub fn new(seed: u64, n_sessions: usize, separation: f64) -> Self {
        SynthConfig {
            seed,
            n_sessions,
            separation,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            words: (20, 28),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub records: Vec<SessionRecord>,
    pub frames_csv: Vec<String>,
    pub asr_json: Vec<String>,
    pub embeddings: String,
}

pub fn make_synthetic(seed: u64, n_sessions: usize, separation: f64) -> Result<SyntheticCorpus> {
    make_synthetic_with(&SynthConfig::new(seed, n_sessions, separation))
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite normal parameters")
}

fn round_to(x: f64, places: i32) -> f64 {
    let s = 10f64.powi(places);
    (x * s).round() / s
}

/// Appends `v` with four decimals; much faster than `format!` for the
/// millions of frame cells a corpus holds.
fn push_fixed4(out: &mut String, v: f64) {
    let q = (v * 1e4).round() as i64;
    if q < 0 {
        out.push('-');
    }
    let q = q.unsigned_abs();
    let mut digits = [0u8; 24];
    let mut k = digits.len();
    let mut rest = q;
    let mut written = 0;
    while rest > 0 || written < 5 {
        if written == 4 {
            k -= 1;
            digits[k] = b'.';
        }
        k -= 1;
        digits[k] = b'0' + (rest % 10) as u8;
        rest /= 10;
        written += 1;
    }
    out.push_str(std::str::from_utf8(&digits[k..]).unwrap());
}

pub fn make_synthetic_with(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    let n = cfg.n_sessions;
    if n < 4 || n % 2 == 1 {
        return Err(Error::validation(format!("n_sessions must be even and >= 4, got {n}")));
    }
    if !(0.0..=1.0).contains(&cfg.separation) {
        return Err(Error::validation(format!("separation {} outside [0,1]", cfg.separation)));
    }
    if cfg.words.0 < 2 || cfg.words.1 < cfg.words.0 || cfg.embedding_dim == 0 {
        return Err(Error::validation("bad word-count range or embedding size"));
    }
    let sep = cfg.separation;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(n);
    let mut frames_csv = Vec::with_capacity(n);
    let mut asr_json = Vec::with_capacity(n);

    for i in 0..n {
        let label = (i % 2) as u8;
        let y = label as f64;
        let id = format!("S{i:03}");
        let gap = normal(0.35 + sep * y, 0.3);
        let lm = normal(0.45 - sep * y * 0.3, 0.12);

        let mut tokens = Vec::new();
        let mut t = 0.5;
        let n_words = rng.random_range(cfg.words.0..=cfg.words.1);
        for k in 0..n_words {
            if k > 0 && rng.random_bool(0.1) {
                let start = round_to(t + 0.2, 3);
                let end = round_to(start + 0.3, 3);
                tokens.push(WordToken {
                    text: INTERVIEWER_WORDS[rng.random_range(0..INTERVIEWER_WORDS.len())].to_string(),
                    start,
                    end,
                    speaker: INTERVIEWER.into(),
                    asr_conf: round_to(rng.random_range(0.7..1.0), 3),
                    lm_prob: None,
                    disfl_tag: None,
                });
                t = end;
            }
            let start = round_to(t + gap.sample(&mut rng).max(0.0), 3);
            let end = round_to(start + rng.random_range(0.18..0.55), 3);
            let u: f64 = rng.random();
            let tag = if u < 0.85 {
                DisfluencyTag::Fluent
            } else if u < 0.95 {
                DisfluencyTag::EditTerm
            } else {
                DisfluencyTag::RepairOnset
            };
            tokens.push(WordToken {
                text: PATIENT_WORDS[rng.random_range(0..PATIENT_WORDS.len())].to_string(),
                start,
                end,
                speaker: PATIENT.into(),
                asr_conf: round_to(rng.random_range(0.7..1.0), 3),
                lm_prob: Some(round_to(lm.sample(&mut rng).clamp(0.001, 0.999), 4)),
                disfl_tag: Some(tag),
            });
            t = end;
        }
        let transcript = Transcript {
            session_id: id.clone(),
            tokens,
            patient_speaker: PATIENT.into(),
        };
        asr_json.push(serialize_asr(&transcript));

        let n_frames = ((t + 0.5) * FRAME_RATE_HZ).ceil() as usize;
        let mut csv = FRAME_FEATURES.join(",");
        csv.push('\n');
        let unit = normal(0.0, 1.0);
        for _ in 0..n_frames {
            for (j, _) in FRAME_FEATURES.iter().enumerate() {
                if j > 0 {
                    csv.push(',');
                }
                let v = j as f64 * 0.5 + if j < SHIFTED_FEATURES { 0.8 * sep * y } else { 0.0 } + unit.sample(&mut rng);
                if !rng.random_bool(0.01) {
                    push_fixed4(&mut csv, v);
                }
            }
            csv.push('\n');
        }
        frames_csv.push(csv);

        let severity = (0.5 + sep * (y - 0.5) * 0.7 + normal(0.0, 0.1).sample(&mut rng)).clamp(0.0, 1.0);
        records.push(SessionRecord {
            frames_path: format!("frames/{id}.csv"),
            asr_path: format!("asr/{id}.json"),
            session_id: id,
            patient_speaker: PATIENT.into(),
            ad_label: Some(label),
            mmse: Some(29 - (14.0 * severity).round() as u8),
            decline_label: Some(u8::from(severity > 0.5)),
        });
    }

    let mut embeddings = String::new();
    let component = normal(0.0, 0.3);
    for w in PATIENT_WORDS.iter().chain(&INTERVIEWER_WORDS) {
        embeddings.push_str(w);
        for _ in 0..cfg.embedding_dim {
            write!(embeddings, " {:.5}", component.sample(&mut rng)).unwrap();
        }
        embeddings.push('\n');
    }

    Ok(SyntheticCorpus {
        records,
        frames_csv,
        asr_json,
        embeddings,
    })
}

impl SyntheticCorpus {
    pub fn embedding_table(&self) -> Result<EmbeddingTable> {
        load_embeddings(&self.embeddings)
    }

    pub fn transcripts(&self) -> Result<Vec<Transcript>> {
        self.asr_json
            .iter()
            .zip(&self.records)
            .map(|(j, r)| parse_asr(j, &r.patient_speaker))
            .collect()
    }

    /// Parses the generated files exactly as they would be read from disk.
    pub fn dataset(&self, table: &EmbeddingTable, flags: LexicalFlags, featurize: FeaturizeConfig) -> Result<Dataset> {
        let frames = self
            .frames_csv
            .iter()
            .zip(&self.records)
            .map(|(c, r)| parse_frames(c, &r.session_id).map(Some))
            .collect::<Result<Vec<_>>>()?;
        let transcripts = self.transcripts()?.into_iter().map(Some).collect();
        Dataset::from_parts(self.records.clone(), frames, transcripts, Some(table), flags, featurize)
    }

    /// Writes `manifest.csv`, `embeddings.txt`, `frames/` and `asr/` under
    /// `dir` and returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        for sub in ["frames", "asr"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        let put = |rel: &str, text: &str| {
            let p = dir.join(rel);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        for ((r, f), a) in self.records.iter().zip(&self.frames_csv).zip(&self.asr_json) {
            put(&r.frames_path, f)?;
            put(&r.asr_path, a)?;
        }
        put("embeddings.txt", &self.embeddings)?;
        put("manifest.csv", &write_manifest(&self.records))?;
        Ok(dir.join("manifest.csv"))
    }
}
