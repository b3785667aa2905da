//! Session loading, per-fold featurization state and windowing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acoustic::{
    apply_scaler, compute_functionals, fit_scaler, make_windows, select_features, Scaler, SelectionMask,
    DEFAULT_ALPHA, DEFAULT_STAT_HOP, DEFAULT_STAT_WINDOW,
};
use crate::error::{Error, Result};
use crate::ingest::{load_manifest, parse_asr, parse_frames, FrameMatrix, SessionRecord, Transcript};
use crate::lexical::{assemble_lexical, compute_pauses, EmbeddingTable, LexicalFlags, LexicalSequence};
use crate::model::{ArchConfig, ModelMeta, ModelParams, SessionWindows, Task};
use crate::nn::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeaturizeConfig {
    pub stat_window: usize,
    pub stat_hop: usize,
    pub alpha: f64,
}

impl Default for FeaturizeConfig {
    fn default() -> Self {
        FeaturizeConfig {
            stat_window: DEFAULT_STAT_WINDOW,
            stat_hop: DEFAULT_STAT_HOP,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionData {
    pub record: SessionRecord,
    /// Unscaled functional steps, all frame features × all statistics.
    pub functionals: Option<Tensor2<f64>>,
    pub lexical: Option<LexicalSequence>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub sessions: Vec<SessionData>,
    pub frame_features: Vec<String>,
    pub embedding_digest: Option<String>,
    pub embedding_dim: usize,
    pub flags: LexicalFlags,
    pub featurize: FeaturizeConfig,
}

impl Dataset {
    /// `frames[i]` and `transcripts[i]` belong to `records[i]`; either may be
    /// absent when the matching branch is not needed.
    pub fn from_parts(
        records: Vec<SessionRecord>,
        frames: Vec<Option<FrameMatrix>>,
        transcripts: Vec<Option<Transcript>>,
        embeddings: Option<&EmbeddingTable>,
        flags: LexicalFlags,
        featurize: FeaturizeConfig,
    ) -> Result<Self> {
        if frames.len() != records.len() || transcripts.len() != records.len() {
            return Err(Error::shape("records, frames and transcripts differ in length"));
        }
        let mut frame_features: Option<Vec<String>> = None;
        let mut sessions = Vec::with_capacity(records.len());
        for ((record, fm), tr) in records.into_iter().zip(frames).zip(transcripts) {
            let functionals = match fm {
                Some(fm) => {
                    match &frame_features {
                        None => frame_features = Some(fm.feature_names.clone()),
                        Some(names) if *names != fm.feature_names => {
                            return Err(Error::validation(format!(
                                "{}: frame columns differ from the first session",
                                record.frames_path
                            )))
                        }
                        _ => {}
                    }
                    Some(compute_functionals(&fm, featurize.stat_window, featurize.stat_hop)?.steps)
                }
                None => None,
            };
            let lexical = match (tr, embeddings) {
                (Some(tr), Some(table)) => Some(assemble_lexical(&tr, &compute_pauses(&tr), table, flags)?),
                (Some(_), None) => return Err(Error::validation("transcripts given without an embedding table")),
                (None, _) => None,
            };
            sessions.push(SessionData {
                record,
                functionals,
                lexical,
            });
        }
        Ok(Dataset {
            sessions,
            frame_features: frame_features.unwrap_or_default(),
            embedding_digest: embeddings.map(|t| t.digest.clone()),
            embedding_dim: embeddings.map_or(0, EmbeddingTable::dim),
            flags,
            featurize,
        })
    }

    /// Reads a manifest and every file it references. Relative paths are
    /// resolved against the manifest's directory.
    pub fn load(
        manifest: &Path,
        embeddings: Option<&EmbeddingTable>,
        flags: LexicalFlags,
        featurize: FeaturizeConfig,
        need_audio: bool,
        need_text: bool,
    ) -> Result<Self> {
        let records = load_manifest(&read(manifest)?)?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let mut frames = Vec::with_capacity(records.len());
        let mut transcripts = Vec::with_capacity(records.len());
        for r in &records {
            frames.push(if need_audio {
                let p = resolve(base, &r.frames_path);
                Some(parse_frames(&read(&p)?, &r.session_id).map_err(|e| in_file(&p, e))?)
            } else {
                None
            });
            transcripts.push(if need_text {
                let p = resolve(base, &r.asr_path);
                Some(parse_asr(&read(&p)?, &r.patient_speaker).map_err(|e| in_file(&p, e))?)
            } else {
                None
            });
        }
        Self::from_parts(records, frames, transcripts, embeddings, flags, featurize)
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Indices of sessions that carry a label for `task`.
    pub fn labelled(&self, task: Task) -> Vec<usize> {
        (0..self.len())
            .filter(|i| task.target(&self.sessions[*i].record).is_some())
            .collect()
    }

    pub fn target(&self, i: usize, task: Task) -> Result<f64> {
        let r = &self.sessions[i].record;
        task.target(r)
            .ok_or_else(|| Error::validation(format!("session {} has no {} label", r.session_id, task.name())))
    }

    pub fn text_width(&self) -> usize {
        self.flags.width(self.embedding_dim)
    }
}

pub(crate) fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn in_file(path: &Path, e: Error) -> Error {
    Error::Validation(format!("{}: {e}", path.display()))
}

/// Scaler and selection mask fitted on one training split.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioPrep {
    pub scaler: Scaler,
    pub mask: SelectionMask,
    /// Session ids the statistics were computed from.
    pub fitted_on: Vec<String>,
}

impl AudioPrep {
    pub fn fit(ds: &Dataset, train: &[usize], task: Task) -> Result<Self> {
        let mut parts = Vec::with_capacity(train.len());
        let mut targets = Vec::new();
        for &i in train {
            let s = &ds.sessions[i];
            let f = s
                .functionals
                .as_ref()
                .ok_or_else(|| Error::validation(format!("session {} has no frames", s.record.session_id)))?;
            let y = ds.target(i, task)?;
            targets.extend(std::iter::repeat_n(y, f.rows));
            parts.push(f);
        }
        let stacked = Tensor2::vstack(&parts)?;
        let scaler = fit_scaler(&stacked)?;
        let scaled = apply_scaler(&stacked, &scaler)?;
        let mask = select_features(&scaled, &targets, ds.featurize.alpha)?;
        Ok(AudioPrep {
            scaler,
            mask,
            fitted_on: train.iter().map(|i| ds.sessions[*i].record.session_id.clone()).collect(),
        })
    }

    pub fn from_meta(meta: &ModelMeta) -> Option<Self> {
        Some(AudioPrep {
            scaler: meta.scaler.clone()?,
            mask: meta.mask.clone()?,
            fitted_on: Vec::new(),
        })
    }

    pub fn transform(&self, functionals: &Tensor2<f64>) -> Result<Tensor2<f64>> {
        self.mask.apply(&apply_scaler(functionals, &self.scaler)?)
    }
}

/// Windows for whichever branches `arch.kind` uses.
pub fn session_windows(session: &SessionData, prep: Option<&AudioPrep>, arch: &ArchConfig) -> Result<SessionWindows<f32>> {
    let id = &session.record.session_id;
    let audio = if arch.kind.uses_audio() {
        let prep = prep.ok_or_else(|| Error::validation("audio branch needs a fitted scaler and mask"))?;
        let f = session
            .functionals
            .as_ref()
            .ok_or_else(|| Error::validation(format!("session {id} has no frames")))?;
        make_windows(&prep.transform(f)?.cast::<f32>(), arch.audio.timestep, arch.audio.stride)?
    } else {
        Vec::new()
    };
    let text = if arch.kind.uses_text() {
        let l = session
            .lexical
            .as_ref()
            .ok_or_else(|| Error::validation(format!("session {id} has no transcript")))?;
        make_windows(&l.steps.cast::<f32>(), arch.text.timestep, arch.text.stride)?
    } else {
        Vec::new()
    };
    Ok(SessionWindows {
        session_id: id.clone(),
        audio,
        text,
    })
}

/// Featurizes one session for a trained model, checking that the inputs
/// match what the checkpoint was trained on.
pub fn checkpoint_windows(
    params: &ModelParams,
    session_id: &str,
    frames: Option<FrameMatrix>,
    transcript: Option<Transcript>,
    table: Option<&EmbeddingTable>,
) -> Result<SessionWindows<f32>> {
    let meta = &params.meta;
    let kind = meta.arch.kind;
    let frames = match (kind.uses_audio(), frames) {
        (true, Some(f)) => {
            if f.feature_names != meta.frame_features {
                return Err(Error::validation("frame columns differ from the checkpoint's"));
            }
            Some(f)
        }
        (true, None) => return Err(Error::validation("this model needs acoustic frames")),
        (false, _) => None,
    };
    let (transcript, table) = match (kind.uses_text(), transcript, table) {
        (true, Some(t), Some(e)) => {
            if Some(&e.digest) != meta.embedding_digest.as_ref() {
                return Err(Error::validation("embedding table differs from the checkpoint's"));
            }
            (Some(t), Some(e))
        }
        (true, _, _) => return Err(Error::validation("this model needs a transcript and an embedding table")),
        (false, ..) => (None, None),
    };
    let record = SessionRecord {
        session_id: session_id.to_string(),
        frames_path: String::new(),
        asr_path: String::new(),
        patient_speaker: transcript.as_ref().map(|t| t.patient_speaker.clone()).unwrap_or_default(),
        ad_label: None,
        mmse: None,
        decline_label: None,
    };
    let featurize = FeaturizeConfig {
        stat_window: meta.stat_window,
        stat_hop: meta.stat_hop,
        alpha: meta.alpha,
    };
    let ds = Dataset::from_parts(vec![record], vec![frames], vec![transcript], table, meta.arch.flags, featurize)?;
    session_windows(&ds.sessions[0], AudioPrep::from_meta(meta).as_ref(), &meta.arch)
}
