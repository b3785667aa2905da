//! Unimodal and gated multimodal architectures, session-level prediction and
//! the checkpoint format.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acoustic::{FeatureWindow, Scaler, SelectionMask};
use crate::error::{Error, Result};
use crate::lexical::LexicalFlags;
use crate::nn::highway::HighwayCache;
use crate::nn::lstm::BiLstmCache;
use crate::nn::{
    bilstm_backward, bilstm_forward_cached, sigmoid, Activation, BiLstm, DenseParams, HighwayStack, ParamSet, Real,
    Tensor2,
};

pub const MMSE_MAX: f64 = 30.0;
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// AD vs control classification.
    Ad,
    /// MMSE score regression.
    Mmse,
    /// Two-year cognitive decline classification.
    Decline,
}

impl Task {
    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Mmse)
    }

    pub fn target(self, record: &crate::ingest::SessionRecord) -> Option<f64> {
        match self {
            Task::Ad => record.ad_label,
            Task::Mmse => record.mmse,
            Task::Decline => record.decline_label,
        }
        .map(f64::from)
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Ad => "ad",
            Task::Mmse => "mmse",
            Task::Decline => "decline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Acoustic BiLSTM only.
    Audio,
    /// Lexical BiLSTM only.
    Text,
    /// Both branches joined by the highway stack.
    Fused,
    /// Separate audio and text models averaged at session level.
    Late,
}

impl ModelKind {
    pub fn uses_audio(self) -> bool {
        !matches!(self, ModelKind::Text)
    }

    pub fn uses_text(self) -> bool {
        !matches!(self, ModelKind::Audio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchConfig {
    pub timestep: usize,
    pub stride: usize,
    pub layers: usize,
    /// Hidden units per direction; each step emits 2 × hidden.
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub kind: ModelKind,
    pub task: Task,
    pub audio: BranchConfig,
    pub text: BranchConfig,
    pub highway_n: usize,
    pub flags: LexicalFlags,
    pub seed: u64,
}

impl ArchConfig {
    pub fn new(kind: ModelKind, task: Task) -> Self {
        ArchConfig {
            kind,
            task,
            audio: BranchConfig {
                timestep: 20,
                stride: 1,
                layers: 4,
                hidden: 256,
            },
            text: BranchConfig {
                timestep: 10,
                stride: 2,
                layers: 2,
                hidden: 16,
            },
            highway_n: 3,
            flags: LexicalFlags::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("audio", &self.audio), ("text", &self.text)] {
            if b.timestep == 0 || b.stride == 0 || b.layers == 0 || b.hidden == 0 {
                return Err(Error::validation(format!("{name} branch: all sizes must be positive")));
            }
        }
        if self.highway_n == 0 {
            return Err(Error::validation("highway_n must be >= 1"));
        }
        Ok(())
    }
}

/// Which branches a single network carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    Audio,
    Text,
    Fused,
}

/// One trainable network: optional branches, highway stack (fused only) and
/// a scalar output head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub audio: Option<BiLstm<T>>,
    pub text: Option<BiLstm<T>>,
    pub highway: HighwayStack<T>,
    pub head: DenseParams<T>,
}

impl<T: Real> Network<T> {
    fn build(kind: NetKind, arch: &ArchConfig, audio_in: usize, text_in: usize, rng: Option<&mut ChaCha8Rng>) -> Self {
        let (a, t) = (arch.audio, arch.text);
        match rng {
            Some(rng) => {
                let audio = matches!(kind, NetKind::Audio | NetKind::Fused)
                    .then(|| BiLstm::init(audio_in, a.hidden, a.layers, rng));
                let text = matches!(kind, NetKind::Text | NetKind::Fused)
                    .then(|| BiLstm::init(text_in, t.hidden, t.layers, rng));
                let width = audio.as_ref().map_or(0, BiLstm::output) + text.as_ref().map_or(0, BiLstm::output);
                let highway = if kind == NetKind::Fused {
                    HighwayStack::init(width, arch.highway_n, rng)
                } else {
                    HighwayStack::zeros(width, 0)
                };
                let head = DenseParams::init(width, 1, rng);
                Network {
                    audio,
                    text,
                    highway,
                    head,
                }
            }
            None => {
                let audio = matches!(kind, NetKind::Audio | NetKind::Fused).then(|| BiLstm::zeros(audio_in, a.hidden, a.layers));
                let text = matches!(kind, NetKind::Text | NetKind::Fused).then(|| BiLstm::zeros(text_in, t.hidden, t.layers));
                let width = audio.as_ref().map_or(0, BiLstm::output) + text.as_ref().map_or(0, BiLstm::output);
                let n = if kind == NetKind::Fused { arch.highway_n } else { 0 };
                Network {
                    audio,
                    text,
                    highway: HighwayStack::zeros(width, n),
                    head: DenseParams::zeros(width, 1),
                }
            }
        }
    }

    /// Seeded initialization.
    pub fn init(kind: NetKind, arch: &ArchConfig, audio_in: usize, text_in: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::build(kind, arch, audio_in, text_in, Some(rng))
    }

    pub fn zeros(kind: NetKind, arch: &ArchConfig, audio_in: usize, text_in: usize) -> Self {
        Self::build(kind, arch, audio_in, text_in, None)
    }

    pub fn kind(&self) -> NetKind {
        match (&self.audio, &self.text) {
            (Some(_), Some(_)) => NetKind::Fused,
            (Some(_), None) => NetKind::Audio,
            _ => NetKind::Text,
        }
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        let mut out = Network::<U> {
            audio: self.audio.as_ref().map(|b| BiLstm::zeros(b.input(), b.output() / 2, b.layers.len())),
            text: self.text.as_ref().map(|b| BiLstm::zeros(b.input(), b.output() / 2, b.layers.len())),
            highway: HighwayStack::zeros(self.head.input(), self.highway.layers.len()),
            head: DenseParams::zeros(self.head.input(), 1),
        };
        let src = self.flatten();
        let mut k = 0;
        out.visit_mut(&mut |_, _, t| {
            for v in t.iter_mut() {
                *v = U::of(src[k].as_f64());
                k += 1;
            }
        });
        out
    }
}

impl<T: Real> ParamSet<T> for Network<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [T])) {
        if let Some(a) = &self.audio {
            a.visit(&mut |n, d, t| f(&format!("audio.{n}"), d, t));
        }
        if let Some(b) = &self.text {
            b.visit(&mut |n, d, t| f(&format!("text.{n}"), d, t));
        }
        self.highway.visit(&mut |n, d, t| f(&format!("highway.{n}"), d, t));
        self.head.visit(&mut |n, d, t| f(&format!("head.{n}"), d, t));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        if let Some(a) = &mut self.audio {
            a.visit_mut(&mut |n, d, t| f(&format!("audio.{n}"), d, t));
        }
        if let Some(b) = &mut self.text {
            b.visit_mut(&mut |n, d, t| f(&format!("text.{n}"), d, t));
        }
        self.highway.visit_mut(&mut |n, d, t| f(&format!("highway.{n}"), d, t));
        self.head.visit_mut(&mut |n, d, t| f(&format!("head.{n}"), d, t));
    }
}

/// The inputs of one training or scoring example.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a, T> {
    pub audio: Option<&'a FeatureWindow<T>>,
    pub text: Option<&'a FeatureWindow<T>>,
}

struct BranchCache<T> {
    lstm: BiLstmCache<T>,
    valid: Vec<bool>,
    n_valid: usize,
}

pub struct ForwardCache<T> {
    audio: Option<BranchCache<T>>,
    text: Option<BranchCache<T>>,
    highway: Vec<HighwayCache<T>>,
    head_in: Vec<T>,
    /// Raw head output: a logit for classification, the score for regression.
    pub output: T,
}

fn mean_pool<T: Real>(out: &Tensor2<T>, valid: &[bool]) -> (Vec<T>, usize) {
    let n = valid.iter().filter(|v| **v).count();
    let mut pooled = vec![T::zero(); out.cols];
    for (t, _) in valid.iter().enumerate().filter(|(_, v)| **v) {
        for (p, v) in pooled.iter_mut().zip(out.row(t)) {
            *p += *v;
        }
    }
    let inv = T::one() / T::of(n.max(1) as f64);
    pooled.iter_mut().for_each(|p| *p *= inv);
    (pooled, n)
}

fn run_branch<T: Real>(net: &BiLstm<T>, window: &FeatureWindow<T>, name: &str) -> Result<(Vec<T>, BranchCache<T>)> {
    if window.steps.cols != net.input() {
        return Err(Error::shape(format!(
            "{name} branch expects {} input features, window has {}",
            net.input(),
            window.steps.cols
        )));
    }
    if window.n_valid() == 0 {
        return Err(Error::shape(format!("{name} window has no valid steps")));
    }
    let lstm = bilstm_forward_cached(&window.steps, net, &window.valid)?;
    let (pooled, n_valid) = mean_pool(&lstm.output, &window.valid);
    Ok((
        pooled,
        BranchCache {
            lstm,
            valid: window.valid.clone(),
            n_valid,
        },
    ))
}

impl<T: Real> Network<T> {
    /// Branches → mean-pool over valid steps → concat → highway stack → head.
    pub fn forward(&self, inst: Instance<'_, T>) -> Result<ForwardCache<T>> {
        let mut features = Vec::with_capacity(self.head.input());
        let audio = match (&self.audio, inst.audio) {
            (Some(net), Some(w)) => {
                let (p, c) = run_branch(net, w, "audio")?;
                features.extend(p);
                Some(c)
            }
            (Some(_), None) => return Err(Error::shape("network needs an audio window")),
            _ => None,
        };
        let text = match (&self.text, inst.text) {
            (Some(net), Some(w)) => {
                let (p, c) = run_branch(net, w, "text")?;
                features.extend(p);
                Some(c)
            }
            (Some(_), None) => return Err(Error::shape("network needs a text window")),
            _ => None,
        };
        let highway = self.highway.forward_cached(&features);
        let head_in = highway.last().map_or(features, |c| c.y.clone());
        let mut out = [T::zero()];
        self.head.forward_vec(&head_in, Activation::Identity, &mut out);
        Ok(ForwardCache {
            audio,
            text,
            highway,
            head_in,
            output: out[0],
        })
    }

    /// Backprop of `d_output` (gradient w.r.t. the raw head output).
    pub fn backward(&self, cache: &ForwardCache<T>, d_output: T, grad: &mut Network<T>) {
        let mut d_head_in = vec![T::zero(); self.head.input()];
        self.head.backward_vec(
            &cache.head_in,
            &[cache.output],
            Activation::Identity,
            &[d_output],
            &mut grad.head,
            Some(&mut d_head_in),
        );
        let d_features = if cache.highway.is_empty() {
            d_head_in
        } else {
            self.highway.backward(&cache.highway, &d_head_in, &mut grad.highway)
        };
        let mut offset = 0;
        for (net, bc, g) in [
            (&self.audio, &cache.audio, grad.audio.as_mut()),
            (&self.text, &cache.text, grad.text.as_mut()),
        ] {
            let (Some(net), Some(bc), Some(g)) = (net, bc, g) else { continue };
            let width = net.output();
            let inv = T::one() / T::of(bc.n_valid as f64);
            let out = &bc.lstm.output;
            let mut d_out = Tensor2::zeros(out.rows, out.cols);
            for t in (0..out.rows).filter(|t| bc.valid[*t]) {
                for (k, d) in d_out.row_mut(t).iter_mut().enumerate() {
                    *d = d_features[offset + k] * inv;
                }
            }
            bilstm_backward(net, &bc.lstm, &d_out, g);
            offset += width;
        }
    }

    /// Window score: sigmoid(logit) for classification, raw value otherwise.
    pub fn score(&self, inst: Instance<'_, T>, task: Task) -> Result<T> {
        let z = self.forward(inst)?.output;
        Ok(if task.is_classification() { sigmoid(z) } else { z })
    }
}

/// Score of the fused network on one paired instance.
pub fn forward_fused<T: Real>(
    audio: &FeatureWindow<T>,
    text: &FeatureWindow<T>,
    net: &Network<T>,
    task: Task,
) -> Result<T> {
    if net.kind() != NetKind::Fused {
        return Err(Error::shape("forward_fused needs a network with both branches"));
    }
    net.score(
        Instance {
            audio: Some(audio),
            text: Some(text),
        },
        task,
    )
}

/// Score of a single-branch network on one window.
pub fn forward_unimodal<T: Real>(window: &FeatureWindow<T>, net: &Network<T>, task: Task) -> Result<T> {
    let inst = match net.kind() {
        NetKind::Audio => Instance {
            audio: Some(window),
            text: None,
        },
        NetKind::Text => Instance {
            audio: None,
            text: Some(window),
        },
        NetKind::Fused => return Err(Error::shape("forward_unimodal needs a single-branch network")),
    };
    net.score(inst, task)
}

/// Cyclic pairing of a session's audio and text windows: `max(Na, Nt)`
/// instances, instance i pairs `(i mod Na, i mod Nt)`.
pub fn pair_windows(n_audio: usize, n_text: usize) -> Result<Vec<(usize, usize)>> {
    if n_audio == 0 || n_text == 0 {
        return Err(Error::validation(format!(
            "cannot pair {n_audio} audio windows with {n_text} text windows"
        )));
    }
    Ok((0..n_audio.max(n_text)).map(|i| (i % n_audio, i % n_text)).collect())
}

/// Session-level late fusion of two unimodal probabilities (arithmetic mean).
pub fn late_fuse(p_audio: f64, p_text: f64) -> Result<f64> {
    for p in [p_audio, p_text] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(format!("late fusion input {p} outside [0,1]")));
        }
    }
    Ok(0.5 * (p_audio + p_text))
}

/// Everything needed to featurize new sessions the way the model was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub arch: ArchConfig,
    pub stat_window: usize,
    pub stat_hop: usize,
    pub alpha: f64,
    /// Frame feature names the scaler and mask were fitted against.
    pub frame_features: Vec<String>,
    pub scaler: Option<Scaler>,
    pub mask: Option<SelectionMask>,
    pub embedding_digest: Option<String>,
    pub embedding_dim: usize,
    pub audio_input: usize,
    pub text_input: usize,
    /// Regression head bias before training (training-target mean).
    pub target_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Nets {
    Single(Network<f32>),
    Late { audio: Network<f32>, text: Network<f32> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub meta: ModelMeta,
    pub nets: Nets,
}

/// Featurized, windowed inputs of one session.
#[derive(Debug, Clone)]
pub struct SessionWindows<T> {
    pub session_id: String,
    pub audio: Vec<FeatureWindow<T>>,
    pub text: Vec<FeatureWindow<T>>,
}

impl<T: Real> SessionWindows<T> {
    /// Instances for a single network of the given kind.
    pub fn instances(&self, kind: NetKind) -> Result<Vec<Instance<'_, T>>> {
        Ok(match kind {
            NetKind::Audio => self
                .audio
                .iter()
                .map(|w| Instance {
                    audio: Some(w),
                    text: None,
                })
                .collect(),
            NetKind::Text => self
                .text
                .iter()
                .map(|w| Instance {
                    audio: None,
                    text: Some(w),
                })
                .collect(),
            NetKind::Fused => pair_windows(self.audio.len(), self.text.len())?
                .into_iter()
                .map(|(a, t)| Instance {
                    audio: Some(&self.audio[a]),
                    text: Some(&self.text[t]),
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPrediction {
    pub session_id: String,
    /// Probability for classification, clamped MMSE for regression.
    pub score: f64,
    /// `score >= 0.5` for classification tasks.
    pub label: Option<u8>,
    pub window_scores: Vec<f64>,
    /// (audio, text) session scores of a late-fusion model.
    pub branch_scores: Option<(f64, f64)>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn window_scores(net: &Network<f32>, windows: &SessionWindows<f32>, task: Task) -> Result<Vec<f64>> {
    let inst = windows.instances(net.kind())?;
    if inst.is_empty() {
        return Err(Error::validation(format!("session {}: no windows to score", windows.session_id)));
    }
    inst.into_iter().map(|i| net.score(i, task).map(|s| s as f64)).collect()
}

/// Mean of window scores; regression clamped to [0, 30]; label by `>= 0.5`.
pub fn aggregate(session_id: &str, scores: Vec<f64>, task: Task) -> SessionPrediction {
    let mut score = mean(&scores);
    if !task.is_classification() {
        score = score.clamp(0.0, MMSE_MAX);
    }
    SessionPrediction {
        session_id: session_id.to_string(),
        score,
        label: task.is_classification().then_some(u8::from(score >= DECISION_THRESHOLD)),
        window_scores: scores,
        branch_scores: None,
    }
}

pub fn predict_session(windows: &SessionWindows<f32>, params: &ModelParams) -> Result<SessionPrediction> {
    let task = params.meta.arch.task;
    match &params.nets {
        Nets::Single(net) => Ok(aggregate(&windows.session_id, window_scores(net, windows, task)?, task)),
        Nets::Late { audio, text } => {
            let a = window_scores(audio, windows, task)?;
            let t = window_scores(text, windows, task)?;
            let (pa, pt) = (mean(&a), mean(&t));
            let score = if task.is_classification() {
                late_fuse(pa, pt)?
            } else {
                (0.5 * (pa + pt)).clamp(0.0, MMSE_MAX)
            };
            let mut all = a;
            all.extend(t);
            Ok(SessionPrediction {
                session_id: windows.session_id.clone(),
                score,
                label: task.is_classification().then_some(u8::from(score >= DECISION_THRESHOLD)),
                window_scores: all,
                branch_scores: Some((pa, pt)),
            })
        }
    }
}

/// Fresh seeded parameters for the configured model kind.
pub fn init_params(meta: ModelMeta) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(meta.arch.seed);
    let (ai, ti) = (meta.audio_input, meta.text_input);
    let nets = match meta.arch.kind {
        ModelKind::Audio => Nets::Single(Network::init(NetKind::Audio, &meta.arch, ai, ti, &mut rng)),
        ModelKind::Text => Nets::Single(Network::init(NetKind::Text, &meta.arch, ai, ti, &mut rng)),
        ModelKind::Fused => Nets::Single(Network::init(NetKind::Fused, &meta.arch, ai, ti, &mut rng)),
        ModelKind::Late => Nets::Late {
            audio: Network::init(NetKind::Audio, &meta.arch, ai, ti, &mut rng),
            text: Network::init(NetKind::Text, &meta.arch, ai, ti, &mut rng),
        },
    };
    ModelParams { meta, nets }
}

fn zero_params(meta: &ModelMeta) -> Nets {
    let (a, ai, ti) = (&meta.arch, meta.audio_input, meta.text_input);
    match a.kind {
        ModelKind::Audio => Nets::Single(Network::zeros(NetKind::Audio, a, ai, ti)),
        ModelKind::Text => Nets::Single(Network::zeros(NetKind::Text, a, ai, ti)),
        ModelKind::Fused => Nets::Single(Network::zeros(NetKind::Fused, a, ai, ti)),
        ModelKind::Late => Nets::Late {
            audio: Network::zeros(NetKind::Audio, a, ai, ti),
            text: Network::zeros(NetKind::Text, a, ai, ti),
        },
    }
}

fn named_nets(nets: &Nets) -> Vec<(&'static str, &Network<f32>)> {
    match nets {
        Nets::Single(n) => vec![("net", n)],
        Nets::Late { audio, text } => vec![("audio_net", audio), ("text_net", text)],
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MGFC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Layout: magic, u32 version, u32 metadata length, metadata JSON, u32 tensor
/// count, per tensor (u32 name length, name, u32 rank, u64 dims, u64 byte
/// offset into the payload), u64 payload length, f32 payload. All integers
/// and floats little-endian.
pub fn save_checkpoint(params: &ModelParams) -> Vec<u8> {
    let meta = serde_json::to_vec(&params.meta).expect("metadata serializes");
    let mut table: Vec<(String, Vec<usize>, u64)> = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    for (prefix, net) in named_nets(&params.nets) {
        net.visit(&mut |name, dims, data| {
            table.push((format!("{prefix}.{name}"), dims.to_vec(), payload.len() as u64));
            for v in data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        });
    }
    let mut out = Vec::with_capacity(payload.len() + meta.len() + 64 * table.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for (name, dims, offset) in &table {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
    }
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Checkpoint {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint {
            offset: 0,
            message: "bad magic".into(),
        });
    }
    let version_at = cur.pos;
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint {
            offset: version_at,
            message: format!("unsupported version {version}"),
        });
    }
    let meta_len = cur.u32("metadata length")? as usize;
    let meta_at = cur.pos;
    let meta: ModelMeta = serde_json::from_slice(cur.take(meta_len, "metadata")?).map_err(|e| Error::Checkpoint {
        offset: meta_at,
        message: format!("metadata: {e}"),
    })?;
    meta.arch.validate().map_err(|e| Error::Checkpoint {
        offset: meta_at,
        message: e.to_string(),
    })?;

    let count = cur.u32("tensor count")? as usize;
    let mut table = Vec::new();
    for _ in 0..count.min(1 << 20) {
        let entry_at = cur.pos;
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "tensor name")?)
            .map_err(|_| cur.err("tensor name is not UTF-8"))?
            .to_string();
        let rank = cur.u32("rank")? as usize;
        if rank > 8 {
            return Err(cur.err(format!("rank {rank} of {name}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u64("dims")? as usize);
        }
        let offset = cur.u64("tensor offset")? as usize;
        table.push((name, dims, offset, entry_at));
    }
    let payload_len = cur.u64("payload length")? as usize;
    let payload_at = cur.pos;
    let payload = cur.take(payload_len, "payload")?;
    if cur.pos != bytes.len() {
        return Err(cur.err("trailing bytes after payload"));
    }

    let mut nets = zero_params(&meta);
    let mut used = 0usize;
    let mut failure: Option<Error> = None;
    let mut fill = |prefix: &str, net: &mut Network<f32>| {
        net.visit_mut(&mut |name, dims, data| {
            if failure.is_some() {
                return;
            }
            let full = format!("{prefix}.{name}");
            let Some((_, d, offset, entry_at)) = table.iter().find(|(n, ..)| *n == full) else {
                failure = Some(Error::Checkpoint {
                    offset: payload_at,
                    message: format!("missing tensor {full}"),
                });
                return;
            };
            if d.as_slice() != dims {
                failure = Some(Error::Checkpoint {
                    offset: *entry_at,
                    message: format!("{full}: dims {d:?}, expected {dims:?}"),
                });
                return;
            }
            let end = offset + 4 * data.len();
            if end > payload.len() {
                failure = Some(Error::Checkpoint {
                    offset: payload_at + offset,
                    message: format!("{full} runs past the payload"),
                });
                return;
            }
            for (k, v) in data.iter_mut().enumerate() {
                let at = offset + 4 * k;
                *v = f32::from_le_bytes(payload[at..at + 4].try_into().unwrap());
            }
            used += 1;
        });
    };
    match &mut nets {
        Nets::Single(n) => fill("net", n),
        Nets::Late { audio, text } => {
            fill("audio_net", audio);
            fill("text_net", text);
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    if used != table.len() {
        return Err(Error::Checkpoint {
            offset: payload_at,
            message: format!("{} tensors in file, {used} expected", table.len()),
        });
    }
    Ok(ModelParams { meta, nets })
}
