//! Independent reference implementations and fixtures shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use speechgate::acoustic::FeatureWindow;
use speechgate::ingest::{DisfluencyTag, Transcript, WordToken};
use speechgate::lexical::LexicalFlags;
use speechgate::model::{ArchConfig, BranchConfig, Instance, ModelKind, NetKind, Network, Task};
use speechgate::nn::gradcheck::{check_gradients, GradCheckReport};
use speechgate::nn::{
    bce_with_logits, bilstm_backward, bilstm_forward_cached, cell_backward, dense_backward, dense_forward,
    lstm_cell_forward, mse_loss, Activation, BiLstm, DenseParams, HighwayStack, LstmLayerParams, ParamSet,
    Tensor2,
};
use speechgate::pipeline::{Dataset, FeaturizeConfig};
use speechgate::synth::make_synthetic;
use speechgate::train::TrainConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Double-double arithmetic for the moment, correlation and RMSE oracles.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn of(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::of(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::of(q2)));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::of(q3))
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let x = self.hi.sqrt();
        // One Newton step: x + (a − x²) / 2x.
        let r = self.sub(Dd::of(x).mul(Dd::of(x)));
        Dd::of(x).add(Dd::of(r.hi / (2.0 * x)))
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

fn dd_sum(xs: impl IntoIterator<Item = Dd>) -> Dd {
    xs.into_iter().fold(Dd::ZERO, Dd::add)
}

// ---------------------------------------------------------------------------
// Acoustic functionals.

/// Mean, max, min, median, population std, skewness, excess kurtosis, with
/// zero skew and kurtosis when the variance is below 1e-12.
pub fn functionals_oracle(values: &[f64]) -> [f64; 7] {
    let n = Dd::of(values.len() as f64);
    let mean = dd_sum(values.iter().map(|v| Dd::of(*v))).div(n);
    let dev: Vec<Dd> = values.iter().map(|v| Dd::of(*v).sub(mean)).collect();
    let m2 = dd_sum(dev.iter().map(|d| d.mul(*d))).div(n);
    let m3 = dd_sum(dev.iter().map(|d| d.mul(*d).mul(*d))).div(n);
    let m4 = dd_sum(dev.iter().map(|d| d.mul(*d).mul(d.mul(*d)))).div(n);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        (sorted[k / 2 - 1] + sorted[k / 2]) / 2.0
    };
    let (skew, kurt) = if m2.to_f64() < 1e-12 {
        (0.0, 0.0)
    } else {
        let sd = m2.sqrt();
        let skew = m3.div(m2.mul(sd)).to_f64();
        let kurt = m4.div(m2.mul(m2)).sub(Dd::of(3.0)).to_f64();
        (skew, kurt)
    };
    [
        mean.to_f64(),
        sorted[k - 1],
        sorted[0],
        median,
        m2.sqrt().to_f64(),
        skew,
        kurt,
    ]
}

/// Windows over `t` frames: every start `s·hop` with `s·hop + w ≤ t`, or a
/// single window over everything when there is none.
pub fn window_starts_oracle(t: usize, w: usize, hop: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut s = 0;
    while s + w <= t {
        out.push((s, w));
        s += hop;
    }
    if out.is_empty() {
        out.push((0, t));
    }
    out
}

/// Relative error, floored so statistics whose true value is 0 are judged
/// on absolute error.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-6)
}

// ---------------------------------------------------------------------------
// Correlation significance.

pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = Dd::of(x.len() as f64);
    let mx = dd_sum(x.iter().map(|v| Dd::of(*v))).div(n);
    let my = dd_sum(y.iter().map(|v| Dd::of(*v))).div(n);
    let (mut sxy, mut sxx, mut syy) = (Dd::ZERO, Dd::ZERO, Dd::ZERO);
    for (a, b) in x.iter().zip(y) {
        let dx = Dd::of(*a).sub(mx);
        let dy = Dd::of(*b).sub(my);
        sxy = sxy.add(dx.mul(dy));
        sxx = sxx.add(dx.mul(dx));
        syy = syy.add(dy.mul(dy));
    }
    if sxx.hi <= 0.0 || syy.hi <= 0.0 {
        return 0.0;
    }
    sxy.div(sxx.sqrt().mul(syy.sqrt())).to_f64().clamp(-1.0, 1.0)
}

/// P(|T| ≤ t) for Student's t with integer `dof`, by the finite
/// trigonometric series (Abramowitz & Stegun 26.7.3 and 26.7.4).
pub fn t_central_mass(t: f64, dof: u32) -> f64 {
    let theta = (t.abs() / (dof as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    if dof % 2 == 1 {
        if dof == 1 {
            return 2.0 * theta / std::f64::consts::PI;
        }
        // cosθ · [1 + (2/3)cos²θ + (2·4)/(3·5)cos⁴θ + …] up to cos^{ν−2}θ
        let mut term = c;
        let mut sum = c;
        let mut k = 1;
        while 2 * k + 1 < dof {
            term *= c2 * (2 * k) as f64 / (2 * k + 1) as f64;
            sum += term;
            k += 1;
        }
        2.0 / std::f64::consts::PI * (theta + s * sum)
    } else {
        // sinθ · [1 + (1/2)cos²θ + (1·3)/(2·4)cos⁴θ + …] up to cos^{ν−2}θ
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while 2 * k < dof {
            term *= c2 * (2 * k - 1) as f64 / (2 * k) as f64;
            sum += term;
            k += 1;
        }
        s * sum
    }
}

/// Two-sided p-value of a Pearson r over n pairs.
pub fn p_value_oracle(r: f64, n: usize) -> f64 {
    let dof = (n - 2) as u32;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * ((dof as f64) / (1.0 - r * r)).sqrt();
    (1.0 - t_central_mass(t, dof)).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Pauses.

/// Pause before each patient token, looked up by index: the gap to the
/// token immediately before it in the list when that token is also the
/// patient's, else 0. Categories 0 none, 1 short, 2 long.
pub fn pauses_oracle(t: &Transcript) -> (Vec<f64>, Vec<usize>) {
    let mut durations = Vec::new();
    let mut categories = Vec::new();
    for i in 0..t.tokens.len() {
        if t.tokens[i].speaker != t.patient_speaker {
            continue;
        }
        let mut d = 0.0;
        if i > 0 && t.tokens[i - 1].speaker == t.patient_speaker {
            let gap = t.tokens[i].start - t.tokens[i - 1].end;
            if gap > 0.0 {
                d = gap;
            }
        }
        durations.push(d);
        categories.push(if d < 0.5 {
            0
        } else if d < 1.5 {
            1
        } else {
            2
        });
    }
    (durations, categories)
}

const Q: f64 = 1.0 / 1024.0;

fn quantize(x: f64) -> f64 {
    (x / Q).round() * Q
}

/// Random transcript on a 1/1024 s grid so every gap is exact. Gaps are
/// drawn to hit 0.5 and 1.5 exactly, just under them, overlaps and very long
/// silences; interviewer tokens are interleaved at random.
pub fn random_transcript(rng: &mut ChaCha8Rng) -> Transcript {
    let n = rng.random_range(1..=30);
    let inv_share = rng.random_range(0.0..0.5);
    let mut tokens: Vec<WordToken> = Vec::with_capacity(n);
    let mut t = quantize(rng.random_range(0.0..2.0));
    let mut prev_dur = 0.0;
    for k in 0..n {
        let speaker = if k > 0 && rng.random_bool(inv_share) { "INV" } else { "PAR" };
        let gap = match rng.random_range(0..10) {
            0 => 0.5,
            1 => 1.5,
            2 => 0.5 - Q,
            3 => 1.5 - Q,
            4 => 0.0,
            5 => quantize(rng.random_range(3.0..15.0)),
            6 if k > 0 => -quantize(rng.random_range(0.0..prev_dur / 2.0)),
            _ => quantize(rng.random_range(0.0..2.5)),
        };
        let start = t + gap;
        let dur = quantize(rng.random_range(0.05..0.8));
        let end = start + dur;
        tokens.push(WordToken {
            text: format!("w{k}"),
            start,
            end,
            speaker: speaker.into(),
            asr_conf: 0.9,
            lm_prob: Some(0.5),
            disfl_tag: Some(DisfluencyTag::Fluent),
        });
        t = end;
        prev_dur = dur;
    }
    Transcript {
        session_id: "t".into(),
        tokens,
        patient_speaker: "PAR".into(),
    }
}

// ---------------------------------------------------------------------------
// Metrics.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub fn confusion_oracle(pred: &[u8], truth: &[u8]) -> Counts {
    let count = |p: u8, t: u8| pred.iter().zip(truth).filter(|(a, b)| **a == p && **b == t).count();
    Counts {
        tp: count(1, 1),
        fp: count(1, 0),
        tn: count(0, 0),
        fn_: count(0, 1),
    }
}

pub fn accuracy_oracle(pred: &[u8], truth: &[u8]) -> f64 {
    let correct = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    correct as f64 / pred.len() as f64
}

/// F1 per class from its own one-vs-rest counts, 0 for a class with no
/// predicted and no true members; returns the unweighted mean.
pub fn f1_mean_oracle(pred: &[u8], truth: &[u8]) -> f64 {
    let f1 = |c: u8| {
        let tp = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t == c).count();
        let fp = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t != c).count();
        let fn_ = pred.iter().zip(truth).filter(|(p, t)| **p != c && **t == c).count();
        if tp + fp + fn_ == 0 {
            0.0
        } else {
            (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
        }
    };
    (f1(0) + f1(1)) / 2.0
}

pub fn rmse_oracle(pred: &[f64], truth: &[f64]) -> f64 {
    let sse = dd_sum(pred.iter().zip(truth).map(|(p, t)| {
        let d = Dd::of(*p).sub(Dd::of(*t));
        d.mul(d)
    }));
    sse.div(Dd::of(pred.len() as f64)).sqrt().to_f64()
}

// ---------------------------------------------------------------------------
// Gradient checks (f64, central differences).

pub const GRAD_H: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor2<f64> {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor2::from_vec(rows, cols, data).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A bare vector as a parameter set, for input-gradient checks.
#[derive(Debug, Clone)]
pub struct Flat(pub Vec<f64>);

impl ParamSet<f64> for Flat {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [f64])) {
        f("x", &[self.0.len()], &self.0);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        let n = self.0.len();
        f("x", &[n], &mut self.0);
    }
}

fn dense_case(act: Activation) -> GradCheckReport {
    let mut r = rng(11);
    let p = DenseParams::<f64>::init(5, 3, &mut r);
    let x = random_tensor(&mut r, 4, 5);
    let probe = random_tensor(&mut r, 4, 3);
    let loss = |p: &DenseParams<f64>| inner(&dense_forward(&x, p, act).unwrap().data, &probe.data);
    let y = dense_forward(&x, &p, act).unwrap();
    let mut g = DenseParams::zeros(5, 3);
    dense_backward(&x, &y, &probe, &p, act, &mut g);
    check_gradients(&p, &g, loss, GRAD_H)
}

fn dense_input_case() -> GradCheckReport {
    let mut r = rng(12);
    let p = DenseParams::<f64>::init(5, 3, &mut r);
    let x = random_tensor(&mut r, 4, 5);
    let probe = random_tensor(&mut r, 4, 3);
    let act = Activation::Tanh;
    let at = |v: &Flat| Tensor2::from_vec(4, 5, v.0.clone()).unwrap();
    let loss = |v: &Flat| inner(&dense_forward(&at(v), &p, act).unwrap().data, &probe.data);
    let y = dense_forward(&x, &p, act).unwrap();
    let mut g = DenseParams::zeros(5, 3);
    let dx = dense_backward(&x, &y, &probe, &p, act, &mut g);
    check_gradients(&Flat(x.data.clone()), &Flat(dx.data), loss, GRAD_H)
}

fn losses_case(classification: bool) -> GradCheckReport {
    let mut r = rng(13);
    let p = DenseParams::<f64>::init(5, 1, &mut r);
    let x = random_tensor(&mut r, 6, 5);
    let y: Vec<f64> = if classification {
        (0..6).map(|i| (i % 2) as f64).collect()
    } else {
        random_vec(&mut r, 6).iter().map(|v| 3.0 * v).collect()
    };
    let eval = |p: &DenseParams<f64>| {
        let z = dense_forward(&x, p, Activation::Identity).unwrap();
        if classification {
            bce_with_logits(&z.data, &y).unwrap()
        } else {
            mse_loss(&z.data, &y).unwrap()
        }
    };
    let z = dense_forward(&x, &p, Activation::Identity).unwrap();
    let (_, dz) = eval(&p);
    let mut g = DenseParams::zeros(5, 1);
    dense_backward(&x, &z, &Tensor2::from_vec(6, 1, dz).unwrap(), &p, Activation::Identity, &mut g);
    check_gradients(&p, &g, |p| eval(p).0, GRAD_H)
}

struct CellCase {
    p: LstmLayerParams<f64>,
    x: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
    dh: Vec<f64>,
    dc: Vec<f64>,
}

fn cell_case() -> CellCase {
    let mut r = rng(21);
    let p = LstmLayerParams::<f64>::init(4, 3, &mut r);
    CellCase {
        x: random_vec(&mut r, 4),
        h: random_vec(&mut r, 3),
        c: random_vec(&mut r, 3),
        dh: random_vec(&mut r, 3),
        dc: random_vec(&mut r, 3),
        p,
    }
}

fn cell_loss(k: &CellCase, p: &LstmLayerParams<f64>, x: &[f64], h: &[f64], c: &[f64]) -> f64 {
    let s = lstm_cell_forward(x, h, c, p).unwrap();
    inner(&s.h(), &k.dh) + inner(&s.c, &k.dc)
}

fn lstm_cell_params_case() -> GradCheckReport {
    let k = cell_case();
    let s = lstm_cell_forward(&k.x, &k.h, &k.c, &k.p).unwrap();
    let mut g = LstmLayerParams::zeros(4, 3);
    let mut dx = vec![0.0; 4];
    cell_backward(&k.x, &s, &k.dh, &k.dc, &k.p, &mut g, &mut dx);
    check_gradients(&k.p, &g, |p| cell_loss(&k, p, &k.x, &k.h, &k.c), GRAD_H)
}

fn lstm_cell_inputs_case() -> GradCheckReport {
    let k = cell_case();
    let s = lstm_cell_forward(&k.x, &k.h, &k.c, &k.p).unwrap();
    let mut g = LstmLayerParams::zeros(4, 3);
    let mut dx = vec![0.0; 4];
    let (dh_prev, dc_prev) = cell_backward(&k.x, &s, &k.dh, &k.dc, &k.p, &mut g, &mut dx);
    let packed: Vec<f64> = [k.x.clone(), k.h.clone(), k.c.clone()].concat();
    let grads: Vec<f64> = [dx, dh_prev, dc_prev].concat();
    let loss = |v: &Flat| cell_loss(&k, &k.p, &v.0[..4], &v.0[4..7], &v.0[7..]);
    check_gradients(&Flat(packed), &Flat(grads), loss, GRAD_H)
}

struct BiCase {
    net: BiLstm<f64>,
    seq: Tensor2<f64>,
    mask: Vec<bool>,
    probe: Tensor2<f64>,
}

fn bilstm_case() -> BiCase {
    let mut r = rng(31);
    let net = BiLstm::<f64>::init(3, 3, 2, &mut r);
    BiCase {
        seq: random_tensor(&mut r, 5, 3),
        mask: vec![true, true, true, true, false],
        probe: random_tensor(&mut r, 5, 6),
        net,
    }
}

fn bilstm_params_case() -> GradCheckReport {
    let k = bilstm_case();
    let cache = bilstm_forward_cached(&k.seq, &k.net, &k.mask).unwrap();
    let mut g = BiLstm::zeros(3, 3, 2);
    bilstm_backward(&k.net, &cache, &k.probe, &mut g);
    let loss = |n: &BiLstm<f64>| inner(&bilstm_forward_cached(&k.seq, n, &k.mask).unwrap().output.data, &k.probe.data);
    check_gradients(&k.net, &g, loss, GRAD_H)
}

fn bilstm_inputs_case() -> GradCheckReport {
    let k = bilstm_case();
    let cache = bilstm_forward_cached(&k.seq, &k.net, &k.mask).unwrap();
    let mut g = BiLstm::zeros(3, 3, 2);
    let dseq = bilstm_backward(&k.net, &cache, &k.probe, &mut g);
    let loss = |v: &Flat| {
        let s = Tensor2::from_vec(5, 3, v.0.clone()).unwrap();
        inner(&bilstm_forward_cached(&s, &k.net, &k.mask).unwrap().output.data, &k.probe.data)
    };
    check_gradients(&Flat(k.seq.data.clone()), &Flat(dseq.data), loss, GRAD_H)
}

fn highway_case(inputs: bool) -> GradCheckReport {
    let mut r = rng(41);
    let stack = HighwayStack::<f64>::init(4, 3, &mut r);
    let x = random_vec(&mut r, 4);
    let probe = random_vec(&mut r, 4);
    let out = |s: &HighwayStack<f64>, x: &[f64]| inner(&s.forward_cached(x).last().unwrap().y, &probe);
    let caches = stack.forward_cached(&x);
    let mut g = HighwayStack::zeros(4, 3);
    let dx = stack.backward(&caches, &probe, &mut g);
    if inputs {
        check_gradients(&Flat(x.clone()), &Flat(dx), |v| out(&stack, &v.0), GRAD_H)
    } else {
        check_gradients(&stack, &g, |s| out(s, &x), GRAD_H)
    }
}

/// Tiny architecture: D = 5 inputs per branch, H = 3, W = 4.
pub fn tiny_arch(kind: ModelKind, task: Task) -> ArchConfig {
    let mut a = ArchConfig::new(kind, task);
    a.audio = BranchConfig {
        timestep: 4,
        stride: 1,
        layers: 2,
        hidden: 3,
    };
    a.text = BranchConfig {
        timestep: 4,
        stride: 1,
        layers: 1,
        hidden: 3,
    };
    a.highway_n = 3;
    a
}

fn window(rng: &mut ChaCha8Rng, valid: usize) -> FeatureWindow<f64> {
    let mut steps = random_tensor(rng, 4, 5);
    for t in valid..4 {
        steps.row_mut(t).iter_mut().for_each(|v| *v = 0.0);
    }
    FeatureWindow {
        steps,
        valid: (0..4).map(|t| t < valid).collect(),
    }
}

fn network_case(kind: NetKind, task: Task) -> GradCheckReport {
    let mk = match kind {
        NetKind::Audio => ModelKind::Audio,
        NetKind::Text => ModelKind::Text,
        NetKind::Fused => ModelKind::Fused,
    };
    let arch = tiny_arch(mk, task);
    let mut r = rng(51);
    let net = Network::<f64>::init(kind, &arch, 5, 5, &mut r);
    let aw = window(&mut r, 4);
    let tw = window(&mut r, 3);
    let inst = Instance {
        audio: matches!(kind, NetKind::Audio | NetKind::Fused).then_some(&aw),
        text: matches!(kind, NetKind::Text | NetKind::Fused).then_some(&tw),
    };
    let target = if task.is_classification() { 1.0 } else { 2.5 };
    let loss = |n: &Network<f64>| {
        let z = n.forward(inst).unwrap().output;
        if task.is_classification() {
            bce_with_logits(&[z], &[target]).unwrap()
        } else {
            mse_loss(&[z], &[target]).unwrap()
        }
    };
    let cache = net.forward(inst).unwrap();
    let (_, d) = loss(&net);
    let mut g = Network::<f64>::zeros(kind, &arch, 5, 5);
    net.backward(&cache, d[0], &mut g);
    check_gradients(&net, &g, |n| loss(n).0, GRAD_H)
}

pub type GradCase = (&'static str, fn() -> GradCheckReport);

pub fn gradient_cases() -> Vec<GradCase> {
    vec![
        ("dense sigmoid", || dense_case(Activation::Sigmoid)),
        ("dense tanh", || dense_case(Activation::Tanh)),
        ("dense input", dense_input_case),
        ("bce loss", || losses_case(true)),
        ("mse loss", || losses_case(false)),
        ("lstm cell params", lstm_cell_params_case),
        ("lstm cell inputs", lstm_cell_inputs_case),
        ("2-layer bilstm params", bilstm_params_case),
        ("2-layer bilstm inputs", bilstm_inputs_case),
        ("3-highway params", || highway_case(false)),
        ("3-highway inputs", || highway_case(true)),
        ("fused classification", || network_case(NetKind::Fused, Task::Ad)),
        ("fused regression", || network_case(NetKind::Fused, Task::Mmse)),
        ("audio padded", || network_case(NetKind::Audio, Task::Ad)),
        ("text padded", || network_case(NetKind::Text, Task::Ad)),
    ]
}

// ---------------------------------------------------------------------------
// Training fixtures.

/// Small branches that train in seconds on the synthetic corpus.
pub fn desk_arch(kind: ModelKind, task: Task, flags: LexicalFlags) -> ArchConfig {
    let mut a = ArchConfig::new(kind, task);
    a.audio = BranchConfig {
        timestep: 20,
        stride: 1,
        layers: 1,
        hidden: 16,
    };
    a.text = BranchConfig {
        timestep: 10,
        stride: 2,
        layers: 1,
        hidden: 16,
    };
    a.highway_n = 3;
    a.flags = flags;
    a
}

pub fn desk_train() -> TrainConfig {
    let mut t = TrainConfig::default();
    t.adam.lr = 3e-3;
    t.max_epochs = 30;
    t.patience = 5;
    t
}

pub fn synthetic_dataset(seed: u64, n: usize, separation: f64, flags: LexicalFlags) -> Dataset {
    let c = make_synthetic(seed, n, separation).unwrap();
    let table = c.embedding_table().unwrap();
    c.dataset(&table, flags, FeaturizeConfig::default()).unwrap()
}
