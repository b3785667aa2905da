//! LSTM cell and stacked bidirectional LSTM with masked steps.
//!
//! Gate order in every 4H block is (input, forget, cell, output). Padded
//! steps are skipped in both directions: they emit a zero output and leave
//! the recurrent state untouched, so the state entering the next real step
//! is the one produced by the previous real step.

use rand::Rng;

use super::tensor::{affine_t_acc, dot, outer_acc, sigmoid, ParamSet, Real, Tensor2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams<T> {
    /// (4H)×I
    pub w_ih: Tensor2<T>,
    /// (4H)×H
    pub w_hh: Tensor2<T>,
    /// 4H
    pub b: Vec<T>,
}

impl<T: Real> LstmLayerParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayerParams {
            w_ih: Tensor2::zeros(4 * hidden, input),
            w_hh: Tensor2::zeros(4 * hidden, hidden),
            b: vec![T::zero(); 4 * hidden],
        }
    }

    /// Uniform(−k, k) with k = 1/√(I + H); forget-gate bias set to 1.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / ((input + hidden) as f64).sqrt();
        let mut p = Self::zeros(input, hidden);
        for v in p
            .w_ih
            .data
            .iter_mut()
            .chain(p.w_hh.data.iter_mut())
            .chain(p.b.iter_mut())
        {
            *v = T::of(rng.random_range(-k..k));
        }
        for v in &mut p.b[hidden..2 * hidden] {
            *v = T::one();
        }
        p
    }

    pub fn input(&self) -> usize {
        self.w_ih.cols
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols
    }

    fn check(&self, x: usize, h: usize, c: usize) -> Result<()> {
        let hd = self.hidden();
        if self.w_ih.rows != 4 * hd || self.w_hh.rows != 4 * hd || self.b.len() != 4 * hd {
            return Err(Error::shape("lstm: inconsistent parameter shapes"));
        }
        if x != self.input() || h != hd || c != hd {
            return Err(Error::shape(format!(
                "lstm: x={x} h={h} c={c} against I={} H={hd}",
                self.input()
            )));
        }
        Ok(())
    }
}

impl<T: Real> ParamSet<T> for LstmLayerParams<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [T])) {
        f("w_ih", &[self.w_ih.rows, self.w_ih.cols], &self.w_ih.data);
        f("w_hh", &[self.w_hh.rows, self.w_hh.cols], &self.w_hh.data);
        f("b", &[self.b.len()], &self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        let d = [self.w_ih.rows, self.w_ih.cols];
        f("w_ih", &d, &mut self.w_ih.data);
        let d = [self.w_hh.rows, self.w_hh.cols];
        f("w_hh", &d, &mut self.w_hh.data);
        let n = self.b.len();
        f("b", &[n], &mut self.b);
    }
}

/// Everything one step needs for backprop.
#[derive(Debug, Clone)]
pub struct StepCache<T> {
    pub t: usize,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    /// Activated gates, 4H in (i, f, g, o) order.
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
}

fn cell_forward<T: Real>(x: &[T], h: &[T], c: &[T], p: &LstmLayerParams<T>, t: usize) -> StepCache<T> {
    let hd = p.hidden();
    let mut gates = vec![T::zero(); 4 * hd];
    for (r, g) in gates.iter_mut().enumerate() {
        *g = dot(p.w_ih.row(r), x) + dot(p.w_hh.row(r), h) + p.b[r];
    }
    for k in 0..hd {
        gates[k] = sigmoid(gates[k]);
        gates[hd + k] = sigmoid(gates[hd + k]);
        gates[2 * hd + k] = gates[2 * hd + k].tanh();
        gates[3 * hd + k] = sigmoid(gates[3 * hd + k]);
    }
    let mut c_new = vec![T::zero(); hd];
    let mut tanh_c = vec![T::zero(); hd];
    for k in 0..hd {
        c_new[k] = gates[hd + k] * c[k] + gates[k] * gates[2 * hd + k];
        tanh_c[k] = c_new[k].tanh();
    }
    StepCache {
        t,
        h_prev: h.to_vec(),
        c_prev: c.to_vec(),
        gates,
        c: c_new,
        tanh_c,
    }
}

impl<T: Real> StepCache<T> {
    pub fn h(&self) -> Vec<T> {
        let hd = self.c.len();
        (0..hd).map(|k| self.gates[3 * hd + k] * self.tanh_c[k]).collect()
    }
}

/// One LSTM step keeping the cache [`cell_backward`] needs.
pub fn lstm_cell_forward<T: Real>(x: &[T], h: &[T], c: &[T], p: &LstmLayerParams<T>) -> Result<StepCache<T>> {
    p.check(x.len(), h.len(), c.len())?;
    Ok(cell_forward(x, h, c, p, 0))
}

/// One LSTM step: returns `(h', c')`.
pub fn lstm_cell_step<T: Real>(x: &[T], h: &[T], c: &[T], p: &LstmLayerParams<T>) -> Result<(Vec<T>, Vec<T>)> {
    let cache = lstm_cell_forward(x, h, c, p)?;
    Ok((cache.h(), cache.c))
}

/// Backprop through one step. `dh`, `dc` are gradients w.r.t. this step's
/// h' and c'. Accumulates into `grad` and `dx`; returns `(dh_prev, dc_prev)`.
pub fn cell_backward<T: Real>(
    x: &[T],
    cache: &StepCache<T>,
    dh: &[T],
    dc: &[T],
    p: &LstmLayerParams<T>,
    grad: &mut LstmLayerParams<T>,
    dx: &mut [T],
) -> (Vec<T>, Vec<T>) {
    let hd = p.hidden();
    let g = &cache.gates;
    let one = T::one();
    let mut da = vec![T::zero(); 4 * hd];
    let mut dc_prev = vec![T::zero(); hd];
    for k in 0..hd {
        let (i, f, gg, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
        let tc = cache.tanh_c[k];
        let d_o = dh[k] * tc;
        let dct = dc[k] + dh[k] * o * (one - tc * tc);
        let di = dct * gg;
        let dg = dct * i;
        let df = dct * cache.c_prev[k];
        dc_prev[k] = dct * f;
        da[k] = di * i * (one - i);
        da[hd + k] = df * f * (one - f);
        da[2 * hd + k] = dg * (one - gg * gg);
        da[3 * hd + k] = d_o * o * (one - o);
    }
    outer_acc(&mut grad.w_ih, &da, x);
    outer_acc(&mut grad.w_hh, &da, &cache.h_prev);
    for (gb, d) in grad.b.iter_mut().zip(&da) {
        *gb += *d;
    }
    affine_t_acc(&p.w_ih, &da, dx);
    let mut dh_prev = vec![T::zero(); hd];
    affine_t_acc(&p.w_hh, &da, &mut dh_prev);
    (dh_prev, dc_prev)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLayer<T> {
    pub fwd: LstmLayerParams<T>,
    pub bwd: LstmLayerParams<T>,
}

/// Stacked bidirectional LSTM. Layer k > 0 consumes the 2H concatenation
/// of layer k − 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm<T> {
    pub layers: Vec<BiLayer<T>>,
}

impl<T: Real> BiLstm<T> {
    pub fn zeros(input: usize, hidden: usize, layers: usize) -> Self {
        let layers = (0..layers)
            .map(|k| {
                let i = if k == 0 { input } else { 2 * hidden };
                BiLayer {
                    fwd: LstmLayerParams::zeros(i, hidden),
                    bwd: LstmLayerParams::zeros(i, hidden),
                }
            })
            .collect();
        BiLstm { layers }
    }

    pub fn init<R: Rng>(input: usize, hidden: usize, layers: usize, rng: &mut R) -> Self {
        let layers = (0..layers)
            .map(|k| {
                let i = if k == 0 { input } else { 2 * hidden };
                BiLayer {
                    fwd: LstmLayerParams::init(i, hidden, rng),
                    bwd: LstmLayerParams::init(i, hidden, rng),
                }
            })
            .collect();
        BiLstm { layers }
    }

    pub fn input(&self) -> usize {
        self.layers.first().map_or(0, |l| l.fwd.input())
    }

    /// Width of each output step: 2 × H of the last layer.
    pub fn output(&self) -> usize {
        self.layers.last().map_or(0, |l| 2 * l.fwd.hidden())
    }

    fn check(&self, input: usize) -> Result<()> {
        let mut expect = input;
        for (k, l) in self.layers.iter().enumerate() {
            if l.fwd.input() != expect || l.bwd.input() != expect || l.fwd.hidden() != l.bwd.hidden() {
                return Err(Error::shape(format!(
                    "bilstm layer {k}: expects input {expect}, has fwd {}x{} bwd {}x{}",
                    l.fwd.input(),
                    l.fwd.hidden(),
                    l.bwd.input(),
                    l.bwd.hidden()
                )));
            }
            expect = 2 * l.fwd.hidden();
        }
        Ok(())
    }
}

impl<T: Real> ParamSet<T> for BiLstm<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [T])) {
        for (k, l) in self.layers.iter().enumerate() {
            l.fwd.visit(&mut |n, d, t| f(&format!("l{k}.fwd.{n}"), d, t));
            l.bwd.visit(&mut |n, d, t| f(&format!("l{k}.bwd.{n}"), d, t));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [T])) {
        for (k, l) in self.layers.iter_mut().enumerate() {
            l.fwd.visit_mut(&mut |n, d, t| f(&format!("l{k}.fwd.{n}"), d, t));
            l.bwd.visit_mut(&mut |n, d, t| f(&format!("l{k}.bwd.{n}"), d, t));
        }
    }
}

/// Intermediates of a full BiLSTM pass.
#[derive(Debug, Clone)]
pub struct BiLstmCache<T> {
    /// Input of each layer (layer 0 = the sequence itself).
    inputs: Vec<Tensor2<T>>,
    fwd: Vec<Vec<StepCache<T>>>,
    bwd: Vec<Vec<StepCache<T>>>,
    pub output: Tensor2<T>,
}

fn run_direction<T: Real>(
    seq: &Tensor2<T>,
    p: &LstmLayerParams<T>,
    order: impl Iterator<Item = usize>,
    out: &mut Tensor2<T>,
    offset: usize,
) -> Vec<StepCache<T>> {
    let hd = p.hidden();
    let mut h = vec![T::zero(); hd];
    let mut c = vec![T::zero(); hd];
    let mut caches = Vec::new();
    for t in order {
        let cache = cell_forward(seq.row(t), &h, &c, p, t);
        h = cache.h();
        c.clone_from(&cache.c);
        out.row_mut(t)[offset..offset + hd].copy_from_slice(&h);
        caches.push(cache);
    }
    caches
}

/// Forward pass keeping the intermediates needed by [`bilstm_backward`].
pub fn bilstm_forward_cached<T: Real>(seq: &Tensor2<T>, net: &BiLstm<T>, mask: &[bool]) -> Result<BiLstmCache<T>> {
    net.check(seq.cols)?;
    if mask.len() != seq.rows {
        return Err(Error::shape(format!("mask has {} entries for {} steps", mask.len(), seq.rows)));
    }
    let valid: Vec<usize> = (0..seq.rows).filter(|&t| mask[t]).collect();
    let mut inputs = Vec::with_capacity(net.layers.len());
    let mut fwd = Vec::with_capacity(net.layers.len());
    let mut bwd = Vec::with_capacity(net.layers.len());
    let mut current = seq.clone();
    for layer in &net.layers {
        let hd = layer.fwd.hidden();
        let mut out = Tensor2::zeros(seq.rows, 2 * hd);
        fwd.push(run_direction(&current, &layer.fwd, valid.iter().copied(), &mut out, 0));
        bwd.push(run_direction(&current, &layer.bwd, valid.iter().rev().copied(), &mut out, hd));
        inputs.push(std::mem::replace(&mut current, out));
    }
    Ok(BiLstmCache {
        inputs,
        fwd,
        bwd,
        output: current,
    })
}

/// W×I sequence to W×2H; padded steps (mask false) produce zero rows.
pub fn bilstm_forward<T: Real>(seq: &Tensor2<T>, net: &BiLstm<T>, mask: &[bool]) -> Result<Tensor2<T>> {
    Ok(bilstm_forward_cached(seq, net, mask)?.output)
}

fn backprop_direction<T: Real>(
    input: &Tensor2<T>,
    caches: &[StepCache<T>],
    d_out: &Tensor2<T>,
    offset: usize,
    p: &LstmLayerParams<T>,
    grad: &mut LstmLayerParams<T>,
    d_in: &mut Tensor2<T>,
) {
    let hd = p.hidden();
    let mut dh_next = vec![T::zero(); hd];
    let mut dc_next = vec![T::zero(); hd];
    for cache in caches.iter().rev() {
        let t = cache.t;
        let dh: Vec<T> = d_out.row(t)[offset..offset + hd]
            .iter()
            .zip(&dh_next)
            .map(|(a, b)| *a + *b)
            .collect();
        let (dhp, dcp) = cell_backward(input.row(t), cache, &dh, &dc_next, p, grad, d_in.row_mut(t));
        dh_next = dhp;
        dc_next = dcp;
    }
}

/// Backprop through time. Returns the gradient w.r.t. the input sequence.
pub fn bilstm_backward<T: Real>(
    net: &BiLstm<T>,
    cache: &BiLstmCache<T>,
    d_output: &Tensor2<T>,
    grad: &mut BiLstm<T>,
) -> Tensor2<T> {
    let mut d_out = d_output.clone();
    for k in (0..net.layers.len()).rev() {
        let layer = &net.layers[k];
        let input = &cache.inputs[k];
        let mut d_in = Tensor2::zeros(input.rows, input.cols);
        let hd = layer.fwd.hidden();
        let g = &mut grad.layers[k];
        backprop_direction(input, &cache.fwd[k], &d_out, 0, &layer.fwd, &mut g.fwd, &mut d_in);
        backprop_direction(input, &cache.bwd[k], &d_out, hd, &layer.bwd, &mut g.bwd, &mut d_in);
        d_out = d_in;
    }
    d_out
}
