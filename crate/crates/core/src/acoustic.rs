//! Statistical functionals over frame-level acoustic features, train-fitted
//! normalization and correlation-based feature selection, plus the
//! windowing shared by both input branches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FrameMatrix;
use crate::nn::{Real, Tensor2};
use crate::stats;

/// Statistic order within each feature's block of 7.
pub const STAT_NAMES: [&str; 7] = ["mean", "max", "min", "median", "std", "skew", "kurtosis"];
pub const N_STATS: usize = 7;

/// Below this second central moment, skew and kurtosis are reported as 0.
pub const MOMENT_EPS: f64 = 1e-12;
/// Floor applied to scaler standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

pub const DEFAULT_STAT_WINDOW: usize = 100;
pub const DEFAULT_STAT_HOP: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSequence {
    pub session_id: String,
    /// N×(7F): one functional vector per sub-window.
    pub steps: Tensor2<f64>,
    pub stat_names: Vec<String>,
}

/// The seven functionals of one column slice.
pub fn functionals(values: &[f64]) -> [f64; N_STATS] {
    let n = values.len() as f64;
    let rough = values.iter().sum::<f64>() / n;
    // Second pass removes the rounding of the first, so constant input gets
    // its exact value back and zero spread.
    let mean = rough + values.iter().map(|v| v - rough).sum::<f64>() / n;
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        min = min.min(v);
        max = max.max(v);
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let (skew, kurt) = if m2 < MOMENT_EPS {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    [mean, max, min, median, m2.sqrt(), skew, kurt]
}

/// Number of sub-windows for `t` frames.
pub fn functional_step_count(t: usize, window: usize, hop: usize) -> usize {
    if t <= window {
        1
    } else {
        (t - window) / hop + 1
    }
}

/// Sliding-window functionals: N = max(1, ⌊(T − window)/hop⌋ + 1) steps; a
/// session shorter than one window yields a single step over all frames.
pub fn compute_functionals(frames: &FrameMatrix, stat_window: usize, stat_hop: usize) -> Result<FunctionalSequence> {
    if stat_window < 2 || stat_hop < 1 {
        return Err(Error::validation(format!(
            "stat_window must be >= 2 and stat_hop >= 1 (got {stat_window}, {stat_hop})"
        )));
    }
    let (t, f) = (frames.n_frames(), frames.n_features());
    if t == 0 || f == 0 {
        return Err(Error::validation(format!("session {}: empty frame matrix", frames.session_id)));
    }
    let n = functional_step_count(t, stat_window, stat_hop);
    let span = stat_window.min(t);
    let mut steps = Tensor2::zeros(n, f * N_STATS);
    let mut column = vec![0.0; span];
    for s in 0..n {
        let start = s * stat_hop;
        for j in 0..f {
            for (k, v) in column.iter_mut().enumerate() {
                *v = frames.get(start + k, j);
            }
            let stats = functionals(&column);
            steps.row_mut(s)[j * N_STATS..(j + 1) * N_STATS].copy_from_slice(&stats);
        }
    }
    let stat_names = frames
        .feature_names
        .iter()
        .flat_map(|name| STAT_NAMES.iter().map(move |s| format!("{name}.{s}")))
        .collect();
    Ok(FunctionalSequence {
        session_id: frames.session_id.clone(),
        steps,
        stat_names,
    })
}

/// CSV dump: stat names header, one row per step.
pub fn functionals_csv(seq: &FunctionalSequence) -> String {
    let mut out = seq.stat_names.join(",");
    out.push('\n');
    for r in 0..seq.steps.rows {
        let row: Vec<String> = seq.steps.row(r).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Per-dimension z-normalization fitted on training steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    /// Population standard deviations, before flooring.
    pub stds: Vec<f64>,
}

/// Fits mean and population std per column (Welford accumulation).
pub fn fit_scaler(train: &Tensor2<f64>) -> Result<Scaler> {
    if train.rows < 2 {
        return Err(Error::validation(format!("scaler needs >= 2 rows, got {}", train.rows)));
    }
    let d = train.cols;
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    for r in 0..train.rows {
        let n = (r + 1) as f64;
        for (j, &x) in train.row(r).iter().enumerate() {
            let delta = x - mean[j];
            mean[j] += delta / n;
            m2[j] += delta * (x - mean[j]);
        }
    }
    let n = train.rows as f64;
    Ok(Scaler {
        stds: m2.iter().map(|v| (v / n).max(0.0).sqrt()).collect(),
        means: mean,
    })
}

pub fn apply_scaler(steps: &Tensor2<f64>, scaler: &Scaler) -> Result<Tensor2<f64>> {
    if steps.cols != scaler.means.len() || scaler.stds.len() != scaler.means.len() {
        return Err(Error::shape(format!(
            "scaler fitted on {} dims, input has {}",
            scaler.means.len(),
            steps.cols
        )));
    }
    let mut out = steps.clone();
    for r in 0..out.rows {
        for (j, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = (*v - scaler.means[j]) / scaler.stds[j].max(STD_FLOOR);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionMask {
    pub keep: Vec<bool>,
    pub r_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub alpha: f64,
}

impl SelectionMask {
    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }

    pub fn apply(&self, steps: &Tensor2<f64>) -> Result<Tensor2<f64>> {
        if steps.cols != self.keep.len() {
            return Err(Error::shape(format!(
                "selection mask covers {} dims, input has {}",
                self.keep.len(),
                steps.cols
            )));
        }
        let cols = self.kept();
        let mut data = Vec::with_capacity(steps.rows * cols);
        for r in 0..steps.rows {
            data.extend(steps.row(r).iter().zip(&self.keep).filter(|(_, k)| **k).map(|(v, _)| *v));
        }
        Tensor2::from_vec(steps.rows, cols, data)
    }
}

/// Keeps dimensions whose Pearson correlation with the targets is
/// significant at `alpha` (two-sided t-test with n − 2 dof).
pub fn select_features(train: &Tensor2<f64>, targets: &[f64], alpha: f64) -> Result<SelectionMask> {
    let n = train.rows;
    if n < 3 {
        return Err(Error::validation(format!("feature selection needs >= 3 rows, got {n}")));
    }
    if targets.len() != n {
        return Err(Error::shape(format!("{} targets for {n} rows", targets.len())));
    }
    if targets.iter().all(|t| *t == targets[0]) {
        return Err(Error::validation("feature selection: targets are constant"));
    }
    let mut column = vec![0.0; n];
    let (mut keep, mut r_values, mut p_values) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..train.cols {
        for (r, v) in column.iter_mut().enumerate() {
            *v = train.get(r, j);
        }
        let r = stats::pearson(&column, targets);
        let p = stats::pearson_p_value(r, n);
        keep.push(p < alpha);
        r_values.push(r);
        p_values.push(p);
    }
    let mask = SelectionMask {
        keep,
        r_values,
        p_values,
        alpha,
    };
    if mask.kept() == 0 {
        return Err(Error::validation(format!(
            "feature selection dropped all {} dimensions at alpha {alpha}",
            train.cols
        )));
    }
    Ok(mask)
}

/// Fixed-length slice of a step sequence, zero-padded at the end when the
/// source is shorter than the window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow<T> {
    pub steps: Tensor2<T>,
    pub valid: Vec<bool>,
}

impl<T: Real> FeatureWindow<T> {
    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

pub fn window_count(n: usize, timestep: usize, stride: usize) -> usize {
    if n >= timestep {
        (n - timestep) / stride + 1
    } else {
        1
    }
}

/// ⌊(N − W)/S⌋ + 1 contiguous windows when N ≥ W, otherwise one padded window.
pub fn make_windows<T: Real>(steps: &Tensor2<T>, timestep: usize, stride: usize) -> Result<Vec<FeatureWindow<T>>> {
    if timestep < 1 || stride < 1 {
        return Err(Error::validation(format!(
            "timestep and stride must be >= 1 (got {timestep}, {stride})"
        )));
    }
    let n = steps.rows;
    if n >= timestep {
        Ok((0..window_count(n, timestep, stride))
            .map(|k| FeatureWindow {
                steps: steps.slice_rows(k * stride, timestep),
                valid: vec![true; timestep],
            })
            .collect())
    } else {
        let mut padded = Tensor2::zeros(timestep, steps.cols);
        padded.data[..steps.data.len()].copy_from_slice(&steps.data);
        let mut valid = vec![false; timestep];
        valid[..n].iter_mut().for_each(|v| *v = true);
        Ok(vec![FeatureWindow { steps: padded, valid }])
    }
}
