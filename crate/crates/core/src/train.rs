//! Training loop, fold protocols, cross-validation and grid search.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, FoldReport};
use crate::model::{
    init_params, predict_session, ArchConfig, Instance, ModelMeta, ModelParams, NetKind, Nets, Network,
    SessionPrediction, SessionWindows, Task,
};
use crate::nn::{bce_with_logits, mse_loss, AdamConfig, AdamState, ParamSet};
use crate::pipeline::{session_windows, AudioPrep, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    /// Held-out share of the training sessions used for early stopping.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 32,
            max_epochs: 300,
            patience: 10,
            val_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.lr >= 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::validation(format!("learning rate {} must be finite and >= 0", self.adam.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::validation("batch_size and max_epochs must be positive"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::validation(format!("val_fraction {} outside [0,1)", self.val_fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in log {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    /// One log per trained network ("net", or "audio_net" and "text_net").
    pub logs: Vec<(String, Vec<EpochLog>)>,
    pub prep: Option<AudioPrep>,
}

struct Split<'a> {
    windows: &'a [SessionWindows<f32>],
    targets: &'a [f64],
}

fn instances<'a>(split: &Split<'a>, kind: NetKind) -> Result<Vec<(Instance<'a, f32>, f32)>> {
    let mut out = Vec::new();
    for (w, y) in split.windows.iter().zip(split.targets) {
        out.extend(w.instances(kind)?.into_iter().map(|i| (i, *y as f32)));
    }
    Ok(out)
}

fn batch_loss(zs: &[f32], ys: &[f32], task: Task) -> Result<(f32, Vec<f32>)> {
    if task.is_classification() {
        bce_with_logits(zs, ys)
    } else {
        mse_loss(zs, ys)
    }
}

fn mean_loss(net: &Network<f32>, data: &[(Instance<'_, f32>, f32)], task: Task) -> Result<f64> {
    let mut total = 0.0;
    for chunk in data.chunks(256) {
        let zs = chunk
            .iter()
            .map(|(i, _)| net.forward(*i).map(|c| c.output))
            .collect::<Result<Vec<_>>>()?;
        let ys: Vec<f32> = chunk.iter().map(|(_, y)| *y).collect();
        total += batch_loss(&zs, &ys, task)?.0 as f64 * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

fn fit_network(
    net: &mut Network<f32>,
    train: &Split<'_>,
    val: &Split<'_>,
    task: Task,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<EpochLog>> {
    let kind = net.kind();
    let train = instances(train, kind)?;
    let val = instances(val, kind)?;
    if train.is_empty() {
        return Err(Error::validation("no training instances"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = AdamState::new(net, cfg.adam);
    let mut grad = net.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::INFINITY, net.clone());
    let mut wait = 0;
    let mut log = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let caches = chunk
                .iter()
                .map(|&k| net.forward(train[k].0))
                .collect::<Result<Vec<_>>>()?;
            let zs: Vec<f32> = caches.iter().map(|c| c.output).collect();
            let ys: Vec<f32> = chunk.iter().map(|&k| train[k].1).collect();
            let (loss, dz) = batch_loss(&zs, &ys, task)?;
            let diverged = || Error::Diverged {
                epoch,
                batch: b,
                loss: loss as f64,
            };
            if !loss.is_finite() {
                return Err(diverged());
            }
            grad.zero_();
            for (c, d) in caches.iter().zip(&dz) {
                net.backward(c, *d, &mut grad);
            }
            adam.step(net, &grad).map_err(|_| diverged())?;
            sum += loss as f64 * chunk.len() as f64;
        }
        let train_loss = sum / train.len() as f64;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            mean_loss(net, &val, task)?
        };
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, net.clone());
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                break;
            }
        }
    }
    *net = best.1;
    Ok(log)
}

/// Trains on `train` with early stopping on `val` (on the training loss when
/// `val` is empty). The scaler and selection mask are fitted on `train` only.
pub fn train_model(
    ds: &Dataset,
    train: &[usize],
    val: &[usize],
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    arch.validate()?;
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::validation("empty training split"));
    }
    let task = arch.task;
    let prep = if arch.kind.uses_audio() {
        Some(AudioPrep::fit(ds, train, task)?)
    } else {
        None
    };
    let build = |idx: &[usize]| -> Result<(Vec<SessionWindows<f32>>, Vec<f64>)> {
        let w = idx
            .iter()
            .map(|&i| session_windows(&ds.sessions[i], prep.as_ref(), arch))
            .collect::<Result<Vec<_>>>()?;
        let y = idx.iter().map(|&i| ds.target(i, task)).collect::<Result<Vec<_>>>()?;
        Ok((w, y))
    };
    let (tw, ty) = build(train)?;
    let (vw, vy) = build(val)?;
    let target_mean = (!task.is_classification()).then(|| ty.iter().sum::<f64>() / ty.len() as f64);

    let meta = ModelMeta {
        arch: arch.clone(),
        stat_window: ds.featurize.stat_window,
        stat_hop: ds.featurize.stat_hop,
        alpha: ds.featurize.alpha,
        frame_features: if arch.kind.uses_audio() {
            ds.frame_features.clone()
        } else {
            Vec::new()
        },
        scaler: prep.as_ref().map(|p| p.scaler.clone()),
        mask: prep.as_ref().map(|p| p.mask.clone()),
        embedding_digest: if arch.kind.uses_text() {
            ds.embedding_digest.clone()
        } else {
            None
        },
        embedding_dim: if arch.kind.uses_text() { ds.embedding_dim } else { 0 },
        audio_input: prep.as_ref().map_or(0, |p| p.mask.kept()),
        text_input: if arch.kind.uses_text() { ds.text_width() } else { 0 },
        target_mean,
    };
    let mut params = init_params(meta);
    let tr = Split {
        windows: &tw,
        targets: &ty,
    };
    let va = Split {
        windows: &vw,
        targets: &vy,
    };
    let mut logs = Vec::new();
    let mut fit = |name: &str, net: &mut Network<f32>, salt: u64| -> Result<()> {
        if let Some(m) = target_mean {
            net.head.b[0] = m as f32;
        }
        let log = fit_network(net, &tr, &va, task, cfg, arch.seed ^ salt)?;
        logs.push((name.to_string(), log));
        Ok(())
    };
    match &mut params.nets {
        Nets::Single(net) => fit("net", net, 0x5eed_0001)?,
        Nets::Late { audio, text } => {
            fit("audio_net", audio, 0x5eed_0002)?;
            fit("text_net", text, 0x5eed_0003)?;
        }
    }
    Ok(TrainedModel { params, logs, prep })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    KFold(usize),
    /// Leave one session out.
    Loso,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::KFold(k) => write!(f, "{k}-fold"),
            Protocol::Loso => f.write_str("loso"),
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("loso") {
            return Ok(Protocol::Loso);
        }
        let k = s.strip_suffix("-fold").unwrap_or(s);
        k.parse()
            .map(Protocol::KFold)
            .map_err(|_| Error::validation(format!("protocol {s:?}: expected K, K-fold or loso")))
    }
}

impl Protocol {
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Decline => Protocol::Loso,
            _ => Protocol::KFold(5),
        }
    }
}

/// Assigns the `n` sessions to test folds. With `strata` given, each class
/// is shuffled separately and dealt round-robin so every fold gets a
/// proportional share.
pub fn split_folds(n: usize, strata: Option<&[u8]>, protocol: Protocol, seed: u64) -> Result<Vec<Vec<usize>>> {
    let k = match protocol {
        Protocol::Loso => n,
        Protocol::KFold(k) => k,
    };
    if k < 2 {
        return Err(Error::validation(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::validation(format!("{n} sessions cannot fill {k} folds")));
    }
    if protocol == Protocol::Loso {
        return Ok((0..n).map(|i| vec![i]).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = match strata {
        Some(s) => {
            if s.len() != n {
                return Err(Error::shape(format!("{} strata for {n} sessions", s.len())));
            }
            let mut classes: Vec<u8> = s.to_vec();
            classes.sort_unstable();
            classes.dedup();
            classes
                .iter()
                .map(|c| (0..n).filter(|i| s[*i] == *c).collect())
                .collect()
        }
        None => vec![(0..n).collect()],
    };
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

fn strata(ds: &Dataset, idx: &[usize], task: Task) -> Result<Option<Vec<u8>>> {
    if !task.is_classification() {
        return Ok(None);
    }
    idx.iter()
        .map(|&i| ds.target(i, task).map(|y| y as u8))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Splits `idx` into (train, validation), stratified for classification.
/// Fewer than five sessions leaves the validation side empty.
pub fn split_train_val(ds: &Dataset, idx: &[usize], task: Task, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if idx.len() < 5 || fraction <= 0.0 {
        return Ok((idx.to_vec(), Vec::new()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = strata(ds, idx, task)?;
    let groups: Vec<Vec<usize>> = match labels {
        Some(l) => [0u8, 1]
            .iter()
            .map(|c| idx.iter().zip(&l).filter(|(_, y)| **y == *c).map(|(i, _)| *i).collect())
            .collect(),
        None => vec![idx.to_vec()],
    };
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for mut g in groups {
        g.shuffle(&mut rng);
        let nv = ((g.len() as f64) * fraction).round() as usize;
        let nv = nv.min(g.len().saturating_sub(1));
        val.extend_from_slice(&g[..nv]);
        train.extend_from_slice(&g[nv..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

pub fn predict_sessions(ds: &Dataset, idx: &[usize], params: &ModelParams, prep: Option<&AudioPrep>) -> Result<Vec<SessionPrediction>> {
    idx.iter()
        .map(|&i| predict_session(&session_windows(&ds.sessions[i], prep, &params.meta.arch)?, params))
        .collect()
}

/// A grid point: architecture plus training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub arch: ArchConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub candidate: Candidate,
    /// Accuracy (classification) or RMSE (regression) on the held-out split.
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: usize,
    pub table: Vec<GridRow>,
    /// Sessions the candidates were trained on.
    pub fitted_on: Vec<String>,
}

/// Exhaustive search: each candidate is trained on an 80/20 split of `idx`
/// and scored on the 20%. Best accuracy (classification) or lowest RMSE
/// (regression) wins; ties go to the earlier candidate.
pub fn grid_search(ds: &Dataset, idx: &[usize], grid: &[Candidate], seed: u64) -> Result<GridResult> {
    let first = grid.first().ok_or_else(|| Error::validation("empty grid"))?;
    let task = first.arch.task;
    let (train, held) = split_train_val(ds, idx, task, first.train.val_fraction.max(0.2), seed)?;
    if held.is_empty() {
        return Err(Error::validation("grid search needs at least 5 sessions"));
    }
    let labels: Vec<(String, f64)> = held
        .iter()
        .map(|&i| Ok((ds.sessions[i].record.session_id.clone(), ds.target(i, task)?)))
        .collect::<Result<_>>()?;
    let mut table = Vec::with_capacity(grid.len());
    for (index, c) in grid.iter().enumerate() {
        if c.arch.task != task {
            return Err(Error::validation("grid candidates must share one task"));
        }
        let m = train_model(ds, &train, &held, &c.arch, &c.train)?;
        let preds = predict_sessions(ds, &held, &m.params, m.prep.as_ref())?;
        let e = evaluate(&preds, &labels, task)?;
        let metric = if task.is_classification() {
            e.metrics.accuracy
        } else {
            e.metrics.rmse
        }
        .expect("metric for task");
        table.push(GridRow {
            index,
            candidate: c.clone(),
            metric,
        });
    }
    let mut best = 0;
    for r in &table[1..] {
        let better = if task.is_classification() {
            r.metric > table[best].metric
        } else {
            r.metric < table[best].metric
        };
        if better {
            best = r.index;
        }
    }
    Ok(GridResult {
        best,
        table,
        fitted_on: train.iter().map(|i| ds.sessions[*i].record.session_id.clone()).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test: Vec<usize>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub predictions: Vec<SessionPrediction>,
    pub prep: Option<AudioPrep>,
    pub grid: Option<GridResult>,
    pub chosen: Candidate,
    pub logs: Vec<(String, Vec<EpochLog>)>,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: EvalReport,
    pub folds: Vec<FoldOutcome>,
}

#[derive(Debug, Clone)]
pub struct CvConfig {
    pub protocol: Protocol,
    pub seed: u64,
    pub workers: usize,
    /// Searched per fold on that fold's training sessions when non-empty.
    pub grid: Vec<Candidate>,
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(fold as u64 + 1)
}

fn run_fold(ds: &Dataset, fold: usize, test: &[usize], all: &[usize], base: &Candidate, cv: &CvConfig) -> Result<FoldOutcome> {
    let task = base.arch.task;
    let rest: Vec<usize> = all.iter().copied().filter(|i| !test.contains(i)).collect();
    let seed = fold_seed(cv.seed, fold);
    let grid = if cv.grid.is_empty() {
        None
    } else {
        Some(grid_search(ds, &rest, &cv.grid, seed)?)
    };
    let mut chosen = grid.as_ref().map_or_else(|| base.clone(), |g| cv.grid[g.best].clone());
    chosen.arch.seed = seed;
    let (train, val) = split_train_val(ds, &rest, task, chosen.train.val_fraction, seed)?;
    let m = train_model(ds, &train, &val, &chosen.arch, &chosen.train)?;
    let predictions = predict_sessions(ds, test, &m.params, m.prep.as_ref())?;
    Ok(FoldOutcome {
        fold,
        test: test.to_vec(),
        train,
        val,
        predictions,
        prep: m.prep,
        grid,
        chosen,
        logs: m.logs,
    })
}

/// Cross-validation over every session labelled for the task. Folds run on
/// up to `workers` threads; results do not depend on the thread count.
pub fn cross_validate(ds: &Dataset, base: &Candidate, cv: &CvConfig) -> Result<CvOutcome> {
    let task = base.arch.task;
    let all = ds.labelled(task);
    let strata = strata(ds, &all, task)?;
    let folds: Vec<Vec<usize>> = split_folds(all.len(), strata.as_deref(), cv.protocol, cv.seed)?
        .into_iter()
        .map(|f| f.into_iter().map(|k| all[k]).collect())
        .collect();

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<FoldOutcome>>>> = Mutex::new((0..folds.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..cv.workers.clamp(1, folds.len()) {
            s.spawn(|| loop {
                let f = next.fetch_add(1, Ordering::SeqCst);
                if f >= folds.len() {
                    break;
                }
                let r = run_fold(ds, f, &folds[f], &all, base, cv);
                results.lock().unwrap()[f] = Some(r);
            });
        }
    });
    let outcomes = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every fold ran"))
        .collect::<Result<Vec<_>>>()?;

    let mut fold_reports = Vec::with_capacity(outcomes.len());
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for o in &outcomes {
        let l: Vec<(String, f64)> = o
            .test
            .iter()
            .map(|&i| Ok((ds.sessions[i].record.session_id.clone(), ds.target(i, task)?)))
            .collect::<Result<_>>()?;
        let e = evaluate(&o.predictions, &l, task)?;
        fold_reports.push(FoldReport {
            fold: o.fold,
            n_test: o.test.len(),
            metrics: e.metrics,
            f1_degenerate_classes: e.f1_degenerate_classes,
        });
        preds.extend(o.predictions.iter().cloned());
        labels.extend(l);
    }
    let pooled = evaluate(&preds, &labels, task)?;
    Ok(CvOutcome {
        report: EvalReport {
            task,
            protocol: cv.protocol.to_string(),
            seed: cv.seed,
            metrics: pooled.metrics,
            folds: fold_reports,
            confusion: pooled.confusion,
            f1_degenerate_classes: pooled.f1_degenerate_classes,
            predictions: preds,
        },
        folds: outcomes,
    })
}
