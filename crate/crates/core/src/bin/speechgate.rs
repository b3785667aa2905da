use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use speechgate::acoustic::{compute_functionals, functionals_csv};
use speechgate::eval::{evaluate, EvalReport};
use speechgate::ingest::{load_manifest, parse_asr, parse_frames};
use speechgate::lexical::{assemble_lexical, compute_pauses, lexical_csv, load_embeddings, EmbeddingTable, LexicalFlags};
use speechgate::model::{load_checkpoint, save_checkpoint, ArchConfig, ModelKind, ModelParams, SessionPrediction, Task};
use speechgate::pipeline::{AudioPrep, Dataset, FeaturizeConfig};
use speechgate::synth::{make_synthetic_with, SynthConfig};
use speechgate::train::{
    cross_validate, grid_search, log_csv, predict_sessions, split_train_val, train_model, Candidate, CvConfig, Protocol,
    TrainConfig,
};
use speechgate::{Error, Result};

/// Multimodal gated-fusion models for dementia screening from speech.
#[derive(Parser)]
#[command(name = "speechgate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (frames, ASR JSON, manifest, embeddings).
    Synth(SynthArgs),
    /// Dump acoustic functionals and lexical feature rows per session.
    Extract(ExtractArgs),
    /// Train one model and write checkpoint, log and resolved config.
    Train(RunArgs),
    /// Cross-validate and write an evaluation report.
    Cv(RunArgs),
    /// Score a checkpoint on a labelled manifest.
    Eval(ScoreArgs),
    /// Write per-session predictions of a checkpoint.
    Predict(ScoreArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Generator seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of sessions (even, at least 4).
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Class signal strength in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    separation: f64,
    /// Width of the generated word vectors.
    #[arg(long, default_value_t = 100)]
    embedding_dim: usize,
}

#[derive(Args, Clone, Default)]
struct FeatureFlags {
    /// Drop the disfluency one-hot block.
    #[arg(long)]
    no_disfl: bool,
    /// Drop the pause category and duration block.
    #[arg(long)]
    no_pause: bool,
    /// Drop the LM probability column.
    #[arg(long)]
    no_lmprob: bool,
    /// Feed ln(p) instead of p for the LM probability.
    #[arg(long)]
    lm_log: bool,
}

impl FeatureFlags {
    fn lexical(&self) -> LexicalFlags {
        LexicalFlags {
            disfl: !self.no_disfl,
            pause: !self.no_pause,
            lm_prob: !self.no_lmprob,
            lm_log: self.lm_log,
        }
    }

    fn any(&self) -> bool {
        self.no_disfl || self.no_pause || self.no_lmprob || self.lm_log
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// Session manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
    /// Word vectors (text format); lexical dumps are skipped without it.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Frames per functional window.
    #[arg(long, default_value_t = speechgate::acoustic::DEFAULT_STAT_WINDOW)]
    stat_window: usize,
    /// Frames between functional windows.
    #[arg(long, default_value_t = speechgate::acoustic::DEFAULT_STAT_HOP)]
    stat_hop: usize,
    #[command(flatten)]
    features: FeatureFlags,
}

#[derive(Args)]
struct RunArgs {
    /// Resolved config of an earlier run; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prediction task.
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// Model family.
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Session manifest CSV.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Word vectors (text format).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Seed for initialization, shuffling and splits [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureFlags,
    /// Audio window length in functional steps [default: 20].
    #[arg(long)]
    audio_timestep: Option<usize>,
    /// Audio window stride [default: 1].
    #[arg(long)]
    audio_stride: Option<usize>,
    /// Audio BiLSTM layers [default: 4].
    #[arg(long)]
    audio_layers: Option<usize>,
    /// Audio hidden units per direction [default: 256].
    #[arg(long)]
    audio_hidden: Option<usize>,
    /// Text window length in words [default: 10].
    #[arg(long)]
    text_timestep: Option<usize>,
    /// Text window stride [default: 2].
    #[arg(long)]
    text_stride: Option<usize>,
    /// Text BiLSTM layers [default: 2].
    #[arg(long)]
    text_layers: Option<usize>,
    /// Text hidden units per direction [default: 16].
    #[arg(long)]
    text_hidden: Option<usize>,
    /// Highway layers in the fused model [default: 3].
    #[arg(long)]
    highway: Option<usize>,
    /// Adam learning rate [default: 0.0001].
    #[arg(long)]
    lr: Option<f64>,
    /// Mini-batch size [default: 32].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Epoch limit [default: 300].
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Early-stopping patience in epochs [default: 10].
    #[arg(long)]
    patience: Option<usize>,
    /// Share of training sessions held out for early stopping [default: 0.2].
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Frames per functional window [default: 100].
    #[arg(long)]
    stat_window: Option<usize>,
    /// Frames between functional windows [default: 100].
    #[arg(long)]
    stat_hop: Option<usize>,
    /// Significance level of the feature-selection test [default: 0.05].
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of CV folds [default: 5, or LOSO for the decline task].
    #[arg(long, conflicts_with = "loso")]
    folds: Option<usize>,
    /// Leave-one-session-out cross-validation.
    #[arg(long)]
    loso: bool,
    /// Threads for fold-parallel CV [default: 1].
    #[arg(long)]
    workers: Option<usize>,
    /// Learning rates to grid-search (comma-separated).
    #[arg(long, value_delimiter = ',')]
    grid_lr: Vec<f64>,
    /// Audio hidden sizes to grid-search (comma-separated).
    #[arg(long, value_delimiter = ',')]
    grid_audio_hidden: Vec<usize>,
    /// Text hidden sizes to grid-search (comma-separated).
    #[arg(long, value_delimiter = ',')]
    grid_text_hidden: Vec<usize>,
    /// Highway depths to grid-search (comma-separated).
    #[arg(long, value_delimiter = ',')]
    grid_highway: Vec<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Session manifest CSV.
    #[arg(long)]
    manifest: PathBuf,
    /// Word vectors; must be the file the model was trained with.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Task; must match the checkpoint when given.
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// Model family; must match the checkpoint when given.
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureFlags,
}

/// Every setting of a `train` or `cv` run with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunConfig {
    manifest: PathBuf,
    embeddings: Option<PathBuf>,
    seed: u64,
    arch: ArchConfig,
    train: TrainConfig,
    featurize: FeaturizeConfig,
    protocol: Protocol,
    workers: usize,
    grid: Vec<Candidate>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let base: Option<RunConfig> = match &args.config {
        Some(p) => Some(
            serde_json::from_str(&read(p)?)
                .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let task = args
        .task
        .or(base.as_ref().map(|b| b.arch.task))
        .ok_or_else(|| Error::validation("--task is required"))?;
    let kind = args
        .model
        .or(base.as_ref().map(|b| b.arch.kind))
        .ok_or_else(|| Error::validation("--model is required"))?;
    let manifest = args
        .manifest
        .clone()
        .or(base.as_ref().map(|b| b.manifest.clone()))
        .ok_or_else(|| Error::validation("--manifest is required"))?;
    let embeddings = args.embeddings.clone().or(base.as_ref().and_then(|b| b.embeddings.clone()));
    let seed = args.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0);

    let mut arch = base.as_ref().map_or_else(|| ArchConfig::new(kind, task), |b| b.arch.clone());
    arch.kind = kind;
    arch.task = task;
    arch.seed = seed;
    if args.features.any() || base.is_none() {
        arch.flags = args.features.lexical();
    }
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut arch.audio.timestep, args.audio_timestep);
    set(&mut arch.audio.stride, args.audio_stride);
    set(&mut arch.audio.layers, args.audio_layers);
    set(&mut arch.audio.hidden, args.audio_hidden);
    set(&mut arch.text.timestep, args.text_timestep);
    set(&mut arch.text.stride, args.text_stride);
    set(&mut arch.text.layers, args.text_layers);
    set(&mut arch.text.hidden, args.text_hidden);
    set(&mut arch.highway_n, args.highway);
    arch.validate()?;

    let mut train = base.as_ref().map_or_else(TrainConfig::default, |b| b.train);
    if let Some(v) = args.lr {
        train.adam.lr = v;
    }
    set(&mut train.batch_size, args.batch_size);
    set(&mut train.max_epochs, args.max_epochs);
    set(&mut train.patience, args.patience);
    if let Some(v) = args.val_fraction {
        train.val_fraction = v;
    }
    train.validate()?;

    let mut featurize = base.as_ref().map_or_else(FeaturizeConfig::default, |b| b.featurize);
    set(&mut featurize.stat_window, args.stat_window);
    set(&mut featurize.stat_hop, args.stat_hop);
    if let Some(v) = args.alpha {
        featurize.alpha = v;
    }

    let protocol = if args.loso {
        Protocol::Loso
    } else if let Some(k) = args.folds {
        Protocol::KFold(k)
    } else {
        base.as_ref()
            .filter(|b| b.arch.task == task)
            .map_or_else(|| Protocol::default_for(task), |b| b.protocol)
    };
    let workers = args.workers.or(base.as_ref().map(|b| b.workers)).unwrap_or(1).max(1);

    let has_grid = !(args.grid_lr.is_empty()
        && args.grid_audio_hidden.is_empty()
        && args.grid_text_hidden.is_empty()
        && args.grid_highway.is_empty());
    let grid = if has_grid {
        let lrs = if args.grid_lr.is_empty() { vec![train.adam.lr] } else { args.grid_lr.clone() };
        let ah = if args.grid_audio_hidden.is_empty() { vec![arch.audio.hidden] } else { args.grid_audio_hidden.clone() };
        let th = if args.grid_text_hidden.is_empty() { vec![arch.text.hidden] } else { args.grid_text_hidden.clone() };
        let hw = if args.grid_highway.is_empty() { vec![arch.highway_n] } else { args.grid_highway.clone() };
        let mut out = Vec::new();
        for &lr in &lrs {
            for &a in &ah {
                for &t in &th {
                    for &h in &hw {
                        let mut c = Candidate {
                            arch: arch.clone(),
                            train,
                        };
                        c.train.adam.lr = lr;
                        c.arch.audio.hidden = a;
                        c.arch.text.hidden = t;
                        c.arch.highway_n = h;
                        c.arch.validate()?;
                        c.train.validate()?;
                        out.push(c);
                    }
                }
            }
        }
        out
    } else {
        base.as_ref().map(|b| b.grid.clone()).unwrap_or_default()
    };

    if !manifest.exists() {
        return Err(Error::Validation(format!("manifest {} does not exist", manifest.display())));
    }
    if kind.uses_text() && embeddings.is_none() {
        return Err(Error::validation("--embeddings is required for text and fused models"));
    }
    if let Some(e) = &embeddings {
        if !e.exists() {
            return Err(Error::Validation(format!("embeddings {} does not exist", e.display())));
        }
    }
    Ok(RunConfig {
        manifest,
        embeddings,
        seed,
        arch,
        train,
        featurize,
        protocol,
        workers,
        grid,
    })
}

fn load_table(path: Option<&Path>) -> Result<Option<EmbeddingTable>> {
    path.map(|p| load_embeddings(&read(p)?).map_err(|e| Error::Validation(format!("{}: {e}", p.display()))))
        .transpose()
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let kind = cfg.arch.kind;
    let table = if kind.uses_text() { load_table(cfg.embeddings.as_deref())? } else { None };
    Dataset::load(
        &cfg.manifest,
        table.as_ref(),
        cfg.arch.flags,
        cfg.featurize,
        kind.uses_audio(),
        kind.uses_text(),
    )
}

fn config_json(cfg: &RunConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

fn predictions_csv(preds: &[SessionPrediction]) -> String {
    let mut out = String::from("session_id,score,label,n_windows\n");
    for p in preds {
        let label = p.label.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", p.session_id, p.score, label, p.window_scores.len()));
    }
    out
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::new(a.seed, a.n, a.separation);
    cfg.embedding_dim = a.embedding_dim;
    let corpus = make_synthetic_with(&cfg)?;
    let manifest = corpus.write(&a.out)?;
    println!("wrote {} sessions to {}", corpus.records.len(), manifest.display());
    Ok(())
}

fn run_extract(a: &ExtractArgs) -> Result<()> {
    let records = load_manifest(&read(&a.manifest)?)?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let table = load_table(a.embeddings.as_deref())?;
    let flags = a.features.lexical();
    for r in &records {
        let frames_path = base.join(&r.frames_path);
        let frames = parse_frames(&read(&frames_path)?, &r.session_id)
            .map_err(|e| Error::Validation(format!("{}: {e}", frames_path.display())))?;
        let seq = compute_functionals(&frames, a.stat_window, a.stat_hop)?;
        write(&a.out.join("functionals").join(format!("{}.csv", r.session_id)), functionals_csv(&seq))?;
        if let Some(table) = &table {
            let asr_path = base.join(&r.asr_path);
            let tr = parse_asr(&read(&asr_path)?, &r.patient_speaker)
                .map_err(|e| Error::Validation(format!("{}: {e}", asr_path.display())))?;
            let lex = assemble_lexical(&tr, &compute_pauses(&tr), table, flags)?;
            if lex.lm_prob_disabled() {
                eprintln!("note: session {}: no LM probabilities, column is all zero", r.session_id);
            }
            write(&a.out.join("lexical").join(format!("{}.csv", r.session_id)), lexical_csv(&lex))?;
        }
    }
    println!("extracted {} sessions into {}", records.len(), a.out.display());
    Ok(())
}

fn run_train(a: &RunArgs) -> Result<()> {
    let cfg = resolve(a)?;
    let ds = load_dataset(&cfg)?;
    let task = cfg.arch.task;
    let idx = ds.labelled(task);
    if idx.is_empty() {
        return Err(Error::Validation(format!("no session in the manifest has a {} label", task.name())));
    }
    let mut chosen = Candidate {
        arch: cfg.arch.clone(),
        train: cfg.train,
    };
    if !cfg.grid.is_empty() {
        let g = grid_search(&ds, &idx, &cfg.grid, cfg.seed)?;
        write(&a.out.join("grid.json"), serde_json::to_string_pretty(&g.table).expect("grid serializes"))?;
        chosen = cfg.grid[g.best].clone();
        chosen.arch.seed = cfg.seed;
    }
    let (train, val) = split_train_val(&ds, &idx, task, chosen.train.val_fraction, cfg.seed)?;
    let m = train_model(&ds, &train, &val, &chosen.arch, &chosen.train)?;
    write(&a.out.join("config.json"), config_json(&cfg))?;
    write(&a.out.join("model.ckpt"), save_checkpoint(&m.params))?;
    for (name, log) in &m.logs {
        let file = if name == "net" {
            "train_log.csv".to_string()
        } else {
            format!("train_log_{name}.csv")
        };
        write(&a.out.join(file), log_csv(log))?;
    }
    let epochs: Vec<usize> = m.logs.iter().map(|(_, l)| l.len()).collect();
    println!(
        "trained on {} sessions ({} validation), epochs {epochs:?}; checkpoint {}",
        train.len(),
        val.len(),
        a.out.join("model.ckpt").display()
    );
    Ok(())
}

fn print_metrics(r: &EvalReport) {
    let show = |name: &str, v: Option<f64>| v.map(|v| format!("{name} {v:.4}"));
    let parts: Vec<String> = [
        show("accuracy", r.metrics.accuracy),
        show("f1_mean", r.metrics.f1_mean),
        show("rmse", r.metrics.rmse),
    ]
    .into_iter()
    .flatten()
    .collect();
    println!("{} {}: {}", r.task.name(), r.protocol, parts.join(", "));
}

fn run_cv(a: &RunArgs) -> Result<()> {
    let cfg = resolve(a)?;
    let ds = load_dataset(&cfg)?;
    let out = cross_validate(
        &ds,
        &Candidate {
            arch: cfg.arch.clone(),
            train: cfg.train,
        },
        &CvConfig {
            protocol: cfg.protocol,
            seed: cfg.seed,
            workers: cfg.workers,
            grid: cfg.grid.clone(),
        },
    )?;
    write(&a.out.join("config.json"), config_json(&cfg))?;
    write(&a.out.join("report.json"), out.report.to_json())?;
    write(&a.out.join("predictions.csv"), predictions_csv(&out.report.predictions))?;
    print_metrics(&out.report);
    Ok(())
}

/// Loads the checkpoint and the manifest's sessions, refusing any setting
/// that differs from how the model was trained.
fn score_inputs(a: &ScoreArgs) -> Result<(ModelParams, Dataset)> {
    let bytes = fs::read(&a.checkpoint).map_err(|e| Error::io(&a.checkpoint, e))?;
    let params = load_checkpoint(&bytes).map_err(|e| Error::Validation(format!("{}: {e}", a.checkpoint.display())))?;
    let meta = &params.meta;
    let arch = &meta.arch;
    if let Some(t) = a.task.filter(|t| *t != arch.task) {
        return Err(Error::Validation(format!(
            "--task {}: checkpoint was trained for {}",
            t.name(),
            arch.task.name()
        )));
    }
    if let Some(k) = a.model.filter(|k| *k != arch.kind) {
        return Err(Error::Validation(format!("--model {k:?}: checkpoint holds a {:?} model", arch.kind)));
    }
    let flags = a.features.lexical();
    if arch.kind.uses_text() {
        for (name, given, trained) in [
            ("--no-disfl", flags.disfl, arch.flags.disfl),
            ("--no-pause", flags.pause, arch.flags.pause),
            ("--no-lmprob", flags.lm_prob, arch.flags.lm_prob),
            ("--lm-log", !flags.lm_log, !arch.flags.lm_log),
        ] {
            if given != trained {
                return Err(Error::Validation(format!(
                    "{name}: feature flag differs from the checkpoint (trained with {})",
                    if name == "--lm-log" { !trained } else { trained }
                )));
            }
        }
    }
    let table = if arch.kind.uses_text() {
        let table = load_table(a.embeddings.as_deref())?
            .ok_or_else(|| Error::validation("--embeddings is required for this checkpoint"))?;
        if Some(&table.digest) != meta.embedding_digest.as_ref() {
            return Err(Error::validation(
                "--embeddings: file differs from the one the checkpoint was trained with",
            ));
        }
        Some(table)
    } else {
        None
    };
    let featurize = FeaturizeConfig {
        stat_window: meta.stat_window,
        stat_hop: meta.stat_hop,
        alpha: meta.alpha,
    };
    let ds = Dataset::load(
        &a.manifest,
        table.as_ref(),
        arch.flags,
        featurize,
        arch.kind.uses_audio(),
        arch.kind.uses_text(),
    )?;
    if arch.kind.uses_audio() && ds.frame_features != meta.frame_features {
        return Err(Error::validation(
            "frame feature columns differ from the ones the checkpoint was trained on",
        ));
    }
    Ok((params, ds))
}

fn run_predict(a: &ScoreArgs) -> Result<()> {
    let (params, ds) = score_inputs(a)?;
    let prep = AudioPrep::from_meta(&params.meta);
    let idx: Vec<usize> = (0..ds.len()).collect();
    let preds = predict_sessions(&ds, &idx, &params, prep.as_ref())?;
    write(&a.out.join("predictions.csv"), predictions_csv(&preds))?;
    println!("scored {} sessions -> {}", preds.len(), a.out.join("predictions.csv").display());
    Ok(())
}

fn run_eval(a: &ScoreArgs) -> Result<()> {
    let (params, ds) = score_inputs(a)?;
    let task = params.meta.arch.task;
    let prep = AudioPrep::from_meta(&params.meta);
    let idx = ds.labelled(task);
    if idx.is_empty() {
        return Err(Error::Validation(format!("no session in the manifest has a {} label", task.name())));
    }
    let preds = predict_sessions(&ds, &idx, &params, prep.as_ref())?;
    let labels = idx
        .iter()
        .map(|&i| Ok((ds.sessions[i].record.session_id.clone(), ds.target(i, task)?)))
        .collect::<Result<Vec<_>>>()?;
    let e = evaluate(&preds, &labels, task)?;
    let report = EvalReport {
        task,
        protocol: "checkpoint".into(),
        seed: params.meta.arch.seed,
        metrics: e.metrics,
        folds: Vec::new(),
        confusion: e.confusion,
        f1_degenerate_classes: e.f1_degenerate_classes,
        predictions: preds,
    };
    write(&a.out.join("report.json"), report.to_json())?;
    write(&a.out.join("predictions.csv"), predictions_csv(&report.predictions))?;
    print_metrics(&report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Extract(a) => run_extract(a),
        Command::Train(a) => run_train(a),
        Command::Cv(a) => run_cv(a),
        Command::Eval(a) => run_eval(a),
        Command::Predict(a) => run_predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
