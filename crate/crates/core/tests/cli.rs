use std::path::Path;
use std::process::{Command, Output};

fn sg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speechgate"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

const TINY: &[&str] = &[
    "--manifest",
    "data/manifest.csv",
    "--embeddings",
    "data/embeddings.txt",
    "--task",
    "ad",
    "--model",
    "text",
    "--text-timestep",
    "10",
    "--text-stride",
    "5",
    "--text-hidden",
    "4",
    "--max-epochs",
    "2",
    "--seed",
    "7",
];

fn with<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(TINY).chain(tail).copied().collect()
}

#[test]
fn end_to_end_runs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&sg(&["synth", "--out", "data", "--seed", "3", "--n", "12"], d));
    assert!(d.join("data/manifest.csv").is_file());

    ok(&sg(&with(&["cv"], &["--folds", "3", "--out", "r1"]), d));
    ok(&sg(&with(&["cv"], &["--folds", "3", "--out", "r2"]), d));
    let r1 = std::fs::read(d.join("r1/report.json")).unwrap();
    assert_eq!(r1, std::fs::read(d.join("r2/report.json")).unwrap());
    assert!(d.join("r1/predictions.csv").is_file());

    ok(&sg(&["cv", "--config", "r1/config.json", "--out", "r3"], d));
    assert_eq!(r1, std::fs::read(d.join("r3/report.json")).unwrap());

    ok(&sg(&with(&["train"], &["--out", "m"]), d));
    let ckpt = d.join("m/model.ckpt");
    assert!(ckpt.is_file());

    let score = ["--checkpoint", "m/model.ckpt", "--manifest", "data/manifest.csv", "--embeddings", "data/embeddings.txt"];
    let mut eval: Vec<&str> = vec!["eval"];
    eval.extend(score);
    eval.extend(["--out", "e"]);
    ok(&sg(&eval, d));
    assert!(d.join("e/report.json").is_file());

    let mut predict: Vec<&str> = vec!["predict"];
    predict.extend(score);
    predict.extend(["--out", "p"]);
    ok(&sg(&predict, d));
    let csv = std::fs::read_to_string(d.join("p/predictions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);

    predict.push("--no-pause");
    let o = sg(&predict, d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pause"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sg(&["cv", "--frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).to_lowercase().contains("usage"), "{}", stderr(&o));
}

#[test]
fn missing_manifest_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sg(
        &["train", "--task", "ad", "--model", "audio", "--manifest", "nowhere/manifest.csv", "--out", "m"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error:") && err.contains("nowhere/manifest.csv"), "{err}");
}
