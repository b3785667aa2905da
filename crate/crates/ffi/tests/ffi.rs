use std::ffi::{c_int, CStr, CString};
use std::process::Command;
use std::ptr;

use speechgate::lexical::LexicalFlags;
use speechgate::model::{save_checkpoint, ArchConfig, BranchConfig, ModelKind, Task};
use speechgate::pipeline::FeaturizeConfig;
use speechgate::synth::{make_synthetic_with, SynthConfig, SyntheticCorpus};
use speechgate::train::{predict_sessions, train_model, TrainConfig};
use speechgate_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sg_last_error()) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

struct Trained {
    corpus: SyntheticCorpus,
    dir: tempfile::TempDir,
    scores: Vec<f64>,
}

fn trained(kind: ModelKind) -> Trained {
    let mut cfg = SynthConfig::new(4, 8, 1.0);
    cfg.embedding_dim = 6;
    let corpus = make_synthetic_with(&cfg).unwrap();
    let table = corpus.embedding_table().unwrap();
    let ds = corpus.dataset(&table, LexicalFlags::default(), FeaturizeConfig::default()).unwrap();
    let mut arch = ArchConfig::new(kind, Task::Ad);
    arch.audio = BranchConfig { timestep: 5, stride: 2, layers: 1, hidden: 3 };
    arch.text = BranchConfig { timestep: 4, stride: 2, layers: 1, hidden: 3 };
    arch.highway_n = 1;
    let tc = TrainConfig { max_epochs: 2, ..TrainConfig::default() };
    let idx: Vec<usize> = (0..8).collect();
    let m = train_model(&ds, &idx, &[], &arch, &tc).unwrap();
    let scores = predict_sessions(&ds, &idx, &m.params, m.prep.as_ref())
        .unwrap()
        .iter()
        .map(|p| p.score)
        .collect();
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model.ckpt"), save_checkpoint(&m.params)).unwrap();
    std::fs::write(dir.path().join("emb.txt"), &corpus.embeddings).unwrap();
    Trained { corpus, dir, scores }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(sg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn late_fuse_status_codes() {
    let mut out = 0.0;
    assert_eq!(unsafe { sg_late_fuse(0.6, 0.8, &mut out) }, SgStatus::Ok);
    assert!((out - 0.7).abs() < 1e-15);
    assert_eq!(unsafe { sg_late_fuse(1.5, 0.8, &mut out) }, SgStatus::Validation);
    assert!(last_error().contains("outside"));
    assert_eq!(unsafe { sg_late_fuse(0.5, 0.5, ptr::null_mut()) }, SgStatus::NullPointer);
}

#[test]
fn pauses_through_the_abi() {
    let json = cstr(
        r#"{"session_id":"s","turns":[
        {"speaker":"PAR","words":[{"w":"a","start":0.0,"end":0.5,"conf":1},{"w":"b","start":1.0,"end":1.25,"conf":1},{"w":"c","start":2.75,"end":3.0,"conf":1}]},
        {"speaker":"INV","words":[{"w":"ok","start":3.2,"end":3.4,"conf":1}]},
        {"speaker":"PAR","words":[{"w":"d","start":9.0,"end":9.5,"conf":1}]}]}"#,
    );
    let par = cstr("PAR");
    let mut len = 0usize;
    let st = unsafe { sg_compute_pauses(json.as_ptr(), par.as_ptr(), ptr::null_mut(), ptr::null_mut(), 0, &mut len) };
    assert_eq!(st, SgStatus::BufferTooSmall);
    assert_eq!(len, 4);
    let mut d = [0.0; 4];
    let mut c = [9u8; 4];
    let st = unsafe { sg_compute_pauses(json.as_ptr(), par.as_ptr(), d.as_mut_ptr(), c.as_mut_ptr(), 4, &mut len) };
    assert_eq!(st, SgStatus::Ok);
    assert_eq!(d, [0.0, 0.5, 1.5, 0.0]);
    assert_eq!(c, [0, 1, 2, 0]);

    let bad = cstr("{\"session_id\":");
    let st = unsafe { sg_compute_pauses(bad.as_ptr(), par.as_ptr(), d.as_mut_ptr(), c.as_mut_ptr(), 4, &mut len) };
    assert_eq!(st, SgStatus::Parse);
    assert!(last_error().contains("byte"));
}

#[test]
fn invalid_utf8_is_reported() {
    let raw = [0xffu8, 0xfe, 0];
    let mut len = 0usize;
    let par = cstr("PAR");
    let st = unsafe {
        sg_compute_pauses(raw.as_ptr().cast(), par.as_ptr(), ptr::null_mut(), ptr::null_mut(), 0, &mut len)
    };
    assert_eq!(st, SgStatus::InvalidUtf8);
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let bytes = b"MGFX\x01\x00\x00\x00";
    let mut m: *mut SgModel = ptr::null_mut();
    let st = unsafe { sg_model_load_bytes(bytes.as_ptr(), bytes.len(), &mut m) };
    assert_eq!(st, SgStatus::Checkpoint);
    assert!(m.is_null());
    assert!(last_error().contains("offset 0"));

    let missing = cstr("/nonexistent/model.ckpt");
    assert_eq!(unsafe { sg_model_load(missing.as_ptr(), &mut m) }, SgStatus::Io);
}

#[test]
fn predictions_match_the_library() {
    for kind in [ModelKind::Fused, ModelKind::Late, ModelKind::Audio] {
        let t = trained(kind);
        let path = cstr(t.dir.path().join("model.ckpt").to_str().unwrap());
        let emb_path = cstr(t.dir.path().join("emb.txt").to_str().unwrap());
        let mut model: *mut SgModel = ptr::null_mut();
        let mut emb: *mut SgEmbeddings = ptr::null_mut();
        unsafe {
            assert_eq!(sg_model_load(path.as_ptr(), &mut model), SgStatus::Ok);
            assert_eq!(sg_embeddings_load(emb_path.as_ptr(), &mut emb), SgStatus::Ok);
            let mut dim = 0usize;
            assert_eq!(sg_embeddings_dim(emb, &mut dim), SgStatus::Ok);
            assert_eq!(dim, 6);
            let mut cls: c_int = -1;
            assert_eq!(sg_model_is_classification(model, &mut cls), SgStatus::Ok);
            assert_eq!(cls, 1);
            let par = cstr("PAR");
            for (i, expected) in t.scores.iter().enumerate() {
                let frames = cstr(&t.corpus.frames_csv[i]);
                let asr = cstr(&t.corpus.asr_json[i]);
                let (mut score, mut label) = (0.0, -7);
                let st = sg_predict_session(model, emb, frames.as_ptr(), asr.as_ptr(), par.as_ptr(), &mut score, &mut label);
                assert_eq!(st, SgStatus::Ok, "{}", last_error());
                assert_eq!(score.to_bits(), expected.to_bits());
                assert_eq!(label, c_int::from(score >= 0.5));
            }
            if kind.uses_audio() {
                let asr = cstr(&t.corpus.asr_json[0]);
                let (mut score, mut label) = (0.0, 0);
                let st = sg_predict_session(model, emb, ptr::null(), asr.as_ptr(), par.as_ptr(), &mut score, &mut label);
                assert_eq!(st, SgStatus::Validation);
            }
            sg_model_free(model);
            sg_embeddings_free(emb);
        }
    }
}

#[test]
fn foreign_embeddings_are_refused() {
    let t = trained(ModelKind::Fused);
    let other = t.dir.path().join("other.txt");
    std::fs::write(&other, t.corpus.embeddings.replacen("0.", "1.", 1)).unwrap();
    let path = cstr(t.dir.path().join("model.ckpt").to_str().unwrap());
    let other = cstr(other.to_str().unwrap());
    unsafe {
        let mut model: *mut SgModel = ptr::null_mut();
        let mut emb: *mut SgEmbeddings = ptr::null_mut();
        assert_eq!(sg_model_load(path.as_ptr(), &mut model), SgStatus::Ok);
        assert_eq!(sg_embeddings_load(other.as_ptr(), &mut emb), SgStatus::Ok);
        let frames = cstr(&t.corpus.frames_csv[0]);
        let asr = cstr(&t.corpus.asr_json[0]);
        let par = cstr("PAR");
        let (mut score, mut label) = (0.0, 0);
        let st = sg_predict_session(model, emb, frames.as_ptr(), asr.as_ptr(), par.as_ptr(), &mut score, &mut label);
        assert_eq!(st, SgStatus::Validation);
        assert!(last_error().contains("embedding"));
        sg_model_free(model);
        sg_embeddings_free(emb);
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let src = tempfile::Builder::new().suffix(".c").tempfile().unwrap();
    std::fs::write(
        src.path(),
        "#include \"speechgate.h\"\n\
         int main(void) {\n\
           SgModel *m = 0; double out = 0;\n\
           SgStatus s = sg_late_fuse(0.1, 0.2, &out);\n\
           if (s != SG_STATUS_OK) return 1;\n\
           (void)sg_model_load(\"x\", &m); sg_model_free(m);\n\
           return sg_version()[0] == 0;\n\
         }\n",
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(format!("{dir}/include"))
            .arg(src.path())
            .status()
            .expect("C compiler available");
        assert!(status.success(), "{compiler} rejected the header");
    }
}
