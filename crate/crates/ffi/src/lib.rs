//! C ABI over the speechgate library.
//!
//! Every fallible call returns an [`SgStatus`]; on failure a description is
//! available from [`sg_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use speechgate::ingest::{parse_asr, parse_frames};
use speechgate::lexical::{compute_pauses, load_embeddings, EmbeddingTable};
use speechgate::model::{late_fuse, load_checkpoint, predict_session, ModelParams};
use speechgate::pipeline::checkpoint_windows;
use speechgate::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Shape = 5,
    Checkpoint = 6,
    Io = 7,
    NonFinite = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// A loaded checkpoint.
pub struct SgModel {
    params: ModelParams,
}

/// A loaded word-vector table.
pub struct SgEmbeddings {
    table: EmbeddingTable,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SgStatus {
    match e {
        Error::Parse { .. } | Error::Row { .. } | Error::Line { .. } => SgStatus::Parse,
        Error::Validation(_) => SgStatus::Validation,
        Error::Shape(_) => SgStatus::Shape,
        Error::NonFinite(_) | Error::Diverged { .. } => SgStatus::NonFinite,
        Error::Checkpoint { .. } => SgStatus::Checkpoint,
        Error::Io { .. } => SgStatus::Io,
    }
}

struct Fail(SgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SgStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(SgStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

fn non_null<T>(p: *mut T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(SgStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread; empty when nothing has failed.
#[no_mangle]
pub extern "C" fn sg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_model_load(path: *const c_char, out: *mut *mut SgModel) -> SgStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = text(path, "path")?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let params = load_checkpoint(&bytes)?;
        *out = Box::into_raw(Box::new(SgModel { params }));
        Ok(())
    })
}

/// Loads a checkpoint from memory into `*out`.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_model_load_bytes(data: *const u8, len: usize, out: *mut *mut SgModel) -> SgStatus {
    guard(|| {
        non_null(out, "out")?;
        if data.is_null() {
            return Err(Fail(SgStatus::NullPointer, "data is null".into()));
        }
        let params = load_checkpoint(std::slice::from_raw_parts(data, len))?;
        *out = Box::into_raw(Box::new(SgModel { params }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from `sg_model_load*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_model_free(model: *mut SgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// 1 when the model outputs a probability, 0 for MMSE regression.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_model_is_classification(model: *const SgModel, out: *mut c_int) -> SgStatus {
    guard(|| {
        non_null(out, "out")?;
        let m = model.as_ref().ok_or(Fail(SgStatus::NullPointer, "model is null".into()))?;
        *out = c_int::from(m.params.meta.arch.task.is_classification());
        Ok(())
    })
}

/// Loads a whitespace-separated word-vector file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_embeddings_load(path: *const c_char, out: *mut *mut SgEmbeddings) -> SgStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = text(path, "path")?;
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table = load_embeddings(&contents)?;
        *out = Box::into_raw(Box::new(SgEmbeddings { table }));
        Ok(())
    })
}

/// Vector width of a loaded table.
///
/// # Safety
/// `emb` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_embeddings_dim(emb: *const SgEmbeddings, out: *mut usize) -> SgStatus {
    guard(|| {
        non_null(out, "out")?;
        let e = emb.as_ref().ok_or(Fail(SgStatus::NullPointer, "emb is null".into()))?;
        *out = e.table.dim();
        Ok(())
    })
}

/// Releases an embedding table. Null is ignored.
///
/// # Safety
/// `emb` must come from `sg_embeddings_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_embeddings_free(emb: *mut SgEmbeddings) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Scores one session. `frames_csv` is required by audio, fused and late
/// models; `asr_json`, `patient_speaker` and `emb` by text, fused and late
/// models. Unused inputs may be null. `*out_label` is 0/1 for
/// classification and -1 for regression.
///
/// # Safety
/// String arguments must be NUL-terminated or null; handles must be live;
/// `out_score` and `out_label` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sg_predict_session(
    model: *const SgModel,
    emb: *const SgEmbeddings,
    frames_csv: *const c_char,
    asr_json: *const c_char,
    patient_speaker: *const c_char,
    out_score: *mut f64,
    out_label: *mut c_int,
) -> SgStatus {
    guard(|| {
        non_null(out_score, "out_score")?;
        non_null(out_label, "out_label")?;
        let m = model.as_ref().ok_or(Fail(SgStatus::NullPointer, "model is null".into()))?;
        let id = "session";
        let frames = opt_text(frames_csv, "frames_csv")?
            .map(|t| parse_frames(t, id))
            .transpose()?;
        let transcript = match opt_text(asr_json, "asr_json")? {
            Some(j) => Some(parse_asr(j, text(patient_speaker, "patient_speaker")?)?),
            None => None,
        };
        let windows = checkpoint_windows(&m.params, id, frames, transcript, emb.as_ref().map(|e| &e.table))?;
        let p = predict_session(&windows, &m.params)?;
        *out_score = p.score;
        *out_label = p.label.map_or(-1, c_int::from);
        Ok(())
    })
}

/// Pause before each patient word: durations in seconds and categories
/// (0 none, 1 short, 2 long). With `capacity` below the word count nothing
/// is written except `*out_len`, and `SG_STATUS_BUFFER_TOO_SMALL` returns.
///
/// # Safety
/// Strings must be NUL-terminated; `durations` and `categories` must hold
/// `capacity` elements (or be null when `capacity` is 0); `out_len` valid.
#[no_mangle]
pub unsafe extern "C" fn sg_compute_pauses(
    asr_json: *const c_char,
    patient_speaker: *const c_char,
    durations: *mut f64,
    categories: *mut u8,
    capacity: usize,
    out_len: *mut usize,
) -> SgStatus {
    guard(|| {
        non_null(out_len, "out_len")?;
        let t = parse_asr(text(asr_json, "asr_json")?, text(patient_speaker, "patient_speaker")?)?;
        let pauses = compute_pauses(&t);
        let n = pauses.durations.len();
        *out_len = n;
        if n > capacity {
            return Err(Fail(
                SgStatus::BufferTooSmall,
                format!("{n} patient words, capacity {capacity}"),
            ));
        }
        if n > 0 {
            non_null(durations, "durations")?;
            non_null(categories, "categories")?;
            ptr::copy_nonoverlapping(pauses.durations.as_ptr(), durations, n);
            for (k, c) in pauses.categories.iter().enumerate() {
                *categories.add(k) = c.index() as u8;
            }
        }
        Ok(())
    })
}

/// Session-level late fusion of two probabilities in [0, 1].
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_late_fuse(p_audio: f64, p_text: f64, out: *mut f64) -> SgStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = late_fuse(p_audio, p_text)?;
        Ok(())
    })
}
