//! C interface to the motas pipeline.
//!
//! Every fallible call returns a [`MotasStatus`]; on failure a message is
//! kept per thread and read with [`motas_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use motas::cache::FeatureCache;
use motas::dsp::{compute_mfcc, AudioClip, FrameConfig, MfccSequence, SpectrogramImage};
use motas::encoders::pool_patches;
use motas::metrics::{confusion, metrics};
use motas::model::{MfccFeature, MfccInput, Model, Sample, SpecFeature, SpecInput};
use motas::{Error, Label};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotasStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    NotFound = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

/// A feature cache loaded into memory.
pub struct MotasCache(FeatureCache);

/// A trained model loaded from a checkpoint.
pub struct MotasModel(Model);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MotasMetrics {
    pub accuracy: f64,
    pub precision_ad: f64,
    pub precision_cn: f64,
    pub recall_ad: f64,
    pub recall_cn: f64,
    pub f1_ad: f64,
    pub f1_cn: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut msg = msg.into();
    msg.retain(|c| c != '\0');
    let c = CString::new(msg).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> MotasStatus {
    match e {
        Error::Shape { .. } | Error::InvalidArgument(_) | Error::Validation(_) | Error::NonFinite(_) => {
            MotasStatus::InvalidArgument
        }
        Error::Io { .. } => MotasStatus::Io,
        Error::Wav(_) | Error::Cache(_) | Error::Manifest { .. } | Error::DuplicateId(_) | Error::Json(_) => {
            MotasStatus::Format
        }
        Error::DimensionMismatch { .. } => MotasStatus::DimensionMismatch,
        Error::MissingEmbedding { .. } => MotasStatus::NotFound,
        Error::Tool(_) => MotasStatus::Internal,
    }
}

struct Fail(MotasStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail(status: MotasStatus, msg: impl Into<String>) -> Fail {
    Fail(status, msg.into())
}

/// Run `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MotasStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MotasStatus::Ok,
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic");
            MotasStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(fail(MotasStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Fail> {
    non_null(p, name)?;
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MotasStatus::InvalidArgument, format!("{name} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn motas_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn motas_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn motas_cache_open(path: *const c_char, out: *mut *mut MotasCache) -> MotasStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let cache = FeatureCache::read(&path)?;
        *out = Box::into_raw(Box::new(MotasCache(cache)));
        Ok(())
    })
}

/// # Safety
/// `cache` must come from [`motas_cache_open`] and not be freed already.
#[no_mangle]
pub unsafe extern "C" fn motas_cache_free(cache: *mut MotasCache) {
    if !cache.is_null() {
        drop(Box::from_raw(cache));
    }
}

/// Row width, or 0 for a null handle.
///
/// # Safety
/// `cache` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn motas_cache_dim(cache: *const MotasCache) -> usize {
    cache.as_ref().map_or(0, |c| c.0.dim())
}

/// Row count, or 0 for a null handle.
///
/// # Safety
/// `cache` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn motas_cache_rows(cache: *const MotasCache) -> usize {
    cache.as_ref().map_or(0, |c| c.0.len())
}

/// Copy the row for `id` into `out`, which must hold at least `dim` floats.
///
/// # Safety
/// `cache` must be a live handle, `id` NUL-terminated, and `out` valid for
/// `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn motas_cache_get(
    cache: *const MotasCache,
    id: *const c_char,
    out: *mut f32,
    out_len: usize,
) -> MotasStatus {
    guard(|| {
        non_null(cache, "cache")?;
        non_null(id, "id")?;
        let c = &(*cache).0;
        let id = CStr::from_ptr(id)
            .to_str()
            .map_err(|_| fail(MotasStatus::InvalidArgument, "id is not UTF-8"))?;
        let row = c
            .get(id)
            .ok_or_else(|| fail(MotasStatus::NotFound, format!("no row with id {id:?}")))?;
        if out_len < row.len() {
            return Err(fail(
                MotasStatus::BufferTooSmall,
                format!("row has {} values, buffer holds {out_len}", row.len()),
            ));
        }
        non_null(out, "out")?;
        ptr::copy_nonoverlapping(row.as_ptr(), out, row.len());
        Ok(())
    })
}

/// MFCCs of a mono clip with the default 25 ms / 10 ms framing, written
/// frame-major (`frames × 13`). `out_frames` always receives the frame count;
/// with a null or short `out` the call returns `BufferTooSmall`, so callers
/// can size the buffer first.
///
/// # Safety
/// `samples` must be valid for `n` reads, `out` for `out_len` writes, and
/// `out_frames` writable.
#[no_mangle]
pub unsafe extern "C" fn motas_compute_mfcc(
    samples: *const f64,
    n: usize,
    sample_rate: u32,
    out: *mut f64,
    out_len: usize,
    out_frames: *mut usize,
) -> MotasStatus {
    guard(|| {
        non_null(out_frames, "out_frames")?;
        *out_frames = 0;
        let x = slice_arg(samples, n, "samples")?;
        let clip = AudioClip::new(x.to_vec(), sample_rate)?;
        let seq = compute_mfcc(&clip, &FrameConfig::default())?;
        *out_frames = seq.num_frames();
        let data = seq.data();
        if out.is_null() || out_len < data.len() {
            return Err(fail(
                MotasStatus::BufferTooSmall,
                format!("need {} values, buffer holds {out_len}", data.len()),
            ));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
        Ok(())
    })
}

/// Scores with AD (1) as the positive class. Entries must be 0 or 1.
///
/// # Safety
/// `preds` and `labels` must be valid for `n` reads; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn motas_metrics(
    preds: *const u8,
    labels: *const u8,
    n: usize,
    out: *mut MotasMetrics,
) -> MotasStatus {
    guard(|| {
        non_null(out, "out")?;
        let to_labels = |s: &[u8], name: &str| -> Result<Vec<Label>, Fail> {
            s.iter()
                .map(|&b| match b {
                    0 | 1 => Ok(Label::from_bit(b)),
                    _ => Err(fail(MotasStatus::InvalidArgument, format!("{name} entry {b} is not 0 or 1"))),
                })
                .collect()
        };
        let p = to_labels(slice_arg(preds, n, "preds")?, "preds")?;
        let l = to_labels(slice_arg(labels, n, "labels")?, "labels")?;
        let r = metrics(&confusion(&p, &l)?)?;
        let v = r.values;
        *out = MotasMetrics {
            accuracy: v.accuracy,
            precision_ad: v.precision_ad,
            precision_cn: v.precision_cn,
            recall_ad: v.recall_ad,
            recall_cn: v.recall_cn,
            f1_ad: v.f1_ad,
            f1_cn: v.f1_cn,
            tp: r.counts.tp,
            fp: r.counts.fp,
            tn: r.counts.tn,
            fn_: r.counts.fn_,
        };
        Ok(())
    })
}

/// Load a checkpoint written by `motas train` (its `.json` sidecar must sit
/// next to it).
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn motas_model_load(path: *const c_char, out: *mut *mut MotasModel) -> MotasStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let model = Model::load(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(MotasModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`motas_model_load`] and not be freed already.
#[no_mangle]
pub unsafe extern "C" fn motas_model_free(model: *mut MotasModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// AD probability for one segment. The MFCC input is an embedding or a
/// flattened `frames × n_mfcc` sequence and the spectrogram input an
/// embedding or a 224×224 image, matching the model's configuration.
///
/// # Safety
/// Each pointer must be valid for its length in reads; `out_prob` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn motas_model_predict(
    model: *const MotasModel,
    w2v: *const f64,
    w2v_len: usize,
    mfcc: *const f64,
    mfcc_len: usize,
    spec: *const f64,
    spec_len: usize,
    text: *const f64,
    text_len: usize,
    out_prob: *mut f64,
) -> MotasStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out_prob, "out_prob")?;
        let m = &(*model).0;
        let cfg = &m.config;
        let mfcc = slice_arg(mfcc, mfcc_len, "mfcc")?.to_vec();
        let spec = slice_arg(spec, spec_len, "spec")?.to_vec();
        let sample = Sample {
            id: "ffi".into(),
            subject: "ffi".into(),
            label: Label::Cn,
            w: slice_arg(w2v, w2v_len, "w2v")?.to_vec(),
            mfcc: match cfg.mfcc_input {
                MfccInput::Embedding => MfccFeature::Embedding(mfcc),
                MfccInput::Sequence => MfccFeature::Sequence(MfccSequence::from_flat(mfcc, cfg.n_mfcc)?),
            },
            spec: match cfg.spec_input {
                SpecInput::Embedding => SpecFeature::Embedding(spec),
                SpecInput::Image => SpecFeature::Pooled(pool_patches(&SpectrogramImage::new(spec)?)),
            },
            text: slice_arg(text, text_len, "text")?.to_vec(),
        };
        *out_prob = m.predict_proba(&[&sample])?[0];
        Ok(())
    })
}
