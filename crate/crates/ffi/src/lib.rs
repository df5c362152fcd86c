//! C ABI over the reactgen library.
//!
//! Models and sessions are opaque heap handles released with their `_free`
//! function. Every fallible call returns an [`RfStatus`]; on failure the
//! message is available from [`rf_last_error_message`] on the same thread.
//! Matrices cross the boundary as row-major buffers whose length the caller
//! passes explicitly.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ndarray::{Array2, ArrayView2};
use reactgen::attention::{build_mim_bias, build_vim_bias, BiasMatrix};
use reactgen::autograd::ParamStore;
use reactgen::data::load_session;
use reactgen::metrics::tlcc;
use reactgen::pipeline::{generate_online, ReactModel, TrainState};
use reactgen::{Error, ModelConfig, Session};

/// Status codes; configuration, data and numeric failures share their values with the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Numeric = 4,
    BufferSize = 5,
    Panic = 6,
}

/// Trained generator: configuration plus parameters.
pub struct RfModel {
    model: ReactModel,
    params: ParamStore<f32>,
}

/// One loaded dyadic session.
pub struct RfSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> RfStatus {
    match e.exit_code() {
        2 => RfStatus::Config,
        4 => RfStatus::Numeric,
        _ => RfStatus::Data,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (RfStatus, String)>) -> RfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RfStatus::Panic
        }
    }
}

fn lib(e: Error) -> (RfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RfStatus, String) {
    (RfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, (RfStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| (RfStatus::Config, format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn out_slice<'a, T>(out: *mut T, len: usize, needed: usize, what: &str) -> Result<&'a mut [T], (RfStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    if len != needed {
        return Err((RfStatus::BufferSize, format!("{what} holds {len} values, {needed} required")));
    }
    Ok(std::slice::from_raw_parts_mut(out, len))
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn rf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a model from a checkpoint. `config_path` may be null for the default configuration.
///
/// # Safety
/// Path arguments must be null or NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_model_load(config_path: *const c_char, checkpoint_path: *const c_char, out: *mut *mut RfModel) -> RfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = if config_path.is_null() { ModelConfig::default() } else { ModelConfig::load(path_arg(config_path, "config_path")?).map_err(lib)? };
        let ckpt = path_arg(checkpoint_path, "checkpoint_path")?;
        let model = ReactModel::new(&cfg).map_err(lib)?;
        let state = TrainState::<f32>::load(ckpt).map_err(lib)?;
        model.check_params(&state.params).map_err(lib)?;
        *out = Box::into_raw(Box::new(RfModel { model, params: state.params }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`rf_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rf_model_free(model: *mut RfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Reads the session `id` from a directory of session files.
///
/// # Safety
/// `dir` and `id` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_session_load(dir: *const c_char, id: *const c_char, out: *mut *mut RfSession) -> RfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = path_arg(dir, "dir")?;
        if id.is_null() {
            return Err(null("id"));
        }
        let id = CStr::from_ptr(id).to_str().map_err(|_| (RfStatus::Config, "id is not UTF-8".to_string()))?;
        let session = load_session(dir, id).map_err(lib)?;
        *out = Box::into_raw(Box::new(RfSession { session }));
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a handle from [`rf_session_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rf_session_free(session: *mut RfSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Frame count `T` and coefficient width `D` of a session.
///
/// # Safety
/// `session` must be a live handle; `frames` and `coeff_dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_session_dims(session: *const RfSession, frames: *mut usize, coeff_dim: *mut usize) -> RfStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        if frames.is_null() || coeff_dim.is_null() {
            return Err(null("output pointer"));
        }
        *frames = s.session.speaker_coeffs.frames.nrows();
        *coeff_dim = s.session.speaker_coeffs.frames.ncols();
        Ok(())
    })
}

fn write_generation(m: &RfModel, speaker: &Array2<f32>, audio: &Array2<f32>, seed: u64, out: &mut [f32]) -> Result<(), (RfStatus, String)> {
    let g = generate_online(&m.model, &m.params, speaker, audio, seed).map_err(lib)?;
    out.copy_from_slice(g.coeffs.as_slice().expect("standard layout"));
    Ok(())
}

/// Generates one listener reaction (`T x D`, row-major) for a loaded session.
///
/// # Safety
/// Handles must be live; `out` must hold `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn rf_generate(model: *const RfModel, session: *const RfSession, seed: u64, out: *mut f32, out_len: usize) -> RfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        let speaker = &s.session.speaker_coeffs.frames;
        let out = out_slice(out, out_len, speaker.len(), "out")?;
        write_generation(m, speaker, &s.session.speaker_audio.frames, seed, out)
    })
}

/// Generates from caller-owned speaker coefficients (`frames x D`) and speech
/// features (`k*frames x d_a`).
///
/// # Safety
/// `speaker`, `audio` and `out` must hold the documented number of floats.
#[no_mangle]
pub unsafe extern "C" fn rf_generate_buffers(
    model: *const RfModel,
    speaker: *const f32,
    audio: *const f32,
    frames: usize,
    seed: u64,
    out: *mut f32,
    out_len: usize,
) -> RfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if speaker.is_null() || audio.is_null() {
            return Err(null("input buffer"));
        }
        let cfg = m.model.config();
        let sp = ArrayView2::from_shape((frames, cfg.coeff_dim), std::slice::from_raw_parts(speaker, frames * cfg.coeff_dim))
            .expect("sized")
            .to_owned();
        let au = ArrayView2::from_shape((cfg.k * frames, cfg.d_a), std::slice::from_raw_parts(audio, cfg.k * frames * cfg.d_a))
            .expect("sized")
            .to_owned();
        let out = out_slice(out, out_len, frames * cfg.coeff_dim, "out")?;
        write_generation(m, &sp, &au, seed, out)
    })
}

fn write_bias(b: reactgen::Result<BiasMatrix>, out: *mut f64, out_len: usize) -> Result<(), (RfStatus, String)> {
    let b = b.map_err(lib)?;
    let dst = unsafe { out_slice(out, out_len, b.values().len(), "out")? };
    for (d, v) in dst.iter_mut().zip(b.values().iter()) {
        *d = *v;
    }
    Ok(())
}

/// Face-stream alignment bias (`tq x tk`, row-major; masked entries are `-inf`).
///
/// # Safety
/// `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_build_vim_bias(tq: usize, tk: usize, p: usize, out: *mut f64, out_len: usize) -> RfStatus {
    guard(|| write_bias(build_vim_bias(tq, tk, p), out, out_len))
}

/// Speech-stream alignment bias (`tq x tk` with `tk = k*tq`).
///
/// # Safety
/// `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_build_mim_bias(tq: usize, tk: usize, k: usize, p: usize, out: *mut f64, out_len: usize) -> RfStatus {
    guard(|| write_bias(build_mim_bias(tq, tk, k, p), out, out_len))
}

/// Synchrony lag between two `frames x dims` sequences.
///
/// # Safety
/// `speaker` and `pred` must hold `frames*dims` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rf_tlcc(speaker: *const f32, pred: *const f32, frames: usize, dims: usize, max_lag: usize, out: *mut f64) -> RfStatus {
    guard(|| {
        if speaker.is_null() || pred.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let n = frames * dims;
        let a = ArrayView2::from_shape((frames, dims), std::slice::from_raw_parts(speaker, n)).expect("sized");
        let b = ArrayView2::from_shape((frames, dims), std::slice::from_raw_parts(pred, n)).expect("sized");
        *out = tlcc(a, b, max_lag).map_err(lib)?;
        Ok(())
    })
}
