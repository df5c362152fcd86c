use std::ffi::{CStr, CString};
use std::ptr;

use reactgen::data::{generate_dataset, save_dataset, SynthSpec};
use reactgen::pipeline::{ReactModel, TrainState};
use reactgen::ModelConfig;
use reactgen_ffi::*;

fn tiny_config() -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.coeff_dim = 4;
    cfg.d_a = 3;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.w = 4;
    cfg.k = 2;
    cfg.p = 2;
    cfg
}

fn last_error() -> String {
    let p = rf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Fixture {
    _dir: tempfile::TempDir,
    config: CString,
    ckpt: CString,
    data: CString,
    id: CString,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    let cfg_path = dir.path().join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml_string()).unwrap();
    let model = ReactModel::new(&cfg).unwrap();
    let params = model.init_params::<f32>(7);
    let state = TrainState::new(params, 7);
    let ckpt = dir.path().join("m.ckpt");
    state.save(&ckpt).unwrap();
    let spec = SynthSpec { n_sessions: 2, frames: 16, n_classes: 1, lag_min: 0, lag_max: 2, noise_scale: 0.05, seed: 3 };
    let sessions = generate_dataset(&spec, &cfg).unwrap();
    let data = dir.path().join("data");
    save_dataset(&sessions, &data).unwrap();
    let c = |p: &std::path::Path| CString::new(p.to_str().unwrap()).unwrap();
    Fixture { config: c(&cfg_path), ckpt: c(&ckpt), data: c(&data), id: CString::new(sessions[0].id.clone()).unwrap(), _dir: dir }
}

#[test]
fn generate_through_handles() {
    let fx = fixture();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(rf_model_load(fx.config.as_ptr(), fx.ckpt.as_ptr(), &mut model), RfStatus::Ok);
        let mut sess = ptr::null_mut();
        assert_eq!(rf_session_load(fx.data.as_ptr(), fx.id.as_ptr(), &mut sess), RfStatus::Ok);
        let (mut t, mut d) = (0usize, 0usize);
        assert_eq!(rf_session_dims(sess, &mut t, &mut d), RfStatus::Ok);
        assert_eq!((t, d), (16, 4));

        let mut a = vec![0f32; t * d];
        let mut b = vec![0f32; t * d];
        assert_eq!(rf_generate(model, sess, 11, a.as_mut_ptr(), a.len()), RfStatus::Ok);
        assert_eq!(rf_generate(model, sess, 11, b.as_mut_ptr(), b.len()), RfStatus::Ok);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));

        let mut short = vec![0f32; t * d - 1];
        assert_eq!(rf_generate(model, sess, 11, short.as_mut_ptr(), short.len()), RfStatus::BufferSize);
        assert!(last_error().contains("required"));

        rf_session_free(sess);
        rf_model_free(model);
    }
}

#[test]
fn buffers_match_session_generation() {
    let fx = fixture();
    let cfg = tiny_config();
    let dir = std::path::Path::new(fx.data.to_str().unwrap());
    let s = reactgen::data::load_session(dir, fx.id.to_str().unwrap()).unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(rf_model_load(fx.config.as_ptr(), fx.ckpt.as_ptr(), &mut model), RfStatus::Ok);
        let mut sess = ptr::null_mut();
        assert_eq!(rf_session_load(fx.data.as_ptr(), fx.id.as_ptr(), &mut sess), RfStatus::Ok);
        let n = 16 * cfg.coeff_dim;
        let mut a = vec![0f32; n];
        let mut b = vec![0f32; n];
        assert_eq!(rf_generate(model, sess, 5, a.as_mut_ptr(), n), RfStatus::Ok);
        let sp: Vec<f32> = s.speaker_coeffs.frames.iter().copied().collect();
        let au: Vec<f32> = s.speaker_audio.frames.iter().copied().collect();
        assert_eq!(rf_generate_buffers(model, sp.as_ptr(), au.as_ptr(), 16, 5, b.as_mut_ptr(), n), RfStatus::Ok);
        assert_eq!(a, b);
        rf_session_free(sess);
        rf_model_free(model);
    }
}

#[test]
fn error_codes() {
    let fx = fixture();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(rf_model_load(ptr::null(), ptr::null(), &mut model), RfStatus::NullPointer);
        assert!(model.is_null());

        let missing = CString::new("/nonexistent/m.ckpt").unwrap();
        assert_eq!(rf_model_load(fx.config.as_ptr(), missing.as_ptr(), &mut model), RfStatus::Data);

        // default config has a different shape from the tiny checkpoint
        assert_eq!(rf_model_load(ptr::null(), fx.ckpt.as_ptr(), &mut model), RfStatus::Config);
        assert!(!last_error().is_empty());

        let mut sess = ptr::null_mut();
        let bad = CString::new("nope").unwrap();
        assert_eq!(rf_session_load(fx.data.as_ptr(), bad.as_ptr(), &mut sess), RfStatus::Data);

        let mut out = vec![0f64; 4];
        assert_eq!(rf_build_vim_bias(2, 2, 0, out.as_mut_ptr(), 4), RfStatus::Config);
        assert_eq!(rf_session_dims(ptr::null(), ptr::null_mut(), ptr::null_mut()), RfStatus::NullPointer);
        rf_model_free(ptr::null_mut());
        rf_session_free(ptr::null_mut());
    }
}

#[test]
fn bias_matches_library() {
    let mut out = vec![0f64; 3 * 6];
    assert_eq!(unsafe { rf_build_mim_bias(3, 6, 2, 1, out.as_mut_ptr(), out.len()) }, RfStatus::Ok);
    let lib = reactgen::attention::build_mim_bias(3, 6, 2, 1).unwrap();
    for (a, b) in out.iter().zip(lib.values().iter()) {
        assert!(a == b);
    }
    let mut v = vec![0f64; 16];
    assert_eq!(unsafe { rf_build_vim_bias(4, 4, 2, v.as_mut_ptr(), 16) }, RfStatus::Ok);
    assert_eq!(v[0], 0.0);
    assert_eq!(v[1], f64::NEG_INFINITY);
    assert_eq!(v[3 * 4], -1.0);
}

#[test]
fn tlcc_recovers_shift() {
    let (t, d, lag) = (64, 2, 3);
    let base: Vec<f32> = (0..t + lag).map(|i| ((i as f32) * 0.37).sin() + ((i as f32) * 0.11).cos()).collect();
    let mut sp = vec![0f32; t * d];
    let mut pr = vec![0f32; t * d];
    for i in 0..t {
        for j in 0..d {
            sp[i * d + j] = base[i + lag];
            pr[i * d + j] = base[i];
        }
    }
    let mut out = -1.0;
    assert_eq!(unsafe { rf_tlcc(sp.as_ptr(), pr.as_ptr(), t, d, 8, &mut out) }, RfStatus::Ok);
    assert_eq!(out, lag as f64);
}

#[test]
fn header_declares_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/reactgen.h")).unwrap();
    for name in [
        "rf_last_error_message",
        "rf_model_load",
        "rf_model_free",
        "rf_session_load",
        "rf_session_free",
        "rf_session_dims",
        "rf_generate",
        "rf_generate_buffers",
        "rf_build_vim_bias",
        "rf_build_mim_bias",
        "rf_tlcc",
        "RF_STATUS_OK",
        "typedef struct RfModel RfModel",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
}
