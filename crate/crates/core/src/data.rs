//! Synthetic dyadic sessions, the on-disk session format and the held-out split.
//!
//! Every session belongs to a stimulus class. The speaker moves along a
//! class-specific sum of sinusoids plus smoothed noise; the listener replays a
//! class-specific permutation of the speaker's coefficients after a per-session
//! lag, shifted by class offsets and a per-session perturbation. Speech
//! features are a fixed projection of the speaker coefficients held for `k`
//! frames, plus noise. Neighbor sets are the class partition.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::seed::stream_rng;
use crate::types::{AudioFeatureSequence, CoeffSequence, Session};

pub const SESSION_MAGIC: &[u8; 8] = b"RFSESS01";
pub const SESSION_EXT: &str = "rfsess";

const SINUSOIDS: usize = 3;
const SMOOTHING: usize = 5;
const CLASS_STREAM: u64 = 1;
const SESSION_STREAM: u64 = 2;
const AUDIO_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_sessions: usize,
    pub frames: usize,
    pub n_classes: usize,
    pub lag_min: usize,
    pub lag_max: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self {
            n_sessions: cfg.n_sessions,
            frames: cfg.frames,
            n_classes: cfg.n_classes,
            lag_min: cfg.lag_min,
            lag_max: cfg.lag_max,
            noise_scale: cfg.noise_scale,
            seed: cfg.seed,
        }
    }

    pub fn validate(&self, w: usize) -> Result<()> {
        let fail = |field: &str, why: &str| Err(Error::config(format!("{field}: {why}")));
        if self.n_classes == 0 {
            return fail("n_classes", "must be positive");
        }
        if self.n_sessions < self.n_classes {
            return fail("n_sessions", "must be at least n_classes");
        }
        if self.frames == 0 {
            return fail("T", "must be positive");
        }
        if self.lag_min > self.lag_max || self.lag_max > w {
            return fail("lag_max", "lag range must lie within [0, w]");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return fail("noise_scale", "must be a non-negative finite number");
        }
        Ok(())
    }
}

pub fn session_id(i: usize) -> String {
    format!("s{i:04}")
}

pub fn class_of(i: usize, n_classes: usize) -> usize {
    i % n_classes
}

struct ClassTemplate {
    freqs: [f64; SINUSOIDS],
    amps: Array2<f64>,
    phases: Array2<f64>,
    perm: Vec<usize>,
    offsets: Vec<f64>,
}

impl ClassTemplate {
    fn new(seed: u64, class: usize, dim: usize) -> Self {
        let mut rng = stream_rng(seed, &[CLASS_STREAM, class as u64]);
        let mut freqs = [0.0; SINUSOIDS];
        for f in &mut freqs {
            *f = rng.gen_range(0.02..0.12);
        }
        let amps = Array2::from_shape_simple_fn((dim, SINUSOIDS), || rng.gen_range(0.2..0.6));
        let phases = Array2::from_shape_simple_fn((dim, SINUSOIDS), || rng.gen_range(0.0..TAU));
        let mut perm: Vec<usize> = (0..dim).collect();
        perm.shuffle(&mut rng);
        let offsets = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
        Self { freqs, amps, phases, perm, offsets }
    }

    fn value(&self, t: f64, d: usize) -> f64 {
        (0..SINUSOIDS).map(|m| self.amps[[d, m]] * (TAU * self.freqs[m] * t + self.phases[[d, m]]).sin()).sum()
    }
}

/// Generates the full dataset; deterministic in `spec.seed`.
pub fn generate_dataset(spec: &SynthSpec, cfg: &ModelConfig) -> Result<Vec<Session>> {
    spec.validate(cfg.w)?;
    let dim = cfg.coeff_dim;
    let templates: Vec<ClassTemplate> = (0..spec.n_classes).map(|c| ClassTemplate::new(spec.seed, c, dim)).collect();
    let mut audio_rng = stream_rng(spec.seed, &[AUDIO_STREAM]);
    let proj_std = 1.0 / (dim as f64).sqrt();
    let projection = Array2::from_shape_simple_fn((dim, cfg.d_a), || audio_rng.sample::<f64, _>(StandardNormal) * proj_std);

    let mut members: Vec<BTreeSet<String>> = vec![BTreeSet::new(); spec.n_classes];
    for i in 0..spec.n_sessions {
        members[class_of(i, spec.n_classes)].insert(session_id(i));
    }

    let mut sessions = Vec::with_capacity(spec.n_sessions);
    for i in 0..spec.n_sessions {
        let class = class_of(i, spec.n_classes);
        sessions.push(synth_session(spec, cfg, i, &templates[class], &projection, members[class].clone()));
    }
    Ok(sessions)
}

fn synth_session(
    spec: &SynthSpec,
    cfg: &ModelConfig,
    i: usize,
    tpl: &ClassTemplate,
    projection: &Array2<f64>,
    neighbor_ids: BTreeSet<String>,
) -> Session {
    let (t_len, dim, k) = (spec.frames, cfg.coeff_dim, cfg.k);
    let mut rng = stream_rng(spec.seed, &[SESSION_STREAM, i as u64]);
    let lag = rng.gen_range(spec.lag_min..=spec.lag_max);

    // speaker signal over frames -lag_max..T, row r holding frame r - lag_max
    let ext = t_len + spec.lag_max;
    let raw = Array2::from_shape_simple_fn((ext + SMOOTHING - 1, dim), || rng.sample::<f64, _>(StandardNormal));
    let speaker_ext = Array2::from_shape_fn((ext, dim), |(r, d)| {
        let t = r as f64 - spec.lag_max as f64;
        let smooth = (0..SMOOTHING).map(|s| raw[[r + s, d]]).sum::<f64>() / SMOOTHING as f64;
        tpl.value(t, d) + spec.noise_scale * smooth
    });
    let perturb: Vec<f64> = (0..dim).map(|_| spec.noise_scale * rng.sample::<f64, _>(StandardNormal)).collect();

    let speaker = Array2::from_shape_fn((t_len, dim), |(t, d)| speaker_ext[[t + spec.lag_max, d]]);
    let listener = Array2::from_shape_fn((t_len, dim), |(t, d)| {
        speaker_ext[[t + spec.lag_max - lag, tpl.perm[d]]] + tpl.offsets[d] + perturb[d]
    });
    let clean_audio = speaker.dot(projection);
    let audio = Array2::from_shape_fn((k * t_len, cfg.d_a), |(r, c)| {
        clean_audio[[r / k, c]] + spec.noise_scale * rng.sample::<f64, _>(StandardNormal)
    });

    Session {
        id: session_id(i),
        speaker_audio: AudioFeatureSequence { frames: audio.mapv(|v| v as f32), rate_ratio: k },
        speaker_coeffs: CoeffSequence::new(speaker.mapv(|v| v as f32), cfg.frame_rate),
        listener_coeffs: CoeffSequence::new(listener.mapv(|v| v as f32), cfg.frame_rate),
        neighbor_ids,
    }
}

/// Injected listener lag of session `i`; mirrors the draw in [`generate_dataset`].
pub fn injected_lag(spec: &SynthSpec, i: usize) -> usize {
    let mut rng = stream_rng(spec.seed, &[SESSION_STREAM, i as u64]);
    rng.gen_range(spec.lag_min..=spec.lag_max)
}

/// Stable position of a session id in the split order for `seed`.
fn split_key(seed: u64, id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

/// Partitions session ids into `(train, test)`. Sessions are ranked by a
/// seeded hash of their id and the first `round(n * fraction)` go to test
/// (at least one when `fraction > 0` and there are two or more sessions).
pub fn split_ids(ids: &[String], seed: u64, test_fraction: f64) -> (Vec<String>, Vec<String>) {
    let n = ids.len();
    let mut n_test = (n as f64 * test_fraction).round() as usize;
    if test_fraction > 0.0 && n >= 2 {
        n_test = n_test.clamp(1, n - 1);
    }
    let mut ranked: Vec<&String> = ids.iter().collect();
    ranked.sort_by_key(|id| (split_key(seed, id), (*id).clone()));
    let test: BTreeSet<&String> = ranked[..n_test].iter().copied().collect();
    let mut train = Vec::new();
    let mut held = Vec::new();
    for id in ids {
        if test.contains(id) {
            held.push(id.clone());
        } else {
            train.push(id.clone());
        }
    }
    (train, held)
}

pub fn session_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.{SESSION_EXT}"))
}

/// Serializes a session to its binary file form.
pub fn encode_session(s: &Session) -> Vec<u8> {
    let (t, d) = s.speaker_coeffs.frames.dim();
    let neighbors: Vec<&str> = s.neighbor_ids.iter().map(String::as_str).collect();
    let mut out = Vec::with_capacity(64 + 4 * (2 * t * d + s.speaker_audio.frames.len()));
    out.extend_from_slice(SESSION_MAGIC);
    let header = format!(
        "id={}\nT={}\nD={}\nk={}\nd_a={}\nframe_rate={}\nneighbor_ids={}\n\n",
        s.id,
        t,
        d,
        s.speaker_audio.rate_ratio,
        s.speaker_audio.frames.ncols(),
        s.speaker_coeffs.frame_rate,
        neighbors.join(",")
    );
    out.extend_from_slice(header.as_bytes());
    for m in [&s.speaker_coeffs.frames, &s.listener_coeffs.frames, &s.speaker_audio.frames] {
        for v in m.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_session(s: &Session, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = session_path(dir, &s.id);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&encode_session(s)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_session(dir: &Path, id: &str) -> Result<Session> {
    let path = session_path(dir, id);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let s = decode_session(&bytes).map_err(|e| match e {
        Error::Data(m) => Error::data(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if s.id != id {
        return Err(Error::data(format!("{}: header id {} ≠ requested {id}", path.display(), s.id)));
    }
    Ok(s)
}

struct Header {
    id: String,
    t: usize,
    d: usize,
    k: usize,
    d_a: usize,
    frame_rate: f64,
    neighbors: BTreeSet<String>,
}

fn parse_header(text: &str) -> Result<Header> {
    let mut fields = std::collections::BTreeMap::new();
    for line in text.lines() {
        let (key, value) = line.split_once('=').ok_or_else(|| Error::data(format!("malformed header line {line:?}")))?;
        if fields.insert(key.trim(), value.trim()).is_some() {
            return Err(Error::data(format!("duplicate header key {key:?}")));
        }
    }
    let get = |key: &str| fields.get(key).copied().ok_or_else(|| Error::data(format!("header is missing {key}")));
    let count = |key: &str| -> Result<usize> {
        let v: usize = get(key)?.parse().map_err(|_| Error::data(format!("header {key} is not an integer")))?;
        if v == 0 {
            return Err(Error::data(format!("header {key} must be positive")));
        }
        Ok(v)
    };
    let frame_rate: f64 = get("frame_rate")?.parse().map_err(|_| Error::data("header frame_rate is not a number"))?;
    if !(frame_rate > 0.0 && frame_rate.is_finite()) {
        return Err(Error::data("header frame_rate must be positive"));
    }
    let id = get("id")?.to_string();
    if id.is_empty() {
        return Err(Error::data("header id is empty"));
    }
    let neighbors = get("neighbor_ids")?.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect();
    Ok(Header { id, t: count("T")?, d: count("D")?, k: count("k")?, d_a: count("d_a")?, frame_rate, neighbors })
}

pub fn decode_session(bytes: &[u8]) -> Result<Session> {
    if bytes.len() < SESSION_MAGIC.len() || &bytes[..SESSION_MAGIC.len()] != SESSION_MAGIC {
        return Err(Error::data("not a session file (bad magic)"));
    }
    let rest = &bytes[SESSION_MAGIC.len()..];
    let end = rest.windows(2).position(|w| w == b"\n\n").ok_or_else(|| Error::data("malformed header: no terminating blank line"))?;
    let text = std::str::from_utf8(&rest[..end]).map_err(|_| Error::data("malformed header: not UTF-8"))?;
    let h = parse_header(text)?;
    let payload = &rest[end + 2..];

    let audio_len = h.k * h.t * h.d_a;
    let expected = 2 * h.t * h.d + audio_len;
    if payload.len() % 4 != 0 {
        return Err(Error::data("payload is not a whole number of 32-bit floats"));
    }
    let have = payload.len() / 4;
    if have != expected {
        let coeff_floats = have.checked_sub(audio_len).filter(|n| *n > 0 && n % (2 * h.t) == 0);
        if let Some(n) = coeff_floats {
            return Err(Error::dim(format!(
                "header D={} but payload holds {}·T floats per coefficient stream",
                h.d,
                n / (2 * h.t)
            )));
        }
        if have < expected {
            return Err(Error::data(format!("payload shorter than header promises ({have} < {expected} floats)")));
        }
        return Err(Error::data(format!("payload longer than header promises ({have} > {expected} floats)")));
    }
    let floats: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    if floats.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("payload holds a non-finite value"));
    }
    let td = h.t * h.d;
    let mat = |range: std::ops::Range<usize>, rows: usize, cols: usize| {
        Array2::from_shape_vec((rows, cols), floats[range].to_vec()).expect("length checked")
    };
    Ok(Session {
        id: h.id,
        speaker_coeffs: CoeffSequence::new(mat(0..td, h.t, h.d), h.frame_rate),
        listener_coeffs: CoeffSequence::new(mat(td..2 * td, h.t, h.d), h.frame_rate),
        speaker_audio: AudioFeatureSequence { frames: mat(2 * td..expected, h.k * h.t, h.d_a), rate_ratio: h.k },
        neighbor_ids: h.neighbors,
    })
}

pub fn save_dataset(sessions: &[Session], dir: &Path) -> Result<()> {
    for s in sessions {
        save_session(s, dir)?;
    }
    Ok(())
}

/// Loads every session file in `dir`, ordered by id.
pub fn load_dataset(dir: &Path) -> Result<Vec<Session>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(SESSION_EXT) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    if ids.is_empty() {
        return Err(Error::data(format!("no session files in {}", dir.display())));
    }
    ids.sort();
    ids.iter().map(|id| load_session(dir, id)).collect()
}
