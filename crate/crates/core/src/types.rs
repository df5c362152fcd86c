//! Shared value types: coefficient and speech-feature sequences, dyadic sessions.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;

/// `T x D` per-frame 3DMM coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSequence {
    pub frames: Array2<f32>,
    pub frame_rate: f64,
}

impl CoeffSequence {
    pub fn new(frames: Array2<f32>, frame_rate: f64) -> Self {
        Self { frames, frame_rate }
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// `(k*T) x d_a` speech feature frames.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFeatureSequence {
    pub frames: Array2<f32>,
    pub rate_ratio: usize,
}

impl AudioFeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// One dyadic clip with its appropriateness neighbor set.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub speaker_audio: AudioFeatureSequence,
    pub speaker_coeffs: CoeffSequence,
    pub listener_coeffs: CoeffSequence,
    pub neighbor_ids: BTreeSet<String>,
}

impl Session {
    pub fn frames(&self) -> usize {
        self.speaker_coeffs.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }
}

/// Lists every invariant `s` violates with respect to `cfg`. Never fails.
pub fn validate_session(s: &Session, cfg: &ModelConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    let t = s.speaker_coeffs.len();
    if t == 0 {
        r.push("T < 1");
    }
    if s.listener_coeffs.len() != t {
        r.push("listener length ≠ speaker length");
    }
    if s.speaker_coeffs.dim() != cfg.coeff_dim {
        r.push(format!("speaker D = {} ≠ configured D = {}", s.speaker_coeffs.dim(), cfg.coeff_dim));
    }
    if s.listener_coeffs.dim() != cfg.coeff_dim {
        r.push(format!("listener D = {} ≠ configured D = {}", s.listener_coeffs.dim(), cfg.coeff_dim));
    }
    if s.speaker_coeffs.frame_rate != s.listener_coeffs.frame_rate {
        r.push("speaker and listener frame rates differ");
    }
    if !(s.speaker_coeffs.frame_rate > 0.0) {
        r.push("frame_rate must be positive");
    }
    if s.speaker_audio.rate_ratio != cfg.k {
        r.push(format!("rate ratio {} ≠ configured k = {}", s.speaker_audio.rate_ratio, cfg.k));
    }
    if s.speaker_audio.len() != cfg.k * t {
        r.push("audio length ≠ k·T");
    }
    if s.speaker_audio.dim() != cfg.d_a {
        r.push(format!("audio d_a = {} ≠ configured d_a = {}", s.speaker_audio.dim(), cfg.d_a));
    }
    if t > 0 && t % cfg.w != 0 {
        r.push("T not divisible by w");
    }
    let finite = |m: &Array2<f32>| m.iter().all(|v| v.is_finite());
    if !finite(&s.speaker_coeffs.frames) || !finite(&s.listener_coeffs.frames) || !finite(&s.speaker_audio.frames) {
        r.push("non-finite entry");
    }
    if !s.neighbor_ids.contains(&s.id) {
        r.push("self not in neighbor set");
    }
    r
}

/// Cross-session checks: every neighbor id must resolve to a session of equal shape.
pub fn validate_dataset(sessions: &[Session], cfg: &ModelConfig) -> ValidationReport {
    let by_id: BTreeMap<&str, &Session> = sessions.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut r = ValidationReport::default();
    if by_id.len() != sessions.len() {
        r.push("duplicate session ids");
    }
    for s in sessions {
        for v in validate_session(s, cfg).violations {
            r.push(format!("{}: {v}", s.id));
        }
        for n in &s.neighbor_ids {
            match by_id.get(n.as_str()) {
                None => r.push(format!("{}: neighbor {n} does not resolve", s.id)),
                Some(o) if o.listener_coeffs.frames.dim() != s.listener_coeffs.frames.dim() => {
                    r.push(format!("{}: neighbor {n} has a different shape", s.id))
                }
                Some(_) => {}
            }
        }
    }
    r
}
