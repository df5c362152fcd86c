//! Model, training and synthetic-data configuration.
//!
//! The on-disk form is a flat TOML table whose keys are the field names below.
//! Unknown keys are rejected both in files and in `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Coefficients per face frame (50 expression + 3 jaw + 3 pose by default).
    #[serde(rename = "D")]
    pub coeff_dim: usize,
    /// Embedding width shared by every attention stack and the latent space.
    pub d: usize,
    /// Speech feature width.
    pub d_a: usize,
    /// Reaction window length in frames.
    pub w: usize,
    /// Speech frames per face frame.
    pub k: usize,
    /// Latent momentum.
    #[serde(alias = "α")]
    pub alpha: f64,
    /// Attention step: `p` successive frames share one bias value.
    pub p: usize,
    pub heads: usize,
    pub layers: usize,
    /// Feed-forward hidden width as a multiple of `d`.
    pub ffn_mult: usize,
    #[serde(alias = "λ_kl")]
    pub lambda_kl: f64,
    #[serde(alias = "λ_smo")]
    pub lambda_smo: f64,
    #[serde(alias = "λ_div")]
    pub lambda_div: f64,
    /// RBF kernel scale of the diversity energy.
    #[serde(alias = "σ_d")]
    pub sigma_d: f64,
    /// Latent samples drawn per session in stage 2.
    #[serde(rename = "M")]
    pub samples: usize,
    pub seed: u64,
    pub frame_rate: f64,

    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub batch_size: usize,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,

    /// Ablation switches.
    pub use_vim: bool,
    pub use_mim: bool,
    pub use_rec_a: bool,
    /// When false the generator takes the distribution mean instead of sampling.
    pub stochastic: bool,

    /// Synthetic dataset description.
    pub n_sessions: usize,
    #[serde(rename = "T")]
    pub frames: usize,
    pub n_classes: usize,
    pub lag_min: usize,
    pub lag_max: usize,
    pub noise_scale: f64,
    /// Fraction of sessions routed to the held-out split.
    pub test_fraction: f64,
    /// TLCC lag search radius; 0 means `w`.
    pub max_lag: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            coeff_dim: 56,
            d: 128,
            d_a: 32,
            w: 8,
            k: 2,
            alpha: 0.5,
            p: 2,
            heads: 4,
            layers: 2,
            ffn_mult: 2,
            lambda_kl: 1e-4,
            lambda_smo: 10.0,
            lambda_div: 100.0,
            sigma_d: 64.0 * 56.0,
            samples: 2,
            seed: 0,
            frame_rate: 25.0,
            lr: 1e-4,
            weight_decay: 0.01,
            grad_clip: 1.0,
            batch_size: 8,
            epochs_stage1: 100,
            epochs_stage2: 50,
            use_vim: true,
            use_mim: true,
            use_rec_a: true,
            stochastic: true,
            n_sessions: 64,
            frames: 64,
            n_classes: 2,
            lag_min: 0,
            lag_max: 4,
            noise_scale: 0.05,
            test_fraction: 0.25,
            max_lag: 0,
        }
    }
}

const ALIASES: &[(&str, &str)] = &[
    ("α", "alpha"),
    ("λ_kl", "lambda_kl"),
    ("λ_smo", "lambda_smo"),
    ("λ_div", "lambda_div"),
    ("σ_d", "sigma_d"),
];

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies one `key=value` override; the value is parsed as a TOML literal.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let key = ALIASES.iter().find(|(a, _)| *a == key).map_or(key, |(_, c)| *c);
        let raw = raw.trim();
        let mut table = toml::Table::try_from(&*self).expect("config serializes");
        let current = table
            .get(key)
            .ok_or_else(|| Error::config(format!("unknown config key `{key}`")))?;
        let parsed: toml::Value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let value = match (current, parsed) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert(key.to_string(), value);
        let cfg: ModelConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("`{key}`: {}", e.message())))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    pub fn max_lag(&self) -> usize {
        if self.max_lag == 0 {
            self.w
        } else {
            self.max_lag
        }
    }

    pub fn ffn_dim(&self) -> usize {
        self.d * self.ffn_mult
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, why: &str| Err(Error::config(format!("{field}: {why}")));
        if self.coeff_dim == 0 {
            return fail("D", "must be positive");
        }
        if self.d == 0 || self.d % 2 != 0 {
            return fail("d", "must be positive and even");
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return fail("heads", "must divide d");
        }
        if self.d_a == 0 {
            return fail("d_a", "must be positive");
        }
        if self.w < 2 {
            return fail("w", "must be at least 2");
        }
        if self.k == 0 {
            return fail("k", "must be positive");
        }
        if self.p == 0 {
            return fail("p", "must be positive");
        }
        if self.layers == 0 {
            return fail("layers", "must be positive");
        }
        if self.ffn_mult == 0 {
            return fail("ffn_mult", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail("alpha", "must lie in [0, 1]");
        }
        for (name, v) in [
            ("lambda_kl", self.lambda_kl),
            ("lambda_smo", self.lambda_smo),
            ("lambda_div", self.lambda_div),
            ("weight_decay", self.weight_decay),
            ("noise_scale", self.noise_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(name, "must be a non-negative finite number");
            }
        }
        if !(self.sigma_d > 0.0 && self.sigma_d.is_finite()) {
            return fail("sigma_d", "must be positive");
        }
        if !(self.lr > 0.0) {
            return fail("lr", "must be positive");
        }
        if !(self.grad_clip > 0.0) {
            return fail("grad_clip", "must be positive");
        }
        if !(self.frame_rate > 0.0) {
            return fail("frame_rate", "must be positive");
        }
        if self.samples < 2 {
            return fail("M", "must be at least 2");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be positive");
        }
        if self.frames == 0 || self.frames % self.w != 0 {
            return fail("T", "must be a positive multiple of w");
        }
        if self.n_classes == 0 {
            return fail("n_classes", "must be positive");
        }
        if self.n_sessions < self.n_classes {
            return fail("n_sessions", "must be at least n_classes");
        }
        if self.lag_min > self.lag_max || self.lag_max > self.w {
            return fail("lag_max", "lag range must lie within [0, w]");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return fail("test_fraction", "must lie in [0, 1)");
        }
        Ok(())
    }
}
