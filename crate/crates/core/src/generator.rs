//! Variational reaction generation: the conditional interaction encoder that
//! maps past interactions to a Gaussian over reaction latents, latent sampling
//! with momentum and linear interpolation across a window, the sampling decoder,
//! and the listener reaction decoder.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::attention::window_causal_bias;
use crate::autograd::{Graph, ParamStore, Scalar, Var};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::nn::{AttentionBlock, Init, LayerNorm, Linear, ParamSpec};

/// Bounds on the log standard deviation produced by the encoder.
pub const LOG_SIGMA_MIN: f64 = -10.0;
pub const LOG_SIGMA_MAX: f64 = 10.0;

/// Sinusoidal encodings for absolute positions `start..start+len`.
pub fn positional_encoding<S: Scalar>(start: usize, len: usize, d: usize) -> Array2<S> {
    assert!(d % 2 == 0, "positional encoding width must be even");
    Array2::from_shape_fn((len, d), |(r, c)| {
        let t = (start + r) as f64;
        let i = (c / 2) as f64;
        let angle = t / 10000f64.powf(2.0 * i / d as f64);
        S::c(if c % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Diagonal Gaussian over the reaction latent, kept as `(mu, log sigma)` rows.
#[derive(Debug, Clone, Copy)]
pub struct ReactionDistribution {
    pub mu: Var,
    pub log_sigma: Var,
}

impl ReactionDistribution {
    pub fn sigma<S: Scalar>(&self, g: &Graph<S>) -> Array2<S> {
        g.value(self.log_sigma).mapv(S::exp)
    }
}

/// Conditional interaction encoder: a transformer over `[mu_token; sigma_token; history]`
/// whose two token outputs become the mean and log standard deviation.
#[derive(Debug, Clone)]
pub struct InteractionEncoder {
    mu_token: String,
    sigma_token: String,
    blocks: Vec<AttentionBlock>,
    norm: LayerNorm,
    mu_head: Linear,
    sigma_head: Linear,
    d: usize,
}

impl InteractionEncoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            mu_token: "cie.mu_token".into(),
            sigma_token: "cie.sigma_token".into(),
            blocks: (0..cfg.layers)
                .map(|l| AttentionBlock::new(&format!("cie.block{l}"), cfg.d, cfg.heads, Some(cfg.ffn_dim())))
                .collect(),
            norm: LayerNorm::new("cie.norm", cfg.d),
            mu_head: Linear::new("cie.mu", cfg.d, cfg.d).with_std(0.02),
            sigma_head: Linear::new("cie.log_sigma", cfg.d, cfg.d).with_std(0.02),
            d: cfg.d,
        }
    }

    pub fn specs(&self, out: &mut Vec<ParamSpec>) {
        out.push(ParamSpec { name: self.mu_token.clone(), rows: 1, cols: self.d, init: Init::Normal(1.0) });
        out.push(ParamSpec { name: self.sigma_token.clone(), rows: 1, cols: self.d, init: Init::Normal(1.0) });
        for b in &self.blocks {
            b.specs(out);
        }
        self.norm.specs(out);
        self.mu_head.specs(out);
        self.sigma_head.specs(out);
    }

    pub fn heads(&self) -> (&Linear, &Linear) {
        (&self.mu_head, &self.sigma_head)
    }

    /// Distribution of the next window's latent given the synchronized history
    /// (`None` for the first window, where only the learned tokens remain).
    pub fn distribution<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, history: Option<Var>) -> Result<ReactionDistribution> {
        let mu_tok = g.param(ps, &self.mu_token);
        let sigma_tok = g.param(ps, &self.sigma_token);
        let mut parts = vec![mu_tok, sigma_tok];
        parts.extend(history);
        let mut x = g.concat_rows(&parts);
        let (last, rest) = self.blocks.split_last().expect("at least one layer");
        for b in rest {
            x = b.forward(g, ps, x, None, None)?;
        }
        // only the two token positions are read out
        let tokens = last.forward_prefix(g, ps, x, 2)?;
        let tokens = self.norm.forward(g, ps, tokens);
        let mu_in = g.slice_rows(tokens, 0, 1);
        let sigma_in = g.slice_rows(tokens, 1, 1);
        let mu = self.mu_head.forward(g, ps, mu_in);
        let raw = self.sigma_head.forward(g, ps, sigma_in);
        let log_sigma = g.clamp(raw, S::c(LOG_SIGMA_MIN), S::c(LOG_SIGMA_MAX));
        Ok(ReactionDistribution { mu, log_sigma })
    }
}

/// Standard normal row for one reparameterized draw.
pub fn standard_normal<S: Scalar, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Array2<S> {
    Array2::from_shape_simple_fn((1, dim), || S::c(rng.sample::<f64, _>(StandardNormal)))
}

/// `z* = mu + sigma * eps`; gradients reach `mu` and `log sigma`.
pub fn sample_latent<S: Scalar>(g: &mut Graph<S>, dist: &ReactionDistribution, eps: Array2<S>) -> Var {
    let sigma = g.exp(dist.log_sigma);
    let e = g.constant(eps);
    let spread = g.mul(sigma, e);
    g.add(dist.mu, spread)
}

/// `z_t = alpha * z_prev + (1 - alpha) * z_star`.
pub fn momentum_blend<S: Scalar>(g: &mut Graph<S>, z_prev: Var, z_star: Var, alpha: f64) -> Var {
    let a = g.scale(z_prev, S::c(alpha));
    let b = g.scale(z_star, S::c(1.0 - alpha));
    g.add(a, b)
}

/// `w x d_z` latents stepping linearly from `z_prev` (exclusive) to `z_t` (inclusive):
/// row `r` (1-based) is `z_prev + r (z_t - z_prev) / w`; the last row is `z_t` itself.
pub fn interpolate_latents<S: Scalar>(g: &mut Graph<S>, z_prev: Var, z_t: Var, w: usize) -> Var {
    assert!(w >= 1, "window must hold at least one frame");
    if w == 1 {
        return z_t;
    }
    let diff = g.sub(z_t, z_prev);
    let ones = g.constant(Array2::ones((w - 1, 1)));
    let steps = g.constant(Array2::from_shape_fn((w - 1, 1), |(r, _)| S::c((r + 1) as f64 / w as f64)));
    let base = g.matmul(ones, z_prev);
    let delta = g.matmul(steps, diff);
    let head = g.add(base, delta);
    g.concat_rows(&[head, z_t])
}

/// Turns window latents into reaction embeddings by cross-attending to the
/// window's positional encodings.
#[derive(Debug, Clone)]
pub struct SamplingDecoder {
    input: Linear,
    block: AttentionBlock,
}

impl SamplingDecoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            input: Linear::new("sd.in", cfg.d, cfg.d),
            block: AttentionBlock::new("sd.block", cfg.d, cfg.heads, Some(cfg.ffn_dim())),
        }
    }

    pub fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.input.specs(out);
        self.block.specs(out);
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, latents: Var, positions: Var) -> Result<Var> {
        let x = self.input.forward(g, ps, latents);
        self.block.forward(g, ps, x, Some(positions), None)
    }
}

/// Listener reaction decoder: window-causal self-attention then a per-frame head to `D` coefficients.
#[derive(Debug, Clone)]
pub struct ReactionDecoder {
    blocks: Vec<AttentionBlock>,
    norm: LayerNorm,
    head: Linear,
    w: usize,
    p: usize,
}

impl ReactionDecoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            blocks: vec![AttentionBlock::new("decoder.block0", cfg.d, cfg.heads, Some(cfg.ffn_dim()))],
            norm: LayerNorm::new("decoder.norm", cfg.d),
            head: Linear::new("decoder.head", cfg.d, cfg.coeff_dim),
            w: cfg.w,
            p: cfg.p,
        }
    }

    pub fn specs(&self, out: &mut Vec<ParamSpec>) {
        for b in &self.blocks {
            b.specs(out);
        }
        self.norm.specs(out);
        self.head.specs(out);
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    /// Decodes one or more consecutive windows; attention never crosses a window boundary.
    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, synced: Var) -> Result<Var> {
        let len = g.shape(synced).0;
        let bias = window_causal_bias(len, self.w, self.p)?;
        let mut x = synced;
        for b in &self.blocks {
            x = b.forward(g, ps, x, None, Some(&bias))?;
        }
        let x = self.norm.forward(g, ps, x);
        Ok(self.head.forward(g, ps, x))
    }
}
