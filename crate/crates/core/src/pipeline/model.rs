//! The full generator: speaker encoding, past-interaction synchronization,
//! per-window latent sampling and decoding.

use ndarray::{s, Array2};
use rand::Rng;

use crate::autograd::{cast, Graph, ParamStore, Scalar, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::generator::{
    interpolate_latents, momentum_blend, positional_encoding, sample_latent, standard_normal, InteractionEncoder,
    ReactionDecoder, ReactionDistribution, SamplingDecoder,
};
use crate::nn::{init_params, ParamSpec};
use crate::speaker_encoder::{SpeakerEncoder, SpeakerFeatures};
use crate::sync::{PastInteractionState, SyncModule};
use crate::types::Session;

/// One session's matrices in the working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionInputs<S> {
    pub speaker: Array2<S>,
    pub audio: Array2<S>,
    pub listener: Array2<S>,
}

impl<S: Scalar> SessionInputs<S> {
    pub fn from_session(s: &Session) -> Self {
        Self {
            speaker: cast(&s.speaker_coeffs.frames),
            audio: cast(&s.speaker_audio.frames),
            listener: cast(&s.listener_coeffs.frames),
        }
    }
}

/// Graph handles of one window's generation.
#[derive(Debug, Clone, Copy)]
pub struct WindowOutput {
    pub dist: ReactionDistribution,
    pub z_star: Var,
    pub z: Var,
    pub coeffs: Var,
}

/// Graph handles of a whole-sequence forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Generated listener coefficients, `T x D`.
    pub listener: Var,
    /// Reconstructed speaker coefficients, `T x D`.
    pub speaker: Var,
    pub dists: Vec<ReactionDistribution>,
    pub z_star: Vec<Var>,
    pub z: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct ReactModel {
    cfg: ModelConfig,
    pub speaker: SpeakerEncoder,
    pub sync: SyncModule,
    pub cie: InteractionEncoder,
    pub sd: SamplingDecoder,
    pub decoder: ReactionDecoder,
}

impl ReactModel {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            speaker: SpeakerEncoder::new(cfg),
            sync: SyncModule::new(cfg),
            cie: InteractionEncoder::new(cfg),
            sd: SamplingDecoder::new(cfg),
            decoder: ReactionDecoder::new(cfg),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        self.speaker.specs(&mut out);
        self.sync.specs(&mut out);
        self.cie.specs(&mut out);
        self.sd.specs(&mut out);
        self.decoder.specs(&mut out);
        out
    }

    pub fn init_params<S: Scalar>(&self, seed: u64) -> ParamStore<S> {
        init_params(&self.specs(), seed)
    }

    /// Checks that `ps` holds exactly this model's parameters with matching shapes.
    pub fn check_params<S: Scalar>(&self, ps: &ParamStore<S>) -> Result<()> {
        let specs = self.specs();
        if specs.len() != ps.len() {
            return Err(Error::config(format!("parameter count {} ≠ model's {}", ps.len(), specs.len())));
        }
        for spec in &specs {
            let v = ps.get(&spec.name).ok_or_else(|| Error::config(format!("missing parameter {}", spec.name)))?;
            if v.dim() != (spec.rows, spec.cols) {
                return Err(Error::config(format!(
                    "parameter {} has shape {:?}, model expects {:?}",
                    spec.name,
                    v.dim(),
                    (spec.rows, spec.cols)
                )));
            }
        }
        Ok(())
    }

    pub fn windows(&self, frames: usize) -> Result<usize> {
        if frames == 0 || frames % self.cfg.w != 0 {
            return Err(Error::dim(format!("sequence length {frames} is not a positive multiple of w = {}", self.cfg.w)));
        }
        Ok(frames / self.cfg.w)
    }

    pub fn check_inputs<S: Scalar>(&self, speaker: &Array2<S>, audio: &Array2<S>) -> Result<usize> {
        let n = self.windows(speaker.nrows())?;
        if speaker.ncols() != self.cfg.coeff_dim {
            return Err(Error::dim(format!("speaker coefficients have width {} ≠ D = {}", speaker.ncols(), self.cfg.coeff_dim)));
        }
        if audio.nrows() != self.cfg.k * speaker.nrows() {
            return Err(Error::dim(format!("audio length {} ≠ k·T = {}", audio.nrows(), self.cfg.k * speaker.nrows())));
        }
        Ok(n)
    }

    /// Standard normal noise per window, or zeros when sampling is disabled.
    pub fn draw_eps<S: Scalar, R: Rng + ?Sized>(&self, rng: &mut R, windows: usize) -> Vec<Array2<S>> {
        (0..windows)
            .map(|_| if self.cfg.stochastic { standard_normal(rng, self.cfg.d) } else { Array2::zeros((1, self.cfg.d)) })
            .collect()
    }

    pub fn speaker_features<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, coeffs: Var, audio: Var) -> Result<SpeakerFeatures> {
        self.speaker.encode(g, ps, coeffs, audio)
    }

    fn latents<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        ps: &ParamStore<S>,
        history: Option<Var>,
        z_prev: Option<Var>,
        eps: &Array2<S>,
    ) -> Result<(ReactionDistribution, Var, Var, Var)> {
        let dist = self.cie.distribution(g, ps, history)?;
        let z_star = sample_latent(g, &dist, eps.clone());
        let z_prev = z_prev.unwrap_or_else(|| g.constant(Array2::zeros((1, self.cfg.d))));
        let z = momentum_blend(g, z_prev, z_star, self.cfg.alpha);
        let zs = interpolate_latents(g, z_prev, z, self.cfg.w);
        Ok((dist, z_star, z, zs))
    }

    fn window_embeddings<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, zs: Var, start: usize) -> Result<Var> {
        let pe = g.constant(positional_encoding(start, self.cfg.w, self.cfg.d));
        self.sd.forward(g, ps, zs, pe)
    }

    /// Generates the window starting at frame `start` from the synchronized history.
    pub fn window_step<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        ps: &ParamStore<S>,
        feats: &SpeakerFeatures,
        history: Option<Var>,
        start: usize,
        z_prev: Option<Var>,
        eps: &Array2<S>,
    ) -> Result<WindowOutput> {
        let (dist, z_star, z, zs) = self.latents(g, ps, history, z_prev, eps)?;
        let emb = self.window_embeddings(g, ps, zs, start)?;
        let synced = self.sync.synchronize(g, ps, emb, start, feats.aligned, feats.speech)?;
        let coeffs = self.decoder.forward(g, ps, synced)?;
        Ok(WindowOutput { dist, z_star, z, coeffs })
    }

    /// Whole-sequence pass with a given reaction history: window `n` conditions
    /// on `history` rows before `n*w`. With the ground-truth listener this is
    /// teacher forcing; with generated reactions it replays a generation offline.
    pub fn forward_with_history<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        ps: &ParamStore<S>,
        speaker: &Array2<S>,
        audio: &Array2<S>,
        history: &Array2<S>,
        eps: &[Array2<S>],
    ) -> Result<ForwardPass> {
        let n = self.check_inputs(speaker, audio)?;
        if history.dim() != speaker.dim() {
            return Err(Error::dim(format!("history shape {:?} ≠ speaker shape {:?}", history.dim(), speaker.dim())));
        }
        check_eps(eps, n)?;
        let w = self.cfg.w;
        let sv = g.constant(speaker.clone());
        let av = g.constant(audio.clone());
        let feats = self.speaker_features(g, ps, sv, av)?;
        let speaker_pred = self.speaker.reconstruct_speaker(g, ps, feats.aligned);

        let past = if n > 1 {
            let h = g.constant(history.slice(s![..(n - 1) * w, ..]).to_owned());
            Some(self.sync.encode_interaction(g, ps, h, 0, feats.aligned, feats.speech)?)
        } else {
            None
        };

        let mut dists = Vec::with_capacity(n);
        let mut z_star = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        let mut embs = Vec::with_capacity(n);
        let mut z_prev = None;
        for (i, e) in eps.iter().enumerate() {
            let hist = if i > 0 { past.map(|p| g.slice_rows(p, 0, i * w)) } else { None };
            let (dist, zs_star, zt, zs) = self.latents(g, ps, hist, z_prev, e)?;
            embs.push(self.window_embeddings(g, ps, zs, i * w)?);
            dists.push(dist);
            z_star.push(zs_star);
            z.push(zt);
            z_prev = Some(zt);
        }
        let emb = g.concat_rows(&embs);
        let synced = self.sync.synchronize(g, ps, emb, 0, feats.aligned, feats.speech)?;
        let listener = self.decoder.forward(g, ps, synced)?;
        Ok(ForwardPass { listener, speaker: speaker_pred, dists, z_star, z })
    }

    /// Whole-sequence pass on self-generated history: each window conditions on
    /// the model's own (gradient-detached) earlier windows.
    pub fn rollout<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        ps: &ParamStore<S>,
        speaker: &Array2<S>,
        audio: &Array2<S>,
        eps: &[Array2<S>],
    ) -> Result<ForwardPass> {
        let n = self.check_inputs(speaker, audio)?;
        check_eps(eps, n)?;
        let w = self.cfg.w;
        let sv = g.constant(speaker.clone());
        let av = g.constant(audio.clone());
        let feats = self.speaker_features(g, ps, sv, av)?;
        let speaker_pred = self.speaker.reconstruct_speaker(g, ps, feats.aligned);

        let mut state = PastInteractionState::new();
        let mut out = ForwardPass { listener: sv, speaker: speaker_pred, dists: vec![], z_star: vec![], z: vec![] };
        let mut windows = Vec::with_capacity(n);
        let mut z_prev = None;
        for (i, e) in eps.iter().enumerate() {
            if i > 0 {
                let prev = g.detach(windows[i - 1]);
                state.extend(g, ps, &self.sync, prev, feats.aligned, feats.speech)?;
            }
            let hist = state.synced(g);
            let step = self.window_step(g, ps, &feats, hist, i * w, z_prev, e)?;
            windows.push(step.coeffs);
            out.dists.push(step.dist);
            out.z_star.push(step.z_star);
            out.z.push(step.z);
            z_prev = Some(step.z);
        }
        out.listener = g.concat_rows(&windows);
        Ok(out)
    }
}

fn check_eps<S: Scalar>(eps: &[Array2<S>], windows: usize) -> Result<()> {
    if eps.len() != windows {
        return Err(Error::dim(format!("{} noise rows for {windows} windows", eps.len())));
    }
    Ok(())
}
