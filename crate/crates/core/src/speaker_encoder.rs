//! Speaker behaviour encoding: causal speech and face encoders, speech-aligned
//! face embeddings, and the speaker 3D reconstruction head.

use crate::attention::{build_mim_bias, build_vim_bias};
use crate::autograd::{Graph, ParamStore, Scalar, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::generator::positional_encoding;
use crate::nn::{AttentionBlock, CausalConv, Linear, ParamSpec};

const CONV_KERNEL: usize = 3;

/// Which quantity an embedding sequence carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Speech,
    Face,
    AlignedFace,
    Reaction,
    Interaction,
}

/// One causal stream encoder: input projection, causal convolution,
/// positional encoding, step-biased causal self-attention, output projection.
#[derive(Debug, Clone)]
pub struct StreamEncoder {
    input: Linear,
    conv: CausalConv,
    blocks: Vec<AttentionBlock>,
    output: Linear,
    in_dim: usize,
    d: usize,
    p: usize,
}

impl StreamEncoder {
    fn new(name: &str, in_dim: usize, cfg: &ModelConfig) -> Self {
        Self {
            input: Linear::new(&format!("{name}.in"), in_dim, cfg.d),
            conv: CausalConv::new(&format!("{name}.conv"), cfg.d, CONV_KERNEL),
            blocks: (0..cfg.layers)
                .map(|l| AttentionBlock::new(&format!("{name}.block{l}"), cfg.d, cfg.heads, Some(cfg.ffn_dim())))
                .collect(),
            output: Linear::new(&format!("{name}.out"), cfg.d, cfg.d),
            in_dim,
            d: cfg.d,
            p: cfg.p,
        }
    }

    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.input.specs(out);
        self.conv.specs(out);
        for b in &self.blocks {
            b.specs(out);
        }
        self.output.specs(out);
    }

    pub fn output(&self) -> &Linear {
        &self.output
    }

    fn forward<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, x: Var) -> Result<Var> {
        let (len, width) = g.shape(x);
        if width != self.in_dim {
            return Err(Error::dim(format!("input width {width} ≠ expected {}", self.in_dim)));
        }
        let h = self.input.forward(g, ps, x);
        let h = self.conv.forward(g, ps, h);
        let pe = g.constant(positional_encoding(0, len, self.d));
        let mut h = g.add(h, pe);
        let bias = build_vim_bias(len, len, self.p)?;
        for b in &self.blocks {
            h = b.forward(g, ps, h, None, Some(&bias))?;
        }
        Ok(self.output.forward(g, ps, h))
    }
}

/// Graph handles for an encoded speaker behaviour.
#[derive(Debug, Clone, Copy)]
pub struct SpeakerFeatures {
    /// Speech embeddings, `k*T x d`.
    pub speech: Var,
    /// Face embeddings before alignment, `T x d`.
    pub faces: Var,
    /// Speech-aligned face embeddings, `T x d`.
    pub aligned: Var,
}

#[derive(Debug, Clone)]
pub struct SpeakerEncoder {
    audio: StreamEncoder,
    face: StreamEncoder,
    align: AttentionBlock,
    recon: Linear,
    k: usize,
    p: usize,
}

impl SpeakerEncoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            audio: StreamEncoder::new("speaker.audio", cfg.d_a, cfg),
            face: StreamEncoder::new("speaker.face", cfg.coeff_dim, cfg),
            align: AttentionBlock::new("speaker.align", cfg.d, cfg.heads, None),
            recon: Linear::new("speaker.recon", cfg.d, cfg.coeff_dim),
            k: cfg.k,
            p: cfg.p,
        }
    }

    pub fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.audio.specs(out);
        self.face.specs(out);
        self.align.specs(out);
        self.recon.specs(out);
    }

    pub fn audio_encoder(&self) -> &StreamEncoder {
        &self.audio
    }

    pub fn face_encoder(&self) -> &StreamEncoder {
        &self.face
    }

    pub fn align_output(&self) -> &Linear {
        self.align.attention().output()
    }

    pub fn recon_head(&self) -> &Linear {
        &self.recon
    }

    /// `k*T x d_a` speech features to `k*T x d` causal speech embeddings.
    pub fn encode_audio<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, audio: Var) -> Result<Var> {
        self.audio.forward(g, ps, audio)
    }

    /// `T x D` coefficients to `T x d` causal face embeddings.
    pub fn encode_faces<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, coeffs: Var) -> Result<Var> {
        self.face.forward(g, ps, coeffs)
    }

    /// Cross-attends faces (queries) to speech under the speech-stream bias, with a residual path.
    pub fn align_speaker<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, faces: Var, speech: Var) -> Result<Var> {
        let t = g.shape(faces).0;
        let ks = g.shape(speech).0;
        if ks != self.k * t {
            return Err(Error::dim(format!("speech length {ks} ≠ k·T = {}", self.k * t)));
        }
        let bias = build_mim_bias(t, ks, self.k, self.p)?;
        self.align.forward(g, ps, faces, Some(speech), Some(&bias))
    }

    /// Per-frame affine head from aligned embeddings to `D` coefficients.
    pub fn reconstruct_speaker<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, aligned: Var) -> Var {
        self.recon.forward(g, ps, aligned)
    }

    pub fn encode<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, coeffs: Var, audio: Var) -> Result<SpeakerFeatures> {
        let speech = self.encode_audio(g, ps, audio)?;
        let faces = self.encode_faces(g, ps, coeffs)?;
        let aligned = self.align_speaker(g, ps, faces, speech)?;
        Ok(SpeakerFeatures { speech, faces, aligned })
    }
}
