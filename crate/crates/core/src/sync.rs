//! Speaker-listener synchronization.
//!
//! Reaction embeddings (queries) are synchronized first with the aligned
//! speaker face embeddings (VIM) and then with the speech embeddings (MIM).
//! Queries carry absolute frame positions so the same modules serve both the
//! past interaction history and the current window.

use ndarray::Array2;

use crate::attention::{mim_bias_at, vim_bias_at};
use crate::autograd::{Graph, ParamStore, Scalar, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::generator::positional_encoding;
use crate::nn::{AttentionBlock, Linear, ParamSpec};

#[derive(Debug, Clone)]
pub struct SyncModule {
    embed: Linear,
    vim: AttentionBlock,
    mim: AttentionBlock,
    d: usize,
    k: usize,
    p: usize,
    use_vim: bool,
    use_mim: bool,
}

impl SyncModule {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self {
            embed: Linear::new("sync.embed", cfg.coeff_dim, cfg.d),
            vim: AttentionBlock::new("sync.vim", cfg.d, cfg.heads, Some(cfg.ffn_dim())),
            mim: AttentionBlock::new("sync.mim", cfg.d, cfg.heads, Some(cfg.ffn_dim())),
            d: cfg.d,
            k: cfg.k,
            p: cfg.p,
            use_vim: cfg.use_vim,
            use_mim: cfg.use_mim,
        }
    }

    pub fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.embed.specs(out);
        self.vim.specs(out);
        self.mim.specs(out);
    }

    pub fn embed_layer(&self) -> &Linear {
        &self.embed
    }

    pub fn vim_block(&self) -> &AttentionBlock {
        &self.vim
    }

    pub fn mim_block(&self) -> &AttentionBlock {
        &self.mim
    }

    /// Per-frame embedding of reaction coefficients at absolute positions `start..`.
    pub fn embed_past_reactions<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, coeffs: Var, start: usize) -> Var {
        let len = g.shape(coeffs).0;
        let h = self.embed.forward(g, ps, coeffs);
        let pe = g.constant(positional_encoding(start, len, self.d));
        g.add(h, pe)
    }

    /// Synchronizes queries at positions `start..start+L` with aligned face embeddings.
    ///
    /// `faces` must span exactly the frames up to the last query.
    pub fn vim<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, queries: Var, start: usize, faces: Var) -> Result<Var> {
        let tq = g.shape(queries).0;
        let tk = g.shape(faces).0;
        if tk != start + tq {
            return Err(Error::dim(format!("face keys span {tk} frames, queries end at {}", start + tq)));
        }
        if !self.use_vim {
            return Ok(queries);
        }
        let bias = vim_bias_at(start, tq, tk, self.p)?;
        self.vim.forward(g, ps, queries, Some(faces), Some(&bias))
    }

    /// Synchronizes queries at positions `start..start+L` with speech embeddings.
    ///
    /// `speech` must span exactly `k` times the frames up to the last query.
    pub fn mim<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, queries: Var, start: usize, speech: Var) -> Result<Var> {
        let tq = g.shape(queries).0;
        let tk = g.shape(speech).0;
        if tk != self.k * (start + tq) {
            return Err(Error::dim(format!("speech keys span {tk} frames, expected k·{} = {}", start + tq, self.k * (start + tq))));
        }
        if !self.use_mim {
            return Ok(queries);
        }
        let bias = mim_bias_at(start, tq, tk, self.k, self.p)?;
        self.mim.forward(g, ps, queries, Some(speech), Some(&bias))
    }

    /// VIM then MIM over keys truncated to the query horizon.
    pub fn synchronize<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        ps: &ParamStore<S>,
        queries: Var,
        start: usize,
        faces: Var,
        speech: Var,
    ) -> Result<Var> {
        let end = start + g.shape(queries).0;
        let faces = prefix(g, faces, end)?;
        let speech = prefix(g, speech, self.k * end)?;
        let visual = self.vim(g, ps, queries, start, faces)?;
        self.mim(g, ps, visual, start, speech)
    }

    /// Embeds and synchronizes a block of reaction coefficients starting at `start`.
    pub fn encode_interaction<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        ps: &ParamStore<S>,
        coeffs: Var,
        start: usize,
        faces: Var,
        speech: Var,
    ) -> Result<Var> {
        let h = self.embed_past_reactions(g, ps, coeffs, start);
        self.synchronize(g, ps, h, start, faces, speech)
    }
}

fn prefix<S: Scalar>(g: &mut Graph<S>, v: Var, len: usize) -> Result<Var> {
    let rows = g.shape(v).0;
    match rows.cmp(&len) {
        std::cmp::Ordering::Equal => Ok(v),
        std::cmp::Ordering::Greater => Ok(g.slice_rows(v, 0, len)),
        std::cmp::Ordering::Less => Err(Error::dim(format!("sequence has {rows} rows, need {len}"))),
    }
}

/// Past reactions and their synchronized interaction embeddings, grown by one
/// window per generation step. Synchronized rows are cached: each step only
/// encodes the newly appended window.
#[derive(Debug, Clone, Default)]
pub struct PastInteractionState {
    chunks: Vec<Var>,
    reactions: Vec<Var>,
    len: usize,
}

impl PastInteractionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends reaction frames and their synchronized embeddings.
    ///
    /// `faces`/`speech` must cover at least the new horizon.
    pub fn extend<S: Scalar>(
        &mut self,
        g: &mut Graph<S>,
        ps: &ParamStore<S>,
        sync: &SyncModule,
        reactions: Var,
        faces: Var,
        speech: Var,
    ) -> Result<()> {
        let rows = g.shape(reactions).0;
        let chunk = sync.encode_interaction(g, ps, reactions, self.len, faces, speech)?;
        self.chunks.push(chunk);
        self.reactions.push(reactions);
        self.len += rows;
        Ok(())
    }

    /// All synchronized history rows, or `None` before the first window.
    pub fn synced<S: Scalar>(&self, g: &mut Graph<S>) -> Option<Var> {
        if self.chunks.is_empty() {
            None
        } else {
            Some(g.concat_rows(&self.chunks))
        }
    }

    pub fn reactions<S: Scalar>(&self, g: &mut Graph<S>) -> Option<Var> {
        if self.reactions.is_empty() {
            None
        } else {
            Some(g.concat_rows(&self.reactions))
        }
    }
}

/// Recomputes the synchronized history from scratch in one batch.
pub fn encode_past_interaction<S: Scalar>(
    g: &mut Graph<S>,
    ps: &ParamStore<S>,
    sync: &SyncModule,
    reactions: &Array2<S>,
    faces: Var,
    speech: Var,
) -> Result<Option<Var>> {
    if reactions.nrows() == 0 {
        return Ok(None);
    }
    let r = g.constant(reactions.clone());
    sync.encode_interaction(g, ps, r, 0, faces, speech).map(Some)
}
