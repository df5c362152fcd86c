//! Online sliding-window generation, its offline replay, and evaluation.

use std::collections::BTreeMap;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autograd::{cast, Graph, ParamStore, Scalar};
use crate::error::{Error, Result};
use crate::metrics::{div_c, div_f, frc, frd, sample_mse, tlcc, EvalReport, SessionMetrics};
use crate::pipeline::model::ReactModel;
use crate::seed::derive_seed;
use crate::sync::PastInteractionState;
use crate::types::Session;

/// Per-window latent values recorded during generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTrace<S> {
    pub eps: Vec<Array2<S>>,
    pub mu: Vec<Array2<S>>,
    pub sigma: Vec<Array2<S>>,
    pub z_star: Vec<Array2<S>>,
    pub z: Vec<Array2<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation<S> {
    /// `T x D` listener reaction.
    pub coeffs: Array2<S>,
    pub trace: GenerationTrace<S>,
}

/// Generates a listener reaction window by window. At step `t = w, 2w, ..., T`
/// the speaker is encoded up to `t`, the newest generated window is appended
/// to the synchronized history, and the next `w` frames are sampled and decoded.
pub fn generate_online<S: Scalar>(
    model: &ReactModel,
    ps: &ParamStore<S>,
    speaker: &Array2<S>,
    audio: &Array2<S>,
    seed: u64,
) -> Result<Generation<S>> {
    let n = model.check_inputs(speaker, audio)?;
    let cfg = model.config();
    let (w, k) = (cfg.w, cfg.k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps_all: Vec<Array2<S>> = model.draw_eps(&mut rng, n);

    let mut g = Graph::new();
    let mut state = PastInteractionState::new();
    let mut out = Array2::zeros((n * w, cfg.coeff_dim));
    let mut trace = GenerationTrace { eps: vec![], mu: vec![], sigma: vec![], z_star: vec![], z: vec![] };
    let mut z_prev = None;
    for (i, eps) in eps_all.iter().enumerate() {
        let t = (i + 1) * w;
        let sv = g.constant(speaker.slice(s![..t, ..]).to_owned());
        let av = g.constant(audio.slice(s![..k * t, ..]).to_owned());
        let feats = model.speaker_features(&mut g, ps, sv, av)?;
        if i > 0 {
            let prev = g.constant(out.slice(s![(i - 1) * w..i * w, ..]).to_owned());
            state.extend(&mut g, ps, &model.sync, prev, feats.aligned, feats.speech)?;
        }
        let hist = state.synced(&mut g);
        let step = model.window_step(&mut g, ps, &feats, hist, i * w, z_prev, eps)?;
        out.slice_mut(s![i * w..t, ..]).assign(g.value(step.coeffs));
        trace.eps.push(eps.clone());
        trace.mu.push(g.value(step.dist.mu).clone());
        trace.sigma.push(step.dist.sigma(&g));
        trace.z_star.push(g.value(step.z_star).clone());
        trace.z.push(g.value(step.z).clone());
        z_prev = Some(step.z);
    }
    Ok(Generation { coeffs: out, trace })
}

/// Recomputes a generation in one whole-sequence pass from its recorded noise,
/// using the generated reaction as history.
pub fn replay_offline<S: Scalar>(
    model: &ReactModel,
    ps: &ParamStore<S>,
    speaker: &Array2<S>,
    audio: &Array2<S>,
    generation: &Generation<S>,
) -> Result<Array2<S>> {
    let mut g = Graph::new();
    let pass = model.forward_with_history(&mut g, ps, speaker, audio, &generation.coeffs, &generation.trace.eps)?;
    Ok(g.value(pass.listener).clone())
}

/// Seed of sample `sample` for the session at `index`.
pub fn sample_seed(master: u64, index: usize, sample: usize) -> u64 {
    derive_seed(master, &[index as u64, sample as u64])
}

/// Generates `n_samples` reactions for each evaluated session and scores them.
///
/// `neighbors` of each session are looked up in `pool`; ids missing from the pool are skipped.
pub fn evaluate<S: Scalar>(
    model: &ReactModel,
    ps: &ParamStore<S>,
    sessions: &[&Session],
    pool: &[Session],
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<(EvalReport, Vec<Vec<Array2<S>>>)> {
    if sessions.is_empty() {
        return Err(Error::data("no sessions to evaluate"));
    }
    if n_samples == 0 {
        return Err(Error::config("samples must be positive"));
    }
    let by_id: BTreeMap<&str, &Session> = pool.iter().map(|s| (s.id.as_str(), s)).collect();
    let max_lag = model.config().max_lag();
    let pool_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("workers: {e}")))?;

    let results: Vec<Result<(SessionMetrics, Vec<Array2<S>>)>> = pool_threads.install(|| {
        sessions
            .par_iter()
            .enumerate()
            .map(|(idx, sess)| {
                let speaker: Array2<S> = cast(&sess.speaker_coeffs.frames);
                let audio: Array2<S> = cast(&sess.speaker_audio.frames);
                let samples = (0..n_samples)
                    .map(|m| generate_online(model, ps, &speaker, &audio, sample_seed(seed, idx, m)).map(|g| g.coeffs))
                    .collect::<Result<Vec<_>>>()?;
                let neighbors: Vec<Array2<S>> = sess
                    .neighbor_ids
                    .iter()
                    .filter_map(|id| by_id.get(id.as_str()))
                    .map(|n| cast(&n.listener_coeffs.frames))
                    .collect();
                if neighbors.is_empty() {
                    return Err(Error::data(format!("session {} has no resolvable neighbors", sess.id)));
                }
                let nviews: Vec<_> = neighbors.iter().map(|n| n.view()).collect();
                let nm = n_samples as f64;
                let mut row = SessionMetrics { id: sess.id.clone(), frd: 0.0, frc: 0.0, div_f: 0.0, s_mse: 0.0, tlcc: 0.0 };
                for smp in &samples {
                    row.frd += frd(smp.view(), &nviews)? / nm;
                    row.frc += frc(smp.view(), &nviews)? / nm;
                    row.div_f += div_f(smp.view()) / nm;
                    row.tlcc += tlcc(speaker.view(), smp.view(), max_lag)? / nm;
                }
                if n_samples >= 2 {
                    let views: Vec<_> = samples.iter().map(|m| m.view()).collect();
                    row.s_mse = sample_mse(&views)?;
                }
                Ok((row, samples))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(results.len());
    let mut all = Vec::with_capacity(results.len());
    for r in results {
        let (row, samples) = r?;
        rows.push(row);
        all.push(samples);
    }
    let firsts: Vec<_> = all.iter().map(|s| s[0].view()).collect();
    let dc = div_c(&firsts)?;
    Ok((EvalReport::from_sessions(rows, dc, n_samples), all))
}
