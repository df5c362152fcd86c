//! Two-stage training.
//!
//! Stage 1 is teacher-forced: each window conditions on the ground-truth
//! listener history, and the objective is reconstruction (listener and speaker)
//! plus KL and smoothness. Stage 2 conditions on the model's own detached
//! history, draws `M` latent samples per session and replaces reconstruction
//! with the nearest-appropriate-reaction loss plus the diversity energy.
//!
//! Every random draw is addressed by `(seed, stage, step, session, sample)`, so
//! runs are reproducible and a resumed run continues bit-identically.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::autograd::{Graph, ParamStore, Scalar, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::losses::{
    appropriate_rec_loss, diversity_loss, kl_loss, rec_loss, smooth_l1, smooth_loss, weighted_total, LossReport,
    LossWeights, Stage,
};
use crate::pipeline::checkpoint::{StepRecord, TrainState};
use crate::pipeline::model::{ForwardPass, ReactModel, SessionInputs};
use crate::pipeline::optim::{clip_global_norm, AdamW};
use crate::seed::stream_rng;
use crate::types::Session;

const EPS_STREAM: u64 = 10;
const SHUFFLE_STREAM: u64 = 11;

/// A training session with its appropriate reactions resolved.
#[derive(Debug, Clone)]
pub struct TrainItem<S> {
    pub id: String,
    pub inputs: SessionInputs<S>,
    /// `(id, listener coefficients)` of every neighbor present in the training set, ordered by id.
    pub neighbors: Vec<(String, Array2<S>)>,
}

#[derive(Debug, Clone)]
pub struct TrainData<S> {
    pub items: Vec<TrainItem<S>>,
}

impl<S: Scalar> TrainData<S> {
    /// Neighbor sets are restricted to `sessions`, so held-out listeners never become targets.
    pub fn new(sessions: &[Session]) -> Result<Self> {
        if sessions.is_empty() {
            return Err(Error::data("training set is empty"));
        }
        let by_id: BTreeMap<&str, &Session> = sessions.iter().map(|s| (s.id.as_str(), s)).collect();
        let items = sessions
            .iter()
            .map(|s| {
                let neighbors = s
                    .neighbor_ids
                    .iter()
                    .filter_map(|id| by_id.get(id.as_str()).map(|n| (id.clone(), crate::autograd::cast(&n.listener_coeffs.frames))))
                    .collect::<Vec<_>>();
                TrainItem { id: s.id.clone(), inputs: SessionInputs::from_session(s), neighbors }
            })
            .collect();
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    /// Stop after this many steps of the current stage even if epochs remain.
    pub max_steps: Option<u64>,
    pub workers: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { max_steps: None, workers: 1 }
    }
}

pub fn weights(cfg: &ModelConfig) -> LossWeights {
    LossWeights { kl: cfg.lambda_kl, smo: cfg.lambda_smo, div: cfg.lambda_div }
}

/// Noise for one sample of one session at one step.
pub fn step_eps<S: Scalar>(model: &ReactModel, seed: u64, stage: Stage, step: u64, item: usize, sample: usize, windows: usize) -> Vec<Array2<S>> {
    let mut rng = stream_rng(seed, &[EPS_STREAM, stage.number() as u64, step, item as u64, sample as u64]);
    model.draw_eps(&mut rng, windows)
}

fn mean_of<S: Scalar>(g: &mut Graph<S>, vars: &[Var]) -> Var {
    let all = g.concat_rows(vars);
    g.mean(all)
}

fn mean_kl<S: Scalar>(g: &mut Graph<S>, pass: &ForwardPass) -> Var {
    let kls: Vec<Var> = pass.dists.iter().map(|d| kl_loss(g, d)).collect();
    mean_of(g, &kls)
}

/// Stage-1 objective node and its component report.
pub fn stage1_objective<S: Scalar>(
    g: &mut Graph<S>,
    model: &ReactModel,
    ps: &ParamStore<S>,
    item: &TrainItem<S>,
    eps: &[Array2<S>],
) -> Result<(Var, LossReport, ForwardPass)> {
    let cfg = model.config();
    let inp = &item.inputs;
    let pass = model.forward_with_history(g, ps, &inp.speaker, &inp.audio, &inp.listener, eps)?;
    let gt_l = g.constant(inp.listener.clone());
    let gt_s = g.constant(inp.speaker.clone());
    let rec = rec_loss(g, pass.listener, gt_l, pass.speaker, gt_s)?;
    let kl = mean_kl(g, &pass);
    let smo = smooth_loss(g, pass.listener, gt_l)?;
    let w = weights(cfg);
    let total = weighted_total(g, &[(rec, 1.0), (kl, w.kl), (smo, w.smo)]);
    let report = LossReport::stage1(f(g, rec), f(g, kl), f(g, smo), &w);
    Ok((total, report, pass))
}

/// Stage-2 objective over `eps.len()` samples.
pub fn stage2_objective<S: Scalar>(
    g: &mut Graph<S>,
    model: &ReactModel,
    ps: &ParamStore<S>,
    item: &TrainItem<S>,
    eps: &[Vec<Array2<S>>],
) -> Result<(Var, LossReport, Vec<ForwardPass>)> {
    let cfg = model.config();
    let inp = &item.inputs;
    let neighbors: Vec<(String, Var)> = if cfg.use_rec_a {
        item.neighbors.iter().map(|(id, m)| (id.clone(), g.constant(m.clone()))).collect()
    } else {
        vec![(item.id.clone(), g.constant(inp.listener.clone()))]
    };
    if neighbors.is_empty() {
        return Err(Error::data(format!("session {} has no appropriate reactions in the training set", item.id)));
    }
    let (mut recs, mut kls, mut smos, mut passes) = (vec![], vec![], vec![], vec![]);
    for e in eps {
        let pass = model.rollout(g, ps, &inp.speaker, &inp.audio, e)?;
        let (rec, best) = if cfg.use_rec_a {
            appropriate_rec_loss(g, pass.listener, &neighbors)?
        } else {
            (smooth_l1(g, pass.listener, neighbors[0].1)?, item.id.clone())
        };
        let target = neighbors.iter().find(|(id, _)| *id == best).map(|(_, v)| *v).expect("winner is a neighbor");
        recs.push(rec);
        kls.push(mean_kl(g, &pass));
        smos.push(smooth_loss(g, pass.listener, target)?);
        passes.push(pass);
    }
    let rec = mean_of(g, &recs);
    let kl = mean_of(g, &kls);
    let smo = mean_of(g, &smos);
    let samples: Vec<Var> = passes.iter().map(|p| p.listener).collect();
    let div = diversity_loss(g, &samples, cfg.sigma_d)?;
    let w = weights(cfg);
    let total = weighted_total(g, &[(rec, 1.0), (kl, w.kl), (div, w.div), (smo, w.smo)]);
    let report = LossReport::stage2(f(g, rec), f(g, kl), f(g, div), f(g, smo), &w);
    Ok((total, report, passes))
}

fn f<S: Scalar>(g: &Graph<S>, v: Var) -> f64 {
    g.scalar(v).to_f64().unwrap_or(f64::NAN)
}

/// Loss and parameter gradients of one session at one step.
pub fn session_gradients<S: Scalar>(
    model: &ReactModel,
    ps: &ParamStore<S>,
    data: &TrainData<S>,
    index: usize,
    stage: Stage,
    seed: u64,
    step: u64,
) -> Result<(ParamStore<S>, LossReport)> {
    let item = &data.items[index];
    let windows = model.windows(item.inputs.speaker.nrows())?;
    let mut g = Graph::new();
    let (total, report) = match stage {
        Stage::One => {
            let eps = step_eps(model, seed, stage, step, index, 0, windows);
            let (t, r, _) = stage1_objective(&mut g, model, ps, item, &eps)?;
            (t, r)
        }
        Stage::Two => {
            let eps: Vec<_> = (0..model.config().samples).map(|m| step_eps(model, seed, stage, step, index, m, windows)).collect();
            let (t, r, _) = stage2_objective(&mut g, model, ps, item, &eps)?;
            (t, r)
        }
    };
    if !report.total.is_finite() {
        return Ok((ps.zeros_like(), report));
    }
    let grads = g.backward(total);
    Ok((grads.params(&g, ps), report))
}

fn batches_per_epoch(n: usize, batch: usize) -> u64 {
    n.div_ceil(batch) as u64
}

/// Session order of one epoch.
pub fn epoch_order(seed: u64, stage: Stage, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, &[SHUFFLE_STREAM, stage.number() as u64, epoch]);
    order.shuffle(&mut rng);
    order
}

fn run_stage<S: Scalar>(
    model: &ReactModel,
    data: &TrainData<S>,
    mut state: TrainState<S>,
    stage: Stage,
    epochs: usize,
    opts: &TrainOptions,
    on_step: &mut dyn FnMut(&StepRecord),
) -> Result<TrainState<S>> {
    let cfg = model.config();
    model.check_params(&state.params)?;
    let n = data.len();
    let bs = cfg.batch_size.min(n);
    let bpe = batches_per_epoch(n, bs);
    let total_steps = bpe * epochs as u64;
    let stop = opts.max_steps.map_or(total_steps, |m| m.min(total_steps));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("workers: {e}")))?;

    while state.step < stop {
        let epoch = state.step / bpe;
        let b = (state.step % bpe) as usize;
        let order = epoch_order(state.seed, stage, epoch, n);
        let batch = &order[b * bs..((b + 1) * bs).min(n)];
        let (seed, step) = (state.seed, state.step);
        let params = &state.params;
        let results: Vec<Result<(ParamStore<S>, LossReport)>> = pool.install(|| {
            batch.par_iter().map(|&i| session_gradients(model, params, data, i, stage, seed, step)).collect()
        });
        let mut grads = state.params.zeros_like();
        let mut reports = Vec::with_capacity(batch.len());
        let scale = S::c(1.0 / batch.len() as f64);
        for r in results {
            let (gs, rep) = r?;
            for i in 0..grads.len() {
                grads.value_mut(i).scaled_add(scale, gs.value(i));
            }
            reports.push(rep);
        }
        let report = LossReport::mean(&reports);
        if !report.total.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss at stage {} step {}", stage.number(), step)));
        }
        let norm = clip_global_norm(&mut grads, cfg.grad_clip);
        if !norm.is_finite() {
            return Err(Error::Divergence(format!("non-finite gradient at stage {} step {}", stage.number(), step)));
        }
        state.opt.step(&mut state.params, &grads, cfg.lr, cfg.weight_decay);
        let record = StepRecord { stage: stage.number(), epoch: epoch as usize, step, loss: report };
        on_step(&record);
        state.history.push(record);
        state.step += 1;
    }
    Ok(state)
}

/// Stage 1: teacher-forced reconstruction training.
pub fn train_stage1<S: Scalar>(
    model: &ReactModel,
    data: &TrainData<S>,
    state: TrainState<S>,
    opts: &TrainOptions,
    on_step: &mut dyn FnMut(&StepRecord),
) -> Result<TrainState<S>> {
    if state.stage != Stage::One {
        return Err(Error::config("stage 1 cannot continue from a stage-2 state"));
    }
    let mut state = run_stage(model, data, state, Stage::One, model.config().epochs_stage1, opts, on_step)?;
    state.stage1_complete = true;
    Ok(state)
}

/// Stage 2: self-generated history, appropriate-reaction and diversity training.
pub fn train_stage2<S: Scalar>(
    model: &ReactModel,
    data: &TrainData<S>,
    mut state: TrainState<S>,
    opts: &TrainOptions,
    on_step: &mut dyn FnMut(&StepRecord),
) -> Result<TrainState<S>> {
    if !state.stage1_complete {
        return Err(Error::config("stage 1 checkpoint required"));
    }
    if state.stage == Stage::One {
        state.stage = Stage::Two;
        state.step = 0;
        state.opt = AdamW::new(&state.params);
    }
    run_stage(model, data, state, Stage::Two, model.config().epochs_stage2, opts, on_step)
}
