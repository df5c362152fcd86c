//! Training objectives.
//!
//! Every loss is built from graph primitives so the same code yields values and
//! gradients. Inputs are graph handles; plain matrices go in as constants.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Scalar, Var};
use crate::error::{Error, Result};
use crate::generator::ReactionDistribution;

/// Huber threshold of the smooth-L1 loss, in coefficient units.
pub const HUBER_BETA: f64 = 1.0;

/// Mean elementwise smooth-L1 (Huber with `beta = 1`).
pub fn smooth_l1<S: Scalar>(g: &mut Graph<S>, pred: Var, target: Var) -> Result<Var> {
    same_shape(g, pred, target)?;
    let e = g.sub(pred, target);
    let h = g.huber(e, S::c(HUBER_BETA));
    Ok(g.mean(h))
}

/// Listener plus speaker reconstruction against their own ground truth.
pub fn rec_loss<S: Scalar>(g: &mut Graph<S>, listener_pred: Var, listener: Var, speaker_pred: Var, speaker: Var) -> Result<Var> {
    let l = smooth_l1(g, listener_pred, listener)?;
    let s = smooth_l1(g, speaker_pred, speaker)?;
    Ok(g.add(l, s))
}

/// Minimum smooth-L1 over the appropriate reactions; returns the loss node
/// (which carries gradient only through the winning term) and the winner's id.
///
/// Ties go to the lexicographically lowest id.
pub fn appropriate_rec_loss<S: Scalar>(g: &mut Graph<S>, pred: Var, neighbors: &[(String, Var)]) -> Result<(Var, String)> {
    if neighbors.is_empty() {
        return Err(Error::data("appropriate reconstruction needs a non-empty neighbor set"));
    }
    let mut best: Option<(S, &str, Var)> = None;
    for (id, target) in neighbors {
        let l = smooth_l1(g, pred, *target)?;
        let v = g.scalar(l);
        let better = match best {
            None => true,
            Some((bv, bid, _)) => v < bv || (v == bv && id.as_str() < bid),
        };
        if better {
            best = Some((v, id, l));
        }
    }
    let (_, id, l) = best.expect("non-empty");
    Ok((l, id.to_string()))
}

/// Energy-based diversity over `M >= 2` samples:
/// `1/(M(M-1)) * sum_{i != j} exp(-||R_i - R_j||^2 / sigma_d)`, norm over the whole sequence.
pub fn diversity_loss<S: Scalar>(g: &mut Graph<S>, samples: &[Var], sigma_d: f64) -> Result<Var> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::config(format!("diversity loss needs at least 2 samples, got {m}")));
    }
    if !(sigma_d > 0.0) {
        return Err(Error::config("sigma_d must be positive"));
    }
    let mut terms = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            same_shape(g, samples[i], samples[j])?;
            let diff = g.sub(samples[i], samples[j]);
            let sq = g.square(diff);
            let dist = g.sum(sq);
            let scaled = g.scale(dist, S::c(-1.0 / sigma_d));
            terms.push(g.exp(scaled));
        }
    }
    let all = g.concat_rows(&terms);
    let total = g.sum(all);
    // each unordered pair stands for (i, j) and (j, i)
    Ok(g.scale(total, S::c(2.0 / (m * (m - 1)) as f64)))
}

/// `KL(N(mu, sigma^2) || N(0, I)) = 1/2 sum(mu^2 + sigma^2 - log sigma^2 - 1)`.
pub fn kl_loss<S: Scalar>(g: &mut Graph<S>, dist: &ReactionDistribution) -> Var {
    let mu2 = g.square(dist.mu);
    let two_ls = g.scale(dist.log_sigma, S::c(2.0));
    let var = g.exp(two_ls);
    let a = g.add(mu2, var);
    let b = g.sub(a, two_ls);
    let total = g.sum(b);
    let n = S::c(g.shape(dist.mu).1 as f64);
    let shifted = g.scale(total, S::c(0.5));
    let offset = g.constant(Array2::from_elem((1, 1), S::c(0.5) * n));
    g.sub(shifted, offset)
}

/// Temporal smoothness: mean absolute difference between the second temporal
/// differences of target and prediction, over frames `2..T` and all dimensions.
pub fn smooth_loss<S: Scalar>(g: &mut Graph<S>, pred: Var, target: Var) -> Result<Var> {
    same_shape(g, pred, target)?;
    let t = g.shape(pred).0;
    if t < 3 {
        return Err(Error::dim(format!("smoothness loss needs T >= 3, got {t}")));
    }
    let e = g.sub(target, pred);
    let cur = g.slice_rows(e, 2, t - 2);
    let prev = g.slice_rows(e, 1, t - 2);
    let prev2 = g.slice_rows(e, 0, t - 2);
    let twice = g.scale(prev, S::c(2.0));
    let a = g.sub(cur, twice);
    let second = g.add(a, prev2);
    let abs = g.abs(second);
    Ok(g.mean(abs))
}

fn same_shape<S: Scalar>(g: &Graph<S>, a: Var, b: Var) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::dim(format!("shape {:?} ≠ {:?}", g.shape(a), g.shape(b))));
    }
    Ok(())
}

/// Training stage whose objective a [`LossReport`] records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

/// Loss weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub kl: f64,
    pub smo: f64,
    pub div: f64,
}

/// Component values of one objective evaluation; inactive terms are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub rec: f64,
    pub rec_a: f64,
    pub kl: f64,
    pub div: f64,
    pub smo: f64,
    pub total: f64,
}

impl LossReport {
    /// `rec + λ_kl kl + λ_smo smo`.
    pub fn stage1(rec: f64, kl: f64, smo: f64, w: &LossWeights) -> Self {
        Self { rec, rec_a: 0.0, kl, div: 0.0, smo, total: rec + w.kl * kl + w.smo * smo }
    }

    /// `rec_a + λ_kl kl + λ_div div + λ_smo smo`.
    pub fn stage2(rec_a: f64, kl: f64, div: f64, smo: f64, w: &LossWeights) -> Self {
        Self { rec: 0.0, rec_a, kl, div, smo, total: rec_a + w.kl * kl + w.div * div + w.smo * smo }
    }

    /// Recomputes the weighted total from the components.
    pub fn recomputed_total(&self, stage: Stage, w: &LossWeights) -> f64 {
        match stage {
            Stage::One => self.rec + w.kl * self.kl + w.smo * self.smo,
            Stage::Two => self.rec_a + w.kl * self.kl + w.div * self.div + w.smo * self.smo,
        }
    }

    /// Componentwise mean of several reports.
    pub fn mean(reports: &[LossReport]) -> LossReport {
        let n = reports.len().max(1) as f64;
        let mut out = LossReport::default();
        for r in reports {
            out.rec += r.rec / n;
            out.rec_a += r.rec_a / n;
            out.kl += r.kl / n;
            out.div += r.div / n;
            out.smo += r.smo / n;
            out.total += r.total / n;
        }
        out
    }
}

/// Builds the weighted objective node from component nodes.
pub fn weighted_total<S: Scalar>(g: &mut Graph<S>, terms: &[(Var, f64)]) -> Var {
    let mut total: Option<Var> = None;
    for &(v, wgt) in terms {
        if wgt == 0.0 {
            continue;
        }
        let t = if wgt == 1.0 { v } else { g.scale(v, S::c(wgt)) };
        total = Some(match total {
            None => t,
            Some(acc) => g.add(acc, t),
        });
    }
    total.unwrap_or_else(|| g.constant(Array2::zeros((1, 1))))
}
