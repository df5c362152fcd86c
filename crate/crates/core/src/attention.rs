//! Alignment-biased multi-head attention.
//!
//! The bias matrices add a non-positive integer recency penalty to each
//! attention logit and `-inf` beyond the causal horizon of the query, so a
//! reaction frame at position `i` can only see speaker frames up to `i`
//! (face stream) or `k*i` (speech stream). All indices are 0-based.

use ndarray::Array2;

use crate::autograd::{Graph, Scalar, Var};
use crate::error::{Error, Result};

/// `Tq x Tk` additive attention bias; entries are non-positive integers or `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasMatrix {
    values: Array2<f64>,
}

impl BiasMatrix {
    pub fn from_values(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(tq: usize, tk: usize) -> Self {
        Self { values: Array2::zeros((tq, tk)) }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn cast<S: Scalar>(&self) -> Array2<S> {
        self.values.mapv(|v| if v == f64::NEG_INFINITY { S::neg_infinity() } else { S::c(v) })
    }

    /// First query row whose entries are all `-inf`, if any.
    pub fn degenerate_row(&self) -> Option<usize> {
        self.values.rows().into_iter().position(|r| r.iter().all(|&v| v == f64::NEG_INFINITY))
    }
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::config(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

/// Face-stream bias: `-floor((i-j)/p)` for `j <= i`, `-inf` otherwise.
pub fn build_vim_bias(tq: usize, tk: usize, p: usize) -> Result<BiasMatrix> {
    check_positive("Tq", tq)?;
    check_positive("Tk", tk)?;
    vim_bias_at(0, tq, tk, p)
}

/// Face-stream bias for queries at absolute positions `q_start..q_start+tq`.
pub fn vim_bias_at(q_start: usize, tq: usize, tk: usize, p: usize) -> Result<BiasMatrix> {
    check_positive("p", p)?;
    let values = Array2::from_shape_fn((tq, tk), |(i, j)| {
        let i = q_start + i;
        if j <= i {
            0.0 - ((i - j) / p) as f64
        } else {
            f64::NEG_INFINITY
        }
    });
    Ok(BiasMatrix { values })
}

/// Speech-stream bias: `-floor((k*i-j)/(k*p))` for `j <= k*i`, `-inf` otherwise.
pub fn build_mim_bias(tq: usize, tk: usize, k: usize, p: usize) -> Result<BiasMatrix> {
    check_positive("k", k)?;
    check_positive("Tq", tq)?;
    if tk != k * tq {
        return Err(Error::dim(format!("speech length {tk} ≠ k·Tq = {}", k * tq)));
    }
    mim_bias_at(0, tq, tk, k, p)
}

/// Speech-stream bias for queries at absolute positions `q_start..q_start+tq`.
pub fn mim_bias_at(q_start: usize, tq: usize, tk: usize, k: usize, p: usize) -> Result<BiasMatrix> {
    check_positive("k", k)?;
    check_positive("p", p)?;
    let values = Array2::from_shape_fn((tq, tk), |(i, j)| {
        let ki = k * (q_start + i);
        if j <= ki {
            0.0 - ((ki - j) / (k * p)) as f64
        } else {
            f64::NEG_INFINITY
        }
    });
    Ok(BiasMatrix { values })
}

/// Causal bias restricted to blocks of `w` rows: position `i` sees `j` only
/// inside its own window and only when `j <= i`.
pub fn window_causal_bias(len: usize, w: usize, p: usize) -> Result<BiasMatrix> {
    check_positive("w", w)?;
    check_positive("p", p)?;
    let values = Array2::from_shape_fn((len, len), |(i, j)| {
        if j <= i && j / w == i / w {
            0.0 - ((i - j) / p) as f64
        } else {
            f64::NEG_INFINITY
        }
    });
    Ok(BiasMatrix { values })
}

/// Per-head scaled dot-product attention with an additive logit bias:
/// `softmax(Q K^T / sqrt(d/heads) + B) V`, heads concatenated along columns.
pub fn biased_attention<S: Scalar>(
    g: &mut Graph<S>,
    q: Var,
    k: Var,
    v: Var,
    bias: Option<&BiasMatrix>,
    heads: usize,
) -> Result<Var> {
    Ok(biased_attention_traced(g, q, k, v, bias, heads)?.0)
}

/// As [`biased_attention`], also returning each head's attention weights.
pub fn biased_attention_traced<S: Scalar>(
    g: &mut Graph<S>,
    q: Var,
    k: Var,
    v: Var,
    bias: Option<&BiasMatrix>,
    heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let (tq, d) = g.shape(q);
    let (tk, dk_full) = g.shape(k);
    if dk_full != d || g.shape(v) != (tk, d) {
        return Err(Error::dim(format!(
            "attention shapes Q {:?}, K {:?}, V {:?} are inconsistent",
            g.shape(q),
            g.shape(k),
            g.shape(v)
        )));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::config(format!("heads = {heads} must divide width {d}")));
    }
    let bias = match bias {
        Some(b) => {
            if b.dim() != (tq, tk) {
                return Err(Error::dim(format!("bias {:?} ≠ logits ({tq}, {tk})", b.dim())));
            }
            if let Some(row) = b.degenerate_row() {
                return Err(Error::DegenerateMask { row });
            }
            Some(b.cast::<S>())
        }
        None => None,
    };
    let dk = d / heads;
    let qs = g.scale(q, S::one() / S::c(dk as f64).sqrt());
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (qs, k, v)
        } else {
            (g.slice_cols(qs, h * dk, dk), g.slice_cols(k, h * dk, dk), g.slice_cols(v, h * dk, dk))
        };
        let logits = g.matmul_t(qh, kh);
        let wts = g.softmax_biased(logits, bias.as_ref());
        outs.push(g.matmul(wts, vh));
        weights.push(wts);
    }
    Ok((g.concat_cols(&outs), weights))
}
