//! Evaluation metrics: appropriateness (FRD, FRC), diversity (Div_c, Div_f,
//! S-MSE) and synchrony (TLCC).
//!
//! All functions are pure and compute in `f64` whatever the input precision.

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::autograd::Scalar;
use crate::error::{Error, Result};

fn check_same(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::dim(format!("shape {a:?} ≠ {b:?}")));
    }
    Ok(())
}

fn mse<S: Scalar>(a: ArrayView2<S>, b: ArrayView2<S>) -> f64 {
    let n = a.len().max(1) as f64;
    a.iter().zip(b.iter()).map(|(&x, &y)| (x.to_f64().unwrap() - y.to_f64().unwrap()).powi(2)).sum::<f64>() / n
}

/// Mean per-frame Euclidean distance.
pub fn mean_frame_distance<S: Scalar>(a: ArrayView2<S>, b: ArrayView2<S>) -> Result<f64> {
    check_same(a.dim(), b.dim())?;
    let t = a.nrows().max(1) as f64;
    let total: f64 = a
        .rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| x.iter().zip(y.iter()).map(|(&u, &v)| (u.to_f64().unwrap() - v.to_f64().unwrap()).powi(2)).sum::<f64>().sqrt())
        .sum();
    Ok(total / t)
}

/// Distance from a generated reaction to its nearest appropriate reaction.
pub fn frd<S: Scalar>(pred: ArrayView2<S>, neighbors: &[ArrayView2<S>]) -> Result<f64> {
    if neighbors.is_empty() {
        return Err(Error::data("FRD needs a non-empty neighbor set"));
    }
    let mut best = f64::INFINITY;
    for n in neighbors {
        best = best.min(mean_frame_distance(pred, *n)?);
    }
    Ok(best)
}

/// Pearson correlation across time; a constant series correlates as 0.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

fn column<S: Scalar>(m: ArrayView2<S>, c: usize) -> Vec<f64> {
    m.column(c).iter().map(|v| v.to_f64().unwrap()).collect()
}

/// Mean over coefficient dimensions of the temporal Pearson correlation.
pub fn mean_correlation<S: Scalar>(a: ArrayView2<S>, b: ArrayView2<S>) -> Result<f64> {
    check_same(a.dim(), b.dim())?;
    let d = a.ncols();
    if d == 0 {
        return Ok(0.0);
    }
    Ok((0..d).map(|c| pearson(&column(a, c), &column(b, c))).sum::<f64>() / d as f64)
}

/// Correlation of a generated reaction with its best-matching appropriate reaction.
pub fn frc<S: Scalar>(pred: ArrayView2<S>, neighbors: &[ArrayView2<S>]) -> Result<f64> {
    if neighbors.is_empty() {
        return Err(Error::data("FRC needs a non-empty neighbor set"));
    }
    let mut best = f64::NEG_INFINITY;
    for n in neighbors {
        best = best.max(mean_correlation(pred, *n)?);
    }
    Ok(best)
}

/// Mean pairwise MSE between the reactions generated for different sessions.
pub fn div_c<S: Scalar>(preds: &[ArrayView2<S>]) -> Result<f64> {
    pairwise_mse(preds)
}

/// Mean over dimensions of the population variance across frames.
pub fn div_f<S: Scalar>(pred: ArrayView2<S>) -> f64 {
    let (t, d) = pred.dim();
    if t == 0 || d == 0 {
        return 0.0;
    }
    let total: f64 = (0..d)
        .map(|c| {
            let col = column(pred, c);
            let m = col.iter().sum::<f64>() / t as f64;
            col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t as f64
        })
        .sum();
    total / d as f64
}

/// Mean pairwise MSE among samples of one session.
pub fn sample_mse<S: Scalar>(samples: &[ArrayView2<S>]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::config(format!("S-MSE needs at least 2 samples, got {}", samples.len())));
    }
    pairwise_mse(samples)
}

/// S-MSE averaged over sessions; each entry holds one session's samples.
pub fn s_mse<S: Scalar>(sessions: &[Vec<ArrayView2<S>>]) -> Result<f64> {
    if sessions.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in sessions {
        total += sample_mse(s)?;
    }
    Ok(total / sessions.len() as f64)
}

fn pairwise_mse<S: Scalar>(xs: &[ArrayView2<S>]) -> Result<f64> {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            check_same(xs[i].dim(), xs[j].dim())?;
            total += mse(xs[i], xs[j]);
            pairs += 1;
        }
    }
    Ok(if pairs == 0 { 0.0 } else { total / pairs as f64 })
}

/// Per-frame mean over coefficient dimensions.
pub fn mean_signal<S: Scalar>(m: ArrayView2<S>) -> Array1<f64> {
    let d = m.ncols().max(1) as f64;
    m.rows().into_iter().map(|r| r.iter().map(|v| v.to_f64().unwrap()).sum::<f64>() / d).collect()
}

/// Normalized cross-correlation of `y` against `x` at `lag`, pairing `x[t]`
/// with `y[t + lag]` over the overlapping frames.
pub fn lagged_correlation(x: &[f64], y: &[f64], lag: isize) -> f64 {
    let n = x.len().min(y.len()) as isize;
    let lo = 0.max(-lag);
    let hi = n.min(n - lag);
    if hi - lo < 2 {
        return 0.0;
    }
    let xs: Vec<f64> = (lo..hi).map(|t| x[t as usize]).collect();
    let ys: Vec<f64> = (lo..hi).map(|t| y[(t + lag) as usize]).collect();
    pearson(&xs, &ys)
}

/// Synchrony lag in frames between a speaker and a reaction sequence: the
/// absolute lag in `[-max_lag, max_lag]` maximizing the cross-correlation of
/// their mean-pooled signals. Ties resolve toward lag 0.
pub fn tlcc<S: Scalar>(speaker: ArrayView2<S>, pred: ArrayView2<S>, max_lag: usize) -> Result<f64> {
    if speaker.nrows() != pred.nrows() {
        return Err(Error::dim(format!("speaker has {} frames, reaction {}", speaker.nrows(), pred.nrows())));
    }
    let x = mean_signal(speaker);
    let y = mean_signal(pred);
    let (x, y) = (x.as_slice().unwrap(), y.as_slice().unwrap());
    let mut best_lag = 0isize;
    let mut best = lagged_correlation(x, y, 0);
    for m in 1..=max_lag as isize {
        for lag in [m, -m] {
            let c = lagged_correlation(x, y, lag);
            if c > best {
                best = c;
                best_lag = lag;
            }
        }
    }
    Ok(best_lag.unsigned_abs() as f64)
}

/// Metrics of one evaluated session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub id: String,
    pub frd: f64,
    pub frc: f64,
    pub div_f: f64,
    pub s_mse: f64,
    pub tlcc: f64,
}

/// Aggregate metrics; every field except `div_c` is the mean of the per-session rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frd: f64,
    pub frc: f64,
    pub div_c: f64,
    pub div_f: f64,
    pub s_mse: f64,
    pub tlcc: f64,
    pub samples: usize,
    pub sessions: Vec<SessionMetrics>,
}

impl EvalReport {
    pub fn from_sessions(sessions: Vec<SessionMetrics>, div_c: f64, samples: usize) -> Self {
        let n = sessions.len().max(1) as f64;
        let mean = |f: fn(&SessionMetrics) -> f64| sessions.iter().map(f).sum::<f64>() / n;
        Self {
            frd: mean(|s| s.frd),
            frc: mean(|s| s.frc),
            div_c,
            div_f: mean(|s| s.div_f),
            s_mse: mean(|s| s.s_mse),
            tlcc: mean(|s| s.tlcc),
            samples,
            sessions,
        }
    }

    /// One JSON object per session followed by the summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.sessions {
            out.push_str(&serde_json::to_string(s).expect("serializable"));
            out.push('\n');
        }
        out
    }

    /// Machine-readable summary without the per-session rows.
    pub fn summary_json(&self) -> String {
        let v = serde_json::json!({
            "frd": self.frd,
            "frc": self.frc,
            "div_c": self.div_c,
            "div_f": self.div_f,
            "s_mse": self.s_mse,
            "tlcc": self.tlcc,
            "samples": self.samples,
            "sessions": self.sessions.len(),
        });
        serde_json::to_string_pretty(&v).expect("serializable") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn frd_basics() {
        let a = array![[0.0, 0.0], [1.0, 1.0]];
        let b = array![[3.0, 4.0], [1.0, 1.0]];
        assert_eq!(frd(a.view(), &[a.view()]).unwrap(), 0.0);
        assert_eq!(frd(a.view(), &[b.view()]).unwrap(), 2.5);
        assert_eq!(frd(a.view(), &[b.view(), a.view()]).unwrap(), 0.0);
        assert!(frd::<f64>(a.view(), &[]).is_err());
    }

    #[test]
    fn frc_basics() {
        let a = array![[0.0, 1.0, 5.0], [1.0, -1.0, 5.0], [3.0, 0.5, 5.0]];
        let perfect = frc(a.view(), &[a.view()]).unwrap();
        // the constant third column contributes 0
        assert!((perfect - 2.0 / 3.0).abs() < 1e-12);
        let x = array![[1.0], [-1.0], [2.0], [-2.0]];
        let neg = x.mapv(|v| -v);
        assert!((frc(neg.view(), &[x.view()]).unwrap() + 1.0).abs() < 1e-12);
        let scaled = x.mapv(|v| 3.0 * v + 7.0);
        assert!((frc(scaled.view(), &[x.view()]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diversity_metrics() {
        let a = Array2::<f64>::zeros((4, 3));
        let b = Array2::<f64>::ones((4, 3));
        assert_eq!(div_c(&[a.view(), a.view()]).unwrap(), 0.0);
        assert_eq!(div_c(&[a.view(), b.view()]).unwrap(), 1.0);
        assert_eq!(div_c(&[b.view(), a.view()]).unwrap(), 1.0);
        assert_eq!(div_f(b.view()), 0.0);
        let alt = array![[1.0], [-1.0], [1.0], [-1.0]];
        assert_eq!(div_f(alt.view()), 1.0);
        let perm = array![[1.0], [1.0], [-1.0], [-1.0]];
        assert_eq!(div_f(perm.view()), div_f(alt.view()));
        assert_eq!(s_mse(&[vec![a.view(), b.view()]]).unwrap(), 1.0);
        assert_eq!(s_mse(&[vec![a.view(), a.view()]]).unwrap(), 0.0);
        assert!(sample_mse(&[a.view()]).is_err());
    }

    fn signal(t: usize) -> Vec<f64> {
        (0..t).map(|i| (i as f64 * 0.37).sin() + (i as f64 * 0.11).cos() * 0.5 + (i as f64 * 1.3).sin() * 0.2).collect()
    }

    #[test]
    fn tlcc_recovers_shift() {
        let t = 64;
        let base = signal(t + 10);
        let speaker = Array2::from_shape_fn((t, 2), |(i, c)| base[i + 10] + c as f64);
        for lag in 0..=8usize {
            let pred = Array2::from_shape_fn((t, 2), |(i, c)| base[i + 10 - lag] * 2.0 - c as f64);
            assert_eq!(tlcc(speaker.view(), pred.view(), 8).unwrap(), lag as f64);
        }
        assert_eq!(tlcc(speaker.view(), speaker.view(), 8).unwrap(), 0.0);
    }

    #[test]
    fn tlcc_of_constant_reaction_is_zero() {
        let s = Array2::from_shape_fn((16, 2), |(i, _)| i as f64);
        let c = Array2::from_elem((16, 2), 1.0);
        assert_eq!(tlcc(s.view(), c.view(), 4).unwrap(), 0.0);
    }

    #[test]
    fn report_means_match_rows() {
        let rows = vec![
            SessionMetrics { id: "a".into(), frd: 1.0, frc: 0.5, div_f: 2.0, s_mse: 0.0, tlcc: 1.0 },
            SessionMetrics { id: "b".into(), frd: 3.0, frc: -0.5, div_f: 4.0, s_mse: 1.0, tlcc: 2.0 },
        ];
        let r = EvalReport::from_sessions(rows, 0.25, 2);
        assert_eq!((r.frd, r.frc, r.div_f, r.s_mse, r.tlcc, r.div_c), (2.0, 0.0, 3.0, 0.5, 1.5, 0.25));
        assert_eq!(r.to_jsonl().lines().count(), 2);
        assert!(r.summary_json().contains("\"div_c\""));
    }
}
