//! Adaptive-moment optimizer with decoupled weight decay and global-norm clipping.

use crate::autograd::{ParamStore, Scalar};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<S> {
    pub m: ParamStore<S>,
    pub v: ParamStore<S>,
    /// Updates applied so far.
    pub t: u64,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(params: &ParamStore<S>) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }

    /// One update; `grads` must be aligned with `params`.
    pub fn step(&mut self, params: &mut ParamStore<S>, grads: &ParamStore<S>, lr: f64, weight_decay: f64) {
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (S::c(BETA1), S::c(BETA2));
        let c1 = S::c(1.0 - BETA1.powi(t));
        let c2 = S::c(1.0 - BETA2.powi(t));
        let lr_s = S::c(lr);
        let decay = S::c(1.0 - lr * weight_decay);
        let eps = S::c(EPS);
        let one = S::one();
        for i in 0..params.len() {
            let g = grads.value(i);
            let m = self.m.value_mut(i);
            m.zip_mut_with(g, |m, &g| *m = b1 * *m + (one - b1) * g);
            let v = self.v.value_mut(i);
            v.zip_mut_with(g, |v, &g| *v = b2 * *v + (one - b2) * g * g);
            let (m, v) = (self.m.value(i), self.v.value(i));
            let p = params.value_mut(i);
            ndarray::Zip::from(p).and(m).and(v).for_each(|p, &m, &v| {
                let mh = m / c1;
                let vh = v / c2;
                *p = *p * decay - lr_s * mh / (vh.sqrt() + eps);
            });
        }
    }
}

pub fn global_norm<S: Scalar>(grads: &ParamStore<S>) -> f64 {
    grads.iter().flat_map(|(_, g)| g.iter()).map(|v| v.to_f64().unwrap().powi(2)).sum::<f64>().sqrt()
}

/// Rescales gradients so their global L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm<S: Scalar>(grads: &mut ParamStore<S>, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm.is_finite() {
        let scale = S::c(max_norm / norm);
        for i in 0..grads.len() {
            grads.value_mut(i).mapv_inplace(|v| v * scale);
        }
    }
    norm
}
