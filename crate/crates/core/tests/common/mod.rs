#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reactgen::autograd::{Graph, ParamStore, Scalar, Var};
use reactgen::data::{generate_dataset, SynthSpec};
use reactgen::{ModelConfig, Session};

pub fn tiny_config() -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.coeff_dim = 4;
    cfg.d_a = 3;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.layers = 1;
    cfg.w = 4;
    cfg.k = 2;
    cfg.p = 2;
    cfg.frames = 16;
    cfg.n_sessions = 6;
    cfg.n_classes = 2;
    cfg.lag_max = 2;
    cfg.batch_size = 2;
    cfg.epochs_stage1 = 2;
    cfg.epochs_stage2 = 1;
    cfg.sigma_d = 16.0 * 4.0;
    cfg
}

pub fn dataset(cfg: &ModelConfig) -> Vec<Session> {
    generate_dataset(&SynthSpec::from_config(cfg), cfg).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-scale..scale))
}

/// Adds uniform noise to every parameter so that no head starts exactly at zero.
pub fn jitter<S: Scalar>(ps: &mut ParamStore<S>, seed: u64, scale: f64) {
    let mut r = rng(seed);
    for i in 0..ps.len() {
        ps.value_mut(i).mapv_inplace(|v| v + S::c(r.gen_range(-scale..scale)));
    }
}

pub fn bits_equal<S: Scalar>(a: &Array2<S>, b: &Array2<S>) -> bool {
    a.dim() == b.dim() && a.iter().zip(b.iter()).all(|(x, y)| x.to_f64().unwrap().to_bits() == y.to_f64().unwrap().to_bits())
}

pub fn max_abs_diff<S: Scalar>(a: &Array2<S>, b: &Array2<S>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.to_f64().unwrap() - y.to_f64().unwrap()).abs()).fold(0.0, f64::max)
}

pub const FD_STEP: f64 = 1e-6;
pub const FD_RTOL: f64 = 1e-4;

/// Agreement of an analytic and a central-difference derivative of a function
/// whose value is `value`; the absolute slack covers rounding in the difference quotient.
pub fn fd_close(analytic: f64, numeric: f64, value: f64) -> bool {
    (analytic - numeric).abs() <= FD_RTOL * analytic.abs().max(numeric.abs()) + 1e-8 * value.abs().max(1.0)
}

/// Central finite-difference check of a scalar function of several matrices.
/// Returns the worst offending `(input, index, analytic, numeric)` if any disagree.
pub fn fd_check(inputs: &[Array2<f64>], f: &dyn Fn(&mut Graph<f64>, &[Var]) -> Var) -> Option<(usize, usize, f64, f64)> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
    let out = f(&mut g, &vars);
    let value = g.scalar(out);
    let grads = g.backward(out);
    let eval = |k: usize, idx: usize, delta: f64| {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(j, x)| {
                let mut x = x.clone();
                if j == k {
                    x.as_slice_mut().unwrap()[idx] += delta;
                }
                g.input(x)
            })
            .collect();
        let out = f(&mut g, &vars);
        g.scalar(out)
    };
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Array2::zeros(x.dim()));
        for idx in 0..x.len() {
            let numeric = (eval(k, idx, FD_STEP) - eval(k, idx, -FD_STEP)) / (2.0 * FD_STEP);
            let a = analytic.as_slice().unwrap()[idx];
            if !fd_close(a, numeric, value) {
                return Some((k, idx, a, numeric));
            }
        }
    }
    None
}
