//! Parameterized building blocks: affine maps, layer norm, feed-forward,
//! multi-head attention and pre-norm transformer blocks.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::attention::{biased_attention, BiasMatrix};
use crate::autograd::{Graph, ParamStore, Scalar, Var};
use crate::error::Result;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

/// Draws every parameter from one seeded stream, in spec order.
pub fn init_params<S: Scalar>(specs: &[ParamSpec], seed: u64) -> ParamStore<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamStore::new();
    for spec in specs {
        let value = match spec.init {
            Init::Zeros => Array2::zeros((spec.rows, spec.cols)),
            Init::Ones => Array2::ones((spec.rows, spec.cols)),
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("positive std");
                Array2::from_shape_simple_fn((spec.rows, spec.cols), || S::c(dist.sample(&mut rng)))
            }
        };
        ps.insert(spec.name.clone(), value);
    }
    ps
}

/// `y = x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    w: String,
    b: String,
    din: usize,
    dout: usize,
    std: f64,
}

impl Linear {
    pub fn new(name: &str, din: usize, dout: usize) -> Self {
        Self { w: format!("{name}.w"), b: format!("{name}.b"), din, dout, std: 1.0 / (din as f64).sqrt() }
    }

    pub fn with_std(mut self, std: f64) -> Self {
        self.std = std;
        self
    }

    pub fn weight_name(&self) -> &str {
        &self.w
    }

    pub fn bias_name(&self) -> &str {
        &self.b
    }

    pub fn specs(&self, out: &mut Vec<ParamSpec>) {
        out.push(ParamSpec { name: self.w.clone(), rows: self.din, cols: self.dout, init: Init::Normal(self.std) });
        out.push(ParamSpec { name: self.b.clone(), rows: 1, cols: self.dout, init: Init::Zeros });
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, x: Var) -> Var {
        let w = g.param(ps, &self.w);
        let b = g.param(ps, &self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: String,
    beta: String,
    dim: usize,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        Self { gamma: format!("{name}.gamma"), beta: format!("{name}.beta"), dim }
    }

    pub fn specs(&self, out: &mut Vec<ParamSpec>) {
        out.push(ParamSpec { name: self.gamma.clone(), rows: 1, cols: self.dim, init: Init::Ones });
        out.push(ParamSpec { name: self.beta.clone(), rows: 1, cols: self.dim, init: Init::Zeros });
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, x: Var) -> Var {
        let gamma = g.param(ps, &self.gamma);
        let beta = g.param(ps, &self.beta);
        let y = g.layer_norm(x, S::c(LN_EPS));
        let y = g.mul_row(y, gamma);
        g.add_row(y, beta)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(name: &str, d: usize, hidden: usize) -> Self {
        Self { up: Linear::new(&format!("{name}.up"), d, hidden), down: Linear::new(&format!("{name}.down"), hidden, d) }
    }

    pub fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.up.specs(out);
        self.down.specs(out);
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, x: Var) -> Var {
        let h = self.up.forward(g, ps, x);
        let h = g.gelu(h);
        self.down.forward(g, ps, h)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(name: &str, d: usize, heads: usize) -> Self {
        Self {
            q: Linear::new(&format!("{name}.q"), d, d),
            k: Linear::new(&format!("{name}.k"), d, d),
            v: Linear::new(&format!("{name}.v"), d, d),
            o: Linear::new(&format!("{name}.o"), d, d),
            heads,
        }
    }

    pub fn output(&self) -> &Linear {
        &self.o
    }

    pub fn specs(&self, out: &mut Vec<ParamSpec>) {
        for l in [&self.q, &self.k, &self.v, &self.o] {
            l.specs(out);
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        ps: &ParamStore<S>,
        query: Var,
        memory: Var,
        bias: Option<&BiasMatrix>,
    ) -> Result<Var> {
        let q = self.q.forward(g, ps, query);
        let k = self.k.forward(g, ps, memory);
        let v = self.v.forward(g, ps, memory);
        let a = biased_attention(g, q, k, v, bias, self.heads)?;
        Ok(self.o.forward(g, ps, a))
    }
}

/// Pre-norm block: `x + Attn(LN(x), memory)` then optionally `x + FFN(LN(x))`.
///
/// Without `memory` the block is self-attention over `LN(x)`.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    ln_attn: LayerNorm,
    attn: MultiHeadAttention,
    ffn: Option<(LayerNorm, FeedForward)>,
}

impl AttentionBlock {
    pub fn new(name: &str, d: usize, heads: usize, ffn_hidden: Option<usize>) -> Self {
        Self {
            ln_attn: LayerNorm::new(&format!("{name}.ln_attn"), d),
            attn: MultiHeadAttention::new(&format!("{name}.attn"), d, heads),
            ffn: ffn_hidden.map(|h| (LayerNorm::new(&format!("{name}.ln_ffn"), d), FeedForward::new(&format!("{name}.ffn"), d, h))),
        }
    }

    pub fn attention(&self) -> &MultiHeadAttention {
        &self.attn
    }

    pub fn ffn(&self) -> Option<&FeedForward> {
        self.ffn.as_ref().map(|(_, f)| f)
    }

    pub fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.ln_attn.specs(out);
        self.attn.specs(out);
        if let Some((ln, f)) = &self.ffn {
            ln.specs(out);
            f.specs(out);
        }
    }

    pub fn forward<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        ps: &ParamStore<S>,
        x: Var,
        memory: Option<Var>,
        bias: Option<&BiasMatrix>,
    ) -> Result<Var> {
        let h = self.ln_attn.forward(g, ps, x);
        let a = self.attn.forward(g, ps, h, memory.unwrap_or(h), bias)?;
        let mut x = g.add(x, a);
        if let Some((ln, f)) = &self.ffn {
            let h = ln.forward(g, ps, x);
            let h = f.forward(g, ps, h);
            x = g.add(x, h);
        }
        Ok(x)
    }

    /// Self-attention block evaluated only for the first `rows` positions;
    /// equal to `forward` followed by taking those rows.
    pub fn forward_prefix<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, x: Var, rows: usize) -> Result<Var> {
        let h = self.ln_attn.forward(g, ps, x);
        let q = g.slice_rows(h, 0, rows);
        let a = self.attn.forward(g, ps, q, h, None)?;
        let head = g.slice_rows(x, 0, rows);
        let mut x = g.add(head, a);
        if let Some((ln, f)) = &self.ffn {
            let h = ln.forward(g, ps, x);
            let h = f.forward(g, ps, h);
            x = g.add(x, h);
        }
        Ok(x)
    }
}

impl FeedForward {
    pub fn down(&self) -> &Linear {
        &self.down
    }
}

/// Causal temporal convolution: row `j` mixes input rows `j-K+1..=j`.
#[derive(Debug, Clone)]
pub struct CausalConv {
    proj: Linear,
    kernel: usize,
}

impl CausalConv {
    pub fn new(name: &str, d: usize, kernel: usize) -> Self {
        Self { proj: Linear::new(name, d * kernel, d), kernel }
    }

    pub fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.proj.specs(out);
    }

    pub fn forward<S: Scalar>(&self, g: &mut Graph<S>, ps: &ParamStore<S>, x: Var) -> Var {
        let taps: Vec<Var> = (0..self.kernel).map(|s| if s == 0 { x } else { g.shift_rows(x, s) }).collect();
        let stacked = g.concat_cols(&taps);
        self.proj.forward(g, ps, stacked)
    }
}

/// Zeroes every parameter of `l` (tests and ablations).
pub fn zero_linear<S: Scalar>(ps: &mut ParamStore<S>, l: &Linear) {
    for name in [l.weight_name(), l.bias_name()] {
        if let Some(v) = ps.get_mut(name) {
            v.fill(S::zero());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded() {
        let mut specs = Vec::new();
        Linear::new("a", 4, 3).specs(&mut specs);
        LayerNorm::new("n", 3).specs(&mut specs);
        let p1 = init_params::<f32>(&specs, 7);
        let p2 = init_params::<f32>(&specs, 7);
        let p3 = init_params::<f32>(&specs, 8);
        assert_eq!(p1, p2);
        assert_ne!(p1, p3);
        assert_eq!(p1.get("n.gamma").unwrap(), &Array2::<f32>::ones((1, 3)));
        assert_eq!(p1.get("a.b").unwrap(), &Array2::<f32>::zeros((1, 3)));
    }

    #[test]
    fn causal_conv_ignores_future_rows() {
        let conv = CausalConv::new("c", 2, 3);
        let mut specs = Vec::new();
        conv.specs(&mut specs);
        let ps = init_params::<f64>(&specs, 1);
        let run = |x: Array2<f64>| {
            let mut g = Graph::new();
            let xv = g.constant(x);
            let y = conv.forward(&mut g, &ps, xv);
            g.value(y).clone()
        };
        let x = Array2::from_shape_fn((5, 2), |(i, j)| (i * 2 + j) as f64 * 0.1);
        let mut x2 = x.clone();
        x2.row_mut(3).fill(7.0);
        let (a, b) = (run(x), run(x2));
        for r in 0..3 {
            assert_eq!(a.row(r), b.row(r));
        }
        assert_ne!(a.row(3), b.row(3));
    }

    #[test]
    fn prefix_forward_matches_full_rows() {
        let block = AttentionBlock::new("b", 4, 2, Some(8));
        let mut specs = Vec::new();
        block.specs(&mut specs);
        let ps = init_params::<f64>(&specs, 2);
        let mut g = Graph::new();
        let x = g.constant(Array2::from_shape_fn((5, 4), |(i, j)| ((i * 4 + j) as f64).cos()));
        let full = block.forward(&mut g, &ps, x, None, None).unwrap();
        let head = block.forward_prefix(&mut g, &ps, x, 2).unwrap();
        let expect = g.value(full).slice(ndarray::s![0..2, ..]).to_owned();
        let diff = (&expect - g.value(head)).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
        assert!(diff < 1e-12);
    }
}
