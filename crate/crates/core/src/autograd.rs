//! Tape-based reverse-mode differentiation over dense 2-D matrices.
//!
//! Every value in the model is a row-major `rows x cols` matrix: sequences are
//! `L x d`, vectors are `1 x d`, and scalars are `1 x 1`. A [`Graph`] records the
//! forward computation; [`Graph::backward`] walks it in reverse creation order.
//! A graph is owned by one thread; data-parallel training builds one graph per
//! session and sums the parameter gradients afterwards in a fixed order.

use std::collections::HashMap;
use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{linalg::general_mat_mul, s, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive};

/// Floating-point element type usable by the model (f32 for training, f64 for checks).
pub trait Scalar:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    const DTYPE: &'static str;
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("finite constant")
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

/// Converts a matrix between scalar types through f64.
pub fn cast<A: Scalar, B: Scalar>(m: &Array2<A>) -> Array2<B> {
    m.mapv(|x| B::from_f64(x.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(B::nan))
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, S),
    Gelu(Var),
    Exp(Var),
    Abs(Var),
    Square(Var),
    Huber(Var, S),
    Clamp(Var, S, S),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    ShiftRows(Var, usize),
    Softmax(Var),
    LayerNorm(Var, Vec<S>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node<S> {
    value: Array2<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Named trainable matrices in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    values: Vec<Array2<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }

    /// Inserts or replaces a parameter.
    pub fn insert(&mut self, name: impl Into<String>, value: Array2<S>) {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.values[i] = value;
        } else {
            self.index.insert(name.clone(), self.names.len());
            self.names.push(name);
            self.values.push(value);
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Array2<S>> {
        self.index_of(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<S>> {
        self.index_of(name).map(move |i| &mut self.values[i])
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn value(&self, i: usize) -> &Array2<S> {
        &self.values[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Array2<S> {
        &mut self.values[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<S>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Zero matrices with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect(),
            index: self.index.clone(),
        }
    }
}

/// Recorded forward computation.
#[derive(Debug, Clone)]
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    param_vars: HashMap<usize, Var>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::with_capacity(1024), param_vars: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Array2<S> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> S {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, value: Array2<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Input whose gradient is reported by [`Graph::backward`].
    pub fn input(&mut self, value: Array2<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Parameter leaf, created once per graph and reused on later lookups.
    pub fn param(&mut self, ps: &ParamStore<S>, name: &str) -> Var {
        let i = ps
            .index_of(name)
            .unwrap_or_else(|| panic!("parameter `{name}` is not registered"));
        if let Some(&v) = self.param_vars.get(&i) {
            return v;
        }
        let v = self.push(ps.values[i].clone(), Op::Param, true);
        self.param_vars.insert(i, v);
        v
    }

    /// Copies the value of `v` into a fresh constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(y, Op::MatMul(a, b), ng)
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).dot(&self.value(b).t());
        let ng = self.ng(a) || self.ng(b);
        self.push(y, Op::MatMulT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(y, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(y, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(y, Op::Mul(a, b), ng)
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "add_row expects a single row");
        let y = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(y, Op::AddRow(a, row), ng)
    }

    /// Multiplies every row of `a` elementwise by a `1 x n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "mul_row expects a single row");
        let y = self.value(a) * self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(y, Op::MulRow(a, row), ng)
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        let y = self.value(a) * c;
        let ng = self.ng(a);
        self.push(y, Op::Scale(a, c), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let y = self.value(a).mapv(|x| gelu(x).0);
        let ng = self.ng(a);
        self.push(y, Op::Gelu(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let y = self.value(a).mapv(S::exp);
        let ng = self.ng(a);
        self.push(y, Op::Exp(a), ng)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let y = self.value(a).mapv(S::abs);
        let ng = self.ng(a);
        self.push(y, Op::Abs(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let y = self.value(a).mapv(|x| x * x);
        let ng = self.ng(a);
        self.push(y, Op::Square(a), ng)
    }

    /// Elementwise Huber: `0.5 x^2 / beta` inside `|x| < beta`, `|x| - 0.5 beta` outside.
    pub fn huber(&mut self, a: Var, beta: S) -> Var {
        let half = S::c(0.5);
        let y = self.value(a).mapv(|x| {
            let ax = x.abs();
            if ax < beta {
                half * x * x / beta
            } else {
                ax - half * beta
            }
        });
        let ng = self.ng(a);
        self.push(y, Op::Huber(a, beta), ng)
    }

    pub fn clamp(&mut self, a: Var, lo: S, hi: S) -> Var {
        let y = self.value(a).mapv(|x| x.max(lo).min(hi));
        let ng = self.ng(a);
        self.push(y, Op::Clamp(a, lo, hi), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let y = self.value(a).slice(s![start..start + len, ..]).to_owned();
        let ng = self.ng(a);
        self.push(y, Op::SliceRows(a, start), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let y = self.value(a).slice(s![.., start..start + len]).to_owned();
        let ng = self.ng(a);
        self.push(y, Op::SliceCols(a, start), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        if parts.len() == 1 {
            return parts[0];
        }
        let views: Vec<ArrayView2<S>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let y = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(y, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        if parts.len() == 1 {
            return parts[0];
        }
        let views: Vec<ArrayView2<S>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let y = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(y, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// `y[i] = a[i - shift]`, zero for `i < shift`.
    pub fn shift_rows(&mut self, a: Var, shift: usize) -> Var {
        let x = self.value(a);
        let n = x.nrows();
        let mut y = Array2::zeros(x.raw_dim());
        if shift < n {
            y.slice_mut(s![shift.., ..]).assign(&x.slice(s![..n - shift, ..]));
        }
        let ng = self.ng(a);
        self.push(y, Op::ShiftRows(a, shift), ng)
    }

    /// Row softmax of `a + bias`; `-inf` bias entries get exactly zero weight.
    ///
    /// Every row must hold at least one finite bias entry.
    pub fn softmax_biased(&mut self, a: Var, bias: Option<&Array2<S>>) -> Var {
        let x = self.value(a);
        let mut y = x.clone();
        if let Some(b) = bias {
            assert_eq!(b.dim(), x.dim(), "bias shape");
            assert!(b.rows().into_iter().all(|r| r.iter().any(|v| v.is_finite())), "softmax row has no finite bias entry");
            y += b;
        }
        for mut row in y.rows_mut() {
            let m = row.iter().copied().fold(S::neg_infinity(), S::max);
            if !m.is_finite() || row.iter().any(|v| v.is_nan()) {
                // overflowed logits; let the loss report divergence
                row.fill(S::nan());
                continue;
            }
            let mut total = S::zero();
            for v in row.iter_mut() {
                *v = if *v == S::neg_infinity() { S::zero() } else { (*v - m).exp() };
                total = total + *v;
            }
            row.mapv_inplace(|v| v / total);
        }
        let ng = self.ng(a);
        self.push(y, Op::Softmax(a), ng)
    }

    /// Per-row standardization without affine parameters.
    pub fn layer_norm(&mut self, a: Var, eps: S) -> Var {
        let x = self.value(a);
        let n = S::from_usize(x.ncols()).expect("width");
        let mut y = x.clone();
        let mut inv = Vec::with_capacity(x.nrows());
        for mut row in y.rows_mut() {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).sum::<S>() / n;
            let is = S::one() / (var + eps).sqrt();
            row.mapv_inplace(|v| v * is);
            inv.push(is);
        }
        let ng = self.ng(a);
        self.push(y, Op::LayerNorm(a, inv), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let y = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.ng(a);
        self.push(y, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let y = Array2::from_elem((1, 1), x.sum() / S::from_usize(x.len()).expect("len"));
        let ng = self.ng(a);
        self.push(y, Op::Mean(a), ng)
    }

    /// Reverse sweep from a `1 x 1` root.
    pub fn backward(&self, root: Var) -> Gradients<S> {
        assert_eq!(self.shape(root), (1, 1), "backward expects a scalar root");
        let mut grads: Vec<Option<Array2<S>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::ones((1, 1)));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = None;
                continue;
            }
            let gy = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &node.op {
                Op::Leaf | Op::Param => {
                    grads[i] = Some(gy);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        let g = gy.dot(&self.value(*b).t());
                        acc(&mut grads, *a, g);
                    }
                    if self.ng(*b) {
                        let g = self.value(*a).t().dot(&gy);
                        acc(&mut grads, *b, g);
                    }
                }
                Op::MatMulT(a, b) => {
                    if self.ng(*a) {
                        let g = gy.dot(self.value(*b));
                        acc(&mut grads, *a, g);
                    }
                    if self.ng(*b) {
                        let g = gy.t().dot(self.value(*a));
                        acc(&mut grads, *b, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.ng(*b) {
                        acc(&mut grads, *b, gy.clone());
                    }
                    if self.ng(*a) {
                        acc(&mut grads, *a, gy);
                    }
                }
                Op::Sub(a, b) => {
                    if self.ng(*b) {
                        acc(&mut grads, *b, gy.mapv(|v| -v));
                    }
                    if self.ng(*a) {
                        acc(&mut grads, *a, gy);
                    }
                }
                Op::Mul(a, b) => {
                    if self.ng(*a) {
                        acc(&mut grads, *a, &gy * self.value(*b));
                    }
                    if self.ng(*b) {
                        acc(&mut grads, *b, &gy * self.value(*a));
                    }
                }
                Op::AddRow(a, r) => {
                    if self.ng(*r) {
                        acc(&mut grads, *r, gy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.ng(*a) {
                        acc(&mut grads, *a, gy);
                    }
                }
                Op::MulRow(a, r) => {
                    if self.ng(*r) {
                        let g = (&gy * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                        acc(&mut grads, *r, g);
                    }
                    if self.ng(*a) {
                        acc(&mut grads, *a, &gy * self.value(*r));
                    }
                }
                Op::Scale(a, c) => acc(&mut grads, *a, gy * *c),
                Op::Gelu(a) => {
                    let mut g = gy;
                    Zip::from(&mut g).and(self.value(*a)).for_each(|g, &x| *g = *g * gelu(x).1);
                    acc(&mut grads, *a, g);
                }
                Op::Exp(a) => acc(&mut grads, *a, gy * &node.value),
                Op::Abs(a) => {
                    let mut g = gy;
                    Zip::from(&mut g).and(self.value(*a)).for_each(|g, &x| *g = *g * sign(x));
                    acc(&mut grads, *a, g);
                }
                Op::Square(a) => {
                    let mut g = gy;
                    let two = S::c(2.0);
                    Zip::from(&mut g).and(self.value(*a)).for_each(|g, &x| *g = *g * two * x);
                    acc(&mut grads, *a, g);
                }
                Op::Huber(a, beta) => {
                    let mut g = gy;
                    let beta = *beta;
                    Zip::from(&mut g).and(self.value(*a)).for_each(|g, &x| {
                        let d = if x.abs() < beta { x / beta } else { sign(x) };
                        *g = *g * d;
                    });
                    acc(&mut grads, *a, g);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut g = gy;
                    let (lo, hi) = (*lo, *hi);
                    Zip::from(&mut g).and(self.value(*a)).for_each(|g, &x| {
                        if x < lo || x > hi {
                            *g = S::zero();
                        }
                    });
                    acc(&mut grads, *a, g);
                }
                Op::SliceRows(a, start) => {
                    let mut g = Array2::zeros(self.value(*a).raw_dim());
                    g.slice_mut(s![*start..*start + gy.nrows(), ..]).assign(&gy);
                    acc(&mut grads, *a, g);
                }
                Op::SliceCols(a, start) => {
                    let mut g = Array2::zeros(self.value(*a).raw_dim());
                    g.slice_mut(s![.., *start..*start + gy.ncols()]).assign(&gy);
                    acc(&mut grads, *a, g);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).nrows();
                        if self.ng(p) {
                            acc(&mut grads, p, gy.slice(s![off..off + n, ..]).to_owned());
                        }
                        off += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).ncols();
                        if self.ng(p) {
                            acc(&mut grads, p, gy.slice(s![.., off..off + n]).to_owned());
                        }
                        off += n;
                    }
                }
                Op::ShiftRows(a, shift) => {
                    let n = gy.nrows();
                    let mut g = Array2::zeros(gy.raw_dim());
                    if *shift < n {
                        g.slice_mut(s![..n - shift, ..]).assign(&gy.slice(s![*shift.., ..]));
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut g = &gy * y;
                    for (mut grow, yrow) in g.rows_mut().into_iter().zip(y.rows()) {
                        let dot = grow.sum();
                        Zip::from(&mut grow).and(&yrow).for_each(|gv, &yv| *gv = *gv - yv * dot);
                    }
                    acc(&mut grads, *a, g);
                }
                Op::LayerNorm(a, inv) => {
                    let y = &node.value;
                    let n = S::from_usize(y.ncols()).expect("width");
                    let mut g = gy;
                    for ((mut grow, yrow), &is) in g.rows_mut().into_iter().zip(y.rows()).zip(inv) {
                        let mg = grow.sum() / n;
                        let mgy = grow.iter().zip(yrow.iter()).map(|(&a, &b)| a * b).sum::<S>() / n;
                        Zip::from(&mut grow)
                            .and(&yrow)
                            .for_each(|gv, &yv| *gv = is * (*gv - mg - yv * mgy));
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Sum(a) => {
                    let g = Array2::from_elem(self.value(*a).raw_dim(), gy[[0, 0]]);
                    acc(&mut grads, *a, g);
                }
                Op::Mean(a) => {
                    let x = self.value(*a);
                    let c = gy[[0, 0]] / S::from_usize(x.len()).expect("len");
                    acc(&mut grads, *a, Array2::from_elem(x.raw_dim(), c));
                }
            }
        }
        Gradients { grads }
    }
}

fn acc<S: Scalar>(grads: &mut [Option<Array2<S>>], v: Var, g: Array2<S>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

#[inline]
fn sign<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        S::one()
    } else if x < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

/// tanh-approximated GELU and its derivative.
#[inline]
fn gelu<S: Scalar>(x: S) -> (S, S) {
    let k = S::c(0.797_884_560_802_865_4);
    let c = S::c(0.044715);
    let half = S::c(0.5);
    let inner = k * (x + c * x * x * x);
    let t = inner.tanh();
    let y = half * x * (S::one() + t);
    let dinner = k * (S::one() + S::c(3.0) * c * x * x);
    let dy = half * (S::one() + t) + half * x * (S::one() - t * t) * dinner;
    (y, dy)
}

/// Result of [`Graph::backward`]: gradients of the root w.r.t. leaves and parameters.
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Array2<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of a leaf (zero-sized `None` when the root does not depend on it).
    pub fn get(&self, v: Var) -> Option<&Array2<S>> {
        self.grads[v.0].as_ref()
    }

    /// Gradients laid out like `ps`; parameters the root ignores get zeros.
    pub fn params(&self, graph: &Graph<S>, ps: &ParamStore<S>) -> ParamStore<S> {
        let mut out = ps.zeros_like();
        for (&pi, &v) in &graph.param_vars {
            if let Some(g) = &self.grads[v.0] {
                out.values[pi].assign(g);
            }
        }
        out
    }
}

/// `c += a * b` without allocating.
pub fn gemm_acc<S: Scalar>(c: &mut Array2<S>, a: &ArrayView2<S>, b: &ArrayView2<S>) {
    general_mat_mul(S::one(), a, b, S::one(), c);
}
