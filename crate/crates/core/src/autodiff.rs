//! Dense `f64` tensors with a tape-based reverse-mode autodiff engine.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! append a node and hand back a [`Var`] handle; [`Tape::backward`] walks the
//! nodes in reverse insertion order, which is a valid topological order since
//! a node can only reference nodes created before it.
//!
//! Values on the tape are never mutated after they are recorded.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalarLoss(Vec<usize>),
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

fn mismatch(op: &'static str, shapes: &[&[usize]]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

/// Row-major dense array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(AutodiffError::InvalidTensor(format!(
                "shape {shape:?} must be non-empty with positive extents"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(AutodiffError::InvalidTensor(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Self {
            shape: vec![values.len()],
            data: values,
        }
    }

    /// Builds a `[rows.len(), width]` matrix. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * width);
        for r in rows {
            assert_eq!(r.as_ref().len(), width, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            shape: vec![rows.len(), width],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Size of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.data[row * c..(row + 1) * c]
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Concat(Var, Var),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    RepeatRows(Var),
    Transpose(Var),
    Mean { src: Var, axis: usize },
    Sum(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    LayerNorm { src: Var, rstd: Vec<f64> },
    Mse(Var, Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, or `None` when the loss
    /// does not depend on it.
    pub fn get(&self, var: Var) -> Option<Tensor> {
        self.grads[var.0].as_ref().map(|g| Tensor {
            shape: self.shapes[var.0].clone(),
            data: g.clone(),
        })
    }

    /// Like [`Gradients::get`] but unreachable vars give zeros.
    pub fn get_or_zero(&self, var: Var) -> Tensor {
        self.get(var)
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }
}

/// Suffix broadcast: `small` must equal a trailing slice of `big`.
fn broadcasts(big: &[usize], small: &[usize]) -> bool {
    small.len() <= big.len() && big[big.len() - small.len()..] == *small
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        &self.nodes[var.0].value.shape
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. Parameters and constants are both leaves.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", &[sa, sb]));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = &self.nodes[a.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &y) in orow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        Ok(self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul(a, b)))
    }

    fn broadcast_binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !broadcasts(sa, sb) {
            return Err(mismatch(name, &[sa, sb]));
        }
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value.data;
        let bl = bv.len();
        let data = av
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv[i % bl]))
            .collect();
        let shape = av.shape.clone();
        Ok(self.push(Tensor { shape, data }, op))
    }

    /// Elementwise `a + b`; `b` broadcasts over the leading axes of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product with the same broadcast rule as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.broadcast_binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let v = &self.nodes[a.0].value;
        let data = v.data.iter().map(|&x| scale * x + shift).collect();
        let shape = v.shape.clone();
        self.push(Tensor { shape, data }, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(mismatch("concat", &[sa, sb]));
        }
        let (ca, cb) = (*sa.last().unwrap(), *sb.last().unwrap());
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        let av = &self.nodes[a.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let rows = av.len() / ca;
        let mut data = Vec::with_capacity(av.len() + bv.len());
        for r in 0..rows {
            data.extend_from_slice(&av[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&bv[r * cb..(r + 1) * cb]);
        }
        Ok(self.push(Tensor { shape, data }, Op::Concat(a, b)))
    }

    /// Stacks along axis 0; trailing axes must agree.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| AutodiffError::InvalidTensor("concat_rows of nothing".into()))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != tail[..] {
                return Err(mismatch("concat_rows", &[self.shape(*first), s]));
            }
            rows += s[0];
            data.extend_from_slice(&self.nodes[p.0].value.data);
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        Ok(self.push(Tensor { shape, data }, Op::ConcatRows(parts.to_vec())))
    }

    /// Rows `start..end` along axis 0.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(a);
        if start >= end || end > s[0] {
            return Err(mismatch("slice_rows", &[s, &[start, end]]));
        }
        let stride: usize = s[1..].iter().product();
        let mut shape = s.to_vec();
        shape[0] = end - start;
        let data = self.nodes[a.0].value.data[start * stride..end * stride].to_vec();
        Ok(self.push(Tensor { shape, data }, Op::SliceRows(a, start)))
    }

    /// Columns `start..end` along the last axis.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(a);
        let c = *s.last().unwrap();
        if start >= end || end > c {
            return Err(mismatch("slice_cols", &[s, &[start, end]]));
        }
        let mut shape = s.to_vec();
        *shape.last_mut().unwrap() = end - start;
        let src = &self.nodes[a.0].value.data;
        let data = src
            .chunks(c)
            .flat_map(|row| row[start..end].iter().copied())
            .collect();
        Ok(self.push(Tensor { shape, data }, Op::SliceCols(a, start)))
    }

    /// Tiles a `[c]` or `[1, c]` value into `[n, c]`.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let s = self.shape(a);
        let c = match s {
            [c] => *c,
            [1, c] => *c,
            _ => return Err(mismatch("repeat_rows", &[s])),
        };
        if n == 0 {
            return Err(mismatch("repeat_rows", &[s, &[n]]));
        }
        let row = self.nodes[a.0].value.data.clone();
        let data = row.iter().copied().cycle().take(n * c).collect();
        Ok(self.push(Tensor { shape: vec![n, c], data }, Op::RepeatRows(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(mismatch("transpose", &[s]));
        }
        let (m, n) = (s[0], s[1]);
        let src = &self.nodes[a.0].value.data;
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        Ok(self.push(Tensor { shape: vec![n, m], data }, Op::Transpose(a)))
    }

    /// Mean along `axis`; the axis is removed (a fully reduced result is `[1]`).
    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.shape(a);
        if axis >= s.len() {
            return Err(mismatch("mean", &[s, &[axis]]));
        }
        let (outer, n, inner) = axis_split(s, axis);
        let src = &self.nodes[a.0].value.data;
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                for j in 0..inner {
                    data[o * inner + j] += src[base + j];
                }
            }
        }
        let inv = 1.0 / n as f64;
        data.iter_mut().for_each(|v| *v *= inv);
        let mut shape: Vec<usize> = s.to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(self.push(Tensor { shape, data }, Op::Mean { src: a, axis }))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.nodes[a.0].value.data.iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = &self.nodes[a.0].value;
        let data = v.data.iter().map(|&x| f(x)).collect();
        let shape = v.shape.clone();
        self.push(Tensor { shape, data }, op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let c = v.cols();
        let mut data = v.data.clone();
        for row in data.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        }
        let shape = v.shape.clone();
        self.push(Tensor { shape, data }, Op::Softmax(a))
    }

    /// Normalizes each last-axis row to zero mean and unit population variance.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let v = &self.nodes[a.0].value;
        let c = v.cols();
        let mut data = v.data.clone();
        let mut rstd = Vec::with_capacity(data.len() / c);
        for row in data.chunks_mut(c) {
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / c as f64;
            let r = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mu) * r);
            rstd.push(r);
        }
        let shape = v.shape.clone();
        self.push(Tensor { shape, data }, Op::LayerNorm { src: a, rstd })
    }

    /// Mean squared error over all elements, shape `[1]`.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (sp, st) = (self.shape(pred), self.shape(target));
        if sp != st {
            return Err(mismatch("mse", &[sp, st]));
        }
        let p = &self.nodes[pred.0].value.data;
        let t = &self.nodes[target.0].value.data;
        let total: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let loss = total / p.len() as f64;
        Ok(self.push(Tensor::scalar(loss), Op::Mse(pred, target)))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let ls = self.shape(loss);
        if ls.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NotScalarLoss(ls.to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape.clone()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.shape[0], av.shape[1], bv.shape[1]);
                let ga = acc(grads, *a, av.len());
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &bv.data[p * n..(p + 1) * n];
                        ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                let gb = acc(grads, *b, bv.len());
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let x = av.data[i * k + p];
                        if x == 0.0 {
                            continue;
                        }
                        let gbrow = &mut gb[p * n..(p + 1) * n];
                        for (o, &y) in gbrow.iter_mut().zip(grow) {
                            *o += x * y;
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let ga = acc(grads, *a, g.len());
                ga.iter_mut().zip(g).for_each(|(o, x)| *o += x);
                let bl = val(*b).len();
                let gb = acc(grads, *b, bl);
                for (i, x) in g.iter().enumerate() {
                    gb[i % bl] += sign * x;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let bl = bv.len();
                let ga = acc(grads, *a, av.len());
                for (i, x) in g.iter().enumerate() {
                    ga[i] += x * bv.data[i % bl];
                }
                let gb = acc(grads, *b, bl);
                for (i, x) in g.iter().enumerate() {
                    gb[i % bl] += x * av.data[i];
                }
            }
            Op::Affine(a, s) => {
                let ga = acc(grads, *a, g.len());
                ga.iter_mut().zip(g).for_each(|(o, x)| *o += s * x);
            }
            Op::Concat(a, b) => {
                let (ca, cb) = (val(*a).cols(), val(*b).cols());
                let rows = g.len() / (ca + cb);
                let ga = acc(grads, *a, rows * ca);
                for r in 0..rows {
                    for j in 0..ca {
                        ga[r * ca + j] += g[r * (ca + cb) + j];
                    }
                }
                let gb = acc(grads, *b, rows * cb);
                for r in 0..rows {
                    for j in 0..cb {
                        gb[r * cb + j] += g[r * (ca + cb) + ca + j];
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let l = val(*p).len();
                    let gp = acc(grads, *p, l);
                    gp.iter_mut()
                        .zip(&g[offset..offset + l])
                        .for_each(|(o, x)| *o += x);
                    offset += l;
                }
            }
            Op::SliceRows(a, start) => {
                let av = val(*a);
                let stride: usize = av.shape[1..].iter().product();
                let ga = acc(grads, *a, av.len());
                let base = start * stride;
                ga[base..base + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(o, x)| *o += x);
            }
            Op::SliceCols(a, start) => {
                let av = val(*a);
                let c = av.cols();
                let w = node.value.cols();
                let ga = acc(grads, *a, av.len());
                for (r, grow) in g.chunks(w).enumerate() {
                    for (j, x) in grow.iter().enumerate() {
                        ga[r * c + start + j] += x;
                    }
                }
            }
            Op::RepeatRows(a) => {
                let c = val(*a).len();
                let ga = acc(grads, *a, c);
                for (i, x) in g.iter().enumerate() {
                    ga[i % c] += x;
                }
            }
            Op::Transpose(a) => {
                let av = val(*a);
                let (m, n) = (av.shape[0], av.shape[1]);
                let ga = acc(grads, *a, m * n);
                for i in 0..m {
                    for j in 0..n {
                        ga[i * n + j] += g[j * m + i];
                    }
                }
            }
            Op::Mean { src, axis } => {
                let sv = val(*src);
                let (outer, n, inner) = axis_split(&sv.shape, *axis);
                let inv = 1.0 / n as f64;
                let ga = acc(grads, *src, sv.len());
                for o in 0..outer {
                    for k in 0..n {
                        let base = (o * n + k) * inner;
                        for j in 0..inner {
                            ga[base + j] += g[o * inner + j] * inv;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let ga = acc(grads, *a, val(*a).len());
                ga.iter_mut().for_each(|o| *o += g[0]);
            }
            Op::Sigmoid(a) => {
                let y = &node.value.data;
                let ga = acc(grads, *a, y.len());
                for i in 0..y.len() {
                    ga[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            }
            Op::Tanh(a) => {
                let y = &node.value.data;
                let ga = acc(grads, *a, y.len());
                for i in 0..y.len() {
                    ga[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }
            Op::Relu(a) => {
                let x = &val(*a).data;
                let ga = acc(grads, *a, x.len());
                for i in 0..x.len() {
                    if x[i] > 0.0 {
                        ga[i] += g[i];
                    }
                }
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let c = y.cols();
                let ga = acc(grads, *a, y.len());
                for (r, (yr, gr)) in y.data.chunks(c).zip(g.chunks(c)).enumerate() {
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        ga[r * c + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::LayerNorm { src, rstd } => {
                let y = &node.value;
                let c = y.cols();
                let ga = acc(grads, *src, y.len());
                for (r, (yr, gr)) in y.data.chunks(c).zip(g.chunks(c)).enumerate() {
                    let mean_g = gr.iter().sum::<f64>() / c as f64;
                    let mean_gy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / c as f64;
                    for j in 0..c {
                        ga[r * c + j] += rstd[r] * (gr[j] - mean_g - yr[j] * mean_gy);
                    }
                }
            }
            Op::Mse(p, t) => {
                let (pv, tv) = (&val(*p).data, &val(*t).data);
                let k = 2.0 * g[0] / pv.len() as f64;
                let gp = acc(grads, *p, pv.len());
                for i in 0..pv.len() {
                    gp[i] += k * (pv[i] - tv[i]);
                }
                let gt = acc(grads, *t, tv.len());
                for i in 0..tv.len() {
                    gt[i] -= k * (pv[i] - tv[i]);
                }
            }
        }
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Per-element `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub relative_errors: Vec<f64>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
    pub passed: bool,
}

/// Magnitudes below this are compared absolutely rather than relatively.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares the tape gradient of scalar `f` at `x` against central
/// differences with step `h`. Passes iff the max relative error is `< tol`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let loss = f(&mut tape, xv)?;
    let analytic = tape.backward(loss)?.get_or_zero(xv).into_data();

    let eval = |probe: &Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.leaf(probe.clone());
        let out = f(&mut t, v)?;
        Ok(t.value(out).item())
    };

    let mut numeric = Vec::with_capacity(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let up = eval(&probe)?;
        probe.data[i] = orig - h;
        let down = eval(&probe)?;
        probe.data[i] = orig;
        numeric.push((up - down) / (2.0 * h));
    }

    let relative_errors: Vec<f64> = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(GRAD_CHECK_FLOOR))
        .collect();
    let max_relative_error = relative_errors.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        relative_errors,
        analytic,
        numeric,
        max_relative_error,
        passed: max_relative_error < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.sigmoid(x);
        assert_eq!(tape.value(y).item(), 0.5);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 0.25);
    }

    #[test]
    fn softmax_of_constant_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::filled(&[2, 5], 3.7));
        let y = tape.softmax(x);
        for v in tape.value(y).data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn mse_of_identical_is_zero_with_zero_grad() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2, 2], &[1.0, -2.0, 3.0, 0.5]));
        let b = tape.leaf(t(&[2, 2], &[1.0, -2.0, 3.0, 0.5]));
        let l = tape.mse(a, b).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
        let g = tape.backward(l).unwrap();
        assert!(g.get(a).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mse_grad_closed_form() {
        let xs = [0.3, -1.2, 2.5, 4.0, -0.7];
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(xs.to_vec()));
        let z = tape.leaf(Tensor::zeros(&[5]));
        let l = tape.mse(x, z).unwrap();
        let g = tape.backward(l).unwrap().get(x).unwrap();
        for (gi, xi) in g.data().iter().zip(xs) {
            assert!((gi - 2.0 * xi / 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors_are_typed() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        assert!(matches!(
            tape.matmul(a, b),
            Err(AutodiffError::ShapeMismatch { op: "matmul", .. })
        ));
        let c = tape.leaf(Tensor::zeros(&[2]));
        assert!(tape.add(a, c).is_err());
        assert!(matches!(tape.backward(a), Err(AutodiffError::NotScalarLoss(_))));
    }

    #[test]
    fn tensor_rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert!(Tensor::new(vec![], vec![1.0]).is_err());
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 4], &[1.0, 2.0, 3.0, 4.0, -5.0, 0.0, 10.0, 2.0]));
        let y = tape.layer_norm(x, 1e-5);
        for row in tape.value(y).data().chunks(4) {
            let mu: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 4.0;
            assert!(mu.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn mean_over_each_axis() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let m0 = tape.mean(x, 0).unwrap();
        let m1 = tape.mean(x, 1).unwrap();
        assert_eq!(tape.value(m0).data(), &[2.5, 3.5, 4.5]);
        assert_eq!(tape.value(m1).data(), &[2.0, 5.0]);
    }

    #[test]
    fn slicing_and_concat_invert() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let l = tape.slice_cols(x, 0, 1).unwrap();
        let r = tape.slice_cols(x, 1, 3).unwrap();
        let back = tape.concat(l, r).unwrap();
        assert_eq!(tape.value(back), tape.value(x));
        let top = tape.slice_rows(x, 0, 1).unwrap();
        let bottom = tape.slice_rows(x, 1, 2).unwrap();
        let rows = tape.concat_rows(&[top, bottom]).unwrap();
        assert_eq!(tape.value(rows), tape.value(x));
    }

    #[test]
    fn unreachable_leaf_has_no_grad() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(2.0));
        let b = tape.leaf(Tensor::scalar(3.0));
        let y = tape.tanh(a);
        let g = tape.backward(y).unwrap();
        assert!(g.get(b).is_none());
        assert_eq!(g.get_or_zero(b).item(), 0.0);
    }
}
