//! Define-by-run tape. Every op evaluates eagerly, appends a node and returns
//! a [`Var`] handle; [`Tape::backward`] walks the nodes in reverse.

use super::tensor::{Scalar, Tensor};
use super::AutodiffError;

type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    Clamp(Var, T, T),
    SoftmaxRows(Var),
    LogSumExpRows(Var),
    Sum(Var),
    MeanAxis(Var, usize),
    Concat(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Embedding(Var, Vec<usize>),
    LayerNorm { x: Var, gain: Var, bias: Var, eps: T },
    Cosine(Var, Var, T),
    NormalizeRows(Var, T),
    Reshape(Var),
    Diagonal(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape<T = f32> {
    nodes: Vec<Node<T>>,
}

/// Result of [`Tape::backward`]: one gradient slot per tape node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient w.r.t. `var`; a zero tensor when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor<T> {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }

    pub fn take(&mut self, var: Var) -> Tensor<T> {
        self.grads[var.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }
}

fn mismatch(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, detail }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if cfg!(debug_assertions) && !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v)
            .dims2()
            .ok_or_else(|| mismatch(op, format!("expected a matrix, got shape {:?}", self.shape(v))))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn map(&mut self, x: Var, name: &'static str, op: Op<T>, f: impl Fn(T) -> T) -> Result<Var> {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::from_parts(src.shape().to_vec(), data);
        self.push(name, out, op, &[x])
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts(va.shape().to_vec(), data);
        self.push(name, out, op, &[a, b])
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", format!("[{m},{k}] x [{k2},{n}]")));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            k as isize,
            1,
            self.value(b).data(),
            n as isize,
            1,
            T::zero(),
            &mut out,
            n as isize,
            1,
        );
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "transpose")?;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.push("transpose", Tensor::from_parts(vec![c, r], out), Op::Transpose(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a `[c]` bias to every row of an `[r,c]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "add_bias")?;
        if self.shape(bias) != [c] {
            return Err(mismatch("add_bias", format!("[{r},{c}] + {:?}", self.shape(bias))));
        }
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(c)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &bb)| v + bb))
            .collect();
        self.push("add_bias", Tensor::from_parts(vec![r, c], data), Op::AddBias(x, bias), &[x, bias])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let f = T::lit(factor);
        self.map(x, "scale", Op::Scale(x, f), |v| v * f)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        let c = T::lit(c);
        self.map(x, "add_scalar", Op::AddScalar(x), |v| v + c)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map(x, "tanh", Op::Tanh(x), |v| v.tanh())
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map(x, "sigmoid", Op::Sigmoid(x), sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.map(x, "exp", Op::Exp(x), |v| v.exp())
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.map(x, "log", Op::Log(x), |v| v.ln())
    }

    /// `max(0, x)`.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map(x, "relu", Op::Relu(x), |v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        let (lo, hi) = (T::lit(lo), T::lit(hi));
        self.map(x, "clamp", Op::Clamp(x, lo, hi), |v| v.max(lo).min(hi))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "softmax_rows")?;
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                total = total + *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        self.push("softmax_rows", Tensor::from_parts(vec![r, c], data), Op::SoftmaxRows(x), &[x])
    }

    /// `[r,c] -> [r]`, stable `log sum exp` of each row.
    pub fn logsumexp_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "logsumexp_rows")?;
        if c == 0 {
            return Err(mismatch("logsumexp_rows", "empty rows".into()));
        }
        let data = self.value(x).data().chunks(c).map(row_logsumexp).collect();
        self.push("logsumexp_rows", Tensor::from_parts(vec![r], data), Op::LogSumExpRows(x), &[x])
    }

    /// Sum of all entries, shape `[]`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(x), &[x])
    }

    /// Mean over `axis` of a matrix: axis 0 gives `[c]`, axis 1 gives `[r]`.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.dims2(x, "mean_axis")?;
        let src = self.value(x).data();
        let out = match axis {
            0 if r > 0 => {
                let mut acc = vec![T::zero(); c];
                for row in src.chunks(c) {
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a = *a + v;
                    }
                }
                let n = T::lit(r as f64);
                Tensor::from_parts(vec![c], acc.into_iter().map(|v| v / n).collect())
            }
            1 if c > 0 => {
                let n = T::lit(c as f64);
                let data = src.chunks(c).map(|row| row.iter().copied().sum::<T>() / n).collect();
                Tensor::from_parts(vec![r], data)
            }
            _ => return Err(mismatch("mean_axis", format!("axis {axis} of [{r},{c}]"))),
        };
        self.push("mean_axis", out, Op::MeanAxis(x, axis), &[x])
    }

    /// Concatenation along the last axis; inputs share rank and leading dims.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| mismatch("concat", "no inputs".into()))?;
        let lead = self.shape(first)[..self.shape(first).len().saturating_sub(1)].to_vec();
        if self.shape(first).is_empty() {
            return Err(mismatch("concat", "scalar input".into()));
        }
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(mismatch("concat", format!("{:?} vs {:?}", self.shape(first), s)));
            }
            widths.push(s[lead.len()]);
        }
        let outer: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&x, &w) in xs.iter().zip(&widths) {
                data.extend_from_slice(&self.value(x).data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        self.push("concat", Tensor::from_parts(shape, data), Op::Concat(xs.to_vec()), xs)
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| mismatch("concat_rows", "no inputs".into()))?;
        let (_, c) = self.dims2(first, "concat_rows")?;
        let mut rows = 0;
        for &x in xs {
            let (r, c2) = self.dims2(x, "concat_rows")?;
            if c2 != c {
                return Err(mismatch("concat_rows", format!("{c} vs {c2} columns")));
            }
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * c);
        for &x in xs {
            data.extend_from_slice(self.value(x).data());
        }
        self.push("concat_rows", Tensor::from_parts(vec![rows, c], data), Op::ConcatRows(xs.to_vec()), xs)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2(x, "slice_rows")?;
        if start + len > r {
            return Err(mismatch("slice_rows", format!("rows {start}..{} of {r}", start + len)));
        }
        let data = self.value(x).data()[start * c..(start + len) * c].to_vec();
        self.push("slice_rows", Tensor::from_parts(vec![len, c], data), Op::SliceRows(x, start), &[x])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2(x, "slice_cols")?;
        if start + len > c {
            return Err(mismatch("slice_cols", format!("cols {start}..{} of {c}", start + len)));
        }
        let data = self
            .value(x)
            .data()
            .chunks(c.max(1))
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        self.push("slice_cols", Tensor::from_parts(vec![r, len], data), Op::SliceCols(x, start), &[x])
    }

    /// Gathers rows of a `[V,d]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.dims2(table, "embedding")?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(AutodiffError::IndexOutOfRange { index: bad, size: v });
        }
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        self.push(
            "embedding",
            Tensor::from_parts(vec![ids.len(), d], data),
            Op::Embedding(table, ids.to_vec()),
            &[table],
        )
    }

    /// Row-wise layer normalization with affine `gain` and `bias` of shape `[c]`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.dims2(x, "layer_norm")?;
        if self.shape(gain) != [c] || self.shape(bias) != [c] {
            return Err(mismatch("layer_norm", format!("affine params must be [{c}]")));
        }
        let eps = T::lit(eps);
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut data = Vec::with_capacity(r * c);
        for row in self.value(x).data().chunks(c) {
            let (mean, rstd) = row_stats(row, eps);
            data.extend(row.iter().zip(g).zip(b).map(|((&v, &gg), &bb)| (v - mean) * rstd * gg + bb));
        }
        self.push(
            "layer_norm",
            Tensor::from_parts(vec![r, c], data),
            Op::LayerNorm { x, gain, bias, eps },
            &[x, gain, bias],
        )
    }

    /// Cosine similarity of two vectors; `eps` is added to each norm.
    pub fn cosine_similarity(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        if self.shape(a).len() != 1 {
            return Err(mismatch("cosine_similarity", format!("expected vectors, got {:?}", self.shape(a))));
        }
        self.same_shape(a, b, "cosine_similarity")?;
        let eps = T::lit(eps);
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let dot: T = va.iter().zip(vb).map(|(&x, &y)| x * y).sum();
        let out = dot / ((norm(va) + eps) * (norm(vb) + eps));
        self.push("cosine_similarity", Tensor::scalar(out), Op::Cosine(a, b, eps), &[a, b])
    }

    /// Divides each row by `(||row|| + eps)`.
    pub fn normalize_rows(&mut self, x: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.dims2(x, "normalize_rows")?;
        let eps = T::lit(eps);
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            let s = norm(row) + eps;
            for v in row.iter_mut() {
                *v = *v / s;
            }
        }
        self.push("normalize_rows", Tensor::from_parts(vec![r, c], data), Op::NormalizeRows(x, eps), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).len() {
            return Err(mismatch("reshape", format!("{:?} -> {shape:?}", self.shape(x))));
        }
        let data = self.value(x).data().to_vec();
        self.push("reshape", Tensor::from_parts(shape.to_vec(), data), Op::Reshape(x), &[x])
    }

    /// Main diagonal of a square matrix.
    pub fn diagonal(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.dims2(x, "diagonal")?;
        if r != c {
            return Err(mismatch("diagonal", format!("[{r},{c}] is not square")));
        }
        let src = self.value(x).data();
        let data = (0..r).map(|i| src[i * c + i]).collect();
        self.push("diagonal", Tensor::from_parts(vec![r], data), Op::Diagonal(x), &[x])
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let n_out = self.value(loss).len();
        if n_out != 1 {
            return Err(AutodiffError::NotScalar { shape: self.shape(loss).to_vec() });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, delta: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, &b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a = *a + b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn elementwise(&self, x: Var, g: &Tensor<T>, f: impl Fn(T, T, T) -> T, out: &Tensor<T>) -> Tensor<T> {
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(out.data())
            .zip(g.data())
            .map(|((&xv, &yv), &gv)| f(xv, yv, gv))
            .collect();
        Tensor::from_parts(self.shape(x).to_vec(), data)
    }

    fn backward_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.value(a).dims2().unwrap();
                let n = self.value(b).shape()[1];
                if self.requires_grad(a) {
                    let mut da = vec![T::zero(); m * k];
                    T::gemm(m, n, k, T::one(), g.data(), n as isize, 1, self.value(b).data(), 1, n as isize, T::zero(), &mut da, k as isize, 1);
                    self.accumulate(grads, a, Tensor::from_parts(vec![m, k], da));
                }
                if self.requires_grad(b) {
                    let mut db = vec![T::zero(); k * n];
                    T::gemm(k, m, n, T::one(), self.value(a).data(), 1, k as isize, g.data(), n as isize, 1, T::zero(), &mut db, n as isize, 1);
                    self.accumulate(grads, b, Tensor::from_parts(vec![k, n], db));
                }
            }
            &Op::Transpose(x) => {
                let (r, c) = self.value(x).dims2().unwrap();
                let mut dx = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] = g.data()[j * r + i];
                    }
                }
                self.accumulate(grads, x, Tensor::from_parts(vec![r, c], dx));
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                let neg = g.data().iter().map(|&v| -v).collect();
                self.accumulate(grads, b, Tensor::from_parts(g.shape().to_vec(), neg));
            }
            &Op::Mul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                if self.requires_grad(a) {
                    let d = g.data().iter().zip(vb.data()).map(|(&gv, &y)| gv * y).collect();
                    self.accumulate(grads, a, Tensor::from_parts(g.shape().to_vec(), d));
                }
                if self.requires_grad(b) {
                    let d = g.data().iter().zip(va.data()).map(|(&gv, &x)| gv * x).collect();
                    self.accumulate(grads, b, Tensor::from_parts(g.shape().to_vec(), d));
                }
            }
            &Op::AddBias(x, bias) => {
                self.accumulate(grads, x, g.clone());
                if self.requires_grad(bias) {
                    let c = self.shape(bias)[0];
                    let mut db = vec![T::zero(); c];
                    for row in g.data().chunks(c.max(1)) {
                        for (a, &v) in db.iter_mut().zip(row) {
                            *a = *a + v;
                        }
                    }
                    self.accumulate(grads, bias, Tensor::from_parts(vec![c], db));
                }
            }
            &Op::Scale(x, f) => {
                let d = g.data().iter().map(|&v| v * f).collect();
                self.accumulate(grads, x, Tensor::from_parts(g.shape().to_vec(), d));
            }
            &Op::AddScalar(x) | &Op::Reshape(x) => {
                let d = Tensor::from_parts(self.shape(x).to_vec(), g.data().to_vec());
                self.accumulate(grads, x, d);
            }
            &Op::Tanh(x) => {
                let d = self.elementwise(x, g, |_, y, gv| gv * (T::one() - y * y), out);
                self.accumulate(grads, x, d);
            }
            &Op::Sigmoid(x) => {
                let d = self.elementwise(x, g, |_, y, gv| gv * y * (T::one() - y), out);
                self.accumulate(grads, x, d);
            }
            &Op::Exp(x) => {
                let d = self.elementwise(x, g, |_, y, gv| gv * y, out);
                self.accumulate(grads, x, d);
            }
            &Op::Log(x) => {
                let d = self.elementwise(x, g, |xv, _, gv| gv / xv, out);
                self.accumulate(grads, x, d);
            }
            &Op::Relu(x) => {
                let d = self.elementwise(x, g, |xv, _, gv| if xv > T::zero() { gv } else { T::zero() }, out);
                self.accumulate(grads, x, d);
            }
            &Op::Clamp(x, lo, hi) => {
                let d = self.elementwise(x, g, |xv, _, gv| if xv >= lo && xv <= hi { gv } else { T::zero() }, out);
                self.accumulate(grads, x, d);
            }
            &Op::SoftmaxRows(x) => {
                let c = out.shape()[1].max(1);
                let mut d = vec![T::zero(); out.len()];
                for ((drow, yrow), grow) in d.chunks_mut(c).zip(out.data().chunks(c)).zip(g.data().chunks(c)) {
                    let dot: T = yrow.iter().zip(grow).map(|(&y, &gv)| y * gv).sum();
                    for ((dv, &y), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                        *dv = y * (gv - dot);
                    }
                }
                self.accumulate(grads, x, Tensor::from_parts(out.shape().to_vec(), d));
            }
            &Op::LogSumExpRows(x) => {
                let src = self.value(x);
                let c = src.shape()[1];
                let mut d = vec![T::zero(); src.len()];
                for (r, (drow, xrow)) in d.chunks_mut(c).zip(src.data().chunks(c)).enumerate() {
                    let lse = out.data()[r];
                    for (dv, &xv) in drow.iter_mut().zip(xrow) {
                        *dv = g.data()[r] * (xv - lse).exp();
                    }
                }
                self.accumulate(grads, x, Tensor::from_parts(src.shape().to_vec(), d));
            }
            &Op::Sum(x) => {
                let gv = g.data()[0];
                self.accumulate(grads, x, Tensor::full(self.shape(x), gv));
            }
            &Op::MeanAxis(x, axis) => {
                let (r, c) = self.value(x).dims2().unwrap();
                let mut d = vec![T::zero(); r * c];
                if axis == 0 {
                    let n = T::lit(r as f64);
                    for row in d.chunks_mut(c) {
                        for (dv, &gv) in row.iter_mut().zip(g.data()) {
                            *dv = gv / n;
                        }
                    }
                } else {
                    let n = T::lit(c as f64);
                    for (row, &gv) in d.chunks_mut(c).zip(g.data()) {
                        row.fill(gv / n);
                    }
                }
                self.accumulate(grads, x, Tensor::from_parts(vec![r, c], d));
            }
            Op::Concat(xs) => {
                let total = *out.shape().last().unwrap();
                let outer = out.len() / total.max(1);
                let mut offset = 0;
                for &x in xs {
                    let w = *self.shape(x).last().unwrap();
                    if self.requires_grad(x) {
                        let mut d = Vec::with_capacity(outer * w);
                        for o in 0..outer {
                            d.extend_from_slice(&g.data()[o * total + offset..o * total + offset + w]);
                        }
                        self.accumulate(grads, x, Tensor::from_parts(self.shape(x).to_vec(), d));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let n = self.value(x).len();
                    if self.requires_grad(x) {
                        let d = g.data()[offset..offset + n].to_vec();
                        self.accumulate(grads, x, Tensor::from_parts(self.shape(x).to_vec(), d));
                    }
                    offset += n;
                }
            }
            &Op::SliceRows(x, start) => {
                let (r, c) = self.value(x).dims2().unwrap();
                let mut d = vec![T::zero(); r * c];
                d[start * c..start * c + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, x, Tensor::from_parts(vec![r, c], d));
            }
            &Op::SliceCols(x, start) => {
                let (r, c) = self.value(x).dims2().unwrap();
                let w = out.shape()[1];
                let mut d = vec![T::zero(); r * c];
                for (drow, grow) in d.chunks_mut(c.max(1)).zip(g.data().chunks(w.max(1))) {
                    drow[start..start + w].copy_from_slice(grow);
                }
                self.accumulate(grads, x, Tensor::from_parts(vec![r, c], d));
            }
            Op::Embedding(table, ids) => {
                let (v, dim) = self.value(*table).dims2().unwrap();
                let mut d = vec![T::zero(); v * dim];
                for (k, &id) in ids.iter().enumerate() {
                    for (dv, &gv) in d[id * dim..(id + 1) * dim].iter_mut().zip(&g.data()[k * dim..(k + 1) * dim]) {
                        *dv = *dv + gv;
                    }
                }
                self.accumulate(grads, *table, Tensor::from_parts(vec![v, dim], d));
            }
            &Op::LayerNorm { x, gain, bias, eps } => {
                let (r, c) = self.value(x).dims2().unwrap();
                let gn = self.value(gain).data();
                let mut dx = vec![T::zero(); r * c];
                let mut dg = vec![T::zero(); c];
                let mut db = vec![T::zero(); c];
                let nc = T::lit(c as f64);
                for row in 0..r {
                    let xr = &self.value(x).data()[row * c..(row + 1) * c];
                    let gr = &g.data()[row * c..(row + 1) * c];
                    let (mean, rstd) = row_stats(xr, eps);
                    let mut sum_dxhat = T::zero();
                    let mut sum_dxhat_xhat = T::zero();
                    for j in 0..c {
                        let xhat = (xr[j] - mean) * rstd;
                        let dxhat = gr[j] * gn[j];
                        sum_dxhat = sum_dxhat + dxhat;
                        sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat;
                        dg[j] = dg[j] + gr[j] * xhat;
                        db[j] = db[j] + gr[j];
                    }
                    for j in 0..c {
                        let xhat = (xr[j] - mean) * rstd;
                        let dxhat = gr[j] * gn[j];
                        dx[row * c + j] = rstd * (dxhat - sum_dxhat / nc - xhat * sum_dxhat_xhat / nc);
                    }
                }
                self.accumulate(grads, x, Tensor::from_parts(vec![r, c], dx));
                self.accumulate(grads, gain, Tensor::from_parts(vec![c], dg));
                self.accumulate(grads, bias, Tensor::from_parts(vec![c], db));
            }
            &Op::Cosine(a, b, eps) => {
                let gv = g.data()[0];
                let (va, vb) = (self.value(a).data(), self.value(b).data());
                let (na, nb) = (norm(va), norm(vb));
                let dot: T = va.iter().zip(vb).map(|(&x, &y)| x * y).sum();
                let (sa, sb) = (na + eps, nb + eps);
                let grad_of = |own: &[T], other: &[T], n_own: T, s_own: T, s_other: T| -> Vec<T> {
                    own.iter()
                        .zip(other)
                        .map(|(&x, &y)| {
                            let radial = if n_own > T::zero() { dot / (s_own * s_own * s_other) * x / n_own } else { T::zero() };
                            gv * (y / (s_own * s_other) - radial)
                        })
                        .collect()
                };
                if self.requires_grad(a) {
                    let d = grad_of(va, vb, na, sa, sb);
                    self.accumulate(grads, a, Tensor::from_parts(vec![va.len()], d));
                }
                if self.requires_grad(b) {
                    let d = grad_of(vb, va, nb, sb, sa);
                    self.accumulate(grads, b, Tensor::from_parts(vec![vb.len()], d));
                }
            }
            &Op::NormalizeRows(x, eps) => {
                let (r, c) = self.value(x).dims2().unwrap();
                let mut d = vec![T::zero(); r * c];
                for row in 0..r {
                    let xr = &self.value(x).data()[row * c..(row + 1) * c];
                    let gr = &g.data()[row * c..(row + 1) * c];
                    let n = norm(xr);
                    let s = n + eps;
                    let gx: T = gr.iter().zip(xr).map(|(&gv, &xv)| gv * xv).sum();
                    for j in 0..c {
                        let radial = if n > T::zero() { gx / (s * s * n) * xr[j] } else { T::zero() };
                        d[row * c + j] = gr[j] / s - radial;
                    }
                }
                self.accumulate(grads, x, Tensor::from_parts(vec![r, c], d));
            }
            &Op::Diagonal(x) => {
                let n = g.len();
                let mut d = vec![T::zero(); n * n];
                for i in 0..n {
                    d[i * n + i] = g.data()[i];
                }
                self.accumulate(grads, x, Tensor::from_parts(vec![n, n], d));
            }
        }
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn norm<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn row_logsumexp<T: Scalar>(row: &[T]) -> T {
    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
    mx + row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln()
}

fn row_stats<T: Scalar>(row: &[T], eps: T) -> (T, T) {
    let n = T::lit(row.len() as f64);
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, T::one() / (var + eps).sqrt())
}
