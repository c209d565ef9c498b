//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every primitive appends one node to the tape. Nodes are pushed only after
//! their inputs exist, so the tape is always in topological order and the
//! backward pass is a single reverse sweep.

use std::collections::HashMap;

use super::tensor::{axpy, matmul_acc, matmul_nt_acc, matmul_tn_acc, Real, Tensor};
use super::NumericsError;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    Softmax(Var),
    CausalMask(Var),
    Tanh(Var),
    Gelu(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows {
        x: Var,
        index: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// A computation tape. One graph is built per forward pass.
#[derive(Debug)]
pub struct Graph<F: Real = f32> {
    nodes: Vec<Node<F>>,
    grad_enabled: bool,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

fn shape_err(msg: String) -> NumericsError {
    NumericsError::Shape(msg)
}

impl<F: Real> Graph<F> {
    /// A graph that records backward information for leaves requiring gradients.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A graph that never records backward information.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        let requires_grad = requires_grad && self.grad_enabled;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, inputs: &[Var]) -> Var {
        let requires_grad =
            self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn dims2(&self, v: Var, what: &str) -> Result<(usize, usize), NumericsError> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(shape_err(format!(
                "{what} expects a 2-d operand, got shape {s:?}"
            ))),
        }
    }

    /// `[m,k] x [k,n] -> [m,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(shape_err(format!(
                "matmul inner dimensions differ: [{m},{k}] x [{k2},{n}]"
            )));
        }
        let mut out = vec![F::zero(); m * n];
        matmul_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    /// `[m,n] x [k,n]^T -> [m,k]`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.dims2(a, "matmul_nt")?;
        let (k, n2) = self.dims2(b, "matmul_nt")?;
        if n != n2 {
            return Err(shape_err(format!(
                "matmul_nt column counts differ: [{m},{n}] x [{k},{n2}]^T"
            )));
        }
        let mut out = vec![F::zero(); m * k];
        matmul_nt_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            n,
            k,
        );
        let value = Tensor::matrix(m, k, out)?;
        Ok(self.push(value, Op::MatMulNT(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.dims2(a, "transpose")?;
        let src = self.value(a).data();
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let value = Tensor::matrix(n, m, out)?;
        Ok(self.push(value, Op::Transpose(a), &[a]))
    }

    /// Elementwise sum. `b` may also be a vector matching the last dimension
    /// of `a`, in which case it is added to every row.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa == sb {
            let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
            let value = Tensor::new(sa, data)?;
            return Ok(self.push(value, Op::Add(a, b), &[a, b]));
        }
        if sb.len() == 1 && sa.last() == sb.last() {
            let cols = sb[0];
            let bias = self.value(b).data();
            let data: Vec<F> = self
                .value(a)
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| x + bias[i % cols])
                .collect();
            let value = Tensor::new(sa, data)?;
            return Ok(self.push(value, Op::AddRow(a, b), &[a, b]));
        }
        Err(shape_err(format!(
            "add: incompatible shapes {sa:?} and {sb:?}"
        )))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape(a, b, "sub")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x - y);
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product. Multiplying by a constant 0/1 tensor is how masking
    /// and dropout are expressed.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape(a, b, "mul")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c), &[a])
    }

    /// Normalizes each row over the last dimension, then applies `gain` and `bias`.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gain: Var,
        bias: Var,
        eps: f64,
    ) -> Result<Var, NumericsError> {
        let cols = self.value(x).cols();
        for (v, name) in [(gain, "gain"), (bias, "bias")] {
            if self.shape(v) != [cols] {
                return Err(shape_err(format!(
                    "layer_norm {name} has shape {:?}, expected [{cols}]",
                    self.shape(v)
                )));
            }
        }
        let rows = self.value(x).rows();
        let eps = F::lit(eps);
        let n = F::from_usize(cols).unwrap();
        let xs = self.value(x).data();
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut out = vec![F::zero(); xs.len()];
        let mut xhat = vec![F::zero(); xs.len()];
        let mut rstd = vec![F::zero(); rows];
        for r in 0..rows {
            let row = &xs[r * cols..(r + 1) * cols];
            let mean = row.iter().copied().sum::<F>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let inv = F::one() / (var + eps).sqrt();
            rstd[r] = inv;
            for j in 0..cols {
                let h = (row[j] - mean) * inv;
                xhat[r * cols + j] = h;
                out[r * cols + j] = h * g[j] + b[j];
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            &[x, gain, bias],
        ))
    }

    /// Row-wise softmax over the last dimension.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let cols = t.cols();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(cols) {
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum = sum + *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), out).expect("shape preserved");
        self.push(value, Op::Softmax(a), &[a])
    }

    /// Sets entries above the diagonal of a square matrix to negative infinity.
    pub fn causal_mask(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.dims2(a, "causal_mask")?;
        if m != n {
            return Err(shape_err(format!(
                "causal_mask expects a square matrix, got [{m},{n}]"
            )));
        }
        let mut out = self.value(a).data().to_vec();
        for i in 0..m {
            for v in &mut out[i * n + i + 1..(i + 1) * n] {
                *v = F::neg_infinity();
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(value, Op::CausalMask(a), &[a]))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.tanh());
        self.push(value, Op::Tanh(a), &[a])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let (c, k) = (F::lit(GELU_C), F::lit(GELU_K));
        let half = F::lit(0.5);
        let value = self
            .value(a)
            .map(|x| half * x * (F::one() + (c * (x + k * x * x * x)).tanh()));
        self.push(value, Op::Gelu(a), &[a])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let (m, n) = self.dims2(x, "slice_cols")?;
        if len == 0 || start + len > n {
            return Err(shape_err(format!(
                "slice_cols {start}..{} out of range for {n} columns",
                start + len
            )));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let value = Tensor::matrix(m, len, out)?;
        Ok(self.push(value, Op::SliceCols { x, start }, &[x]))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let (m, n) = self.dims2(x, "slice_rows")?;
        if len == 0 || start + len > m {
            return Err(shape_err(format!(
                "slice_rows {start}..{} out of range for {m} rows",
                start + len
            )));
        }
        let out = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let value = Tensor::matrix(len, n, out)?;
        Ok(self.push(value, Op::SliceRows { x, start }, &[x]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = *parts
            .first()
            .ok_or_else(|| shape_err("concat_rows of nothing".into()))?;
        let (_, n) = self.dims2(first, "concat_rows")?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_rows")?;
            if c != n {
                return Err(shape_err(format!(
                    "concat_rows column mismatch: {c} vs {n}"
                )));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::matrix(rows, n, out)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = *parts
            .first()
            .ok_or_else(|| shape_err("concat_cols of nothing".into()))?;
        let (m, _) = self.dims2(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_cols")?;
            if r != m {
                return Err(shape_err(format!("concat_cols row mismatch: {r} vs {m}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let value = Tensor::matrix(m, total, out)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Selects rows of a 2-d tensor; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var, NumericsError> {
        let (m, n) = self.dims2(x, "gather_rows")?;
        if index.is_empty() {
            return Err(shape_err("gather_rows with an empty index".into()));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(index.len() * n);
        for &r in index {
            if r >= m {
                return Err(shape_err(format!(
                    "gather_rows index {r} out of range for {m} rows"
                )));
            }
            out.extend_from_slice(&src[r * n..(r + 1) * n]);
        }
        let value = Tensor::matrix(index.len(), n, out)?;
        Ok(self.push(
            value,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
            &[x],
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum::<F>();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().copied().sum::<F>() / F::from_usize(t.numel()).unwrap();
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(), NumericsError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    /// Backpropagates from a scalar `loss` to every leaf that requires gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>, NumericsError> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(NumericsError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        if !self.grad_enabled {
            return Err(NumericsError::NoTape);
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..=loss.0).map(|_| None).collect();
        let mut leaves = HashMap::new();
        let mut visited = 0;
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![F::one()]);
        }
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            visited += 1;
            let node = &self.nodes[i];
            self.backprop_node(node, &dy, &mut grads);
            if matches!(node.op, Op::Leaf) {
                let t = Tensor::new(node.value.shape().to_vec(), dy).expect("gradient shape");
                leaves.insert(i, t);
            }
        }
        Ok(Gradients { leaves, visited })
    }

    fn backprop_node(&self, node: &Node<F>, dy: &[F], grads: &mut [Option<Vec<F>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let dims = |v: Var| {
            let s = self.nodes[v.0].value.shape();
            (s[0], s[1])
        };
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [F])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot =
                grads[v.0].get_or_insert_with(|| vec![F::zero(); self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ((m, k), (_, n)) = (dims(*a), dims(*b));
                acc(*a, &mut |g| matmul_nt_acc(dy, val(*b), g, m, n, k));
                acc(*b, &mut |g| matmul_tn_acc(val(*a), dy, g, m, k, n));
            }
            Op::MatMulNT(a, b) => {
                let ((m, n), (k, _)) = (dims(*a), dims(*b));
                acc(*a, &mut |g| matmul_acc(dy, val(*b), g, m, k, n));
                acc(*b, &mut |g| matmul_tn_acc(dy, val(*a), g, m, k, n));
            }
            Op::Transpose(a) => {
                let (m, n) = dims(*a);
                acc(*a, &mut |g| {
                    for i in 0..m {
                        for j in 0..n {
                            g[i * n + j] = g[i * n + j] + dy[j * m + i];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |g| axpy(F::one(), dy, g));
                acc(*b, &mut |g| axpy(F::one(), dy, g));
            }
            Op::AddRow(a, b) => {
                acc(*a, &mut |g| axpy(F::one(), dy, g));
                acc(*b, &mut |g| {
                    let cols = g.len();
                    for row in dy.chunks(cols) {
                        axpy(F::one(), row, g);
                    }
                });
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |g| axpy(F::one(), dy, g));
                acc(*b, &mut |g| axpy(-F::one(), dy, g));
            }
            Op::Mul(a, b) => {
                acc(*a, &mut |g| {
                    for ((g, &d), &y) in g.iter_mut().zip(dy).zip(val(*b)) {
                        *g = *g + d * y;
                    }
                });
                acc(*b, &mut |g| {
                    for ((g, &d), &x) in g.iter_mut().zip(dy).zip(val(*a)) {
                        *g = *g + d * x;
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |g| axpy(*c, dy, g)),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let cols = self.nodes[gain.0].value.numel();
                let gv = val(*gain);
                acc(*gain, &mut |g| {
                    for (row_dy, row_h) in dy.chunks(cols).zip(xhat.chunks(cols)) {
                        for j in 0..cols {
                            g[j] = g[j] + row_dy[j] * row_h[j];
                        }
                    }
                });
                acc(*bias, &mut |g| {
                    for row in dy.chunks(cols) {
                        axpy(F::one(), row, g);
                    }
                });
                let n = F::from_usize(cols).unwrap();
                acc(*x, &mut |g| {
                    for (r, (row_dy, row_h)) in dy.chunks(cols).zip(xhat.chunks(cols)).enumerate() {
                        let mut mean_d = F::zero();
                        let mut mean_dh = F::zero();
                        for j in 0..cols {
                            let d = row_dy[j] * gv[j];
                            mean_d = mean_d + d;
                            mean_dh = mean_dh + d * row_h[j];
                        }
                        mean_d = mean_d / n;
                        mean_dh = mean_dh / n;
                        for j in 0..cols {
                            let d = row_dy[j] * gv[j];
                            let k = r * cols + j;
                            g[k] = g[k] + rstd[r] * (d - mean_d - row_h[j] * mean_dh);
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let cols = node.value.cols();
                acc(*a, &mut |g| {
                    for ((gr, dr), yr) in
                        g.chunks_mut(cols).zip(dy.chunks(cols)).zip(y.chunks(cols))
                    {
                        let s: F = dr.iter().zip(yr).map(|(&d, &v)| d * v).sum();
                        for j in 0..cols {
                            gr[j] = gr[j] + yr[j] * (dr[j] - s);
                        }
                    }
                });
            }
            Op::CausalMask(a) => {
                let n = node.value.cols();
                acc(*a, &mut |g| {
                    for i in 0..n {
                        for j in 0..=i {
                            g[i * n + j] = g[i * n + j] + dy[i * n + j];
                        }
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                acc(*a, &mut |g| {
                    for ((g, &d), &t) in g.iter_mut().zip(dy).zip(y) {
                        *g = *g + d * (F::one() - t * t);
                    }
                });
            }
            Op::Gelu(a) => {
                let (c, k, half) = (F::lit(GELU_C), F::lit(GELU_K), F::lit(0.5));
                let three = F::lit(3.0);
                acc(*a, &mut |g| {
                    for ((g, &d), &x) in g.iter_mut().zip(dy).zip(val(*a)) {
                        let t = (c * (x + k * x * x * x)).tanh();
                        let dt = c * (F::one() + three * k * x * x);
                        let deriv = half * (F::one() + t) + half * x * (F::one() - t * t) * dt;
                        *g = *g + d * deriv;
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let (m, n) = dims(*x);
                let len = node.value.cols();
                acc(*x, &mut |g| {
                    for i in 0..m {
                        axpy(
                            F::one(),
                            &dy[i * len..(i + 1) * len],
                            &mut g[i * n + start..i * n + start + len],
                        );
                    }
                });
            }
            Op::SliceRows { x, start } => {
                let (_, n) = dims(*x);
                acc(*x, &mut |g| {
                    axpy(F::one(), dy, &mut g[start * n..start * n + dy.len()])
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.numel();
                    acc(p, &mut |g| axpy(F::one(), &dy[offset..offset + len], g));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let m = node.value.rows();
                let mut col = 0;
                for &p in parts {
                    let w = self.nodes[p.0].value.cols();
                    acc(p, &mut |g| {
                        for i in 0..m {
                            axpy(
                                F::one(),
                                &dy[i * total + col..i * total + col + w],
                                &mut g[i * w..(i + 1) * w],
                            );
                        }
                    });
                    col += w;
                }
            }
            Op::GatherRows { x, index } => {
                let n = node.value.cols();
                acc(*x, &mut |g| {
                    for (r, &src) in index.iter().enumerate() {
                        axpy(
                            F::one(),
                            &dy[r * n..(r + 1) * n],
                            &mut g[src * n..(src + 1) * n],
                        );
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |g| {
                for v in g.iter_mut() {
                    *v = *v + dy[0];
                }
            }),
            Op::Mean(a) => {
                let scale = dy[0] / F::from_usize(self.nodes[a.0].value.numel()).unwrap();
                acc(*a, &mut |g| {
                    for v in g.iter_mut() {
                        *v = *v + scale;
                    }
                });
            }
        }
    }
}

fn zip_map<F: Real>(a: &[F], b: &[F], f: impl Fn(F, F) -> F) -> Vec<F> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Gradients of a scalar with respect to the leaves of a graph.
#[derive(Debug)]
pub struct Gradients<F = f32> {
    leaves: HashMap<usize, Tensor<F>>,
    visited: usize,
}

impl<F: Real> Gradients<F> {
    /// Gradient of a leaf, or `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.leaves.get(&v.0)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<F>> {
        self.leaves.remove(&v.0)
    }

    /// Gradient of a leaf, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, graph: &Graph<F>, v: Var) -> Tensor<F> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.shape(v)))
    }

    /// Number of tape entries the backward sweep processed.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_matmul_is_noop() {
        let mut g = Graph::<f64>::new();
        let i = g.constant(Tensor::identity(3));
        let x = g.leaf(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), true);
        let y = g.matmul(i, x).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn layer_norm_hand_values() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 3], &[1.0, 2.0, 3.0]));
        let gain = g.constant(t(&[3], &[1.0; 3]));
        let bias = g.constant(t(&[3], &[0.0; 3]));
        let y = g.layer_norm(x, gain, bias, 0.0).unwrap();
        let expect = [-1.224_744_871, 0.0, 1.224_744_871];
        for (a, b) in g.value(y).data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[2], &[0.0, 0.0]));
        let y = g.softmax(x);
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2, 2], &[1.0, -2.0, 3.0, 0.5]), true);
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn mse_gradient_vanishes_at_minimum() {
        let mut g = Graph::<f64>::new();
        let data = [0.3, -1.0, 2.0, 4.0];
        let x = g.leaf(t(&[2, 2], &data), true);
        let y = g.constant(t(&[2, 2], &data));
        let d = g.sub(x, y).unwrap();
        let sq = g.mul(d, d).unwrap();
        let loss = g.mean(sq);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true);
        let y = g.tanh(x);
        assert!(matches!(
            g.backward(y),
            Err(NumericsError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true);
        let unused = g.leaf(t(&[3], &[1.0, 2.0, 3.0]), true);
        let s = g.sum(x);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(unused).is_none());
        assert_eq!(grads.wrt(&g, unused).data(), &[0.0; 3]);
    }

    #[test]
    fn inference_graph_records_nothing() {
        let mut g = Graph::<f64>::inference();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true);
        assert!(!g.requires_grad(x));
        let s = g.sum(x);
        assert!(matches!(g.backward(s), Err(NumericsError::NoTape)));
    }

    #[test]
    fn each_recorded_op_is_visited_once() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]), true);
        let a = g.tanh(x);
        let b = g.gelu(x);
        let c = g.add(a, b).unwrap();
        let s = g.sum(c);
        let grads = g.backward(s).unwrap();
        // x, tanh, gelu, add, sum
        assert_eq!(grads.visited(), 5);
    }

    #[test]
    fn shape_errors_are_descriptive() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2,3] x [2,3]"), "{err}");
    }

    #[test]
    fn causal_mask_blocks_future() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let m = g.causal_mask(x).unwrap();
        let p = g.softmax(m);
        assert_eq!(g.value(p).data()[1], 0.0);
        assert_eq!(g.value(p).data()[0], 1.0);
    }
}
