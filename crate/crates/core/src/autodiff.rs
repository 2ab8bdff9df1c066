//! Reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation in creation order, which is already a
//! topological order, so [`Tape::backward`] is a single reverse sweep. Values
//! are referred to by [`Var`] handles into the tape.
//!
//! Elementwise binary operations accept two tensors of equal shape or one
//! tensor and a one-element scalar; there is no other broadcasting. Row or
//! column broadcasts are expressed as products with constant `ones` matrices
//! (see [`Tape::broadcast_cols`] and [`Tape::row_sum`]).
//!
//! ```
//! use pwae_core::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(2.0));
//! let y = tape.leaf(Tensor::scalar(3.0));
//! let z = tape.mul(x, y);
//! let grads = tape.backward(z);
//! assert_eq!(grads.wrt(x).item(), 3.0);
//! assert_eq!(grads.wrt(y).item(), 2.0);
//! ```
//!
//! Shape errors are programming errors and panic.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::gyrovector::ARTANH_CLAMP;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(
            n,
            data.len(),
            "tensor data length {} does not match shape {shape:?}",
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::new(vec![rows, cols], data)
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

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert!(
            self.is_scalar(),
            "item() on tensor of shape {:?}",
            self.shape
        );
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        assert_eq!(
            self.shape.len(),
            2,
            "expected a matrix, got shape {:?}",
            self.shape
        );
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(
            self.shape.len(),
            2,
            "expected a matrix, got shape {:?}",
            self.shape
        );
        self.shape[1]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }
}

/// Constant sparse matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            assert!(
                r < rows && c < cols,
                "triplet ({r}, {c}) outside {rows}x{cols}"
            );
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = self.indptr[r];
        let e = self.indptr[r + 1];
        self.indices[s..e]
            .iter()
            .copied()
            .zip(self.values[s..e].iter().copied())
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(&[self.rows, self.cols]);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                out.data[r * self.cols + c] += v;
            }
        }
        out
    }

    fn matmul(&self, x: &Tensor) -> Tensor {
        let m = x.cols();
        assert_eq!(self.cols, x.rows(), "spmm shape mismatch");
        let mut out = vec![0.0; self.rows * m];
        for r in 0..self.rows {
            let dst = &mut out[r * m..(r + 1) * m];
            for (c, v) in self.row_entries(r) {
                let src = &x.data[c * m..(c + 1) * m];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += v * s);
            }
        }
        Tensor::matrix(self.rows, m, out)
    }

    fn t_matmul(&self, g: &Tensor) -> Tensor {
        let m = g.cols();
        let mut out = vec![0.0; self.cols * m];
        for r in 0..self.rows {
            let src = &g.data[r * m..(r + 1) * m];
            for (c, v) in self.row_entries(r) {
                let dst = &mut out[c * m..(c + 1) * m];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += v * s);
            }
        }
        Tensor::matrix(self.cols, m, out)
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Unary {
    Neg,
    Exp,
    Log,
    Tanh,
    Artanh,
    Sigmoid,
    Softplus,
    Relu,
    Erf,
    Sqrt,
    Square,
    Acosh,
    Acosh1p,
}

#[derive(Debug, Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    MatMul(Var, Var),
    Transpose(Var),
    SpMM(Arc<CsrMatrix>, Var),
    Sum(Var),
    Mean(Var),
    L2Norm(Var),
    Clamp(Var, f64, f64),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    GatherRows(Var, Arc<[usize]>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every recorded value.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Grads {
    /// Gradient with respect to `v`; zeros if `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn gemm(
    a: &[f64],
    b: &[f64],
    m: usize,
    k: usize,
    n: usize,
    a_strides: (isize, isize),
    b_strides: (isize, isize),
) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 {
        return c;
    }
    // SAFETY: the strides describe in-bounds views of `a` (m×k) and `b`
    // (k×n); `c` is a freshly allocated m×n row-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Below this argument `acosh1p` is dominated by rounding in its inputs;
/// the derivative is frozen there (`d ≈ 4.5e-8`).
pub const ACOSH1P_FLOOR: f64 = 1e-15;

fn clamp_artanh(x: f64) -> f64 {
    x.clamp(-ARTANH_CLAMP, ARTANH_CLAMP)
}

impl Unary {
    fn forward(self, x: f64) -> f64 {
        match self {
            Unary::Neg => -x,
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Tanh => x.tanh(),
            Unary::Artanh => {
                let x = clamp_artanh(x);
                0.5 * ((1.0 + x).ln() - (1.0 - x).ln())
            }
            Unary::Sigmoid => sigmoid(x),
            Unary::Softplus => softplus(x),
            Unary::Relu => x.max(0.0),
            Unary::Erf => libm::erf(x),
            Unary::Sqrt => x.sqrt(),
            Unary::Square => x * x,
            Unary::Acosh => x.max(1.0).acosh(),
            Unary::Acosh1p => {
                let q = x.max(0.0);
                (q + (q * (q + 2.0)).sqrt()).ln_1p()
            }
        }
    }

    /// Local derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Neg => -1.0,
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Tanh => 1.0 - y * y,
            Unary::Artanh => {
                let x = clamp_artanh(x);
                1.0 / (1.0 - x * x)
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Softplus => sigmoid(x),
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Erf => 2.0 / PI.sqrt() * (-x * x).exp(),
            Unary::Sqrt => 0.5 / y,
            Unary::Square => 2.0 * x,
            Unary::Acosh => 1.0 / (x * x - 1.0).max(1e-300).sqrt(),
            Unary::Acosh1p => {
                let q = x.max(ACOSH1P_FLOOR);
                1.0 / (q * (q + 2.0)).sqrt()
            }
        }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A constant input; no gradient is computed for it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn ones(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Tensor::filled(&[rows, cols], 1.0))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
            Binary::Div => x / y,
        };
        let value = if va.shape == vb.shape {
            Tensor {
                shape: va.shape.clone(),
                data: va
                    .data
                    .iter()
                    .zip(&vb.data)
                    .map(|(&x, &y)| f(x, y))
                    .collect(),
            }
        } else if vb.is_scalar() && !(va.is_scalar() && va.shape.len() < vb.shape.len()) {
            let y = vb.data[0];
            va.map(|x| f(x, y))
        } else if va.is_scalar() {
            let x = va.data[0];
            vb.map(|y| f(x, y))
        } else {
            panic!(
                "elementwise shape mismatch: {:?} vs {:?}",
                va.shape, vb.shape
            );
        };
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Binary(kind, a, b), rg)
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(|x| kind.forward(x));
        let rg = self.rg(a);
        self.push(value, Op::Unary(kind, a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(Binary::Div, a, b)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(Unary::Neg, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(Unary::Log, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    /// `artanh` with the argument clamped to `±(1 - 1e-12)`.
    pub fn artanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Artanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn erf(&mut self, a: Var) -> Var {
        self.unary(Unary::Erf, a)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(Unary::Sqrt, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    /// `arccosh(max(x, 1))`.
    pub fn acosh(&mut self, a: Var) -> Var {
        self.unary(Unary::Acosh, a)
    }

    /// `arccosh(1 + max(x, 0))` evaluated from `x` directly, so small
    /// arguments keep their precision. The derivative is taken at
    /// `max(x, ACOSH1P_FLOOR)`.
    pub fn acosh1p(&mut self, a: Var) -> Var {
        self.unary(Unary::Acosh1p, a)
    }

    /// Elementwise clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.nodes[a.0].value.map(|x| x.clamp(lo, hi));
        let rg = self.rg(a);
        self.push(value, Op::Clamp(a, lo, hi), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = (va.rows(), va.cols());
        let (k2, n) = (vb.rows(), vb.cols());
        assert_eq!(
            k, k2,
            "matmul shape mismatch: {:?} x {:?}",
            va.shape, vb.shape
        );
        let data = gemm(
            &va.data,
            &vb.data,
            m,
            k,
            n,
            (k as isize, 1),
            (n as isize, 1),
        );
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::matrix(m, n, data), Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let value = transpose(va);
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    /// Product of a constant sparse matrix with `x`.
    pub fn spmm(&mut self, s: Arc<CsrMatrix>, x: Var) -> Var {
        let value = s.matmul(&self.nodes[x.0].value);
        let rg = self.rg(x);
        self.push(value, Op::SpMM(s, x), rg)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let s = v.sum() / v.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Euclidean norm of all entries, as a scalar.
    pub fn l2norm(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.norm();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::L2Norm(a), rg)
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.nodes[parts[0].0].value.rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let v = &self.nodes[p.0].value;
                assert_eq!(v.rows(), rows, "concat row mismatch");
                v.cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            Tensor::matrix(rows, total, data),
            Op::Concat(parts.to_vec()),
            rg,
        )
    }

    /// Columns `start..end` of a matrix.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = &self.nodes[a.0].value;
        let (rows, cols) = (v.rows(), v.cols());
        assert!(
            start <= end && end <= cols,
            "slice {start}..{end} of {cols} columns"
        );
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&v.row(r)[start..end]);
        }
        let rg = self.rg(a);
        self.push(
            Tensor::matrix(rows, end - start, data),
            Op::Slice(a, start, end),
            rg,
        )
    }

    /// Rows `idx[0], idx[1], …` of a matrix.
    pub fn gather_rows(&mut self, a: Var, idx: Arc<[usize]>) -> Var {
        let v = &self.nodes[a.0].value;
        let cols = v.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx.iter() {
            data.extend_from_slice(v.row(i));
        }
        let rg = self.rg(a);
        self.push(
            Tensor::matrix(idx.len(), cols, data),
            Op::GatherRows(a, idx),
            rg,
        )
    }

    // Composites built from the primitives above.

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = self.scalar(s);
        self.mul(a, s)
    }

    pub fn offset(&mut self, a: Var, s: f64) -> Var {
        let s = self.scalar(s);
        self.add(a, s)
    }

    /// `s - a` for a constant `s`.
    pub fn rsub(&mut self, s: f64, a: Var) -> Var {
        let s = self.scalar(s);
        self.sub(s, a)
    }

    /// Row sums of an `n×m` matrix as an `n×1` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a).cols();
        let ones = self.ones(m, 1);
        self.matmul(a, ones)
    }

    /// Repeats an `n×1` column `m` times.
    pub fn broadcast_cols(&mut self, col: Var, m: usize) -> Var {
        assert_eq!(self.value(col).cols(), 1, "broadcast_cols needs a column");
        let ones = self.ones(1, m);
        self.matmul(col, ones)
    }

    /// Repeats a `1×m` row `n` times.
    pub fn broadcast_rows(&mut self, row: Var, n: usize) -> Var {
        assert_eq!(self.value(row).rows(), 1, "broadcast_rows needs a row");
        let ones = self.ones(n, 1);
        self.matmul(ones, row)
    }

    /// Multiplies every row `i` of `x` by `col[i]`.
    pub fn mul_rows(&mut self, col: Var, x: Var) -> Var {
        let m = self.value(x).cols();
        let b = self.broadcast_cols(col, m);
        self.mul(b, x)
    }

    /// Adds a `1×m` bias row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let n = self.value(x).rows();
        let b = self.broadcast_rows(row, n);
        self.add(x, b)
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Grads {
        assert!(
            self.nodes[loss.0].value.is_scalar(),
            "backward needs a scalar loss, got shape {:?}",
            self.nodes[loss.0].value.shape
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(&self.nodes[loss.0].value.shape, 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape.clone()).collect(),
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Binary(kind, a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let shape = &node.value.shape;
                // Per-element partials, then reduce onto scalar operands.
                let get = |t: &Tensor, i: usize| {
                    if t.is_scalar() && t.shape != *shape {
                        t.data[0]
                    } else {
                        t.data[i]
                    }
                };
                let n = g.data.len();
                let (mut da, mut db) = (Vec::new(), Vec::new());
                let (need_a, need_b) = (self.rg(*a), self.rg(*b));
                if need_a {
                    da.reserve(n);
                }
                if need_b {
                    db.reserve(n);
                }
                for i in 0..n {
                    let (x, y, gi) = (get(va, i), get(vb, i), g.data[i]);
                    if gi == 0.0 {
                        if need_a {
                            da.push(0.0);
                        }
                        if need_b {
                            db.push(0.0);
                        }
                        continue;
                    }
                    let (pa, pb) = match kind {
                        Binary::Add => (1.0, 1.0),
                        Binary::Sub => (1.0, -1.0),
                        Binary::Mul => (y, x),
                        Binary::Div => (1.0 / y, -x / (y * y)),
                    };
                    if need_a {
                        da.push(gi * pa);
                    }
                    if need_b {
                        db.push(gi * pb);
                    }
                }
                let fold = |t: &Tensor, d: Vec<f64>| {
                    if t.shape == *shape {
                        Tensor::new(shape.clone(), d)
                    } else {
                        Tensor::new(t.shape.clone(), vec![d.iter().sum()])
                    }
                };
                if need_a {
                    self.accumulate(grads, *a, fold(va, da));
                }
                if need_b {
                    self.accumulate(grads, *b, fold(vb, db));
                }
            }
            Op::Unary(kind, a) => {
                let x = &self.nodes[a.0].value;
                let data = x
                    .data
                    .iter()
                    .zip(&node.value.data)
                    .zip(&g.data)
                    .map(|((&xi, &yi), &gi)| {
                        if gi == 0.0 {
                            0.0
                        } else {
                            gi * kind.derivative(xi, yi)
                        }
                    })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(x.shape.clone(), data));
            }
            Op::Clamp(a, lo, hi) => {
                let x = &self.nodes[a.0].value;
                let data = x
                    .data
                    .iter()
                    .zip(&g.data)
                    .map(|(&xi, &gi)| if xi >= *lo && xi <= *hi { gi } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(x.shape.clone(), data));
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.rg(*a) {
                    // dA = G Bᵀ
                    let d = gemm(&g.data, &vb.data, m, n, k, (n as isize, 1), (1, n as isize));
                    self.accumulate(grads, *a, Tensor::matrix(m, k, d));
                }
                if self.rg(*b) {
                    // dB = Aᵀ G
                    let d = gemm(&va.data, &g.data, k, m, n, (1, k as isize), (n as isize, 1));
                    self.accumulate(grads, *b, Tensor::matrix(k, n, d));
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, transpose(g)),
            Op::SpMM(s, x) => self.accumulate(grads, *x, s.t_matmul(g)),
            Op::Sum(a) => {
                let shape = self.nodes[a.0].value.shape.clone();
                self.accumulate(grads, *a, Tensor::filled(&shape, g.data[0]));
            }
            Op::Mean(a) => {
                let v = &self.nodes[a.0].value;
                let s = g.data[0] / v.len() as f64;
                self.accumulate(grads, *a, Tensor::filled(&v.shape, s));
            }
            Op::L2Norm(a) => {
                let v = &self.nodes[a.0].value;
                let n = node.value.data[0];
                let s = if n > 0.0 { g.data[0] / n } else { 0.0 };
                self.accumulate(grads, *a, v.map(|x| x * s));
            }
            Op::Concat(parts) => {
                let rows = g.rows();
                let total = g.cols();
                let mut off = 0;
                for p in parts {
                    let w = self.nodes[p.0].value.cols();
                    if self.rg(*p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g.data[r * total + off..r * total + off + w]);
                        }
                        self.accumulate(grads, *p, Tensor::matrix(rows, w, d));
                    }
                    off += w;
                }
            }
            Op::Slice(a, start, end) => {
                let v = &self.nodes[a.0].value;
                let (rows, cols) = (v.rows(), v.cols());
                let w = end - start;
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + end]
                        .copy_from_slice(&g.data[r * w..(r + 1) * w]);
                }
                self.accumulate(grads, *a, Tensor::matrix(rows, cols, d));
            }
            Op::GatherRows(a, idx) => {
                let v = &self.nodes[a.0].value;
                let cols = v.cols();
                let mut d = vec![0.0; v.len()];
                for (r, &i) in idx.iter().enumerate() {
                    let src = &g.data[r * cols..(r + 1) * cols];
                    d[i * cols..(i + 1) * cols]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(x, s)| *x += s);
                }
                self.accumulate(grads, *a, Tensor::new(v.shape.clone(), d));
            }
        }
    }
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let mut data = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            data[j * r + i] = t.data[i * c + j];
        }
    }
    Tensor::matrix(c, r, data)
}

/// Relative error between two gradient estimates, with the denominator
/// floored at `1e-8`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the reverse-mode gradient of `f` at `x` with central
/// differences `(f(x+h) - f(x-h)) / 2h`, returning the largest relative
/// error over all components.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> f64
where
    F: Fn(&mut Tape, Var) -> Var,
{
    grad_check_many(|t, vs| f(t, vs[0]), std::slice::from_ref(x), h)
}

/// [`grad_check`] over several inputs at once.
pub fn grad_check_many<F>(f: F, xs: &[Tensor], h: f64) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let analytic = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let loss = f(&mut tape, &vars);
        let grads = tape.backward(loss);
        vars.iter().map(|&v| grads.wrt(v)).collect::<Vec<_>>()
    };
    let eval = |inputs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
        let loss = f(&mut tape, &vars);
        tape.value(loss).item()
    };
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = xs.to_vec();
    for (k, x) in xs.iter().enumerate() {
        for i in 0..x.len() {
            let orig = x.data[i];
            work[k].data[i] = orig + h;
            let fp = eval(&work);
            work[k].data[i] = orig - h;
            let fm = eval(&work);
            work[k].data[i] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            worst = worst.max(relative_error(analytic[k].data[i], numeric));
        }
    }
    worst
}
