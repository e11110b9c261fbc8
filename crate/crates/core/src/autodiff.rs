//! Minimal reverse-mode differentiation over dense 2-D `f64` tensors.
//!
//! A [`Tape`] records every operation of one forward pass in topological
//! order. Tensors are addressed through cheap [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar replays the record in reverse and
//! accumulates `d(loss)/d(leaf)` into the leaves' gradient buffers; repeated
//! calls accumulate.
//!
//! Vectors are `1 x n` tensors and scalars are `1 x 1`.
//!
//! ```
//! use foldgraph::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(1, 3, vec![1.0, -2.0, 3.0]).unwrap();
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap(), &[2.0, -4.0, 6.0]);
//! ```

use crate::error::{Error, Result};
use crate::linalg::{dot, gemm, Cholesky, Matrix};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn len(self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowVector(Var, Var),
    Relu(Var),
    SoftmaxRows(Var),
    MaxPoolRows { input: Var, argmax: Vec<usize> },
    ConcatCols(Var, Var),
    RepeatRows(Var),
    SliceRows { input: Var, start: usize },
    Transpose(Var),
    Sum(Var),
    ShiftDiagonal(Var),
    Laplacian(Var),
    SpdSolve { a: Var, b: Var, chol: Cholesky },
    Linearized { input: Var, local_grad: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    shape: Shape,
    value: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Computation record for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, shape: Shape, value: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.len(), value.len());
        self.nodes.push(Node { shape, value, grad: None, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    /// Trainable leaf; gradients accumulate into it.
    pub fn leaf(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Var> {
        self.input(rows, cols, values, true)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Var> {
        self.input(rows, cols, values, false)
    }

    pub fn leaf_matrix(&mut self, m: &Matrix) -> Var {
        self.push(Shape::new(m.rows(), m.cols()), m.as_slice().to_vec(), true, Op::Leaf)
    }

    pub fn constant_matrix(&mut self, m: &Matrix) -> Var {
        self.push(Shape::new(m.rows(), m.cols()), m.as_slice().to_vec(), false, Op::Leaf)
    }

    fn input(&mut self, rows: usize, cols: usize, values: Vec<f64>, grad: bool) -> Result<Var> {
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values cannot fill a {rows}x{cols} tensor",
                values.len()
            )));
        }
        Ok(self.push(Shape::new(rows, cols), values, grad, Op::Leaf))
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn to_matrix(&self, v: Var) -> Matrix {
        let n = self.node(v);
        Matrix::from_vec(n.shape.rows, n.shape.cols, n.value.clone()).expect("shape invariant")
    }

    /// Scalar value of a `1 x 1` tensor.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let n = self.node(v);
        if n.shape.len() != 1 {
            return Err(Error::Domain(format!("tensor of shape {} is not a scalar", n.shape)));
        }
        Ok(n.value[0])
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node(v).grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.cols != sb.rows {
            return Err(Error::Dimension(format!("matmul of {sa} by {sb}")));
        }
        let (m, k, n) = (sa.rows, sa.cols, sb.cols);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, (self.value(a), k, 1), (self.value(b), n, 1), 0.0, &mut out);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(Shape::new(m, n), out, rg, Op::MatMul(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Dimension(format!("{what} of {sa} and {sb}")));
        }
        Ok(sa)
    }

    fn zip(&mut self, a: Var, b: Var, what: &str, f: fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let s = self.same_shape(a, b, what)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(s, out, rg, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * s).collect();
        let rg = self.requires_grad(a);
        self.push(self.shape(a), out, rg, Op::Scale(a, s))
    }

    /// Adds a `1 x n` row vector to every row of an `m x n` tensor.
    pub fn add_row_vector(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.rows != 1 || sr.cols != sa.cols {
            return Err(Error::Dimension(format!("broadcast add of {sr} onto {sa}")));
        }
        let r = self.value(row);
        let out = self
            .value(a)
            .chunks_exact(sa.cols.max(1))
            .flat_map(|chunk| chunk.iter().zip(r).map(|(x, b)| x + b))
            .collect::<Vec<_>>();
        let out = if sa.cols == 0 { Vec::new() } else { out };
        let rg = self.requires_grad(a) || self.requires_grad(row);
        Ok(self.push(sa, out, rg, Op::AddRowVector(a, row)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        // NaN passes through so the trainer can report it
        let out = self.value(a).iter().map(|&x| if x > 0.0 || x.is_nan() { x } else { 0.0 }).collect();
        let rg = self.requires_grad(a);
        self.push(self.shape(a), out, rg, Op::Relu(a))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        let mut out = self.value(a).to_vec();
        if s.cols > 0 {
            for row in out.chunks_exact_mut(s.cols) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    total += *v;
                }
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
        }
        let rg = self.requires_grad(a);
        self.push(s, out, rg, Op::SoftmaxRows(a))
    }

    /// Columnwise maximum over the rows of an `N x C` tensor, giving `1 x C`.
    /// Ties resolve to the lowest row index; a NaN in a column wins.
    pub fn maxpool_rows(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.rows == 0 {
            return Err(Error::Domain("max-pool over zero points".into()));
        }
        let vals = self.value(a);
        let mut out = vals[..s.cols].to_vec();
        let mut argmax = vec![0usize; s.cols];
        for r in 1..s.rows {
            let row = &vals[r * s.cols..(r + 1) * s.cols];
            for c in 0..s.cols {
                if row[c] > out[c] || (row[c].is_nan() && !out[c].is_nan()) {
                    out[c] = row[c];
                    argmax[c] = r;
                }
            }
        }
        let rg = self.requires_grad(a);
        Ok(self.push(Shape::new(1, s.cols), out, rg, Op::MaxPoolRows { input: a, argmax }))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.rows != sb.rows {
            return Err(Error::Dimension(format!("column concat of {sa} and {sb}")));
        }
        let cols = sa.cols + sb.cols;
        let mut out = Vec::with_capacity(sa.rows * cols);
        let (va, vb) = (self.value(a), self.value(b));
        for r in 0..sa.rows {
            out.extend_from_slice(&va[r * sa.cols..(r + 1) * sa.cols]);
            out.extend_from_slice(&vb[r * sb.cols..(r + 1) * sb.cols]);
        }
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(Shape::new(sa.rows, cols), out, rg, Op::ConcatCols(a, b)))
    }

    /// Stacks `count` copies of a `1 x n` row.
    pub fn repeat_rows(&mut self, row: Var, count: usize) -> Result<Var> {
        let s = self.shape(row);
        if s.rows != 1 {
            return Err(Error::Dimension(format!("repeat_rows expects a row vector, got {s}")));
        }
        let out = self.value(row).repeat(count);
        let rg = self.requires_grad(row);
        Ok(self.push(Shape::new(count, s.cols), out, rg, Op::RepeatRows(row)))
    }

    /// Rows `start..start + len` of `a`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        if start + len > s.rows {
            return Err(Error::Dimension(format!("rows {start}..{} of {s}", start + len)));
        }
        let out = self.value(a)[start * s.cols..(start + len) * s.cols].to_vec();
        let rg = self.requires_grad(a);
        Ok(self.push(Shape::new(len, s.cols), out, rg, Op::SliceRows { input: a, start }))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let s = self.shape(a);
        let v = self.value(a);
        let mut out = vec![0.0; s.len()];
        for r in 0..s.rows {
            for c in 0..s.cols {
                out[c * s.rows + r] = v[r * s.cols + c];
            }
        }
        let rg = self.requires_grad(a);
        self.push(Shape::new(s.cols, s.rows), out, rg, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).iter().sum();
        let rg = self.requires_grad(a);
        self.push(Shape::new(1, 1), vec![total], rg, Op::Sum(a))
    }

    /// `a + shift * I` for square `a`.
    pub fn shift_diagonal(&mut self, a: Var, shift: f64) -> Result<Var> {
        let s = self.shape(a);
        if s.rows != s.cols {
            return Err(Error::Dimension(format!("diagonal shift of non-square {s}")));
        }
        let mut out = self.value(a).to_vec();
        for i in 0..s.rows {
            out[i * s.cols + i] += shift;
        }
        let rg = self.requires_grad(a);
        Ok(self.push(s, out, rg, Op::ShiftDiagonal(a)))
    }

    /// Graph Laplacian `diag(S 1) - S` of the symmetrized `S = (A + A^T)/2`.
    pub fn laplacian(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.rows != s.cols {
            return Err(Error::Dimension(format!("Laplacian of non-square {s}")));
        }
        let n = s.rows;
        let v = self.value(a);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let mut degree = 0.0;
            for j in 0..n {
                let w = 0.5 * (v[i * n + j] + v[j * n + i]);
                degree += w;
                out[i * n + j] = -w;
            }
            out[i * n + i] += degree;
        }
        let rg = self.requires_grad(a);
        Ok(self.push(s, out, rg, Op::Laplacian(a)))
    }

    /// Solves `A Y = B` for symmetric positive definite `A` by Cholesky.
    ///
    /// The factorization uses the symmetric part of `A`, so the gradient
    /// returned for `A` is the symmetrized adjoint `-(A^-1 G) Y^T`.
    pub fn spd_solve(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.rows != sa.cols || sa.rows != sb.rows {
            return Err(Error::Dimension(format!("spd_solve of {sa} with right-hand side {sb}")));
        }
        let n = sa.rows;
        let av = self.value(a);
        let mut sym = vec![0.0; n * n];
        let mut defect = 0.0_f64;
        let mut scale = 1.0_f64;
        for i in 0..n {
            for j in 0..n {
                sym[i * n + j] = 0.5 * (av[i * n + j] + av[j * n + i]);
                defect = defect.max((av[i * n + j] - av[j * n + i]).abs());
                scale = scale.max(av[i * n + j].abs());
            }
        }
        if defect > 1e-9 * scale {
            return Err(Error::Domain(format!("spd_solve matrix is not symmetric (defect {defect:e})")));
        }
        let chol = Cholesky::factor(&sym, n)?;
        let mut y = self.value(b).to_vec();
        chol.solve_in_place(&mut y, sb.cols);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(sb, y, rg, Op::SpdSolve { a, b, chol }))
    }

    /// Scalar whose value and gradient with respect to `input` were computed
    /// outside the tape (e.g. a loss with a frozen nearest-neighbour matching).
    pub fn linearized_scalar(&mut self, input: Var, value: f64, local_grad: Vec<f64>) -> Result<Var> {
        let s = self.shape(input);
        if local_grad.len() != s.len() {
            return Err(Error::Dimension(format!(
                "local gradient of length {} for input of shape {s}",
                local_grad.len()
            )));
        }
        let rg = self.requires_grad(input);
        Ok(self.push(Shape::new(1, 1), vec![value], rg, Op::Linearized { input, local_grad }))
    }

    /// Accumulates `d(loss)/d(leaf)` into every reachable leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let s = self.shape(loss);
        if s.len() != 1 {
            return Err(Error::Domain(format!("backward needs a scalar loss, got shape {s}")));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }

        for (i, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let node = &nodes[i];
        let wants = |v: Var| nodes[v.0].requires_grad;
        macro_rules! acc {
            ($v:expr) => {
                slot(grads, nodes, $v)
            };
        }

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (nodes[a.0].shape, nodes[b.0].shape);
                let (m, k, n) = (sa.rows, sa.cols, sb.cols);
                if wants(*a) {
                    // dA += G B^T
                    gemm(m, n, k, 1.0, (g, n, 1), (&nodes[b.0].value, 1, n), 1.0, acc!(*a));
                }
                if wants(*b) {
                    // dB += A^T G
                    gemm(k, m, n, 1.0, (&nodes[a.0].value, 1, k), (g, n, 1), 1.0, acc!(*b));
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        acc!(v).iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if wants(*b) {
                    acc!(*b).iter_mut().zip(g).for_each(|(x, y)| *x -= y);
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let other = &nodes[b.0].value;
                    acc!(*a).iter_mut().zip(g).zip(other).for_each(|((x, y), o)| *x += y * o);
                }
                if wants(*b) {
                    let other = &nodes[a.0].value;
                    acc!(*b).iter_mut().zip(g).zip(other).for_each(|((x, y), o)| *x += y * o);
                }
            }
            Op::Scale(a, s) => {
                if wants(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(x, y)| *x += y * s);
                }
            }
            Op::AddRowVector(a, row) => {
                if wants(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if wants(*row) {
                    let cols = nodes[row.0].shape.cols;
                    let buf = acc!(*row);
                    if cols > 0 {
                        for chunk in g.chunks_exact(cols) {
                            buf.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            Op::Relu(a) => {
                if wants(*a) {
                    let input = &nodes[a.0].value;
                    for ((x, y), v) in acc!(*a).iter_mut().zip(g).zip(input) {
                        if *v > 0.0 {
                            *x += y;
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if wants(*a) {
                    let cols = node.shape.cols;
                    let y = &node.value;
                    let buf = acc!(*a);
                    if cols > 0 {
                        for ((yr, gr), br) in y
                            .chunks_exact(cols)
                            .zip(g.chunks_exact(cols))
                            .zip(buf.chunks_exact_mut(cols))
                        {
                            let inner = dot(yr, gr);
                            for c in 0..cols {
                                br[c] += yr[c] * (gr[c] - inner);
                            }
                        }
                    }
                }
            }
            Op::MaxPoolRows { input, argmax } => {
                if wants(*input) {
                    let cols = nodes[input.0].shape.cols;
                    let buf = acc!(*input);
                    for (c, &r) in argmax.iter().enumerate() {
                        buf[r * cols + c] += g[c];
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (nodes[a.0].shape.cols, nodes[b.0].shape.cols);
                let cols = ca + cb;
                let rows = node.shape.rows;
                if wants(*a) {
                    let buf = acc!(*a);
                    for r in 0..rows {
                        for c in 0..ca {
                            buf[r * ca + c] += g[r * cols + c];
                        }
                    }
                }
                if wants(*b) {
                    let buf = acc!(*b);
                    for r in 0..rows {
                        for c in 0..cb {
                            buf[r * cb + c] += g[r * cols + ca + c];
                        }
                    }
                }
            }
            Op::RepeatRows(row) => {
                if wants(*row) {
                    let cols = nodes[row.0].shape.cols;
                    let buf = acc!(*row);
                    if cols > 0 {
                        for chunk in g.chunks_exact(cols) {
                            buf.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            Op::SliceRows { input, start } => {
                if wants(*input) {
                    let off = start * node.shape.cols;
                    let buf = acc!(*input);
                    buf[off..off + g.len()].iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
            Op::Transpose(a) => {
                if wants(*a) {
                    let s = nodes[a.0].shape;
                    let buf = acc!(*a);
                    for r in 0..s.rows {
                        for c in 0..s.cols {
                            buf[r * s.cols + c] += g[c * s.rows + r];
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if wants(*a) {
                    acc!(*a).iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::ShiftDiagonal(a) => {
                if wants(*a) {
                    acc!(*a).iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
            Op::Laplacian(a) => {
                if wants(*a) {
                    let n = node.shape.rows;
                    // dS_ij = G_ii - G_ij, dA = (dS + dS^T) / 2
                    let buf = acc!(*a);
                    for i in 0..n {
                        for j in 0..n {
                            let ds_ij = g[i * n + i] - g[i * n + j];
                            let ds_ji = g[j * n + j] - g[j * n + i];
                            buf[i * n + j] += 0.5 * (ds_ij + ds_ji);
                        }
                    }
                }
            }
            Op::SpdSolve { a, b, chol } => {
                let k = node.shape.cols;
                let n = node.shape.rows;
                let mut gb = g.to_vec();
                chol.solve_in_place(&mut gb, k);
                if wants(*a) {
                    // -(A^-1 G) Y^T, symmetrized
                    let mut outer = vec![0.0; n * n];
                    gemm(n, k, n, -1.0, (&gb, k, 1), (&node.value, 1, k), 0.0, &mut outer);
                    let buf = acc!(*a);
                    for i in 0..n {
                        for j in 0..n {
                            buf[i * n + j] += 0.5 * (outer[i * n + j] + outer[j * n + i]);
                        }
                    }
                }
                if wants(*b) {
                    acc!(*b).iter_mut().zip(&gb).for_each(|(x, y)| *x += y);
                }
            }
            Op::Linearized { input, local_grad } => {
                if wants(*input) {
                    acc!(*input).iter_mut().zip(local_grad).for_each(|(x, y)| *x += g[0] * y);
                }
            }
        }
    }
}

fn slot<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'g mut Vec<f64> {
    let len = nodes[v.0].value.len();
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}
