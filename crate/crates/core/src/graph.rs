//! Graph signal processing on dense graphs: the canonical 2-D lattice, its
//! k-NN initial adjacency, Haar and Laplacian-inverse filters, spectra, and
//! the smoothness measures (graph total variation, quadratic variation and
//! the directional total variation of binary lattice signals).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, SymmetricEigen};

/// Regular `side x side` grid of 2-D nodes spanning the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice2D {
    side: usize,
    nodes: Matrix,
}

impl Lattice2D {
    /// Node `r * side + c` sits at `(c, r) / (side - 1)`; a single node sits
    /// at the centre.
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::Domain("lattice side must be at least 1".into()));
        }
        let step = if side > 1 { 1.0 / (side - 1) as f64 } else { 0.0 };
        let offset = if side > 1 { 0.0 } else { 0.5 };
        let nodes = Matrix::from_fn(side * side, 2, |i, k| {
            let (r, c) = (i / side, i % side);
            offset + step * if k == 0 { c as f64 } else { r as f64 }
        });
        Ok(Self { side, nodes })
    }

    /// Lattice with `m` nodes; `m` must be a perfect square.
    pub fn with_nodes(m: usize) -> Result<Self> {
        let side = (m as f64).sqrt().round() as usize;
        if side * side != m {
            return Err(Error::Domain(format!("lattice size {m} is not a perfect square")));
        }
        Self::new(side)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> &Matrix {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        [self.nodes[(i, 0)], self.nodes[(i, 1)]]
    }

    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.node(i), self.node(j));
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
    }

    /// The `k` nearest other nodes of `i`, nearest first; equidistant nodes
    /// are taken in index order.
    pub fn nearest_neighbors(&self, i: usize, k: usize) -> Vec<usize> {
        let mut others: Vec<(f64, usize)> =
            (0..self.len()).filter(|&j| j != i).map(|j| (self.sq_dist(i, j), j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        others.truncate(k);
        others.into_iter().map(|(_, j)| j).collect()
    }
}

/// Nonnegative `M x M` edge-weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphAdjacency {
    weights: Matrix,
}

impl GraphAdjacency {
    pub fn new(weights: Matrix) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::Dimension(format!(
                "adjacency must be square, got {}x{}",
                weights.rows(),
                weights.cols()
            )));
        }
        if let Some(v) = weights.as_slice().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("adjacency weight {v} is negative or non-finite")));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn into_matrix(self) -> Matrix {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.weights.symmetry_defect() <= tol
    }

    /// Indices of the `k` largest weights in row `i`, largest first.
    pub fn top_neighbors(&self, i: usize, k: usize) -> Vec<usize> {
        let row = self.weights.row(i);
        let mut idx: Vec<usize> = (0..row.len()).filter(|&j| j != i).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }
}

/// Gaussian-weighted k-NN graph over the lattice nodes. Row `i` holds
/// `exp(-|z_i - z_j|^2 / (2 sigma^2))` for the `k` nearest `z_j` (self
/// excluded), normalized to sum to one.
pub fn build_initial_adjacency(lat: &Lattice2D, k: usize, sigma: f64) -> Result<GraphAdjacency> {
    let m = lat.len();
    if k == 0 || k >= m {
        return Err(Error::Domain(format!("k = {k} must satisfy 1 <= k < M = {m}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let mut w = Matrix::zeros(m, m);
    let denom = 2.0 * sigma * sigma;
    for i in 0..m {
        let nbrs = lat.nearest_neighbors(i, k);
        // shift by the nearest distance so tiny sigmas do not underflow
        let d0 = lat.sq_dist(i, nbrs[0]);
        let raw: Vec<f64> = nbrs.iter().map(|&j| (-(lat.sq_dist(i, j) - d0) / denom).exp()).collect();
        let z: f64 = raw.iter().sum();
        for (&j, r) in nbrs.iter().zip(raw) {
            w[(i, j)] = r / z;
        }
    }
    GraphAdjacency::new(w)
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &GraphAdjacency) -> GraphAdjacency {
    let w = a.weights();
    let n = w.rows();
    GraphAdjacency { weights: Matrix::from_fn(n, n, |i, j| 0.5 * (w[(i, j)] + w[(j, i)])) }
}

fn check_signal(a: &Matrix, x: &Matrix) -> Result<()> {
    if !a.is_square() || a.rows() != x.rows() {
        return Err(Error::Dimension(format!(
            "graph of {}x{} with signal of {}x{}",
            a.rows(),
            a.cols(),
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

/// Graph Haar filter `(I + A) x / 2`.
pub fn haar_filter(a: &GraphAdjacency, x: &Matrix) -> Result<Matrix> {
    check_signal(a.weights(), x)?;
    let ax = a.weights().matmul(x)?;
    x.add(&ax).map(|s| s.scale(0.5))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// `((1 - alpha) I + alpha A) x`.
pub fn alpha_filter_adjacency(a: &GraphAdjacency, x: &Matrix, alpha: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    check_signal(a.weights(), x)?;
    let ax = a.weights().matmul(x)?;
    x.scale(1.0 - alpha).add(&ax.scale(alpha))
}

/// `L = D - S` with `S = (A + A^T)/2` and `D = diag(S 1)`.
pub fn laplacian(a: &GraphAdjacency) -> Matrix {
    let s = symmetrize(a).into_matrix();
    let n = s.rows();
    let deg = s.row_sums();
    Matrix::from_fn(n, n, |i, j| if i == j { deg[i] - s[(i, j)] } else { -s[(i, j)] })
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    Ok(())
}

/// `(mu I + L)^-1 x` by Cholesky solve.
pub fn laplacian_filter(a: &GraphAdjacency, x: &Matrix, mu: f64) -> Result<Matrix> {
    check_mu(mu)?;
    check_signal(a.weights(), x)?;
    let mut shifted = laplacian(a);
    for i in 0..shifted.rows() {
        shifted[(i, i)] += mu;
    }
    linalg::spd_solve(&shifted, x)
}

/// `(mu I + L)^(-2 alpha) x`, evaluated in the Laplacian eigenbasis.
pub fn alpha_filter_laplacian(a: &GraphAdjacency, x: &Matrix, mu: f64, alpha: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    check_mu(mu)?;
    check_signal(a.weights(), x)?;
    // exact at the ends where the closed forms are cheaper
    if alpha == 0.0 {
        return Ok(x.clone());
    }
    if alpha == 0.5 {
        return laplacian_filter(a, x, mu);
    }
    let spec = LaplacianSpectrum::of(a)?;
    spec.eigen.apply_spectral(x, |lambda| (mu + lambda.max(0.0)).powf(-2.0 * alpha))
}

/// Ascending Laplacian eigenvalues and orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub laplacian: Matrix,
    pub eigen: SymmetricEigen,
}

impl LaplacianSpectrum {
    pub fn of(a: &GraphAdjacency) -> Result<Self> {
        let lap = laplacian(a);
        let eigen = eig_symmetric(&lap)?;
        Ok(Self { laplacian: lap, eigen })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    pub fn eigenvector(&self, i: usize) -> Vec<f64> {
        self.eigen.vectors.col(i)
    }

    /// `||L - V S V^T||_F / ||L||_F` (0 for the zero Laplacian).
    pub fn reconstruction_residual(&self) -> f64 {
        let norm = self.laplacian.frobenius_norm();
        let diff = self.eigen.reconstruct().sub(&self.laplacian).expect("same shape").frobenius_norm();
        if norm == 0.0 {
            diff
        } else {
            diff / norm
        }
    }

    /// `max |V^T V - I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let v = &self.eigen.vectors;
        let n = v.cols();
        v.transpose().matmul(v).expect("square").sub(&Matrix::identity(n)).expect("square").max_abs()
    }

    /// Largest deviation of the first eigenvector's entries from a common
    /// magnitude `1/sqrt(M)` with a common sign.
    pub fn first_vector_defect(&self) -> f64 {
        let v = self.eigenvector(0);
        let target = 1.0 / (v.len() as f64).sqrt();
        let sign = if v.iter().sum::<f64>() >= 0.0 { 1.0 } else { -1.0 };
        v.iter().fold(0.0_f64, |m, x| m.max((sign * x - target).abs()))
    }
}

/// Symmetric eigendecomposition (cyclic Jacobi), with each eigenvector's sign
/// fixed so its first nonzero entry is positive.
pub fn eig_symmetric(m: &Matrix) -> Result<SymmetricEigen> {
    let mut e = linalg::eig_symmetric(m)?;
    let n = e.vectors.rows();
    for c in 0..e.vectors.cols() {
        let first = (0..n).map(|r| e.vectors[(r, c)]).find(|v| v.abs() > 1e-12).unwrap_or(1.0);
        if first < 0.0 {
            for r in 0..n {
                e.vectors[(r, c)] = -e.vectors[(r, c)];
            }
        }
    }
    Ok(e)
}

pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    linalg::spectral_radius(a)
}

/// `||x - A x / |lambda_max| ||^2`; falls back to `||x||^2` when the
/// spectral radius is zero.
pub fn graph_tv(a: &Matrix, x: &[f64]) -> Result<f64> {
    let rho = spectral_radius(a)?;
    let ax = a.matvec(x)?;
    if rho == 0.0 {
        return Ok(linalg::dot(x, x));
    }
    Ok(x.iter().zip(&ax).map(|(xi, ai)| (xi - ai / rho).powi(2)).sum())
}

/// `x^T L x`.
pub fn quadratic_variation(lap: &Matrix, x: &[f64]) -> Result<f64> {
    let lx = lap.matvec(x)?;
    Ok(linalg::dot(x, &lx))
}

/// Binary `N x N` occupancy grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeSignal {
    n: usize,
    cells: Vec<u8>,
}

impl LatticeSignal {
    pub fn zeros(n: usize) -> Self {
        Self { n, cells: vec![0; n * n] }
    }

    pub fn from_rows(rows: &[&[u8]]) -> Result<Self> {
        let n = rows.len();
        let mut cells = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::Dimension("lattice signal must be square".into()));
            }
            if r.iter().any(|&v| v > 1) {
                return Err(Error::Domain("lattice signal entries must be 0 or 1".into()));
            }
            cells.extend_from_slice(r);
        }
        Ok(Self { n, cells })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Zero-based access; out-of-range reads as 0.
    pub fn get(&self, i: isize, j: isize) -> u8 {
        let n = self.n as isize;
        if i < 0 || j < 0 || i >= n || j >= n {
            0
        } else {
            self.cells[(i * n + j) as usize]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.cells[i * self.n + j] = v as u8;
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().map(|&v| v as usize).sum()
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.cells[j * n + i] = self.cells[i * n + j];
            }
        }
        t
    }
}

const DIAGONALS: [(isize, isize); 4] = [(-1, -1), (-1, 1), (1, -1), (1, 1)];

/// Directional variation at node `(i, j)` (zero-based).
pub fn dtv_at(sig: &LatticeSignal, i: usize, j: usize) -> f64 {
    let (i, j) = (i as isize, j as isize);
    if sig.get(i, j) == 0 {
        return 0.0;
    }
    let around: u32 = DIAGONALS.iter().map(|(di, dj)| sig.get(i + di, j + dj) as u32).sum();
    let isolated = if around == 0 { 1.0 } else { 0.0 };
    let jumps: u32 = DIAGONALS
        .iter()
        .map(|(di, dj)| sig.get(i + di, j + dj).abs_diff(sig.get(i - di, j - dj)) as u32)
        .sum();
    isolated + jumps as f64
}

/// Directional total variation: sum of [`dtv_at`] over all nodes.
pub fn dtv(sig: &LatticeSignal) -> f64 {
    let n = sig.size();
    (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| dtv_at(sig, i, j)).sum()
}

/// Whether a lattice signal and a pair of coordinate signals describe the
/// same occupied nodes. Coordinates are one-based after taking the ceiling.
pub fn equivalence_check(sig: &LatticeSignal, x1: &[f64], x2: &[f64]) -> Result<bool> {
    if x1.len() != x2.len() {
        return Err(Error::Dimension(format!(
            "coordinate signals of lengths {} and {}",
            x1.len(),
            x2.len()
        )));
    }
    let n = sig.size() as f64;
    for (a, b) in x1.iter().zip(x2) {
        let (r, c) = (a.ceil(), b.ceil());
        if !(r >= 1.0 && r <= n && c >= 1.0 && c <= n) {
            return Ok(false);
        }
        if sig.get(r as isize - 1, c as isize - 1) != 1 {
            return Ok(false);
        }
    }
    Ok(sig.occupied() == x1.len())
}

/// One eigenvalue per line, ascending.
pub fn write_spectrum(path: impl AsRef<Path>, eigenvalues: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in eigenvalues {
        writeln!(w, "{v:.16e}")?;
    }
    w.flush()?;
    Ok(())
}
