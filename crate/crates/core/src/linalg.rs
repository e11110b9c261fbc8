//! Dense row-major matrices and the handful of factorizations the rest of the
//! crate needs: Cholesky solves, a cyclic Jacobi eigensolver for symmetric
//! matrices, and power iteration for the spectral radius.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "buffer of length {} cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Column vector (n x 1).
    pub fn column(values: &[f64]) -> Self {
        Self { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "matmul of {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            1.0,
            (&self.data, self.cols, 1),
            (&other.data, other.cols, 1),
            0.0,
            &mut out.data,
        );
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(Error::Dimension(format!(
                "matvec of {}x{} by vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    fn zip(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "elementwise op on {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|`; infinite for non-square input.
    pub fn symmetry_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `c = alpha * op(a) * op(b) + beta * c` over raw strided buffers.
///
/// `a` is `m x k` described by `(buffer, row_stride, col_stride)`, `b` is
/// `k x n`, and `c` is a contiguous row-major `m x n` buffer. Transposes are
/// expressed by swapping strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: (&[f64], usize, usize),
    b: (&[f64], usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v *= beta;
        }
        return;
    }
    // SAFETY: strides describe in-bounds views of the given buffers; the
    // callers in this crate derive them from the checked shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Square-root-free Cholesky factorization `A = L D L^T` of a symmetric
/// positive definite matrix (`L` unit lower triangular). Diagonal systems
/// therefore solve exactly.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl Cholesky {
    /// Factors the lower triangle of `a` (`n x n`, row-major).
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        let mut l = vec![0.0; n * n];
        let mut d = vec![0.0; n];
        // scratch row holding l[j][k] * d[k]
        let mut ld = vec![0.0; n];
        for j in 0..n {
            for k in 0..j {
                ld[k] = l[j * n + k] * d[k];
            }
            let dj = a[j * n + j] - dot(&l[j * n..j * n + j], &ld[..j]);
            if !(dj > 0.0) || !dj.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: dj });
            }
            d[j] = dj;
            l[j * n + j] = 1.0;
            for i in (j + 1)..n {
                let s = a[i * n + j] - dot(&l[i * n..i * n + j], &ld[..j]);
                l[i * n + j] = s / dj;
            }
        }
        Ok(Self { n, lower: l, diag: d })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A X = B` in place for a row-major `n x k` right-hand side.
    pub fn solve_in_place(&self, b: &mut [f64], k: usize) {
        let n = self.n;
        let l = &self.lower;
        for i in 0..n {
            for p in 0..i {
                let lip = l[i * n + p];
                if lip != 0.0 {
                    for c in 0..k {
                        b[i * k + c] -= lip * b[p * k + c];
                    }
                }
            }
        }
        for i in 0..n {
            let d = self.diag[i];
            for c in 0..k {
                b[i * k + c] /= d;
            }
        }
        for i in (0..n).rev() {
            for p in (i + 1)..n {
                let lpi = l[p * n + i];
                if lpi != 0.0 {
                    for c in 0..k {
                        b[i * k + c] -= lpi * b[p * k + c];
                    }
                }
            }
        }
    }
}

/// Solves `A X = B` for symmetric positive definite `A` without forming an
/// inverse.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if !a.is_square() || a.rows() != b.rows() {
        return Err(Error::Dimension(format!(
            "spd_solve of {}x{} with right-hand side {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let chol = Cholesky::factor(a.as_slice(), a.rows())?;
    let mut x = b.clone();
    chol.solve_in_place(x.as_mut_slice(), b.cols());
    Ok(x)
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors as
/// the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
    pub sweeps: usize,
}

impl SymmetricEigen {
    /// Rebuilds `V diag(values) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let v = &self.vectors;
        let scaled = Matrix::from_fn(n, n, |r, c| v[(r, c)] * self.values[c]);
        scaled.matmul(&v.transpose()).expect("square factors")
    }

    /// Applies `V diag(f(lambda)) V^T` to the columns of `x`.
    pub fn apply_spectral(&self, x: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        let vt_x = self.vectors.transpose().matmul(x)?;
        let mut scaled = vt_x;
        for (i, &lambda) in self.values.iter().enumerate() {
            let g = f(lambda);
            for v in scaled.row_mut(i) {
                *v *= g;
            }
        }
        self.vectors.matmul(&scaled)
    }
}

pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps until the off-diagonal Frobenius norm drops below
/// `1e-12 * ||m||_F`, or fails after [`JACOBI_MAX_SWEEPS`].
pub fn eig_symmetric(m: &Matrix) -> Result<SymmetricEigen> {
    if !m.is_square() {
        return Err(Error::Domain(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let defect = m.symmetry_defect();
    if defect >= 1e-8 * m.max_abs().max(1.0) {
        return Err(Error::Domain(format!("matrix is not symmetric (defect {defect:e})")));
    }
    let n = m.rows();
    let mut a = m.clone();
    // enforce exact symmetry so rotations stay consistent
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    let mut v = Matrix::identity(n);
    let total = m.frobenius_norm();
    let tol = 1e-12 * total;

    let off_norm = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    let mut off = off_norm(&a);
    while off > tol {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { iterations: sweeps, residual: off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s, t, apq);
            }
        }
        off = off_norm(&a);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors, sweeps })
}

#[allow(clippy::too_many_arguments)]
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64, t: f64, apq: f64) {
    let n = a.rows();
    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for r in 0..n {
        if r != p && r != q {
            let arp = a[(r, p)];
            let arq = a[(r, q)];
            let np = c * arp - s * arq;
            let nq = s * arp + c * arq;
            a[(r, p)] = np;
            a[(p, r)] = np;
            a[(r, q)] = nq;
            a[(q, r)] = nq;
        }
    }
    for r in 0..n {
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = c * vrp - s * vrq;
        v[(r, q)] = s * vrp + c * vrq;
    }
}

pub const POWER_ITERATION_SEED: u64 = 0x5eed_0f_9a11;
pub const POWER_ITERATION_MAX: usize = 1000;

/// `|lambda_max|` by power iteration from a fixed pseudo-random start vector.
///
/// Symmetric input iterates on `A^2`, so eigenvalue pairs `+l, -l` do not
/// stall convergence and the estimate `|A v|` is a Rayleigh quotient.
/// If a symmetric matrix has not converged after the iteration budget (two
/// eigenvalues of nearly equal magnitude), the Jacobi eigensolver settles it.
/// Returns 0 for a matrix that annihilates the start vector (e.g. the zero
/// matrix).
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "spectral radius of non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(0.0);
    }
    let symmetric = a.symmetry_defect() <= 1e-12 * a.max_abs().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut estimate = 0.0;
    for it in 0..POWER_ITERATION_MAX {
        let w = a.matvec(&v)?;
        let nw = norm2(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        let change = (nw - estimate).abs();
        estimate = nw;
        if symmetric {
            let u = a.matvec(&w)?;
            let nu = norm2(&u);
            if nu == 0.0 {
                return Ok(estimate);
            }
            v = u.into_iter().map(|x| x / nu).collect();
        } else {
            v = w.into_iter().map(|x| x / nw).collect();
        }
        if it > 0 && change <= 1e-12 * nw {
            return Ok(estimate);
        }
    }
    if symmetric {
        let e = eig_symmetric(a)?;
        return Ok(e.values.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn diagonal_eigen_sorted_with_permutation_vectors() {
        let m = Matrix::from_rows(&[&[3.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]);
        let e = eig_symmetric(&m).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(e.vectors.col(0), vec![0.0, 1.0, 0.0]);
        assert_eq!(e.vectors.col(1), vec![0.0, 0.0, 1.0]);
        assert_eq!(e.vectors.col(2), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn two_node_laplacian_spectrum() {
        let m = Matrix::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let e = eig_symmetric(&m).unwrap();
        assert!(e.values[0].abs() < 1e-14);
        assert!((e.values[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let m = random_symmetric(20, 11);
        let e = eig_symmetric(&m).unwrap();
        let resid = e.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(resid < 1e-8, "residual {resid}");
        let vtv = e.vectors.transpose().matmul(&e.vectors).unwrap();
        assert!(vtv.sub(&Matrix::identity(20)).unwrap().max_abs() < 1e-9);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(eig_symmetric(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn cholesky_reports_failing_pivot() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        match spd_solve(&m, &Matrix::identity(2)) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spd_solve_scaled_identity() {
        let a = Matrix::identity(3).scale(2.0);
        let x = spd_solve(&a, &Matrix::identity(3)).unwrap();
        assert_eq!(x, Matrix::identity(3).scale(0.5));
    }

    #[test]
    fn spectral_radius_cases() {
        assert!((spectral_radius(&Matrix::identity(5)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(spectral_radius(&Matrix::zeros(4, 4)).unwrap(), 0.0);
        let m = random_symmetric(12, 3);
        let e = eig_symmetric(&m).unwrap();
        let expected = e.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let got = spectral_radius(&m).unwrap();
        assert!((got - expected).abs() < 1e-8, "{got} vs {expected}");
    }

    #[test]
    fn matmul_dimension_error_names_shapes() {
        let err = Matrix::zeros(2, 3).matmul(&Matrix::zeros(2, 3)).unwrap_err();
        assert!(err.to_string().contains("2x3 by 2x3"));
    }
}
