//! Dense row-major linear algebra: vectors, matrices, Cholesky solves and a
//! symmetric eigensolver.
//!
//! Everything here is sized for desk-scale problems (a few hundred rows).
//! General matrix products go through `matrixmultiply`; the factorizations
//! are written out directly.

use std::fmt;
use std::ops::{Deref, DerefMut, Index, IndexMut};

use thiserror::Error;

/// Block size of the right-looking Cholesky factorization.
const GRAM_PANEL: usize = 128;
const CHOLESKY_BLOCK: usize = 48;

/// Relative tolerance for the symmetry precondition of the solvers.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("non-finite value encountered")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// A dense real vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Appends the homogeneous coordinate: `(x_1, .., x_D) -> (x_1, .., x_D, 1)`.
pub fn augment(x: &[f64]) -> Vector {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.extend_from_slice(x);
    v.push(1.0);
    Vector(v)
}

/// Left-to-right dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `v vᵀ`
pub fn outer(v: &[f64]) -> Matrix {
    let n = v.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        let row = m.row_mut(i);
        for j in 0..n {
            row[j] = v[i] * v[j];
        }
    }
    m
}

/// `m += alpha * v vᵀ`
pub fn add_outer(m: &mut Matrix, alpha: f64, v: &[f64]) {
    assert_eq!(m.rows, v.len());
    assert_eq!(m.cols, v.len());
    for i in 0..v.len() {
        let a = alpha * v[i];
        if a == 0.0 {
            continue;
        }
        axpy(a, v, m.row_mut(i));
    }
}

/// Dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(12) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(12)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(LinalgError::DimensionMismatch(format!(
                "{rows}x{cols} matrix from {} values",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(LinalgError::DimensionMismatch("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector((0..self.rows).map(|i| self.data[i * self.cols + j]).collect())
    }

    pub fn set_column(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        for (i, &x) in v.iter().enumerate() {
            self.data[i * self.cols + j] = x;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> f64 {
        let mut t = 0.0;
        for i in 0..self.rows.min(self.cols) {
            t += self[(i, i)];
        }
        t
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Matrix {
        let mut m = self.clone();
        m.scale(alpha);
        m
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        axpy(alpha, &other.data, &mut self.data);
    }

    pub fn add_diagonal(&mut self, alpha: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += alpha;
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        let mut m = self.clone();
        m.add_scaled(-1.0, other);
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn matvec(&self, x: &[f64]) -> Vector {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        Vector((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ x`
    pub fn t_matvec(&self, x: &[f64]) -> Vector {
        assert_eq!(x.len(), self.rows, "t_matvec dimension");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut out);
            }
        }
        Vector(out)
    }

    /// `self * other`
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension");
        let mut c = Matrix::zeros(self.rows, other.cols);
        gemm(1.0, View::normal(self), View::normal(other), 0.0, &mut c);
        c
    }

    /// `selfᵀ * other`
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "t_matmul dimension");
        let mut c = Matrix::zeros(self.cols, other.cols);
        gemm(1.0, View::transposed(self), View::normal(other), 0.0, &mut c);
        c
    }

    /// `self * otherᵀ`
    pub fn matmul_t(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_t dimension");
        let mut c = Matrix::zeros(self.rows, other.rows);
        gemm(1.0, View::normal(self), View::transposed(other), 0.0, &mut c);
        c
    }

    /// Gram matrix `selfᵀ self`, symmetrized exactly.
    pub fn gram(&self) -> Matrix {
        let (n, d) = (self.rows, self.cols);
        let mut g = Matrix::zeros(d, d);
        if n == 0 {
            return g;
        }
        // lower triangle only, one column panel at a time
        let mut jb = 0;
        while jb < d {
            let w = GRAM_PANEL.min(d - jb);
            // SAFETY: reads `self` within its extent; writes rows jb..d,
            // columns jb..jb+w of `g`.
            unsafe {
                let src = self.data.as_ptr().add(jb);
                matrixmultiply::dgemm(
                    d - jb,
                    n,
                    w,
                    1.0,
                    src,
                    1,
                    d as isize,
                    src,
                    d as isize,
                    1,
                    0.0,
                    g.data.as_mut_ptr().add(jb * d + jb),
                    d as isize,
                    1,
                );
            }
            jb += w;
        }
        g.symmetrize();
        g
    }

    /// Copies the lower triangle onto the upper one.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        for i in 0..self.rows {
            for j in 0..i {
                let v = self[(i, j)];
                self[(j, i)] = v;
            }
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Appends a trailing column of ones (row-wise augmentation).
    pub fn augment_rows(&self) -> Matrix {
        let cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.push(1.0);
        }
        Matrix {
            rows: self.rows,
            cols,
            data,
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

struct View<'a> {
    m: &'a Matrix,
    trans: bool,
}

impl<'a> View<'a> {
    fn normal(m: &'a Matrix) -> Self {
        View { m, trans: false }
    }
    fn transposed(m: &'a Matrix) -> Self {
        View { m, trans: true }
    }
    fn shape(&self) -> (usize, usize) {
        if self.trans {
            (self.m.cols, self.m.rows)
        } else {
            (self.m.rows, self.m.cols)
        }
    }
    fn strides(&self) -> (isize, isize) {
        if self.trans {
            (1, self.m.cols as isize)
        } else {
            (self.m.cols as isize, 1)
        }
    }
}

/// `c = alpha * a * b + beta * c`
fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: &mut Matrix) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2);
    assert_eq!((c.rows, c.cols), (m, n));
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale(beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the strides describe exactly the extents of the borrowed buffers
    // and `c` is a distinct, exclusively borrowed allocation.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.m.data.as_ptr(),
            rsa,
            csa,
            b.m.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    dim: usize,
    /// Row-major, zeros above the diagonal.
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric positive-definite matrix. Only the lower triangle
    /// is read.
    pub fn factor(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch(format!(
                "cholesky of {}x{} matrix",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut l = a.data.clone();
        for i in 0..n {
            for j in i + 1..n {
                l[i * n + j] = 0.0;
            }
        }
        let mut kb = 0;
        while kb < n {
            let ke = (kb + CHOLESKY_BLOCK).min(n);
            // diagonal block
            for j in kb..ke {
                let mut d = l[j * n + j];
                for k in kb..j {
                    d -= l[j * n + k] * l[j * n + k];
                }
                if !(d > 0.0) || !d.is_finite() {
                    if !d.is_finite() {
                        return Err(LinalgError::NonFinite);
                    }
                    return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
                }
                let d = d.sqrt();
                l[j * n + j] = d;
                for i in j + 1..ke {
                    let mut s = l[i * n + j];
                    for k in kb..j {
                        s -= l[i * n + k] * l[j * n + k];
                    }
                    l[i * n + j] = s / d;
                }
            }
            // panel below the diagonal block
            for i in ke..n {
                for j in kb..ke {
                    let mut s = l[i * n + j];
                    for k in kb..j {
                        s -= l[i * n + k] * l[j * n + k];
                    }
                    l[i * n + j] = s / l[j * n + j];
                }
            }
            // trailing update A22 -= L21 L21ᵀ
            if ke < n {
                let kk = ke - kb;
                let ptr = l.as_mut_ptr();
                // lower triangle of A22 only, one column panel at a time
                let mut jb = ke;
                while jb < n {
                    let w = GRAM_PANEL.min(n - jb);
                    // SAFETY: L21 occupies columns kb..ke and A22 columns
                    // ke..n of rows ke..n; the two regions are disjoint.
                    unsafe {
                        matrixmultiply::dgemm(
                            n - jb,
                            kk,
                            w,
                            -1.0,
                            ptr.add(jb * n + kb) as *const f64,
                            n as isize,
                            1,
                            ptr.add(jb * n + kb) as *const f64,
                            1,
                            n as isize,
                            1.0,
                            ptr.add(jb * n + jb),
                            n as isize,
                            1,
                        );
                    }
                    jb += w;
                }
            }
            kb = ke;
        }
        for i in 0..n {
            for j in i + 1..n {
                l[i * n + j] = 0.0;
            }
        }
        Ok(Cholesky { dim: n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> Matrix {
        Matrix {
            rows: self.dim,
            cols: self.dim,
            data: self.lower.clone(),
        }
    }

    /// `L Lᵀ`
    pub fn reconstruct(&self) -> Matrix {
        let l = self.lower();
        let mut m = l.matmul_t(&l);
        m.symmetrize();
        m
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.dim);
        let n = self.dim;
        let l = &self.lower;
        for i in 0..n {
            let row = &l[i * n..i * n + i];
            let s = b[i] - dot(row, &b[..i]);
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= l[k * n + i] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vector {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Vector(x)
    }

    /// Solves `A X = B` for every column of `B` at once.
    pub fn solve_columns(&self, b: &mut Matrix) {
        assert_eq!(b.rows, self.dim);
        let n = self.dim;
        let c = b.cols;
        let l = &self.lower;
        let data = &mut b.data;
        for i in 0..n {
            let (done, rest) = data.split_at_mut(i * c);
            let row_i = &mut rest[..c];
            for k in 0..i {
                let lik = l[i * n + k];
                if lik != 0.0 {
                    axpy(-lik, &done[k * c..(k + 1) * c], row_i);
                }
            }
            let d = l[i * n + i];
            for v in row_i.iter_mut() {
                *v /= d;
            }
        }
        for i in (0..n).rev() {
            let (head, tail) = data.split_at_mut((i + 1) * c);
            let row_i = &mut head[i * c..];
            for k in i + 1..n {
                let lki = l[k * n + i];
                if lki != 0.0 {
                    axpy(-lki, &tail[(k - i - 1) * c..(k - i) * c], row_i);
                }
            }
            let d = l[i * n + i];
            for v in row_i.iter_mut() {
                *v /= d;
            }
        }
    }
}

fn check_symmetric(g: &Matrix) -> Result<()> {
    if !g.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "expected square matrix, got {}x{}",
            g.rows, g.cols
        )));
    }
    if !g.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let asym = g.max_asymmetry();
    if asym > SYMMETRY_TOL * g.max_abs().max(1.0) {
        return Err(LinalgError::NotSymmetric(asym));
    }
    Ok(())
}

/// Factors `G + eps I` for a symmetric PSD `G`.
pub fn regularized_factor(g: &Matrix, eps: f64) -> Result<Cholesky> {
    check_symmetric(g)?;
    let mut shifted = g.clone();
    shifted.add_diagonal(eps);
    Cholesky::factor(&shifted)
}

/// Solves `(G + eps I) d = b`.
pub fn regularized_solve(g: &Matrix, b: &[f64], eps: f64) -> Result<Vector> {
    if b.len() != g.rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "rhs of length {} for {}x{} system",
            b.len(),
            g.rows,
            g.cols
        )));
    }
    let chol = regularized_factor(g, eps)?;
    let d = chol.solve(b);
    if !d.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    Ok(d)
}

/// Damping `eps_rel * tr(G) / D`, floored to `eps_rel` when the trace is zero.
pub fn trace_scaled_epsilon(g: &Matrix, eps_rel: f64) -> f64 {
    assert!(
        g.is_square() && g.rows > 0,
        "trace_scaled_epsilon needs a square matrix"
    );
    let tr = g.trace();
    if tr == 0.0 {
        eps_rel
    } else {
        eps_rel * tr / g.rows as f64
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector of `values[k]`.
    pub vectors: Matrix,
}

impl SymmetricEigen {
    /// Householder tridiagonalization followed by implicit QL iterations.
    pub fn new(a: &Matrix) -> Result<Self> {
        check_symmetric(a)?;
        let n = a.rows;
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        if n == 0 {
            return Ok(SymmetricEigen {
                values: d,
                vectors: Matrix::zeros(0, 0),
            });
        }
        tridiagonalize(&mut v, &mut d, &mut e);
        ql_implicit(&mut v, &mut d, &mut e)?;
        let vectors = Matrix::from_fn(n, n, |i, j| v[i][j]);
        Ok(SymmetricEigen { values: d, vectors })
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

fn tridiagonalize(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    d.copy_from_slice(&v[n - 1][..n]);
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

fn ql_implicit(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        let m = m.min(n - 1);
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(LinalgError::NonFinite);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if !p.is_finite() {
                    return Err(LinalgError::NonFinite);
                }
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    // sort ascending
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for row in v.iter_mut() {
                row.swap(i, k);
            }
        }
    }
    Ok(())
}

/// Number of eigenvalues of a symmetric PSD matrix above
/// `rel_tol * max |eigenvalue|`. For PSD input these are its singular values.
pub fn numeric_rank(a: &Matrix, rel_tol: f64) -> Result<usize> {
    let eig = SymmetricEigen::new(a)?;
    let top = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return Ok(0);
    }
    Ok(eig.values.iter().filter(|v| v.abs() > rel_tol * top).count())
}
