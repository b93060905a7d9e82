//! Feature whitening `z = A (x − a)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix, SymmetricEigen};

/// Eigenvalues at or below this fraction of the largest one are dropped.
pub const DEFAULT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WhitenError {
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("every dimension is constant")]
    AllSingular,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whitener {
    /// Sample mean `a`.
    pub shift: Vec<f64>,
    /// `A = Λ^{-1/2} Uᵀ` restricted to retained directions, `k × D`.
    pub transform: Vec<Vec<f64>>,
    /// Retained eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub threshold: f64,
}

impl Whitener {
    /// Fits on the rows of `xs` with [`DEFAULT_THRESHOLD`].
    pub fn fit(xs: &Matrix) -> Result<Self, WhitenError> {
        Self::fit_with_threshold(xs, DEFAULT_THRESHOLD)
    }

    /// Uses the population covariance `(1/n) Σ (x−a)(x−a)ᵀ`. Constant
    /// features have an exactly zero covariance row and are removed before
    /// the eigendecomposition.
    pub fn fit_with_threshold(xs: &Matrix, threshold: f64) -> Result<Self, WhitenError> {
        let n = xs.rows();
        if n < 2 {
            return Err(WhitenError::TooFewSamples(n));
        }
        let d = xs.cols();
        let mut shift = vec![0.0; d];
        for i in 0..n {
            for (s, v) in shift.iter_mut().zip(xs.row(i)) {
                *s += v;
            }
        }
        for s in &mut shift {
            *s /= n as f64;
        }
        let varying: Vec<usize> = (0..d).filter(|&j| (0..n).any(|i| xs[(i, j)] != xs[(0, j)])).collect();
        if varying.is_empty() {
            return Err(WhitenError::AllSingular);
        }
        let centered = Matrix::from_fn(n, varying.len(), |i, k| {
            let j = varying[k];
            xs[(i, j)] - shift[j]
        });
        let mut cov = centered.gram();
        cov.scale(1.0 / n as f64);
        let eig = SymmetricEigen::new(&cov)?;
        let cutoff = threshold * eig.max_value();
        let mut transform = Vec::new();
        let mut eigenvalues = Vec::new();
        for (k, &lam) in eig.values.iter().enumerate() {
            if lam <= cutoff {
                continue;
            }
            let r = 1.0 / lam.sqrt();
            let mut row = vec![0.0; d];
            for (q, &j) in varying.iter().enumerate() {
                row[j] = r * eig.vectors[(q, k)];
            }
            transform.push(row);
            eigenvalues.push(lam);
        }
        if transform.is_empty() {
            return Err(WhitenError::AllSingular);
        }
        Ok(Whitener {
            shift,
            transform,
            eigenvalues,
            threshold,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.shift.len()
    }

    pub fn retained(&self) -> usize {
        self.transform.len()
    }

    pub fn dropped(&self) -> usize {
        self.input_dim() - self.retained()
    }

    pub fn transform_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.transform).expect("rows share a length")
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, WhitenError> {
        self.check(x.len())?;
        let c: Vec<f64> = x.iter().zip(&self.shift).map(|(v, a)| v - a).collect();
        Ok(self.transform.iter().map(|row| crate::linalg::dot(row, &c)).collect())
    }

    /// Whitens every row of `xs`.
    pub fn apply_rows(&self, xs: &Matrix) -> Result<Matrix, WhitenError> {
        self.check(xs.cols())?;
        let centered = Matrix::from_fn(xs.rows(), xs.cols(), |i, j| xs[(i, j)] - self.shift[j]);
        Ok(centered.matmul_t(&self.transform_matrix()))
    }

    fn check(&self, got: usize) -> Result<(), WhitenError> {
        if got == self.input_dim() {
            Ok(())
        } else {
            Err(WhitenError::DimensionMismatch {
                expected: self.input_dim(),
                got,
            })
        }
    }
}

/// Largest `|mean|` over columns and largest `|cov − I|` entry of `zs`.
pub fn whitening_residuals(zs: &Matrix) -> (f64, f64) {
    let n = zs.rows() as f64;
    let k = zs.cols();
    let mut mean = vec![0.0; k];
    for i in 0..zs.rows() {
        for (m, v) in mean.iter_mut().zip(zs.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let centered = Matrix::from_fn(zs.rows(), k, |i, j| zs[(i, j)] - mean[j]);
    let mut cov = centered.gram();
    cov.scale(1.0 / n);
    cov.add_diagonal(-1.0);
    (mean.iter().map(|m| m.abs()).fold(0.0, f64::max), cov.max_abs())
}
