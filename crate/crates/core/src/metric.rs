//! Analytic relative Fisher metrics for neurons, layers and two-layer blocks.
//!
//! Weight matrices are stored `(D+1) x m` with the bias as the last row, so
//! column `i` is the augmented weight vector `w_i` of output neuron `i`.
//! Layer metrics are indexed in the same order: block `i` belongs to `w_i`.

use thiserror::Error;

use crate::activations::{ActivationKind, Family};
use crate::linalg::{augment, dot, outer, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// Block-diagonal layer metric: one `(D+1) x (D+1)` block per output neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagMetric {
    blocks: Vec<Matrix>,
    input_dim: usize,
}

impl BlockDiagMetric {
    pub fn new(blocks: Vec<Matrix>, input_dim: usize) -> Self {
        debug_assert!(blocks
            .iter()
            .all(|b| b.rows() == input_dim + 1 && b.cols() == input_dim + 1));
        BlockDiagMetric { blocks, input_dim }
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Matrix {
        &self.blocks[i]
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_outputs(&self) -> usize {
        self.blocks.len()
    }

    /// Materializes the full `m(D+1)` square matrix. Only for small layers.
    pub fn to_dense(&self) -> Matrix {
        let b = self.input_dim + 1;
        let n = b * self.blocks.len();
        let mut m = Matrix::zeros(n, n);
        for (k, blk) in self.blocks.iter().enumerate() {
            for i in 0..b {
                for j in 0..b {
                    m[(k * b + i, k * b + j)] = blk[(i, j)];
                }
            }
        }
        m
    }
}

/// Full metric over the stacked weight vector `(w_1; ..; w_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullMetric {
    matrix: Matrix,
    block_dim: usize,
}

impl FullMetric {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.matrix.rows() / self.block_dim
    }

    /// Copy of block `(i, j)`.
    pub fn block(&self, i: usize, j: usize) -> Matrix {
        let b = self.block_dim;
        Matrix::from_fn(b, b, |r, c| self.matrix[(i * b + r, j * b + c)])
    }

    fn from_blocks(num: usize, block_dim: usize, mut f: impl FnMut(usize, usize) -> f64, base: &Matrix) -> Self {
        let b = block_dim;
        let mut matrix = Matrix::zeros(num * b, num * b);
        for i in 0..num {
            for j in 0..num {
                let c = f(i, j);
                if c == 0.0 {
                    continue;
                }
                for r in 0..b {
                    for s in 0..b {
                        matrix[(i * b + r, j * b + s)] = c * base[(r, s)];
                    }
                }
            }
        }
        FullMetric { matrix, block_dim }
    }
}

fn check_weights(w: &[f64], x: &[f64]) -> Result<()> {
    if w.len() != x.len() + 1 {
        return Err(MetricError::DimensionMismatch(format!(
            "weight of length {} for input of dimension {}",
            w.len(),
            x.len()
        )));
    }
    Ok(())
}

fn check_layer(w: &Matrix, x: &[f64]) -> Result<()> {
    if w.rows() != x.len() + 1 {
        return Err(MetricError::DimensionMismatch(format!(
            "weight matrix with {} rows for input of dimension {}",
            w.rows(),
            x.len()
        )));
    }
    Ok(())
}

/// `W_{:,i}ᵀ x̃` for every column.
pub(crate) fn pre_activations(w: &Matrix, xt: &[f64]) -> Vec<f64> {
    w.t_matvec(xt).into_inner()
}

/// Single-neuron metric `nu_f(wᵀx̃) x̃ x̃ᵀ`.
pub fn neuron_rfim(kind: &ActivationKind, w: &[f64], x: &[f64]) -> Result<Matrix> {
    check_weights(w, x)?;
    let xt = augment(x);
    let nu = kind.nu(dot(w, &xt)).value();
    Ok(outer(&xt).scaled(nu))
}

/// Sample mean of [`neuron_rfim`] over a batch.
pub fn batch_neuron_rfim(kind: &ActivationKind, w: &[f64], xs: &[impl AsRef<[f64]>]) -> Result<Matrix> {
    let first = xs.first().ok_or(MetricError::EmptyBatch)?;
    let d = first.as_ref().len();
    check_weights(w, first.as_ref())?;
    let mut acc = Matrix::zeros(d + 1, d + 1);
    for x in xs {
        let x = x.as_ref();
        check_weights(w, x)?;
        let xt = augment(x);
        let nu = kind.nu(dot(w, &xt)).value();
        acc.add_scaled(nu, &outer(&xt));
    }
    acc.scale(1.0 / xs.len() as f64);
    Ok(acc)
}

/// Linear Gaussian layer: `m` identical blocks `x̃ x̃ᵀ / sigma²`.
pub fn linear_layer_rfim(sigma: f64, x: &[f64], m: usize) -> Result<BlockDiagMetric> {
    if !(sigma > 0.0) {
        return Err(MetricError::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let xt = augment(x);
    let mut blk = outer(&xt);
    blk.scale(1.0 / (sigma * sigma));
    Ok(BlockDiagMetric::new(vec![blk; m], x.len()))
}

/// Nonlinear layer: block `i` is `nu_f(w_iᵀx̃) x̃ x̃ᵀ`.
pub fn nonlinear_layer_rfim(kind: &ActivationKind, w: &Matrix, x: &[f64]) -> Result<BlockDiagMetric> {
    check_layer(w, x)?;
    let xt = augment(x);
    let base = outer(&xt);
    let blocks = pre_activations(w, &xt)
        .into_iter()
        .map(|s| base.scaled(kind.nu(s).value()))
        .collect();
    Ok(BlockDiagMetric::new(blocks, x.len()))
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = logits.iter().map(|&l| (l - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    for v in &mut e {
        *v /= z;
    }
    e
}

/// Softmax layer: block `(i,j)` is `(δ_ij η_i − η_i η_j) x̃ x̃ᵀ`.
pub fn softmax_rfim(w: &Matrix, x: &[f64]) -> Result<FullMetric> {
    check_layer(w, x)?;
    let m = w.cols();
    if m < 2 {
        return Err(MetricError::InvalidArgument(
            "softmax needs at least two outputs".into(),
        ));
    }
    let xt = augment(x);
    let eta = softmax(&pre_activations(w, &xt));
    let base = outer(&xt);
    Ok(FullMetric::from_blocks(
        m,
        xt.dim(),
        |i, j| {
            let d = if i == j { eta[i] } else { 0.0 };
            d - eta[i] * eta[j]
        },
        &base,
    ))
}

/// How the two-layer metric weighs the hidden-unit sensitivities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TwoLayerVariant {
    /// `Σ_l c_il c_jl ν(c_l) ν(w_i) ν(w_j) x̃x̃ᵀ` exactly as the closed form reads.
    #[default]
    Literal,
    /// Replaces the hidden `ν(w_i)` factors with `f'(w_iᵀx̃)`. Identical for
    /// tanh and sigm; the exact Fisher of the Gaussian families.
    DerivativeBased,
}

/// Metric of the first-layer weights `W` of the block `y ~ f(Cᵀ h̃)`,
/// `h = f(Wᵀx̃)`, with `x` and `C` held fixed.
///
/// `w` is `(Dx+1) x Dh`, `c` is `(Dh+1) x Dy`; `h` is augmented before `C`.
pub fn two_layer_rfim(
    kind: &ActivationKind,
    w: &Matrix,
    c: &Matrix,
    x: &[f64],
    variant: TwoLayerVariant,
) -> Result<FullMetric> {
    check_layer(w, x)?;
    let dh = w.cols();
    if c.rows() != dh + 1 {
        return Err(MetricError::DimensionMismatch(format!(
            "second-layer matrix has {} rows, expected {}",
            c.rows(),
            dh + 1
        )));
    }
    let xt = augment(x);
    let s = pre_activations(w, &xt);
    let h: Vec<f64> = s.iter().map(|&t| kind.eval(t)).collect();
    let ht = augment(&h);
    let out_nu: Vec<f64> = pre_activations(c, &ht)
        .into_iter()
        .map(|t| kind.nu(t).value())
        .collect();
    let hidden: Vec<f64> = s
        .iter()
        .map(|&t| match variant {
            TwoLayerVariant::Literal => kind.nu(t).value(),
            TwoLayerVariant::DerivativeBased => kind.deriv(t),
        })
        .collect();
    let base = outer(&xt);
    Ok(FullMetric::from_blocks(
        dh,
        xt.dim(),
        |i, j| {
            let mut acc = 0.0;
            for (l, nu_l) in out_nu.iter().enumerate() {
                acc += c[(i, l)] * c[(j, l)] * nu_l;
            }
            acc * hidden[i] * hidden[j]
        },
        &base,
    ))
}

/// `(1/σ²)(∂μ/∂w)(∂μ/∂w)ᵀ` for a Gaussian neuron with mean `f(wᵀx̃)`.
pub fn gaussian_mean_fisher(kind: &ActivationKind, w: &[f64], x: &[f64]) -> Result<Matrix> {
    check_weights(w, x)?;
    if kind.is_bernoulli() {
        return Err(MetricError::InvalidArgument(format!(
            "{:?} is not a Gaussian family",
            kind.family
        )));
    }
    let xt = augment(x);
    let d = kind.deriv(dot(w, &xt));
    let mut m = outer(&xt);
    m.scale(d * d / (kind.sigma * kind.sigma));
    Ok(m)
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Tanh => "tanh",
            Family::Sigm => "sigm",
            Family::ReluOmega => "relu_omega",
            Family::Elu => "elu",
        }
    }
}
