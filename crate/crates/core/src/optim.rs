//! First-order optimizers, the exact natural gradient step of the logistic
//! model, and RNGD with moving-average neuron metrics.

use thiserror::Error;

use crate::activations::{ActivationKind, Family};
use crate::linalg::{trace_scaled_epsilon, Cholesky, LinalgError, Matrix, Vector};
use crate::network::{logistic_gradient, ForwardTrace, MlpParams, MlpSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, OptimError>;

/// Anything that exposes its parameters as a list of flat slices.
pub trait ParamSet {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;
}

impl ParamSet for MlpParams {
    fn slices(&self) -> Vec<&[f64]> {
        self.layers().iter().map(Matrix::as_slice).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut().iter_mut().map(Matrix::as_mut_slice).collect()
    }
}

impl ParamSet for Vec<f64> {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

impl ParamSet for Vector {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self[..]]
    }
}

fn shapes(p: &impl ParamSet) -> Vec<usize> {
    p.slices().iter().map(|s| s.len()).collect()
}

fn check_shapes(params: &impl ParamSet, grads: &impl ParamSet) -> Result<()> {
    let (a, b) = (shapes(params), shapes(grads));
    if a == b {
        Ok(())
    } else {
        Err(OptimError::ShapeMismatch(format!(
            "parameters {a:?} vs gradients {b:?}"
        )))
    }
}

/// Heavy-ball state: `v ← m v − γ g`, `θ ← θ + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl MomentumState {
    pub fn new(lr: f64, momentum: f64) -> Self {
        MomentumState {
            lr,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// Applies the heavy-ball update with an arbitrary descent direction.
    fn apply(&mut self, params: Vec<&mut [f64]>, directions: Vec<&[f64]>) {
        if self.velocity.is_empty() {
            self.velocity = directions.iter().map(|d| vec![0.0; d.len()]).collect();
        }
        for ((p, d), v) in params.into_iter().zip(directions).zip(&mut self.velocity) {
            for ((pi, di), vi) in p.iter_mut().zip(d).zip(v.iter_mut()) {
                *vi = self.momentum * *vi - self.lr * di;
                *pi += *vi;
            }
        }
    }
}

pub fn sgd_step(params: &mut impl ParamSet, grads: &impl ParamSet, state: &mut MomentumState) -> Result<()> {
    check_shapes(params, grads)?;
    if !state.velocity.is_empty() && state.velocity.iter().map(Vec::len).collect::<Vec<_>>() != shapes(grads) {
        return Err(OptimError::ShapeMismatch("velocity buffers".into()));
    }
    state.apply(params.slices_mut(), grads.slices());
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

pub fn adam_step(params: &mut impl ParamSet, grads: &impl ParamSet, state: &mut AdamState) -> Result<()> {
    check_shapes(params, grads)?;
    let g = grads.slices();
    if state.m.is_empty() {
        state.m = g.iter().map(|s| vec![0.0; s.len()]).collect();
        state.v = state.m.clone();
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (((p, g), m), v) in params
        .slices_mut()
        .into_iter()
        .zip(g)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..p.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Columns of `z` that are not identically zero.
pub fn column_support(z: &Matrix) -> Vec<usize> {
    let mut used = vec![false; z.cols()];
    for i in 0..z.rows() {
        for (u, &v) in used.iter_mut().zip(z.row(i)) {
            *u |= v != 0.0;
        }
    }
    (0..z.cols()).filter(|&j| used[j]).collect()
}

/// Logistic metric `mean[ν_sigm(s_i) z_i z_iᵀ]` on a design matrix.
pub fn logistic_metric(z: &Matrix, s: &[f64]) -> Matrix {
    let sigm = ActivationKind::sigm();
    let n = z.rows() as f64;
    let mut y = z.clone();
    for (i, &si) in s.iter().enumerate() {
        let r = (sigm.nu(si).value() / n).sqrt();
        for v in y.row_mut(i) {
            *v *= r;
        }
    }
    y.gram()
}

/// `(G + εI)⁻¹ ∇L` for the logistic model with `ε = eps_rel·tr(G)/D`.
///
/// Coordinates on which every sample is zero have a zero gradient and a
/// zero metric row, so they are solved out exactly; `D` stays the full
/// dimension.
pub fn natural_direction(z: &Matrix, s: &[f64], grad: &[f64], eps_rel: f64, support: &[usize]) -> Result<Vector> {
    let full = z.cols();
    if grad.len() != full || s.len() != z.rows() {
        return Err(OptimError::ShapeMismatch(
            "design matrix, scores and gradient disagree".into(),
        ));
    }
    if z.rows() == 0 {
        return Err(OptimError::InvalidArgument("empty batch".into()));
    }
    let zs = if support.len() == full {
        z.clone()
    } else {
        Matrix::from_fn(z.rows(), support.len(), |i, k| z[(i, support[k])])
    };
    let g = logistic_metric(&zs, s);
    let tr = g.trace();
    let eps = if tr == 0.0 { eps_rel } else { eps_rel * tr / full as f64 };
    let mut shifted = g;
    shifted.add_diagonal(eps);
    let chol = Cholesky::factor(&shifted)?;
    let mut rhs: Vec<f64> = support.iter().map(|&j| grad[j]).collect();
    chol.solve_in_place(&mut rhs);
    let mut d = Vector::zeros(full);
    for (&j, v) in support.iter().zip(rhs) {
        d[j] = v;
    }
    if !d.is_finite() {
        return Err(OptimError::Linalg(LinalgError::NonFinite));
    }
    Ok(d)
}

/// One natural gradient step `θ ← θ − γ (G + εI)⁻¹ ∇L` on the batch `z`.
pub fn ngd_logistic_step(theta: &mut [f64], z: &Matrix, labels: &[usize], gamma: f64, eps_rel: f64) -> Result<()> {
    let mut state = MomentumState::new(gamma, 0.0);
    LogisticNgd::new(z, eps_rel).step(theta, z, labels, &mut state)
}

/// Natural gradient for the logistic model with heavy-ball momentum on the
/// natural direction.
#[derive(Debug, Clone)]
pub struct LogisticNgd {
    pub eps_rel: f64,
    support: Vec<usize>,
}

impl LogisticNgd {
    /// Precomputes the nonzero columns of the design matrix `z`.
    pub fn new(z: &Matrix, eps_rel: f64) -> Self {
        LogisticNgd {
            eps_rel,
            support: column_support(z),
        }
    }

    pub fn step(&self, theta: &mut [f64], z: &Matrix, labels: &[usize], state: &mut MomentumState) -> Result<()> {
        if labels.len() != z.rows() || theta.len() != z.cols() {
            return Err(OptimError::ShapeMismatch(
                "theta, design matrix and labels disagree".into(),
            ));
        }
        let (grad, s) = logistic_gradient(theta, z, labels);
        self.step_with_gradient(theta, z, &s, &grad, state)
    }

    /// As [`LogisticNgd::step`] with the gradient and pre-activations supplied.
    pub fn step_with_gradient(
        &self,
        theta: &mut [f64],
        z: &Matrix,
        s: &[f64],
        grad: &[f64],
        state: &mut MomentumState,
    ) -> Result<()> {
        let d = natural_direction(z, s, grad, self.eps_rel, &self.support)?;
        state.apply(vec![theta], vec![&d]);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RngdConfig {
    /// EMA decay `λ`.
    pub lambda: f64,
    /// Refresh period `T` in iterations.
    pub refresh_period: u64,
    pub eps_rel: f64,
    /// Smoothing width used for the metric of relu hidden units.
    pub omega: f64,
}

impl Default for RngdConfig {
    fn default() -> Self {
        RngdConfig {
            lambda: 0.995,
            refresh_period: 100,
            eps_rel: 1e-2,
            omega: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
struct TrackedMetric {
    g: Matrix,
    cached: Cholesky,
}

impl TrackedMetric {
    fn identity(n: usize) -> Self {
        let g = Matrix::identity(n);
        let cached = Cholesky::factor(&g).expect("identity is positive definite");
        TrackedMetric { g, cached }
    }

    /// `G ← λG + (1−λ)(F + εI)` with `ε` from the trace of `F`.
    fn update(&mut self, fresh: &Matrix, lambda: f64, eps_rel: f64) {
        let eps = trace_scaled_epsilon(fresh, eps_rel);
        self.g.scale(lambda);
        self.g.add_scaled(1.0 - lambda, fresh);
        self.g.add_diagonal((1.0 - lambda) * eps);
    }

    fn refresh(&mut self) -> Result<()> {
        self.cached = Cholesky::factor(&self.g)?;
        Ok(())
    }
}

/// Metric attached to one weight layer.
#[derive(Debug, Clone)]
enum LayerMetric {
    /// Linear-layer metric `x̃x̃ᵀ/σ²`, shared by every neuron of the layer.
    Shared { sigma: f64, metric: TrackedMetric },
    /// One `ν_f(s_j) x̃x̃ᵀ` metric per neuron.
    PerNeuron {
        kind: ActivationKind,
        metrics: Vec<TrackedMetric>,
    },
}

/// How a layer is preconditioned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerPreconditioner {
    Linear,
    Neuron(ActivationKind),
}

#[derive(Debug, Clone)]
pub struct RngdState {
    pub config: RngdConfig,
    layers: Vec<LayerMetric>,
    iteration: u64,
}

impl RngdState {
    /// Input layer and head get the shared linear metric, hidden layers one
    /// metric per neuron. Relu hidden units use the smoothed `ν` of width `ω`.
    pub fn for_mlp(spec: &MlpSpec, config: RngdConfig) -> Result<Self> {
        let last = spec.num_layers() - 1;
        let kind = match spec.hidden_activation.family {
            Family::ReluOmega => {
                ActivationKind::relu_omega(spec.hidden_activation.iota, config.omega, spec.hidden_activation.sigma)
            }
            _ => spec.hidden_activation,
        };
        let plan = (0..=last)
            .map(|l| {
                if l == 0 || l == last {
                    LayerPreconditioner::Linear
                } else {
                    LayerPreconditioner::Neuron(kind)
                }
            })
            .collect::<Vec<_>>();
        Self::new(spec, &plan, config)
    }

    pub fn new(spec: &MlpSpec, plan: &[LayerPreconditioner], config: RngdConfig) -> Result<Self> {
        if plan.len() != spec.num_layers() {
            return Err(OptimError::ShapeMismatch(format!(
                "{} layer plans for {} layers",
                plan.len(),
                spec.num_layers()
            )));
        }
        if !(0.0..=1.0).contains(&config.lambda) || config.refresh_period == 0 || !(config.eps_rel >= 0.0) {
            return Err(OptimError::InvalidArgument(format!("{config:?}")));
        }
        let layers = plan
            .iter()
            .enumerate()
            .map(|(l, p)| {
                let dim = spec.layer_sizes[l] + 1;
                match p {
                    LayerPreconditioner::Linear => LayerMetric::Shared {
                        sigma: 1.0,
                        metric: TrackedMetric::identity(dim),
                    },
                    LayerPreconditioner::Neuron(kind) => LayerMetric::PerNeuron {
                        kind: *kind,
                        metrics: (0..spec.layer_sizes[l + 1])
                            .map(|_| TrackedMetric::identity(dim))
                            .collect(),
                    },
                }
            })
            .collect();
        Ok(RngdState {
            config,
            layers,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Current moving-average metrics of layer `l`, one per neuron or a
    /// single shared one.
    pub fn metrics(&self, l: usize) -> Vec<&Matrix> {
        match &self.layers[l] {
            LayerMetric::Shared { metric, .. } => vec![&metric.g],
            LayerMetric::PerNeuron { metrics, .. } => metrics.iter().map(|m| &m.g).collect(),
        }
    }

    /// Lower Cholesky factors currently used for preconditioning.
    pub fn cached_factors(&self, l: usize) -> Vec<Matrix> {
        match &self.layers[l] {
            LayerMetric::Shared { metric, .. } => vec![metric.cached.lower()],
            LayerMetric::PerNeuron { metrics, .. } => metrics.iter().map(|m| m.cached.lower()).collect(),
        }
    }

    /// Folds the batch metric of `trace` into every moving average.
    pub fn ema_update(&mut self, trace: &ForwardTrace) -> Result<()> {
        if trace.inputs.len() != self.layers.len() {
            return Err(OptimError::ShapeMismatch("trace depth".into()));
        }
        let RngdConfig { lambda, eps_rel, .. } = self.config;
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let x = &trace.inputs[l];
            let n = x.rows() as f64;
            if x.rows() == 0 {
                return Err(OptimError::InvalidArgument("empty batch".into()));
            }
            match layer {
                LayerMetric::Shared { sigma, metric } => {
                    if metric.g.rows() != x.cols() {
                        return Err(OptimError::ShapeMismatch(format!("layer {l} input width")));
                    }
                    let mut fresh = x.gram();
                    fresh.scale(1.0 / (n * *sigma * *sigma));
                    metric.update(&fresh, lambda, eps_rel);
                }
                LayerMetric::PerNeuron { kind, metrics } => {
                    let s = &trace.pre_activations[l];
                    if s.cols() != metrics.len() || metrics[0].g.rows() != x.cols() {
                        return Err(OptimError::ShapeMismatch(format!("layer {l} shape")));
                    }
                    let mut y = x.clone();
                    for (j, metric) in metrics.iter_mut().enumerate() {
                        for i in 0..x.rows() {
                            let r = (kind.nu(s[(i, j)]).value() / n).sqrt();
                            for (yv, xv) in y.row_mut(i).iter_mut().zip(x.row(i)) {
                                *yv = r * xv;
                            }
                        }
                        metric.update(&y.gram(), lambda, eps_rel);
                    }
                }
            }
        }
        Ok(())
    }

    /// Replaces every cached factorization with one of the current metric.
    pub fn refresh(&mut self) -> Result<()> {
        for layer in &mut self.layers {
            match layer {
                LayerMetric::Shared { metric, .. } => metric.refresh()?,
                LayerMetric::PerNeuron { metrics, .. } => {
                    for m in metrics {
                        m.refresh()?;
                    }
                }
            }
        }
        Ok(())
    }

    /// `w_j ← w_j − γ G_j⁻¹ ∂E/∂w_j` with the cached factorizations.
    pub fn precondition_step(&self, params: &mut MlpParams, grads: &MlpParams, gamma: f64) -> Result<()> {
        params
            .check_same_shape(grads)
            .map_err(|e| OptimError::ShapeMismatch(e.to_string()))?;
        if params.layers().len() != self.layers.len() {
            return Err(OptimError::ShapeMismatch("layer count".into()));
        }
        for ((w, g), layer) in params.layers_mut().iter_mut().zip(grads.layers()).zip(&self.layers) {
            let mut d = g.clone();
            match layer {
                LayerMetric::Shared { metric, .. } => {
                    if metric.cached.dim() != g.rows() {
                        return Err(OptimError::ShapeMismatch("metric dimension".into()));
                    }
                    metric.cached.solve_columns(&mut d);
                }
                LayerMetric::PerNeuron { metrics, .. } => {
                    if metrics.len() != g.cols() || metrics[0].cached.dim() != g.rows() {
                        return Err(OptimError::ShapeMismatch("metric dimension".into()));
                    }
                    for (j, m) in metrics.iter().enumerate() {
                        d.set_column(j, &m.cached.solve(&g.column(j)));
                    }
                }
            }
            for (wv, dv) in w.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *wv -= gamma * dv;
            }
        }
        Ok(())
    }

    /// One RNGD iteration: precondition with the cached factors, fold the
    /// batch into the moving averages, and refresh every `T` iterations.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams, trace: &ForwardTrace, gamma: f64) -> Result<()> {
        self.precondition_step(params, grads, gamma)?;
        self.ema_update(trace)?;
        self.iteration += 1;
        if self.iteration.is_multiple_of(self.config.refresh_period) {
            self.refresh()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, regularized_solve, SymmetricEigen};
    use crate::network::{forward, loss_and_gradient, Head};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sgd_without_momentum_is_plain_step() {
        let mut p = vec![1.0, -2.0];
        let mut st = MomentumState::new(0.5, 0.0);
        sgd_step(&mut p, &vec![2.0, 4.0], &mut st).unwrap();
        assert_eq!(p, vec![0.0, -4.0]);
    }

    #[test]
    fn velocity_decays_geometrically() {
        let mut p = vec![0.0];
        let mut st = MomentumState::new(1.0, 0.8);
        sgd_step(&mut p, &vec![1.0], &mut st).unwrap();
        let mut prev = st.velocity()[0][0];
        for _ in 0..5 {
            sgd_step(&mut p, &vec![0.0], &mut st).unwrap();
            let v = st.velocity()[0][0];
            assert!((v - 0.8 * prev).abs() < 1e-15);
            prev = v;
        }
    }

    #[test]
    fn quadratic_bowl_monotone() {
        let mut p = vec![3.0];
        let mut st = MomentumState::new(0.1, 0.0);
        let mut cost = 4.5;
        for _ in 0..100 {
            let g = vec![p[0]];
            sgd_step(&mut p, &g, &mut st).unwrap();
            let c = 0.5 * p[0] * p[0];
            assert!(c < cost);
            cost = c;
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![0.0; 3];
        assert!(sgd_step(&mut p, &vec![0.0; 2], &mut MomentumState::new(1.0, 0.0)).is_err());
        assert!(adam_step(&mut p, &vec![0.0; 2], &mut AdamState::new(1.0)).is_err());
    }

    #[test]
    fn adam_first_step_closed_form() {
        let g = vec![0.3, -2.0, 1e-9];
        let mut p = vec![0.0; 3];
        let mut st = AdamState::new(0.01);
        adam_step(&mut p, &g, &mut st).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            let expect = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((pi - expect).abs() < 1e-15, "{pi} vs {expect}");
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = vec![1.5, -0.5];
        let mut st = AdamState::new(0.1);
        for _ in 0..10 {
            adam_step(&mut p, &vec![0.0, 0.0], &mut st).unwrap();
        }
        assert_eq!(p, vec![1.5, -0.5]);
        assert_eq!(st.steps(), 10);
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Matrix, Vec<usize>) {
        let z = Matrix::from_fn(n, d + 1, |_, j| if j == d { 1.0 } else { rng.gen_range(-1.0..1.0) });
        let y = (0..n).map(|_| rng.gen_range(0..2)).collect();
        (z, y)
    }

    #[test]
    fn ngd_matches_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut z, y) = random_design(&mut rng, 30, 4);
        for i in 0..30 {
            z[(i, 2)] = 0.0;
        }
        let theta: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let (grad, s) = logistic_gradient(&theta, &z, &y);
        let g = logistic_metric(&z, &s);
        let eps = trace_scaled_epsilon(&g, 1e-2);
        let expect = regularized_solve(&g, &grad, eps).unwrap();
        let mut t = theta.clone();
        ngd_logistic_step(&mut t, &z, &y, 0.7, 1e-2).unwrap();
        for k in 0..5 {
            assert!((t[k] - (theta[k] - 0.7 * expect[k])).abs() < 1e-12);
        }
        assert_eq!(t[2], theta[2]);
    }

    #[test]
    fn isotropic_metric_gives_gradient_direction() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
        let y = [1, 0, 1, 1];
        let theta = [0.0, 0.0];
        let (grad, _) = logistic_gradient(&theta, &z, &y);
        let mut t = theta.to_vec();
        ngd_logistic_step(&mut t, &z, &y, 1.0, 1e-2).unwrap();
        let cos = -dot(&t, &grad) / (Vector::from(t.clone()).norm() * grad.norm());
        assert!((cos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heavy_damping_approaches_gradient_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (z, y) = random_design(&mut rng, 40, 3);
        let theta = vec![0.2, -0.1, 0.4, 0.0];
        let (grad, _) = logistic_gradient(&theta, &z, &y);
        let mut t = theta.clone();
        ngd_logistic_step(&mut t, &z, &y, 1.0, 1e6).unwrap();
        let step: Vec<f64> = t.iter().zip(&theta).map(|(a, b)| b - a).collect();
        let cos = dot(&step, &grad) / (Vector::from(step.clone()).norm() * grad.norm());
        assert!(cos >= 0.9999);
    }

    #[test]
    fn ngd_beats_gd_on_separable_toy() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 60;
        let z = Matrix::from_fn(n, 3, |i, j| match j {
            0 => (if i % 2 == 0 { 2.0 } else { -2.0 }) + rng.gen_range(-1.0..1.0),
            1 => 5.0 * rng.gen_range(-1.0..1.0),
            _ => 1.0,
        });
        let y: Vec<usize> = (0..n).map(|i| (i % 2 == 0) as usize).collect();
        let grid = [1e-2, 1e-1, 1.0, 10.0, 100.0];
        let cost = |t: &[f64]| crate::network::logistic_cost(t, &z, &y).value;
        let best = |ngd: bool| {
            grid.iter()
                .map(|&gamma| {
                    let mut t = vec![0.0; 3];
                    let mut st = MomentumState::new(gamma, 0.0);
                    let solver = LogisticNgd::new(&z, 1e-2);
                    for _ in 0..100 {
                        if ngd {
                            solver.step(&mut t, &z, &y, &mut st).unwrap();
                        } else {
                            let (g, _) = logistic_gradient(&t, &z, &y);
                            sgd_step(&mut t, &g.into_inner(), &mut st).unwrap();
                        }
                    }
                    cost(&t)
                })
                .filter(|c| c.is_finite())
                .fold(f64::INFINITY, f64::min)
        };
        assert!(best(true) < best(false));
    }

    #[test]
    fn reparameterization_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (z, y) = random_design(&mut rng, 50, 3);
        let j = Matrix::from_fn(4, 4, |a, b| if a == b { 2.0 } else { 0.0 } + rng.gen_range(-0.5..0.5));
        let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let mut t = theta.clone();
        ngd_logistic_step(&mut t, &z, &y, 1.0, 0.0).unwrap();
        // Λ = Jθ turns the design matrix into Z J⁻¹.
        let jinv = dense_inverse(&j);
        let zl = z.matmul(&jinv);
        let lam = j.matvec(&theta);
        let mut l = lam.clone().into_inner();
        ngd_logistic_step(&mut l, &zl, &y, 1.0, 0.0).unwrap();
        let dl: Vec<f64> = l.iter().zip(lam.iter()).map(|(a, b)| a - b).collect();
        let dt: Vec<f64> = t.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let mapped = jinv.matvec(&dl);
        let err = mapped.iter().zip(&dt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = dt.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err / scale < 1e-6, "{}", err / scale);
    }

    fn dense_inverse(a: &Matrix) -> Matrix {
        let n = a.rows();
        let mut m = a.clone();
        let mut inv = Matrix::identity(n);
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| m[(x, c)].abs().total_cmp(&m[(y, c)].abs()))
                .unwrap();
            for k in 0..n {
                let (t1, t2) = (m[(c, k)], inv[(c, k)]);
                m[(c, k)] = m[(p, k)];
                inv[(c, k)] = inv[(p, k)];
                m[(p, k)] = t1;
                inv[(p, k)] = t2;
            }
            let d = m[(c, c)];
            for k in 0..n {
                m[(c, k)] /= d;
                inv[(c, k)] /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = m[(r, c)];
                    for k in 0..n {
                        m[(r, k)] -= f * m[(c, k)];
                        inv[(r, k)] -= f * inv[(c, k)];
                    }
                }
            }
        }
        inv
    }

    fn tiny_net() -> (MlpSpec, MlpParams, Matrix, Vec<usize>) {
        let spec = MlpSpec::new(vec![4, 5, 5, 3], ActivationKind::relu(), Head::SoftmaxCrossEntropy).unwrap();
        let params = MlpParams::init(&spec, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_fn(8, 4, |_, _| rng.gen_range(0.0..1.0));
        let y = (0..8).map(|i| i % 3).collect();
        (spec, params, x, y)
    }

    #[test]
    fn lambda_one_keeps_identity_and_matches_sgd() {
        let (spec, params, x, y) = tiny_net();
        let cfg = RngdConfig {
            lambda: 1.0,
            refresh_period: 1,
            ..Default::default()
        };
        let mut st = RngdState::for_mlp(&spec, cfg).unwrap();
        let mut a = params.clone();
        let mut b = params.clone();
        let mut mom = MomentumState::new(0.05, 0.0);
        for _ in 0..20 {
            let (_, g, t) = loss_and_gradient(&spec, &a, &x, &y).unwrap();
            st.step(&mut a, &g, &t, 0.05).unwrap();
            let (_, g, _) = loss_and_gradient(&spec, &b, &x, &y).unwrap();
            sgd_step(&mut b, &g, &mut mom).unwrap();
            assert_eq!(a, b);
        }
        for l in 0..3 {
            for m in st.metrics(l) {
                assert_eq!(m, &Matrix::identity(m.rows()));
            }
        }
    }

    #[test]
    fn lambda_zero_gives_fresh_term() {
        let (spec, params, x, _) = tiny_net();
        let cfg = RngdConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let mut st = RngdState::for_mlp(&spec, cfg).unwrap();
        let t = forward(&spec, &params, &x).unwrap();
        st.ema_update(&t).unwrap();
        let kind = ActivationKind::relu_omega(0.0, 0.1, 1.0);
        let xs: Vec<Vec<f64>> = (0..8).map(|i| t.inputs[1].row(i)[..5].to_vec()).collect();
        for (j, g) in st.metrics(1).iter().enumerate() {
            let w = params.layer(1).column(j);
            let mut fresh = crate::metric::batch_neuron_rfim(&kind, &w, &xs).unwrap();
            fresh.add_diagonal(trace_scaled_epsilon(&fresh, 1e-2));
            assert!(g.sub(&fresh).max_abs() < 1e-14);
        }
        let mut lin = t.inputs[0].gram();
        lin.scale(1.0 / 8.0);
        lin.add_diagonal(trace_scaled_epsilon(&lin, 1e-2));
        assert!(st.metrics(0)[0].sub(&lin).max_abs() < 1e-14);
    }

    #[test]
    fn refresh_schedule() {
        let (spec, mut params, x, y) = tiny_net();
        let cfg = RngdConfig {
            refresh_period: 3,
            lambda: 0.5,
            ..Default::default()
        };
        let mut st = RngdState::for_mlp(&spec, cfg).unwrap();
        let id = Cholesky::factor(&Matrix::identity(6)).unwrap().lower();
        for it in 1..=7 {
            let (_, g, t) = loss_and_gradient(&spec, &params, &x, &y).unwrap();
            st.step(&mut params, &g, &t, 0.01).unwrap();
            let before = st.metrics(1)[0].clone();
            let cached = st.cached_factors(1)[0].clone();
            if it < 3 {
                assert_eq!(cached, id);
            }
            if it % 3 == 0 {
                assert_eq!(cached, Cholesky::factor(&before).unwrap().lower());
            }
        }
        let g0 = st.metrics(1)[0].clone();
        st.refresh().unwrap();
        assert_eq!(st.metrics(1)[0], &g0);
    }

    #[test]
    fn scaled_identity_quarter_step() {
        let (spec, params, x, y) = tiny_net();
        let mut st = RngdState::for_mlp(&spec, RngdConfig::default()).unwrap();
        for layer in &mut st.layers {
            match layer {
                LayerMetric::Shared { metric, .. } => {
                    metric.g.scale(4.0);
                    metric.refresh().unwrap();
                }
                LayerMetric::PerNeuron { metrics, .. } => {
                    for m in metrics {
                        m.g.scale(4.0);
                        m.refresh().unwrap();
                    }
                }
            }
        }
        let (_, g, _) = loss_and_gradient(&spec, &params, &x, &y).unwrap();
        let mut a = params.clone();
        st.precondition_step(&mut a, &g, 0.2).unwrap();
        for l in 0..3 {
            for ((av, pv), gv) in a
                .layer(l)
                .as_slice()
                .iter()
                .zip(params.layer(l).as_slice())
                .zip(g.layer(l).as_slice())
            {
                assert!((av - (pv - 0.05 * gv)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn matches_slow_path_at_t1() {
        let (spec, mut params, x, y) = tiny_net();
        let cfg = RngdConfig {
            refresh_period: 1,
            lambda: 0.9,
            ..Default::default()
        };
        let mut st = RngdState::for_mlp(&spec, cfg).unwrap();
        let mut slow = params.clone();
        let mut slow_g: Vec<Vec<Matrix>> = spec
            .layer_sizes
            .windows(2)
            .enumerate()
            .map(|(l, w)| vec![Matrix::identity(w[0] + 1); if l == 1 { w[1] } else { 1 }])
            .collect();
        let kind = ActivationKind::relu_omega(0.0, 0.1, 1.0);
        for _ in 0..10 {
            let (_, g, t) = loss_and_gradient(&spec, &params, &x, &y).unwrap();
            st.step(&mut params, &g, &t, 0.1).unwrap();

            let (_, g, t) = loss_and_gradient(&spec, &slow, &x, &y).unwrap();
            let mut next = slow.clone();
            for l in 0..3 {
                for j in 0..spec.layer_sizes[l + 1] {
                    let gi = &slow_g[l][if l == 1 { j } else { 0 }];
                    let d = regularized_solve(gi, &g.layer(l).column(j), 0.0).unwrap();
                    let w = &mut next.layers_mut()[l];
                    for r in 0..w.rows() {
                        w[(r, j)] -= 0.1 * d[r];
                    }
                }
                let n = x.rows();
                let rows: Vec<Vec<f64>> = (0..n).map(|i| t.inputs[l].row(i).to_vec()).collect();
                for (k, gk) in slow_g[l].iter_mut().enumerate() {
                    let mut fresh = Matrix::zeros(rows[0].len(), rows[0].len());
                    for (i, r) in rows.iter().enumerate() {
                        let nu = if l == 1 {
                            kind.nu(t.pre_activations[l][(i, k)]).value()
                        } else {
                            1.0
                        };
                        crate::linalg::add_outer(&mut fresh, nu / n as f64, r);
                    }
                    let eps = trace_scaled_epsilon(&fresh, 1e-2);
                    gk.scale(0.9);
                    gk.add_scaled(0.1, &fresh);
                    gk.add_diagonal(0.1 * eps);
                }
            }
            slow = next;
        }
        let diff = params
            .to_flat()
            .iter()
            .zip(slow.to_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn ema_stays_positive_definite() {
        let (spec, params, x, _) = tiny_net();
        let cfg = RngdConfig {
            lambda: 0.9,
            ..Default::default()
        };
        let mut st = RngdState::for_mlp(&spec, cfg).unwrap();
        let t = forward(&spec, &params, &x).unwrap();
        for _ in 0..50 {
            st.ema_update(&t).unwrap();
            for l in 0..3 {
                for g in st.metrics(l) {
                    assert!(SymmetricEigen::new(g).unwrap().min_value() > 0.0);
                }
            }
        }
    }

    #[test]
    fn ema_converges_to_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let spec = MlpSpec::new(vec![2, 2], ActivationKind::relu(), Head::SoftmaxCrossEntropy).unwrap();
        let params = MlpParams::zeros(&spec);
        let pool = Matrix::from_fn(400, 2, |_, _| rng.gen_range(-1.0..1.0));
        let mut expect = pool.augment_rows().gram();
        expect.scale(1.0 / 400.0);
        expect.add_diagonal(trace_scaled_epsilon(&expect, 1e-2));
        let residual = |lambda: f64| {
            let cfg = RngdConfig {
                lambda,
                eps_rel: 1e-2,
                ..Default::default()
            };
            let mut st = RngdState::for_mlp(&spec, cfg).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(1);
            let mut acc = 0.0;
            for it in 0..6000 {
                let idx: Vec<usize> = (0..16).map(|_| r.gen_range(0..400)).collect();
                let t = forward(&spec, &params, &pool.select_rows(&idx)).unwrap();
                st.ema_update(&t).unwrap();
                if it >= 4000 {
                    acc += st.metrics(0)[0].sub(&expect).frobenius_norm();
                }
            }
            acc / 2000.0
        };
        let coarse = residual(0.9);
        let fine = residual(0.995);
        assert!(fine < coarse, "{fine} vs {coarse}");
        assert!(fine < 0.05);
    }

    proptest! {
        #[test]
        fn step_bounded_by_metric_floor(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (z, y) = random_design(&mut rng, 12, 3);
            let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (grad, s) = logistic_gradient(&theta, &z, &y);
            let g = logistic_metric(&z, &s);
            let eps = trace_scaled_epsilon(&g, 1e-2);
            let mut shifted = g.clone();
            shifted.add_diagonal(eps);
            let lmin = SymmetricEigen::new(&shifted).unwrap().min_value();
            let mut t = theta.clone();
            ngd_logistic_step(&mut t, &z, &y, 0.3, 1e-2).unwrap();
            let step: Vec<f64> = t.iter().zip(&theta).map(|(a, b)| a - b).collect();
            prop_assert!(Vector::from(step).norm() <= 0.3 * grad.norm() / lmin * (1.0 + 1e-10));
        }
    }
}
