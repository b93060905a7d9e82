//! Fully connected networks with a softmax or single-sigmoid head.
//!
//! A batch is a matrix with one sample per row. Layer `l` holds a weight
//! matrix of shape `(D_{l-1}+1) × D_l` whose last row is the bias, so the
//! pre-activations are `S_l = X̃_{l-1} W_l`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activations::{sigm, softplus, ActivationKind, Family};
use crate::linalg::{Matrix, Vector};

/// Probabilities below this are clamped inside the reported log loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in layer {0}")]
    NonFinite(usize),
    #[error("label {label} out of range for {arity} classes")]
    LabelOutOfRange { label: usize, arity: usize },
}

pub type Result<T> = std::result::Result<T, NetworkError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    SoftmaxCrossEntropy,
    SigmoidBernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: ActivationKind,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, hidden_activation: ActivationKind, head: Head) -> Result<Self> {
        let spec = MlpSpec {
            layer_sizes,
            hidden_activation,
            head,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Single sigmoid neuron on `input_dim` features.
    pub fn logistic(input_dim: usize) -> Self {
        MlpSpec {
            layer_sizes: vec![input_dim, 1],
            hidden_activation: ActivationKind::sigm(),
            head: Head::SigmoidBernoulli,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(NetworkError::InvalidSpec("need at least input and output sizes".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(NetworkError::InvalidSpec("layer sizes must be positive".into()));
        }
        let out = *self.layer_sizes.last().unwrap();
        match self.head {
            Head::SigmoidBernoulli if out != 1 => Err(NetworkError::InvalidSpec(format!(
                "sigmoid head needs one output, got {out}"
            ))),
            Head::SoftmaxCrossEntropy if out < 2 => Err(NetworkError::InvalidSpec(
                "softmax head needs at least two outputs".into(),
            )),
            _ => self
                .hidden_activation
                .validate()
                .map_err(|e| NetworkError::InvalidSpec(e.to_string())),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Number of label values the head accepts.
    pub fn num_classes(&self) -> usize {
        match self.head {
            Head::SigmoidBernoulli => 2,
            Head::SoftmaxCrossEntropy => *self.layer_sizes.last().unwrap(),
        }
    }

    fn hidden_forward(&self, s: f64) -> f64 {
        self.hidden_activation.forward(s)
    }

    fn hidden_forward_deriv(&self, s: f64) -> f64 {
        self.hidden_activation.forward_deriv(s)
    }
}

/// Per-layer weight matrices; also used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    weights: Vec<Matrix>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let weights = spec
            .layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[0] + 1, w[1]))
            .collect();
        MlpParams { weights }
    }

    /// Gaussian weights scaled by fan-in (doubled for relu-like units),
    /// zero biases.
    pub fn init(spec: &MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(spec);
        let last = spec.num_layers() - 1;
        for (l, w) in p.weights.iter_mut().enumerate() {
            let fan_in = (w.rows() - 1) as f64;
            let gain = match spec.hidden_activation.family {
                Family::ReluOmega | Family::Elu if l < last => 2.0,
                _ => 1.0,
            };
            let normal = Normal::new(0.0, (gain / fan_in).sqrt()).unwrap();
            let body = (w.rows() - 1) * w.cols();
            for v in &mut w.as_mut_slice()[..body] {
                *v = normal.sample(&mut rng);
            }
        }
        p
    }

    pub fn from_layers(spec: &MlpSpec, weights: Vec<Matrix>) -> Result<Self> {
        let expect = Self::zeros(spec);
        if weights.len() != expect.weights.len()
            || weights
                .iter()
                .zip(&expect.weights)
                .any(|(a, b)| a.rows() != b.rows() || a.cols() != b.cols())
        {
            return Err(NetworkError::DimensionMismatch(
                "layer shapes do not match the network shape".into(),
            ));
        }
        Ok(MlpParams { weights })
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn layers_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn layer(&self, l: usize) -> &Matrix {
        &self.weights[l]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
    }

    /// All entries, layer by layer in row-major order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.weights.iter().flat_map(|w| w.as_slice().iter().copied()).collect()
    }

    fn same_shape(&self, other: &MlpParams) -> bool {
        self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.rows() == b.rows() && a.cols() == b.cols())
    }
}

/// Everything the backward pass and the metrics need from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Augmented input of each layer, `n × (D_{l-1}+1)`.
    pub inputs: Vec<Matrix>,
    /// Pre-activations of each layer, `n × D_l`.
    pub pre_activations: Vec<Matrix>,
    /// Class probabilities (`n × m`), or `p(y=1)` (`n × 1`) for a sigmoid head.
    pub probs: Matrix,
    pub head: Head,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.probs.rows()
    }

    pub fn logits(&self) -> &Matrix {
        self.pre_activations.last().unwrap()
    }
}

/// Average cross entropy and the number of probabilities that hit the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub value: f64,
    pub clamped: usize,
}

pub fn forward(spec: &MlpSpec, params: &MlpParams, batch: &Matrix) -> Result<ForwardTrace> {
    if batch.cols() != spec.input_dim() {
        return Err(NetworkError::DimensionMismatch(format!(
            "batch has {} features, network expects {}",
            batch.cols(),
            spec.input_dim()
        )));
    }
    if params.weights.len() != spec.num_layers() {
        return Err(NetworkError::DimensionMismatch(
            "parameter count does not match the network shape".into(),
        ));
    }
    let last = spec.num_layers() - 1;
    let mut inputs = Vec::with_capacity(spec.num_layers());
    let mut pre_activations = Vec::with_capacity(spec.num_layers());
    let mut x = batch.augment_rows();
    for (l, w) in params.weights.iter().enumerate() {
        if w.rows() != x.cols() {
            return Err(NetworkError::DimensionMismatch(format!("layer {l} input width")));
        }
        let s = x.matmul(w);
        if !s.is_finite() {
            return Err(NetworkError::NonFinite(l));
        }
        let next = if l < last {
            let mut h = s.clone();
            for v in h.as_mut_slice() {
                *v = spec.hidden_forward(*v);
            }
            h.augment_rows()
        } else {
            Matrix::zeros(0, 0)
        };
        inputs.push(std::mem::replace(&mut x, next));
        pre_activations.push(s);
    }
    let logits = pre_activations.last().unwrap();
    let probs = match spec.head {
        Head::SigmoidBernoulli => Matrix::from_fn(logits.rows(), 1, |i, _| sigm(logits[(i, 0)])),
        Head::SoftmaxCrossEntropy => {
            let mut p = Matrix::zeros(logits.rows(), logits.cols());
            for i in 0..logits.rows() {
                p.row_mut(i).copy_from_slice(&crate::metric::softmax(logits.row(i)));
            }
            p
        }
    };
    Ok(ForwardTrace {
        inputs,
        pre_activations,
        probs,
        head: spec.head,
    })
}

fn check_labels(trace: &ForwardTrace, labels: &[usize]) -> Result<()> {
    if labels.len() != trace.batch_size() {
        return Err(NetworkError::DimensionMismatch(format!(
            "{} labels for a batch of {}",
            labels.len(),
            trace.batch_size()
        )));
    }
    let arity = match trace.head {
        Head::SigmoidBernoulli => 2,
        Head::SoftmaxCrossEntropy => trace.probs.cols(),
    };
    match labels.iter().find(|&&y| y >= arity) {
        Some(&label) => Err(NetworkError::LabelOutOfRange { label, arity }),
        None => Ok(()),
    }
}

/// `−ln p(label)` averaged over the batch, computed from the logits.
pub fn loss_cross_entropy(trace: &ForwardTrace, labels: &[usize]) -> Result<Loss> {
    check_labels(trace, labels)?;
    let cap = -PROB_FLOOR.ln();
    let logits = trace.logits();
    let mut total = 0.0;
    let mut clamped = 0;
    for (i, &y) in labels.iter().enumerate() {
        let nll = match trace.head {
            Head::SigmoidBernoulli => {
                let s = logits[(i, 0)];
                softplus(if y == 1 { -s } else { s })
            }
            Head::SoftmaxCrossEntropy => {
                let row = logits.row(i);
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
                lse - row[y]
            }
        };
        if nll > cap {
            clamped += 1;
            total += cap;
        } else {
            total += nll;
        }
    }
    Ok(Loss {
        value: total / labels.len() as f64,
        clamped,
    })
}

/// Gradient of the unclamped [`loss_cross_entropy`] with respect to every weight.
pub fn backward(spec: &MlpSpec, params: &MlpParams, trace: &ForwardTrace, labels: &[usize]) -> Result<MlpParams> {
    check_labels(trace, labels)?;
    if trace.inputs.len() != params.weights.len()
        || trace
            .inputs
            .iter()
            .zip(&params.weights)
            .any(|(x, w)| x.cols() != w.rows())
    {
        return Err(NetworkError::DimensionMismatch(
            "trace does not match parameters".into(),
        ));
    }
    let n = labels.len() as f64;
    let mut delta = trace.probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        match trace.head {
            Head::SigmoidBernoulli => delta[(i, 0)] -= y as f64,
            Head::SoftmaxCrossEntropy => delta[(i, y)] -= 1.0,
        }
    }
    delta.scale(1.0 / n);

    let mut grads = Vec::with_capacity(params.weights.len());
    for l in (0..params.weights.len()).rev() {
        grads.push(trace.inputs[l].t_matmul(&delta));
        if l > 0 {
            let back = delta.matmul_t(&params.weights[l]);
            let pre = &trace.pre_activations[l - 1];
            delta = Matrix::from_fn(pre.rows(), pre.cols(), |i, j| {
                back[(i, j)] * spec.hidden_forward_deriv(pre[(i, j)])
            });
        }
    }
    grads.reverse();
    let g = MlpParams { weights: grads };
    if !g.is_finite() {
        return Err(NetworkError::NonFinite(0));
    }
    Ok(g)
}

/// Forward, loss and backward in one call.
pub fn loss_and_gradient(
    spec: &MlpSpec,
    params: &MlpParams,
    batch: &Matrix,
    labels: &[usize],
) -> Result<(Loss, MlpParams, ForwardTrace)> {
    let trace = forward(spec, params, batch)?;
    let loss = loss_cross_entropy(&trace, labels)?;
    let grad = backward(spec, params, &trace, labels)?;
    Ok((loss, grad, trace))
}

/// Average cross entropy of `p(y=1) = sigm(θᵀz)` on an augmented design matrix.
pub fn logistic_cost(theta: &[f64], z: &Matrix, labels: &[usize]) -> Loss {
    let s = z.matvec(theta);
    let cap = -PROB_FLOOR.ln();
    let mut total = 0.0;
    let mut clamped = 0;
    for (si, &y) in s.iter().zip(labels) {
        let nll = softplus(if y == 1 { -si } else { *si });
        if nll > cap {
            clamped += 1;
            total += cap;
        } else {
            total += nll;
        }
    }
    Loss {
        value: total / labels.len() as f64,
        clamped,
    }
}

/// `mean[(sigm(θᵀz_i) − y_i) z_i]` together with the pre-activations `θᵀz_i`.
pub fn logistic_gradient(theta: &[f64], z: &Matrix, labels: &[usize]) -> (Vector, Vector) {
    let s = z.matvec(theta);
    let n = labels.len() as f64;
    let r: Vec<f64> = s
        .iter()
        .zip(labels)
        .map(|(si, &y)| (sigm(*si) - y as f64) / n)
        .collect();
    (z.t_matvec(&r), s)
}

impl MlpParams {
    pub fn check_same_shape(&self, other: &MlpParams) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(NetworkError::DimensionMismatch("parameter shapes differ".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
        Matrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn fd_check(spec: &MlpSpec, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = MlpParams::init(spec, seed);
        let x = random_batch(&mut rng, 5, spec.input_dim());
        let labels: Vec<usize> = (0..5).map(|_| rng.gen_range(0..spec.num_classes())).collect();
        let (_, grad, _) = loss_and_gradient(spec, &params, &x, &labels).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for l in 0..params.weights.len() {
            for k in 0..params.weights[l].as_slice().len() {
                let mut p = params.clone();
                p.weights[l].as_mut_slice()[k] += h;
                let up = loss_cross_entropy(&forward(spec, &p, &x).unwrap(), &labels)
                    .unwrap()
                    .value;
                p.weights[l].as_mut_slice()[k] -= 2.0 * h;
                let dn = loss_cross_entropy(&forward(spec, &p, &x).unwrap(), &labels)
                    .unwrap()
                    .value;
                let fd = (up - dn) / (2.0 * h);
                let g = grad.weights[l].as_slice()[k];
                worst = worst.max((fd - g).abs());
                scale = scale.max(g.abs());
            }
        }
        worst / scale
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let spec = MlpSpec::new(vec![4, 3, 10], ActivationKind::relu(), Head::SoftmaxCrossEntropy).unwrap();
        let x = Matrix::from_fn(2, 4, |i, j| (i + j) as f64);
        let t = forward(&spec, &MlpParams::zeros(&spec), &x).unwrap();
        assert!(t.probs.as_slice().iter().all(|&p| p == 0.1));
        let loss = loss_cross_entropy(&t, &[3, 7]).unwrap();
        assert!((loss.value - 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logistic_at_zero_costs_ln2() {
        let spec = MlpSpec::logistic(3);
        let x = Matrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let t = forward(&spec, &MlpParams::zeros(&spec), &x).unwrap();
        for labels in [[0, 0, 0, 0], [1, 0, 1, 1]] {
            assert_eq!(loss_cross_entropy(&t, &labels).unwrap().value, 2f64.ln());
        }
    }

    #[test]
    fn logistic_reduction_matches_helpers() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = MlpSpec::logistic(3);
        let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let params = MlpParams::from_layers(&spec, vec![Matrix::from_vec(4, 1, theta.clone()).unwrap()]).unwrap();
        let x = random_batch(&mut rng, 6, 3);
        let labels = [0, 1, 1, 0, 1, 0];
        let (loss, grad, _) = loss_and_gradient(&spec, &params, &x, &labels).unwrap();
        let z = x.augment_rows();
        assert!((logistic_cost(&theta, &z, &labels).value - loss.value).abs() < 1e-15);
        let (g, _) = logistic_gradient(&theta, &z, &labels);
        for (a, b) in g.iter().zip(grad.layer(0).as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_balanced_batch_has_zero_gradient() {
        let z = Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 1.0]]).unwrap();
        let (g, _) = logistic_gradient(&[0.0, 0.0], &z, &[1, 0]);
        assert_eq!(g[1], 0.0);
        let z = Matrix::from_rows(&[vec![1.0, 0.5, 1.0], vec![-1.0, -0.5, 1.0]]).unwrap();
        let (g, _) = logistic_gradient(&[0.0; 3], &z, &[1, 0]);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn confident_prediction_costs_nothing() {
        let spec = MlpSpec::logistic(1);
        let params = MlpParams::from_layers(&spec, vec![Matrix::from_vec(2, 1, vec![0.0, 800.0]).unwrap()]).unwrap();
        let t = forward(&spec, &params, &Matrix::zeros(1, 1)).unwrap();
        assert_eq!(t.probs[(0, 0)], 1.0);
        assert_eq!(loss_cross_entropy(&t, &[1]).unwrap(), Loss { value: 0.0, clamped: 0 });
        let wrong = loss_cross_entropy(&t, &[0]).unwrap();
        assert_eq!(wrong.clamped, 1);
        assert_eq!(wrong.value, -PROB_FLOOR.ln());
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = MlpSpec::new(vec![5, 4, 3], ActivationKind::relu(), Head::SoftmaxCrossEntropy).unwrap();
        let p = MlpParams::init(&spec, 9);
        let x = random_batch(&mut ChaCha8Rng::seed_from_u64(2), 7, 5);
        assert_eq!(forward(&spec, &p, &x).unwrap(), forward(&spec, &p, &x).unwrap());
    }

    #[test]
    fn softmax_last_layer_gradient_closed_form() {
        let spec = MlpSpec::new(vec![3, 4, 3], ActivationKind::tanh(), Head::SoftmaxCrossEntropy).unwrap();
        let p = MlpParams::init(&spec, 1);
        let x = Matrix::from_rows(&[vec![0.2, -0.5, 0.9]]).unwrap();
        let (_, g, t) = loss_and_gradient(&spec, &p, &x, &[2]).unwrap();
        let h = t.inputs[1].row(0);
        let eta = t.probs.row(0);
        for (i, hi) in h.iter().enumerate() {
            for (j, ej) in eta.iter().enumerate() {
                let onehot = if j == 2 { 1.0 } else { 0.0 };
                assert!((g.layer(1)[(i, j)] - hi * (ej - onehot)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for family in [
            ActivationKind::relu(),
            ActivationKind::tanh(),
            ActivationKind::elu(1.0, 1.0),
        ] {
            let spec = MlpSpec::new(vec![4, 3, 2], family, Head::SoftmaxCrossEntropy).unwrap();
            for seed in 0..5 {
                let err = fd_check(&spec, seed);
                assert!(err <= 1e-5, "{family:?} seed {seed}: {err}");
            }
        }
        let spec = MlpSpec::new(vec![3, 4, 4, 1], ActivationKind::sigm(), Head::SigmoidBernoulli).unwrap();
        assert!(fd_check(&spec, 11) <= 1e-5);
    }

    #[test]
    fn small_gradient_step_descends() {
        let spec = MlpSpec::new(vec![4, 6, 3], ActivationKind::relu(), Head::SoftmaxCrossEntropy).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_batch(&mut rng, 10, 4);
        let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let p = MlpParams::init(&spec, 8);
        let (l0, g, _) = loss_and_gradient(&spec, &p, &x, &labels).unwrap();
        let mut q = p.clone();
        for (w, gw) in q.weights.iter_mut().zip(&g.weights) {
            w.add_scaled(-1e-4, gw);
        }
        let l1 = loss_cross_entropy(&forward(&spec, &q, &x).unwrap(), &labels).unwrap();
        assert!(l1.value < l0.value);
    }

    #[test]
    fn errors_are_reported() {
        let spec = MlpSpec::new(vec![2, 3], ActivationKind::relu(), Head::SoftmaxCrossEntropy).unwrap();
        let p = MlpParams::zeros(&spec);
        assert!(matches!(
            forward(&spec, &p, &Matrix::zeros(1, 3)),
            Err(NetworkError::DimensionMismatch(_))
        ));
        let t = forward(&spec, &p, &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(
            loss_cross_entropy(&t, &[3]).unwrap_err(),
            NetworkError::LabelOutOfRange { label: 3, arity: 3 }
        );
        assert!(MlpSpec::new(vec![3], ActivationKind::relu(), Head::SoftmaxCrossEntropy).is_err());
        assert!(MlpSpec::new(vec![3, 2], ActivationKind::relu(), Head::SigmoidBernoulli).is_err());
    }

    proptest! {
        #[test]
        fn softmax_shift_invariance(seed in 0u64..1000, shift in -5.0f64..5.0) {
            let spec = MlpSpec::new(vec![3, 4, 5], ActivationKind::relu(), Head::SoftmaxCrossEntropy).unwrap();
            let p = MlpParams::init(&spec, seed);
            let mut q = p.clone();
            let head = &mut q.weights[1];
            let cols = head.cols();
            for i in 0..head.rows() {
                let c = shift * (i as f64 + 1.0);
                for j in 0..cols {
                    head[(i, j)] += c;
                }
            }
            let x = random_batch(&mut ChaCha8Rng::seed_from_u64(seed), 4, 3);
            let a = forward(&spec, &p, &x).unwrap().probs;
            let b = forward(&spec, &q, &x).unwrap().probs;
            prop_assert!(a.sub(&b).max_abs() <= 1e-12);
        }
    }
}
