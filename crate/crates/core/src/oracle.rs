//! Brute-force Fisher information of small stochastic subsystems.
//!
//! The oracle never touches the closed-form metrics. It only knows how to
//! write down `ln p(y | θ, x)`; scores come from forward-mode dual numbers and
//! expectations from exact enumeration of the outcome space or Monte Carlo.

use std::ops::{Add, Div, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::activations::{ActivationKind, Family};
use crate::linalg::{augment, Matrix};

/// Largest outcome space that [`FisherMethod::Enumerate`] will walk.
pub const MAX_ENUMERATED_OUTCOMES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("outcome space of {0} outcomes is too large to enumerate")]
    OutcomeSpaceTooLarge(usize),
    #[error("continuous outputs cannot be enumerated")]
    NotEnumerable,
    #[error("non-finite log-likelihood")]
    NonFiniteLikelihood,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Value and one directional derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Dual { v: e, d: e * self.d }
    }

    pub fn ln(self) -> Self {
        Dual {
            v: self.v.ln(),
            d: self.d / self.v,
        }
    }

    pub fn ln_1p(self) -> Self {
        Dual {
            v: self.v.ln_1p(),
            d: self.d / (1.0 + self.v),
        }
    }

    pub fn tanh(self) -> Self {
        let t = self.v.tanh();
        Dual {
            v: t,
            d: (1.0 - t * t) * self.d,
        }
    }

    pub fn scale(self, a: f64) -> Self {
        Dual {
            v: a * self.v,
            d: a * self.d,
        }
    }

    /// `ln(1 + e^self)`
    pub fn softplus(self) -> Self {
        if self.v > 0.0 {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual {
            v: self.v / o.v,
            d: (self.d * o.v - self.v * o.d) / (o.v * o.v),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

/// Activation written directly from its definition, over dual numbers.
fn activate(kind: &ActivationKind, t: Dual) -> Dual {
    match kind.family {
        Family::Tanh => t.tanh(),
        Family::Sigm => Dual::constant(1.0) / (Dual::constant(1.0) + (-t).exp()),
        Family::ReluOmega => {
            // ω ln(exp(ιt/ω) + exp(t/ω)), shifted by the larger exponent
            let a = t.scale(kind.iota / kind.omega);
            let b = t.scale(1.0 / kind.omega);
            let (hi, lo) = if a.v > b.v { (a, b) } else { (b, a) };
            (hi + (lo - hi).exp().ln_1p()).scale(kind.omega)
        }
        Family::Elu => {
            if t.v >= 0.0 {
                t
            } else {
                (t.exp() - Dual::constant(1.0)).scale(kind.alpha)
            }
        }
    }
}

/// Conditional distribution of one output unit given its pre-activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputModel {
    /// `y ∈ {−1, 1}`, `p(y=1) = (1 + tanh s) / 2`.
    BernoulliTanh,
    /// `y ∈ {0, 1}`, `p(y=1) = sigm(s)`.
    BernoulliSigm,
    /// `y ~ N(f(s), σ²)`; `mean = None` is the identity map.
    GaussianMean { mean: Option<ActivationKind>, sigma: f64 },
}

impl OutputModel {
    /// Output model naturally attached to an activation family.
    pub fn for_activation(kind: &ActivationKind) -> Self {
        match kind.family {
            Family::Tanh => OutputModel::BernoulliTanh,
            Family::Sigm => OutputModel::BernoulliSigm,
            _ => OutputModel::GaussianMean {
                mean: Some(*kind),
                sigma: kind.sigma,
            },
        }
    }

    fn support(&self) -> Option<&'static [f64]> {
        match self {
            OutputModel::BernoulliTanh => Some(&[-1.0, 1.0]),
            OutputModel::BernoulliSigm => Some(&[0.0, 1.0]),
            OutputModel::GaussianMean { .. } => None,
        }
    }

    fn log_prob(&self, s: Dual, y: f64) -> Dual {
        match self {
            // (1 + y tanh s)/2 = sigm(2ys)
            OutputModel::BernoulliTanh => -(s.scale(-2.0 * y)).softplus(),
            OutputModel::BernoulliSigm => -(s.scale(1.0 - 2.0 * y)).softplus(),
            OutputModel::GaussianMean { mean, sigma } => {
                let mu = match mean {
                    Some(k) => activate(k, s),
                    None => s,
                };
                let r = Dual::constant(y) - mu;
                (r * r).scale(-0.5 / (sigma * sigma))
                    - Dual::constant(sigma.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln())
            }
        }
    }

    fn sample(&self, s: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            OutputModel::BernoulliTanh => {
                if rng.gen::<f64>() < 0.5 * (1.0 + s.tanh()) {
                    1.0
                } else {
                    -1.0
                }
            }
            OutputModel::BernoulliSigm => {
                if rng.gen::<f64>() < crate::activations::sigm(s) {
                    1.0
                } else {
                    0.0
                }
            }
            OutputModel::GaussianMean { mean, sigma } => {
                let mu = mean.map_or(s, |k| k.eval(s));
                let z: f64 = rng.sample(StandardNormal);
                mu + sigma * z
            }
        }
    }
}

/// A subsystem whose parameters are the stacked weight vectors
/// `(w_1; ..; w_m)`, each of length `D+1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Subsystem {
    Neuron(OutputModel),
    /// `m` conditionally independent units.
    Layer {
        output: OutputModel,
        outputs: usize,
    },
    /// One categorical output over `outputs` classes.
    Softmax {
        outputs: usize,
    },
    /// `h = hidden(Wᵀx̃)`, `y_l ~ output(c_lᵀ h̃)` with `C` fixed.
    TwoLayer {
        hidden: ActivationKind,
        output: OutputModel,
        second: Matrix,
    },
}

impl Subsystem {
    fn units(&self) -> usize {
        match self {
            Subsystem::Neuron(_) => 1,
            Subsystem::Layer { outputs, .. } | Subsystem::Softmax { outputs } => *outputs,
            Subsystem::TwoLayer { second, .. } => second.rows() - 1,
        }
    }

    pub fn num_params(&self, input_dim: usize) -> usize {
        self.units() * (input_dim + 1)
    }

    /// Every outcome with its dimension count; `None` for continuous outputs.
    fn outcomes(&self) -> Result<Vec<Vec<f64>>> {
        let (support, dims): (&[f64], usize) = match self {
            Subsystem::Neuron(o) => (o.support().ok_or(OracleError::NotEnumerable)?, 1),
            Subsystem::Layer { output, outputs } => (output.support().ok_or(OracleError::NotEnumerable)?, *outputs),
            Subsystem::TwoLayer { output, second, .. } => {
                (output.support().ok_or(OracleError::NotEnumerable)?, second.cols())
            }
            Subsystem::Softmax { outputs } => {
                if *outputs > MAX_ENUMERATED_OUTCOMES {
                    return Err(OracleError::OutcomeSpaceTooLarge(*outputs));
                }
                return Ok((0..*outputs).map(|k| vec![k as f64]).collect());
            }
        };
        let count = (support.len() as f64).powi(dims as i32);
        if count > MAX_ENUMERATED_OUTCOMES as f64 {
            return Err(OracleError::OutcomeSpaceTooLarge(count as usize));
        }
        let mut all = vec![vec![]];
        for _ in 0..dims {
            all = all
                .into_iter()
                .flat_map(|prefix: Vec<f64>| {
                    support.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        Ok(all)
    }

    fn log_likelihood(&self, params: &[Dual], xt: &[f64], y: &[f64]) -> Dual {
        let b = xt.len();
        let pre = |i: usize| {
            let mut s = Dual::constant(0.0);
            for (w, &x) in params[i * b..(i + 1) * b].iter().zip(xt) {
                s = s + w.scale(x);
            }
            s
        };
        match self {
            Subsystem::Neuron(o) => o.log_prob(pre(0), y[0]),
            Subsystem::Layer { output, outputs } => {
                let mut acc = Dual::constant(0.0);
                for i in 0..*outputs {
                    acc = acc + output.log_prob(pre(i), y[i]);
                }
                acc
            }
            Subsystem::Softmax { outputs } => {
                let s: Vec<Dual> = (0..*outputs).map(pre).collect();
                let mx = s.iter().map(|d| d.v).fold(f64::NEG_INFINITY, f64::max);
                let mut z = Dual::constant(0.0);
                for &si in &s {
                    z = z + (si - Dual::constant(mx)).exp();
                }
                s[y[0] as usize] - Dual::constant(mx) - z.ln()
            }
            Subsystem::TwoLayer { hidden, output, second } => {
                let dh = second.rows() - 1;
                let h: Vec<Dual> = (0..dh).map(|i| activate(hidden, pre(i))).collect();
                let mut acc = Dual::constant(0.0);
                for (l, &yl) in y.iter().enumerate() {
                    let mut t = Dual::constant(second[(dh, l)]);
                    for (i, hi) in h.iter().enumerate() {
                        t = t + hi.scale(second[(i, l)]);
                    }
                    acc = acc + output.log_prob(t, yl);
                }
                acc
            }
        }
    }

    fn sample(&self, params: &[f64], xt: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let b = xt.len();
        let pre = |i: usize| -> f64 { params[i * b..(i + 1) * b].iter().zip(xt).map(|(w, x)| w * x).sum() };
        match self {
            Subsystem::Neuron(o) => vec![o.sample(pre(0), rng)],
            Subsystem::Layer { output, outputs } => (0..*outputs).map(|i| output.sample(pre(i), rng)).collect(),
            Subsystem::Softmax { outputs } => {
                let eta = crate::metric::softmax(&(0..*outputs).map(pre).collect::<Vec<_>>());
                let u: f64 = rng.gen();
                let mut c = 0.0;
                for (k, p) in eta.iter().enumerate() {
                    c += p;
                    if u < c {
                        return vec![k as f64];
                    }
                }
                vec![(*outputs - 1) as f64]
            }
            Subsystem::TwoLayer { hidden, output, second } => {
                let dh = second.rows() - 1;
                let h: Vec<f64> = (0..dh).map(|i| hidden.eval(pre(i))).collect();
                (0..second.cols())
                    .map(|l| {
                        let t = second[(dh, l)] + (0..dh).map(|i| second[(i, l)] * h[i]).sum::<f64>();
                        output.sample(t, rng)
                    })
                    .collect()
            }
        }
    }
}

/// How the expectation over outputs is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FisherMethod {
    /// Exact `Σ_y p(y) s(y) s(y)ᵀ` over a finite outcome space.
    Enumerate,
    /// Sample mean of `s(y) s(y)ᵀ` with `y` drawn from the model.
    MonteCarlo { samples: usize, seed: u64 },
    /// `−E[∂²ℓ]` by central second differences of `ℓ`. The expectation is
    /// enumerated when possible and otherwise estimated from `samples` draws.
    HessianFd { step: f64, samples: usize, seed: u64 },
}

/// Oracle output. `std_error` is reported for sampled estimates only.
#[derive(Debug, Clone)]
pub struct FisherEstimate {
    pub matrix: Matrix,
    pub std_error: Option<Matrix>,
    pub samples: usize,
}

/// Log-likelihood `ln p(y | params, x)`.
pub fn log_likelihood(sys: &Subsystem, params: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let xt = augment(x);
    let p: Vec<Dual> = params.iter().map(|&v| Dual::constant(v)).collect();
    sys.log_likelihood(&p, &xt, y).v
}

/// Score `∂ ln p(y) / ∂params`, exact to rounding.
pub fn score(sys: &Subsystem, params: &[f64], x: &[f64], y: &[f64]) -> Vec<f64> {
    let xt = augment(x);
    let mut duals: Vec<Dual> = params.iter().map(|&v| Dual::constant(v)).collect();
    score_with(sys, &mut duals, &xt, y)
}

fn score_with(sys: &Subsystem, duals: &mut [Dual], xt: &[f64], y: &[f64]) -> Vec<f64> {
    let mut g = Vec::with_capacity(duals.len());
    for k in 0..duals.len() {
        duals[k].d = 1.0;
        g.push(sys.log_likelihood(duals, xt, y).d);
        duals[k].d = 0.0;
    }
    g
}

fn validate(sys: &Subsystem, params: &[f64], x: &[f64]) -> Result<()> {
    let need = sys.num_params(x.len());
    if params.len() != need {
        return Err(OracleError::DimensionMismatch(format!(
            "{} parameters given, subsystem needs {need}",
            params.len()
        )));
    }
    if let Subsystem::TwoLayer { second, .. } = sys {
        if second.rows() < 2 {
            return Err(OracleError::InvalidArgument("second layer needs a hidden unit".into()));
        }
    }
    Ok(())
}

/// Fisher information of `sys` at `params` for the fixed input `x`.
pub fn observed_fisher_oracle(
    sys: &Subsystem,
    params: &[f64],
    x: &[f64],
    method: FisherMethod,
) -> Result<FisherEstimate> {
    validate(sys, params, x)?;
    let xt = augment(x).into_inner();
    let p = params.len();
    match method {
        FisherMethod::Enumerate => {
            let outcomes = sys.outcomes()?;
            let mut duals: Vec<Dual> = params.iter().map(|&v| Dual::constant(v)).collect();
            let mut acc = Matrix::zeros(p, p);
            for y in &outcomes {
                let lp = sys.log_likelihood(&duals, &xt, y).v;
                if !lp.is_finite() {
                    return Err(OracleError::NonFiniteLikelihood);
                }
                let s = score_with(sys, &mut duals, &xt, y);
                crate::linalg::add_outer(&mut acc, lp.exp(), &s);
            }
            Ok(FisherEstimate {
                matrix: acc,
                std_error: None,
                samples: outcomes.len(),
            })
        }
        FisherMethod::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(OracleError::InvalidArgument("need at least two samples".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut duals: Vec<Dual> = params.iter().map(|&v| Dual::constant(v)).collect();
            let mut sum = vec![0.0; p * p];
            let mut sumsq = vec![0.0; p * p];
            for _ in 0..samples {
                let y = sys.sample(params, &xt, &mut rng);
                let s = score_with(sys, &mut duals, &xt, &y);
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(OracleError::NonFiniteLikelihood);
                }
                for i in 0..p {
                    for j in 0..p {
                        let q = s[i] * s[j];
                        sum[i * p + j] += q;
                        sumsq[i * p + j] += q * q;
                    }
                }
            }
            Ok(mc_summary(p, samples, &sum, &sumsq))
        }
        FisherMethod::HessianFd { step, samples, seed } => {
            if !(step > 0.0) {
                return Err(OracleError::InvalidArgument(format!(
                    "step must be positive, got {step}"
                )));
            }
            let weighted: Vec<(f64, Vec<f64>)> = match sys.outcomes() {
                Ok(outcomes) => outcomes
                    .into_iter()
                    .map(|y| (log_likelihood(sys, params, x, &y).exp(), y))
                    .collect(),
                Err(OracleError::NotEnumerable) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let w = 1.0 / samples.max(1) as f64;
                    (0..samples.max(1))
                        .map(|_| (w, sys.sample(params, &xt, &mut rng)))
                        .collect()
                }
                Err(e) => return Err(e),
            };
            let mut acc = Matrix::zeros(p, p);
            let mut theta = params.to_vec();
            for (w, y) in &weighted {
                let h = neg_hessian_fd(sys, &mut theta, x, y, step)?;
                acc.add_scaled(*w, &h);
            }
            acc.symmetrize();
            Ok(FisherEstimate {
                matrix: acc,
                std_error: None,
                samples: weighted.len(),
            })
        }
    }
}

fn mc_summary(p: usize, n: usize, sum: &[f64], sumsq: &[f64]) -> FisherEstimate {
    let nf = n as f64;
    let mut mean = Matrix::zeros(p, p);
    let mut se = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let m = sum[i * p + j] / nf;
            let var = ((sumsq[i * p + j] / nf - m * m) * nf / (nf - 1.0)).max(0.0);
            mean[(i, j)] = m;
            se[(i, j)] = (var / nf).sqrt();
        }
    }
    FisherEstimate {
        matrix: mean,
        std_error: Some(se),
        samples: n,
    }
}

fn neg_hessian_fd(sys: &Subsystem, theta: &mut [f64], x: &[f64], y: &[f64], h: f64) -> Result<Matrix> {
    let p = theta.len();
    let f = |t: &[f64]| -> Result<f64> {
        let v = log_likelihood(sys, t, x, y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(OracleError::NonFiniteLikelihood)
        }
    };
    let mut out = Matrix::zeros(p, p);
    let f0 = f(theta)?;
    for i in 0..p {
        let ti = theta[i];
        theta[i] = ti + h;
        let fp = f(theta)?;
        theta[i] = ti - h;
        let fm = f(theta)?;
        theta[i] = ti;
        out[(i, i)] = -(fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let tj = theta[j];
            let mut corner = |di: f64, dj: f64| -> Result<f64> {
                theta[i] = ti + di;
                theta[j] = tj + dj;
                let v = f(theta);
                theta[i] = ti;
                theta[j] = tj;
                v
            };
            let v = corner(h, h)? - corner(h, -h)? - corner(-h, h)? + corner(-h, -h)?;
            let hij = -v / (4.0 * h * h);
            out[(i, j)] = hij;
            out[(j, i)] = hij;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::outer;

    #[test]
    fn dual_rules_match_finite_differences() {
        let f = |x: Dual| (x * x.exp()).ln_1p() / (Dual::constant(2.0) + x.tanh());
        let x0 = 0.37;
        let d = f(Dual { v: x0, d: 1.0 }).d;
        let h = 1e-6;
        let fd = (f(Dual::constant(x0 + h)).v - f(Dual::constant(x0 - h)).v) / (2.0 * h);
        assert!((d - fd).abs() < 1e-8);
    }

    #[test]
    fn sigm_neuron_at_zero_weight() {
        let x = [0.7, -0.2, 1.1];
        let est = observed_fisher_oracle(
            &Subsystem::Neuron(OutputModel::BernoulliSigm),
            &[0.0; 4],
            &x,
            FisherMethod::Enumerate,
        )
        .unwrap();
        let expect = outer(&augment(&x)).scaled(0.25);
        assert!(est.matrix.sub(&expect).max_abs() < 1e-15);
    }

    #[test]
    fn enumerate_rejects_large_or_continuous_spaces() {
        let big = Subsystem::Layer {
            output: OutputModel::BernoulliTanh,
            outputs: 5,
        };
        assert_eq!(
            observed_fisher_oracle(&big, &[0.0; 10], &[0.0], FisherMethod::Enumerate).unwrap_err(),
            OracleError::OutcomeSpaceTooLarge(32)
        );
        let gauss = Subsystem::Neuron(OutputModel::GaussianMean { mean: None, sigma: 1.0 });
        assert_eq!(
            observed_fisher_oracle(&gauss, &[0.0; 2], &[0.0], FisherMethod::Enumerate).unwrap_err(),
            OracleError::NotEnumerable
        );
        assert!(matches!(
            observed_fisher_oracle(&gauss, &[0.0; 3], &[0.0], FisherMethod::Enumerate),
            Err(OracleError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn gaussian_identity_monte_carlo() {
        let x = [0.5, -1.0];
        let sys = Subsystem::Neuron(OutputModel::GaussianMean { mean: None, sigma: 1.0 });
        let est = observed_fisher_oracle(
            &sys,
            &[0.2, 0.1, -0.3],
            &x,
            FisherMethod::MonteCarlo {
                samples: 1_000_000,
                seed: 17,
            },
        )
        .unwrap();
        let expect = outer(&augment(&x));
        let se = est.std_error.unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((est.matrix[(i, j)] - expect[(i, j)]).abs() <= 3.0 * se[(i, j)] + 1e-15);
            }
        }
    }

    #[test]
    fn score_outer_equals_negative_hessian() {
        let x = [0.3, -0.8];
        let w = [0.4, 1.1, -0.2];
        let sys = Subsystem::Neuron(OutputModel::BernoulliTanh);
        let a = observed_fisher_oracle(&sys, &w, &x, FisherMethod::Enumerate).unwrap();
        let b = observed_fisher_oracle(
            &sys,
            &w,
            &x,
            FisherMethod::HessianFd {
                step: 1e-4,
                samples: 0,
                seed: 0,
            },
        )
        .unwrap();
        assert!(a.matrix.sub(&b.matrix).max_abs() < 1e-6);
    }

    #[test]
    fn enumerated_probabilities_sum_to_one() {
        let sys = Subsystem::TwoLayer {
            hidden: ActivationKind::tanh(),
            output: OutputModel::BernoulliTanh,
            second: Matrix::from_fn(3, 2, |i, j| 0.3 * i as f64 - 0.2 * j as f64),
        };
        let params = [0.1, -0.4, 0.3, 0.2, 0.5, -0.1];
        let x = [0.9, -0.3];
        let total: f64 = sys
            .outcomes()
            .unwrap()
            .iter()
            .map(|y| log_likelihood(&sys, &params, &x, y).exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-14);
    }
}
