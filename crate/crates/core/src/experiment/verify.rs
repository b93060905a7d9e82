use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Method};
use super::run::{load_dataset, prepare, run_prepared};
use super::ExperimentError;
use crate::activations::{relu_omega, ActivationKind};
use crate::data::{self, binary_subset, split, SplitSpec};
use crate::linalg::{augment, numeric_rank, outer, Matrix, SymmetricEigen};
use crate::metric::{
    batch_neuron_rfim, neuron_rfim, nonlinear_layer_rfim, softmax_rfim, two_layer_rfim, TwoLayerVariant,
};
use crate::network::{self, Head, MlpParams, MlpSpec};
use crate::optim::ngd_logistic_step;
use crate::oracle::{observed_fisher_oracle, FisherMethod, OutputModel, Subsystem};
use crate::whiten::{whitening_residuals, Whitener};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracles,
    Invariance,
    Rank,
    Whitening,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Oracles, Suite::Invariance, Suite::Rank, Suite::Whitening];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracles => "oracles",
            Suite::Invariance => "invariance",
            Suite::Rank => "rank",
            Suite::Whitening => "whitening",
        }
    }
}

impl FromStr for Suite {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| ExperimentError::Config(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Multiplies every analytic `ν`-based metric before comparison; `1` is
    /// the honest setting, anything else is a mutation check.
    pub nu_scale: f64,
    /// Draws per Monte-Carlo estimate.
    pub mc_samples: usize,
    pub data_dir: Option<PathBuf>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            nu_scale: 1.0,
            mc_samples: 200_000,
            data_dir: None,
        }
    }
}

/// Measured error of one property against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: String,
    pub err: f64,
    pub tol: f64,
}

impl PropertyResult {
    pub fn new(name: impl Into<String>, err: f64, tol: f64) -> Self {
        PropertyResult {
            name: name.into(),
            err,
            tol,
        }
    }

    pub fn passed(&self) -> bool {
        self.err.is_finite() && self.err <= self.tol
    }
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PROPERTY {} {} err={:e} tol={:e}",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.err,
            self.tol
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub results: Vec<PropertyResult>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(PropertyResult::passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

pub fn verify(suites: &[Suite], opts: &VerifyOptions) -> Report {
    let mut results = Vec::new();
    for s in suites {
        results.extend(run_suite(*s, opts));
    }
    Report { results }
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Vec<PropertyResult> {
    match suite {
        Suite::Oracles => oracle_suite(opts),
        Suite::Invariance => invariance_suite(),
        Suite::Rank => rank_suite(),
        Suite::Whitening => whitening_suite(opts),
    }
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute error when `b` vanishes.
pub fn relative_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let d = a.sub(b).frobenius_norm();
    let n = b.frobenius_norm();
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-r..r)).collect()
}

/// Largest relative error of the single-neuron metric against enumeration
/// over `count` random `(w, x)` with input dimension up to 5.
pub fn neuron_enumeration_error(kind: &ActivationKind, count: usize, seed: u64, nu_scale: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = OutputModel::for_activation(kind);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let d = rng.gen_range(1..=5);
        let x = uniform_vec(&mut rng, d, 2.0);
        let w = uniform_vec(&mut rng, d + 1, 1.5);
        let analytic = neuron_rfim(kind, &w, &x).expect("shapes agree").scaled(nu_scale);
        let oracle = observed_fisher_oracle(&Subsystem::Neuron(model), &w, &x, FisherMethod::Enumerate)
            .expect("binary outputs enumerate");
        worst = worst.max(relative_frobenius(&analytic, &oracle.matrix));
    }
    worst
}

/// Relative error of the Gaussian neuron metric against `(f′)² x̃x̃ᵀ / σ²`.
pub fn gaussian_closed_form_error(kind: &ActivationKind, count: usize, seed: u64, nu_scale: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let d = rng.gen_range(1..=5);
        let x = uniform_vec(&mut rng, d, 2.0);
        let w = uniform_vec(&mut rng, d + 1, 1.5);
        let xt = augment(&x);
        let s = crate::linalg::dot(&w, &xt);
        let fp = kind.deriv(s);
        let expect = outer(&xt).scaled(fp * fp / (kind.sigma * kind.sigma));
        let analytic = neuron_rfim(kind, &w, &x).expect("shapes agree").scaled(nu_scale);
        worst = worst.max(relative_frobenius(&analytic, &expect));
    }
    worst
}

/// Largest `|analytic − MC| / SE` over entries and seeds for a Gaussian neuron.
pub fn gaussian_monte_carlo_zscore(kind: &ActivationKind, seeds: u64, samples: usize, nu_scale: f64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let d = rng.gen_range(1..=4);
        let x = uniform_vec(&mut rng, d, 1.0);
        let w = uniform_vec(&mut rng, d + 1, 1.0);
        let analytic = neuron_rfim(kind, &w, &x).expect("shapes agree").scaled(nu_scale);
        let est = observed_fisher_oracle(
            &Subsystem::Neuron(OutputModel::for_activation(kind)),
            &w,
            &x,
            FisherMethod::MonteCarlo { samples, seed },
        )
        .expect("sampling succeeds");
        let se = est.std_error.expect("sampled estimate");
        for i in 0..analytic.rows() {
            for j in 0..analytic.cols() {
                let diff = (analytic[(i, j)] - est.matrix[(i, j)]).abs();
                let z = if se[(i, j)] > 0.0 {
                    diff / se[(i, j)]
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
            }
        }
    }
    worst
}

/// Enumerated full Fisher of a tanh layer: largest off-diagonal block entry
/// and relative error of the diagonal blocks.
pub fn layer_block_errors(m: usize, d: usize, seed: u64, nu_scale: f64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = ActivationKind::tanh();
    let x = uniform_vec(&mut rng, d, 1.0);
    let w = Matrix::from_fn(d + 1, m, |_, _| rng.gen_range(-1.0..1.0));
    let params: Vec<f64> = (0..m).flat_map(|j| w.column(j).into_inner()).collect();
    let sys = Subsystem::Layer {
        output: OutputModel::BernoulliTanh,
        outputs: m,
    };
    let full = observed_fisher_oracle(&sys, &params, &x, FisherMethod::Enumerate)
        .expect("small layer enumerates")
        .matrix;
    let analytic = nonlinear_layer_rfim(&kind, &w, &x).expect("shapes agree");
    let b = d + 1;
    let mut off = 0.0f64;
    let mut diag = 0.0f64;
    for bi in 0..m {
        for bj in 0..m {
            let blk = Matrix::from_fn(b, b, |i, j| full[(bi * b + i, bj * b + j)]);
            if bi == bj {
                diag = diag.max(relative_frobenius(&analytic.block(bi).scaled(nu_scale), &blk));
            } else {
                off = off.max(blk.max_abs());
            }
        }
    }
    (off, diag)
}

/// Softmax metric checks: relative error against enumeration, `−λ_min`,
/// and `‖G (x̃;…;x̃)‖`.
pub fn softmax_errors(m: usize, d: usize, seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform_vec(&mut rng, d, 1.5);
    let w = Matrix::from_fn(d + 1, m, |_, _| rng.gen_range(-1.0..1.0));
    let params: Vec<f64> = (0..m).flat_map(|j| w.column(j).into_inner()).collect();
    let g = softmax_rfim(&w, &x).expect("shapes agree").into_matrix();
    let oracle = observed_fisher_oracle(&Subsystem::Softmax { outputs: m }, &params, &x, FisherMethod::Enumerate)
        .expect("small softmax enumerates");
    let rel = relative_frobenius(&g, &oracle.matrix);
    let lmin = SymmetricEigen::new(&g).expect("symmetric").min_value();
    let xt = augment(&x);
    let stacked: Vec<f64> = (0..m).flat_map(|_| xt.iter().copied()).collect();
    let null = g.matvec(&stacked).norm();
    (rel, (-lmin).max(0.0), null)
}

/// Worst relative error of the two-layer metric against enumeration.
pub fn two_layer_error(dx: usize, dh: usize, dy: usize, seeds: u64, nu_scale: f64) -> f64 {
    let kind = ActivationKind::tanh();
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = uniform_vec(&mut rng, dx, 1.0);
        let w = Matrix::from_fn(dx + 1, dh, |_, _| rng.gen_range(-1.0..1.0));
        let c = Matrix::from_fn(dh + 1, dy, |_, _| rng.gen_range(-1.0..1.0));
        let analytic = two_layer_rfim(&kind, &w, &c, &x, TwoLayerVariant::Literal)
            .expect("shapes agree")
            .into_matrix()
            .scaled(nu_scale);
        let params: Vec<f64> = (0..dh).flat_map(|j| w.column(j).into_inner()).collect();
        let sys = Subsystem::TwoLayer {
            hidden: kind,
            output: OutputModel::BernoulliTanh,
            second: c,
        };
        let oracle = observed_fisher_oracle(&sys, &params, &x, FisherMethod::Enumerate).expect("enumerates");
        worst = worst.max(relative_frobenius(&analytic, &oracle.matrix));
    }
    worst
}

/// `sup_t |relu_ω(t) − relu(t)|` on a grid over `[−10, 10]`.
pub fn smoothing_gap(omega: f64) -> f64 {
    (0..=200_000)
        .map(|k| {
            let t = -10.0 + 20.0 * k as f64 / 200_000.0;
            (relu_omega(t, 0.0, omega) - t.max(0.0)).abs()
        })
        .fold(0.0, f64::max)
}

fn oracle_suite(opts: &VerifyOptions) -> Vec<PropertyResult> {
    let k = opts.nu_scale;
    let mut out = vec![
        PropertyResult::new(
            "neuron_tanh_enumeration",
            neuron_enumeration_error(&ActivationKind::tanh(), 100, 1, k),
            1e-10,
        ),
        PropertyResult::new(
            "neuron_sigm_enumeration",
            neuron_enumeration_error(&ActivationKind::sigm(), 100, 2, k),
            1e-10,
        ),
    ];
    let relu = ActivationKind::relu_omega(0.0, 0.1, 1.0);
    let elu = ActivationKind::elu(1.0, 1.0);
    for (name, kind) in [("relu", relu), ("elu", elu)] {
        out.push(PropertyResult::new(
            format!("neuron_{name}_closed_form"),
            gaussian_closed_form_error(&kind, 100, 3, k),
            1e-12,
        ));
        out.push(PropertyResult::new(
            format!("neuron_{name}_monte_carlo_zscore"),
            gaussian_monte_carlo_zscore(&kind, 10, opts.mc_samples, k),
            3.0,
        ));
    }
    let (off, diag) = layer_block_errors(3, 3, 4, k);
    out.push(PropertyResult::new("layer_offdiagonal_blocks", off, 1e-10));
    out.push(PropertyResult::new("layer_diagonal_blocks", diag, 1e-10));
    let (rel, neg, null) = softmax_errors(4, 3, 5);
    out.push(PropertyResult::new("softmax_enumeration", rel, 1e-10));
    out.push(PropertyResult::new("softmax_psd", neg, 1e-10));
    out.push(PropertyResult::new("softmax_null_direction", null, 1e-10));
    out.push(PropertyResult::new(
        "two_layer_enumeration",
        two_layer_error(3, 2, 2, 20, k),
        1e-8,
    ));
    for omega in [1.0, 0.1, 0.01] {
        let bound = omega * 2f64.ln();
        out.push(PropertyResult::new(
            format!("relu_smoothing_gap_omega_{omega}"),
            (smoothing_gap(omega) - bound).max(0.0),
            0.0,
        ));
    }
    let s = 50.0 * 0.1;
    let nu_err = (relu.nu(-s).value() - 0.0).abs().max((relu.nu(s).value() - 1.0).abs());
    out.push(PropertyResult::new("relu_nu_limits", nu_err, 1e-6));
    out
}

/// Worst `‖δθ − J⁻¹δΛ‖_∞ / ‖δθ‖_∞` over `seeds` random problems.
pub fn reparameterization_error(seeds: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 4;
        let n = 40;
        let z = Matrix::from_fn(n, d + 1, |_, j| if j == d { 1.0 } else { rng.gen_range(-1.0..1.0) });
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let j = loop {
            let j = Matrix::from_fn(
                d + 1,
                d + 1,
                |a, b| if a == b { 1.5 } else { 0.0 } + rng.gen_range(-0.5..0.5),
            );
            if let Some(inv) = inverse(&j) {
                break (j, inv);
            }
        };
        let (jm, jinv) = j;
        let theta = uniform_vec(&mut rng, d + 1, 0.5);
        let mut t = theta.clone();
        ngd_logistic_step(&mut t, &z, &y, 1.0, 0.0).expect("full-rank batch");
        let zl = z.matmul(&jinv);
        let lam = jm.matvec(&theta).into_inner();
        let mut l = lam.clone();
        ngd_logistic_step(&mut l, &zl, &y, 1.0, 0.0).expect("full-rank batch");
        let dl: Vec<f64> = l.iter().zip(&lam).map(|(a, b)| a - b).collect();
        let dt: Vec<f64> = t.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let mapped = jinv.matvec(&dl);
        let err = mapped.iter().zip(&dt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = dt.iter().map(|v| v.abs()).fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    worst
}

/// Gauss-Jordan inverse with partial pivoting; `None` when near singular.
fn inverse(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut m = a.clone();
    let mut inv = Matrix::identity(n);
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[(x, c)].abs().total_cmp(&m[(y, c)].abs()))?;
        if m[(p, c)].abs() < 1e-3 {
            return None;
        }
        for k in 0..n {
            let (a1, b1) = (m[(c, k)], inv[(c, k)]);
            m[(c, k)] = m[(p, k)];
            inv[(c, k)] = inv[(p, k)];
            m[(p, k)] = a1;
            inv[(p, k)] = b1;
        }
        let d = m[(c, c)];
        for k in 0..n {
            m[(c, k)] /= d;
            inv[(c, k)] /= d;
        }
        for r in (0..n).filter(|&r| r != c) {
            let f = m[(r, c)];
            for k in 0..n {
                m[(r, k)] -= f * m[(c, k)];
                inv[(r, k)] -= f * inv[(c, k)];
            }
        }
    }
    Some(inv)
}

/// Worst norm-wise relative error `max|fd − g| / max|g|` of backprop on a
/// 4-3-2 relu network.
pub fn gradient_check_error(seeds: u64) -> f64 {
    let spec = MlpSpec::new(vec![4, 3, 2], ActivationKind::relu(), Head::SoftmaxCrossEntropy).expect("valid spec");
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = MlpParams::init(&spec, seed);
        let x = Matrix::from_fn(6, 4, |_, _| rng.gen_range(-1.0..1.0));
        let y: Vec<usize> = (0..6).map(|_| rng.gen_range(0..2)).collect();
        let (_, grad, _) = network::loss_and_gradient(&spec, &params, &x, &y).expect("finite");
        let h = 1e-5;
        let loss = |p: &MlpParams| {
            network::loss_cross_entropy(&network::forward(&spec, p, &x).expect("finite"), &y)
                .expect("labels valid")
                .value
        };
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for l in 0..params.layers().len() {
            for k in 0..params.layer(l).as_slice().len() {
                let mut p = params.clone();
                p.layers_mut()[l].as_mut_slice()[k] += h;
                let up = loss(&p);
                p.layers_mut()[l].as_mut_slice()[k] -= 2.0 * h;
                let dn = loss(&p);
                let g = grad.layer(l).as_slice()[k];
                diff = diff.max(((up - dn) / (2.0 * h) - g).abs());
                scale = scale.max(g.abs());
            }
        }
        worst = worst.max(diff / scale);
    }
    worst
}

/// Largest `|cost_RNGD − cost_SGD|` along a short run with `λ = 1`.
pub fn rngd_identity_gap(epochs: usize) -> Result<f64, ExperimentError> {
    let base = ExperimentConfig {
        dataset: super::config::DatasetKind::Synth,
        synth_n: 200,
        synth_dim: 8,
        layer_sizes: vec![8, 6, 6, 2],
        epochs,
        batch_size: Some(16),
        gamma: 0.05,
        momentum: 0.0,
        lambda: 1.0,
        refresh_period: 5,
        ..ExperimentConfig::mlp(Method::Sgd)
    };
    let ds = load_dataset(&base)?;
    let data = prepare(&base, &ds, 0)?;
    let sgd = run_prepared(&base, &data)?;
    let rngd = run_prepared(
        &ExperimentConfig {
            method: Method::Rngd,
            ..base
        },
        &data,
    )?;
    if sgd.costs.len() != rngd.costs.len() {
        return Ok(f64::INFINITY);
    }
    Ok(sgd
        .costs
        .iter()
        .zip(&rngd.costs)
        .map(|(a, b)| {
            if a.to_bits() == b.to_bits() {
                0.0
            } else {
                (a - b).abs().max(f64::MIN_POSITIVE)
            }
        })
        .fold(0.0, f64::max))
}

fn softmax_shift_error(seeds: u64) -> f64 {
    let spec = MlpSpec::new(vec![3, 4, 5], ActivationKind::relu(), Head::SoftmaxCrossEntropy).expect("valid spec");
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = MlpParams::init(&spec, seed);
        let mut q = p.clone();
        let shift = uniform_vec(&mut rng, 5, 3.0);
        let head = &mut q.layers_mut()[1];
        for i in 0..head.rows() {
            for j in 0..head.cols() {
                head[(i, j)] += shift[i];
            }
        }
        let x = Matrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
        let a = network::forward(&spec, &p, &x).expect("finite").probs;
        let b = network::forward(&spec, &q, &x).expect("finite").probs;
        worst = worst.max(a.sub(&b).max_abs());
    }
    worst
}

fn invariance_suite() -> Vec<PropertyResult> {
    vec![
        PropertyResult::new("reparameterization_invariance", reparameterization_error(20), 1e-6),
        PropertyResult::new("gradient_finite_difference", gradient_check_error(20), 1e-5),
        PropertyResult::new("softmax_shift_invariance", softmax_shift_error(20), 1e-12),
        PropertyResult::new(
            "rngd_identity_matches_sgd",
            rngd_identity_gap(3).unwrap_or(f64::INFINITY),
            0.0,
        ),
    ]
}

/// Numeric rank of the batch neuron metric for `n` generic samples in
/// dimension `d`.
pub fn batch_rank(n: usize, d: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = ActivationKind::tanh();
    let w = uniform_vec(&mut rng, d + 1, 0.5);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(&mut rng, d, 1.0)).collect();
    let g = batch_neuron_rfim(&kind, &w, &xs).expect("nonempty batch");
    numeric_rank(&g, 1e-9).expect("symmetric")
}

fn rank_suite() -> Vec<PropertyResult> {
    (1..=11)
        .map(|n| {
            let r = batch_rank(n, 10, n as u64);
            PropertyResult::new(format!("batch_rank_n{n}_d10"), (r as f64 - n as f64).abs(), 0.0)
        })
        .collect()
}

/// Whitening residuals on the 3-vs-5 training split (synthetic blobs with
/// two constant columns when MNIST is unavailable): `(|mean|, |cov − I|,
/// leak)`, where `leak` counts constant input columns that are not dropped
/// plus the largest transform weight on any of them.
pub fn whitening_check(data_dir: Option<PathBuf>) -> Result<(f64, f64, f64), ExperimentError> {
    let dir = data_dir.unwrap_or_else(data::default_data_dir);
    let train = match data::load_mnist(&dir) {
        Ok(ds) => {
            let ds = binary_subset(&ds, 3, 5)?;
            split(
                &ds,
                SplitSpec {
                    train_fraction: 0.5,
                    seed: 0,
                },
            )?
            .0
            .features
        }
        Err(_) => {
            let ds = data::synth_blobs(400, 6, 2.0, 0)?;
            Matrix::from_fn(ds.len(), 8, |i, j| if j < 6 { ds.features[(i, j)] } else { 0.0 })
        }
    };
    let constant: Vec<usize> = (0..train.cols())
        .filter(|&j| (0..train.rows()).all(|i| train[(i, j)] == train[(0, j)]))
        .collect();
    let w = Whitener::fit(&train)?;
    let (mean, cov) = whitening_residuals(&w.apply_rows(&train)?);
    let a = w.transform_matrix();
    let weight = constant
        .iter()
        .flat_map(|&j| (0..a.rows()).map(move |i| (i, j)))
        .map(|(i, j)| a[(i, j)].abs())
        .fold(0.0, f64::max);
    let missing = constant.len().saturating_sub(w.dropped()) as f64;
    Ok((mean, cov, missing + weight))
}

fn whitening_suite(opts: &VerifyOptions) -> Vec<PropertyResult> {
    let (m, c, d) = whitening_check(opts.data_dir.clone()).unwrap_or((f64::INFINITY, f64::INFINITY, f64::INFINITY));
    vec![
        PropertyResult::new("whitened_mean", m, 1e-8),
        PropertyResult::new("whitened_covariance", c, 1e-6),
        PropertyResult::new("constant_dims_dropped", d, 0.0),
    ]
}
