use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DatasetKind, ExperimentConfig, Method, ModelKind};
use super::ExperimentError;
use crate::data::{self, binary_subset, minibatches, split, synth_blobs, Dataset, SplitSpec};
use crate::linalg::Matrix;
use crate::network::{self, logistic_cost, logistic_gradient, MlpParams};
use crate::optim::{adam_step, sgd_step, AdamState, LogisticNgd, MomentumState, RngdConfig, RngdState};
use crate::whiten::Whitener;

/// Costs above this, or non-finite ones, end a run as diverged.
pub const DIVERGENCE_COST: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub seed: u64,
    pub gamma: f64,
    pub momentum: f64,
    /// Training cost of the batch seen at each iteration, before its update.
    pub costs: Vec<f64>,
    /// Cost on the whole training set after each epoch.
    pub epoch_costs: Vec<f64>,
    /// Misclassification rate on the training set after each epoch.
    pub epoch_errors: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    /// Iteration at which the run was stopped for divergence.
    pub diverged_at: Option<usize>,
    /// Probabilities clamped while computing reported costs.
    pub clamped: usize,
    /// Clamps inside each end-of-epoch cost.
    pub epoch_clamped: Vec<usize>,
}

impl RunRecord {
    fn new(cfg: &ExperimentConfig, seed: u64) -> Self {
        RunRecord {
            method: cfg.method,
            seed,
            gamma: cfg.gamma,
            momentum: cfg.momentum,
            costs: Vec::new(),
            epoch_costs: Vec::new(),
            epoch_errors: Vec::new(),
            epoch_seconds: Vec::new(),
            diverged_at: None,
            clamped: 0,
            epoch_clamped: Vec::new(),
        }
    }

    pub fn final_cost(&self) -> Option<f64> {
        if self.diverged_at.is_some() {
            None
        } else {
            self.epoch_costs.last().copied()
        }
    }

    pub fn iterations(&self) -> usize {
        self.costs.len()
    }

    /// Records an iteration cost; returns `false` once the run has diverged.
    fn push_cost(&mut self, cost: f64) -> bool {
        self.costs.push(cost);
        if !cost.is_finite() || cost > DIVERGENCE_COST {
            self.diverged_at = Some(self.costs.len() - 1);
            false
        } else {
            true
        }
    }

    fn diverge(&mut self) {
        self.diverged_at = Some(self.costs.len().saturating_sub(1));
    }
}

/// Loads the configured dataset, restricted to the configured classes and
/// capped at `subset` samples (a seeded random choice, original order kept).
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, ExperimentError> {
    let mut ds = match cfg.dataset {
        DatasetKind::Synth => synth_blobs(cfg.synth_n, cfg.synth_dim, cfg.synth_separation, cfg.seed)?,
        DatasetKind::Mnist => {
            let dir = cfg.data_dir.clone().unwrap_or_else(data::default_data_dir);
            data::load_mnist(&dir)?
        }
    };
    if let Some([a, b]) = cfg.classes {
        ds = binary_subset(&ds, a, b)?;
    }
    if let Some(cap) = cfg.subset {
        if cap < ds.len() {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
            idx.truncate(cap);
            idx.sort_unstable();
            ds = ds.select(&idx);
        }
    }
    Ok(ds)
}

/// Training data of one repeat, after splitting and optional whitening.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Features of the training split, whitened for `White*` methods.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub whitener: Option<Whitener>,
}

impl Prepared {
    /// Augmented design matrix `z̃` of the logistic model.
    pub fn design(&self) -> Matrix {
        self.features.augment_rows()
    }
}

/// Splits `ds` with seed `cfg.seed + repeat` and whitens on the training
/// split when the method asks for it.
pub fn prepare(cfg: &ExperimentConfig, ds: &Dataset, repeat: u64) -> Result<Prepared, ExperimentError> {
    let spec = SplitSpec {
        train_fraction: cfg.train_fraction,
        seed: cfg.seed.wrapping_add(repeat),
    };
    let (train, _) = split(ds, spec)?;
    let (features, whitener) = if cfg.method.whitens() {
        let w = Whitener::fit(&train.features)?;
        (w.apply_rows(&train.features)?, Some(w))
    } else {
        (train.features, None)
    };
    Ok(Prepared {
        features,
        labels: train.labels,
        num_classes: ds.num_classes(),
        whitener,
    })
}

/// Runs `cfg` end to end for repeat 0.
pub fn run(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let prepared = prepare(cfg, &ds, 0)?;
    run_prepared(cfg, &prepared)
}

/// Trains on already prepared data with `cfg.gamma` and `cfg.momentum`.
pub fn run_prepared(cfg: &ExperimentConfig, data: &Prepared) -> Result<RunRecord, ExperimentError> {
    cfg.validate()?;
    match cfg.model {
        ModelKind::Logistic => run_logistic(cfg, data),
        ModelKind::Mlp => run_mlp(cfg, data),
    }
}

fn batches(cfg: &ExperimentConfig, n: usize, epoch: usize) -> Vec<Vec<usize>> {
    match cfg.batch_size {
        None => vec![(0..n).collect()],
        Some(b) if b >= n => vec![(0..n).collect()],
        Some(b) => minibatches(n, b, cfg.seed, epoch as u64),
    }
}

fn run_logistic(cfg: &ExperimentConfig, data: &Prepared) -> Result<RunRecord, ExperimentError> {
    if data.num_classes != 2 {
        return Err(ExperimentError::Config(format!(
            "logistic model needs two classes, data has {}",
            data.num_classes
        )));
    }
    let z = data.design();
    let y = &data.labels;
    let mut theta = vec![0.0; z.cols()];
    let mut state = MomentumState::new(cfg.gamma, cfg.momentum);
    let ngd = cfg.method.is_natural().then(|| LogisticNgd::new(&z, cfg.eps_rel));
    let mut rec = RunRecord::new(cfg, cfg.seed);
    let full_batch = batches(cfg, z.rows(), 0).len() == 1;

    'epochs: for epoch in 0..cfg.epochs {
        let start = Instant::now();
        for idx in batches(cfg, z.rows(), epoch) {
            let (zb, yb) = if full_batch {
                (None, None)
            } else {
                (
                    Some(z.select_rows(&idx)),
                    Some(idx.iter().map(|&i| y[i]).collect::<Vec<_>>()),
                )
            };
            let zb = zb.as_ref().unwrap_or(&z);
            let yb = yb.as_deref().unwrap_or(y);
            let loss = logistic_cost(&theta, zb, yb);
            rec.clamped += loss.clamped;
            if !rec.push_cost(loss.value) {
                break 'epochs;
            }
            let (grad, s) = logistic_gradient(&theta, zb, yb);
            let stepped = match &ngd {
                Some(solver) => solver.step_with_gradient(&mut theta, zb, &s, &grad, &mut state),
                None => sgd_step(&mut theta, &grad, &mut state),
            };
            if stepped.is_err() || theta.iter().any(|v| !v.is_finite()) {
                rec.diverge();
                break 'epochs;
            }
        }
        let loss = logistic_cost(&theta, &z, y);
        rec.clamped += loss.clamped;
        rec.epoch_clamped.push(loss.clamped);
        let s = z.matvec(&theta);
        let wrong = s.iter().zip(y).filter(|(si, &yi)| (**si > 0.0) != (yi == 1)).count();
        rec.epoch_costs.push(loss.value);
        rec.epoch_errors.push(wrong as f64 / y.len() as f64);
        rec.epoch_seconds.push(start.elapsed().as_secs_f64());
        if !loss.value.is_finite() || loss.value > DIVERGENCE_COST {
            rec.diverge();
            break;
        }
    }
    Ok(rec)
}

enum MlpOptimizer {
    Sgd(MomentumState),
    Adam(AdamState),
    Rngd(Box<RngdState>),
}

fn run_mlp(cfg: &ExperimentConfig, data: &Prepared) -> Result<RunRecord, ExperimentError> {
    let spec = cfg.mlp_spec(Some(data.num_classes))?;
    let mut params = MlpParams::init(&spec, cfg.seed);
    let mut opt = match cfg.method {
        Method::Sgd => MlpOptimizer::Sgd(MomentumState::new(cfg.gamma, cfg.momentum)),
        Method::Adam => MlpOptimizer::Adam(AdamState::new(cfg.gamma)),
        Method::Rngd => MlpOptimizer::Rngd(Box::new(RngdState::for_mlp(
            &spec,
            RngdConfig {
                lambda: cfg.lambda,
                refresh_period: cfg.refresh_period,
                eps_rel: cfg.eps_rel,
                omega: cfg.omega,
            },
        )?)),
        m => return Err(ExperimentError::Config(format!("{m} is not an MLP method"))),
    };
    let x = &data.features;
    let y = &data.labels;
    let mut rec = RunRecord::new(cfg, cfg.seed);

    'epochs: for epoch in 0..cfg.epochs {
        let start = Instant::now();
        for idx in batches(cfg, x.rows(), epoch) {
            let xb = x.select_rows(&idx);
            let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            let (loss, grad, trace) = match network::loss_and_gradient(&spec, &params, &xb, &yb) {
                Ok(r) => r,
                Err(_) => {
                    rec.costs.push(f64::NAN);
                    rec.diverge();
                    break 'epochs;
                }
            };
            rec.clamped += loss.clamped;
            if !rec.push_cost(loss.value) {
                break 'epochs;
            }
            let stepped = match &mut opt {
                MlpOptimizer::Sgd(st) => sgd_step(&mut params, &grad, st),
                MlpOptimizer::Adam(st) => adam_step(&mut params, &grad, st),
                MlpOptimizer::Rngd(st) => st.step(&mut params, &grad, &trace, cfg.gamma),
            };
            if stepped.is_err() || !params.is_finite() {
                rec.diverge();
                break 'epochs;
            }
        }
        let (loss, err) = mlp_train_metrics(&spec, &params, x, y)?;
        rec.clamped += loss.clamped;
        rec.epoch_clamped.push(loss.clamped);
        rec.epoch_costs.push(loss.value);
        rec.epoch_errors.push(err);
        rec.epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(rec)
}

fn mlp_train_metrics(
    spec: &network::MlpSpec,
    params: &MlpParams,
    x: &Matrix,
    y: &[usize],
) -> Result<(network::Loss, f64), ExperimentError> {
    let trace = network::forward(spec, params, x)?;
    let loss = network::loss_cross_entropy(&trace, y)?;
    let wrong = (0..x.rows())
        .filter(|&i| {
            let row = trace.probs.row(i);
            let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            best != y[i]
        })
        .count();
    Ok((loss, wrong as f64 / y.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_logistic(method: Method) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetKind::Synth,
            classes: None,
            subset: None,
            synth_n: 200,
            synth_dim: 5,
            epochs: 20,
            ..ExperimentConfig::logistic(method)
        }
    }

    #[test]
    fn tiny_step_descends() {
        let cfg = ExperimentConfig {
            gamma: 1e-3,
            epochs: 1,
            ..synth_logistic(Method::Gd)
        };
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.iterations(), 1);
        assert!(rec.epoch_costs[0] <= rec.costs[0]);
        let cfg = ExperimentConfig { epochs: 30, ..cfg };
        let rec = run(&cfg).unwrap();
        assert!(rec.costs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = synth_logistic(Method::WhiteNgd);
        let mut a = run(&cfg).unwrap();
        let mut b = run(&cfg).unwrap();
        a.epoch_seconds.clear();
        b.epoch_seconds.clear();
        assert_eq!(a, b);
    }

    #[test]
    fn natural_gradient_runs_and_improves() {
        let gd = run(&synth_logistic(Method::Gd)).unwrap();
        let ngd = run(&synth_logistic(Method::Ngd)).unwrap();
        assert!(ngd.final_cost().unwrap() < gd.final_cost().unwrap());
    }

    #[test]
    fn rejects_mismatched_model() {
        let cfg = ExperimentConfig {
            model: ModelKind::Mlp,
            ..synth_logistic(Method::Gd)
        };
        assert!(run(&cfg).is_err());
    }

    #[test]
    fn mlp_minibatch_run() {
        let cfg = ExperimentConfig {
            dataset: DatasetKind::Synth,
            synth_n: 100,
            synth_dim: 6,
            layer_sizes: vec![6, 5, 2],
            epochs: 2,
            batch_size: Some(16),
            refresh_period: 3,
            ..ExperimentConfig::mlp(Method::Rngd)
        };
        let rec = run(&cfg).unwrap();
        assert_eq!(rec.iterations(), 14);
        assert_eq!(rec.epoch_costs.len(), 2);
        assert!(rec.diverged_at.is_none());
    }
}
