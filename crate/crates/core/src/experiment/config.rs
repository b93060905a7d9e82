use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::activations::ActivationKind;
use crate::network::{Head, MlpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "GD")]
    Gd,
    #[serde(rename = "WhiteGD")]
    WhiteGd,
    #[serde(rename = "NGD")]
    Ngd,
    #[serde(rename = "WhiteNGD")]
    WhiteNgd,
    #[serde(rename = "SGD")]
    Sgd,
    #[serde(rename = "ADAM")]
    Adam,
    #[serde(rename = "RNGD")]
    Rngd,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Gd,
        Method::WhiteGd,
        Method::Ngd,
        Method::WhiteNgd,
        Method::Sgd,
        Method::Adam,
        Method::Rngd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "GD",
            Method::WhiteGd => "WhiteGD",
            Method::Ngd => "NGD",
            Method::WhiteNgd => "WhiteNGD",
            Method::Sgd => "SGD",
            Method::Adam => "ADAM",
            Method::Rngd => "RNGD",
        }
    }

    /// Methods of the single-neuron logistic experiment.
    pub fn is_logistic(self) -> bool {
        matches!(self, Method::Gd | Method::WhiteGd | Method::Ngd | Method::WhiteNgd)
    }

    pub fn whitens(self) -> bool {
        matches!(self, Method::WhiteGd | Method::WhiteNgd)
    }

    pub fn is_natural(self) -> bool {
        matches!(self, Method::Ngd | Method::WhiteNgd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Method {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ExperimentError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    Synth,
}

/// One flat record; every key can appear in a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    pub model: ModelKind,
    /// Network shape, input first. Ignored by the logistic model.
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: ActivationKind,
    pub dataset: DatasetKind,
    /// Keep only these two digits, relabelled to 0 and 1.
    pub classes: Option<[usize; 2]>,
    /// Keep at most this many samples (a seeded random subset).
    pub subset: Option<usize>,
    pub train_fraction: f64,
    pub synth_n: usize,
    pub synth_dim: usize,
    pub synth_separation: f64,
    /// Learning rate of a single `train` run.
    pub gamma: f64,
    /// Momentum of a single `train` run.
    pub momentum: f64,
    pub gamma_grid: Vec<f64>,
    pub momentum_grid: Vec<f64>,
    pub epochs: usize,
    /// `None` trains on the full training set at every iteration.
    pub batch_size: Option<usize>,
    pub repeats: usize,
    pub refresh_period: u64,
    pub lambda: f64,
    pub eps_rel: f64,
    pub omega: f64,
    pub seed: u64,
    pub smooth_window: usize,
    pub data_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Logistic protocol: digits 3 vs 5, half for training, 100 full-batch
    /// epochs, the 5×2 learning-rate/momentum grid and 10 repeats.
    pub fn logistic(method: Method) -> Self {
        ExperimentConfig {
            method,
            model: ModelKind::Logistic,
            layer_sizes: Vec::new(),
            hidden_activation: ActivationKind::sigm(),
            dataset: DatasetKind::Mnist,
            classes: Some([3, 5]),
            subset: Some(2000),
            train_fraction: 0.5,
            synth_n: 2000,
            synth_dim: 20,
            synth_separation: 2.0,
            gamma: 1.0,
            momentum: 0.0,
            gamma_grid: vec![1e-2, 1e-1, 1.0, 10.0, 100.0],
            momentum_grid: vec![0.0, 0.8],
            epochs: 100,
            batch_size: None,
            repeats: 10,
            refresh_period: 100,
            lambda: 0.995,
            eps_rel: 1e-2,
            omega: 0.1,
            seed: 0,
            smooth_window: 10,
            data_dir: None,
        }
    }

    /// MLP protocol at desk scale: 784-32-32-10 relu network, 10k samples,
    /// 5 epochs of batch 64.
    pub fn mlp(method: Method) -> Self {
        let gamma = match method {
            Method::Sgd => 1e-3,
            _ => 1e-2,
        };
        ExperimentConfig {
            method,
            model: ModelKind::Mlp,
            layer_sizes: vec![784, 32, 32, 10],
            hidden_activation: ActivationKind::relu(),
            classes: None,
            subset: Some(10_000),
            train_fraction: 1.0,
            gamma,
            gamma_grid: vec![gamma],
            momentum_grid: vec![0.0],
            epochs: 5,
            batch_size: Some(64),
            repeats: 1,
            ..Self::logistic(method)
        }
    }

    /// Preset matching the experiment family of `method`.
    pub fn preset(method: Method) -> Self {
        if method.is_logistic() {
            Self::logistic(method)
        } else {
            Self::mlp(method)
        }
    }

    /// Reads a JSON object; keys absent from it keep the preset of its
    /// `method` (or of `method_override`, which wins).
    pub fn from_json(text: &str, method_override: Option<Method>) -> Result<Self, ExperimentError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| ExperimentError::Config("config must be a JSON object".into()))?;
        let method = match (method_override, obj.get("method")) {
            (Some(m), _) => m,
            (None, Some(v)) => serde_json::from_value(v.clone()).map_err(|e| ExperimentError::Config(e.to_string()))?,
            (None, None) => Method::Gd,
        };
        let mut merged = serde_json::to_value(Self::preset(method)).expect("config serializes");
        let target = merged.as_object_mut().expect("config is an object");
        for (k, v) in obj {
            if !target.contains_key(k) {
                return Err(ExperimentError::Config(format!("unknown key {k:?}")));
            }
            target.insert(k.clone(), v.clone());
        }
        target.insert(
            "method".into(),
            serde_json::to_value(method).expect("method serializes"),
        );
        let cfg: Self = serde_json::from_value(merged).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        match (self.model, self.method.is_logistic()) {
            (ModelKind::Logistic, false) | (ModelKind::Mlp, true) => {
                return bad(format!(
                    "method {} does not apply to the {:?} model",
                    self.method, self.model
                ))
            }
            _ => {}
        }
        if self.gamma_grid.is_empty() || self.momentum_grid.is_empty() {
            return bad("grids must be nonempty".into());
        }
        if self.epochs == 0 || self.repeats == 0 {
            return bad("epochs and repeats must be positive".into());
        }
        if self.batch_size == Some(0) || self.smooth_window == 0 {
            return bad("batch size and smoothing window must be positive".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!("train_fraction {} not in (0, 1]", self.train_fraction));
        }
        if !(0.0..=1.0).contains(&self.lambda) || self.refresh_period == 0 {
            return bad("lambda must lie in [0, 1] and refresh_period be positive".into());
        }
        if let Some([a, b]) = self.classes {
            if a == b {
                return bad("the two classes must differ".into());
            }
        }
        if self.model == ModelKind::Logistic && self.classes.is_none() && self.dataset == DatasetKind::Mnist {
            return bad("the logistic model needs two classes".into());
        }
        if self.model == ModelKind::Mlp {
            self.mlp_spec(None)?;
        }
        Ok(())
    }

    /// Network for the MLP model; the output width follows `num_classes`
    /// when given.
    pub fn mlp_spec(&self, num_classes: Option<usize>) -> Result<MlpSpec, ExperimentError> {
        let mut sizes = self.layer_sizes.clone();
        if let (Some(c), Some(last)) = (num_classes, sizes.last_mut()) {
            if *last != c {
                return Err(ExperimentError::Config(format!(
                    "network has {last} outputs but the data has {c} classes"
                )));
            }
        }
        if sizes.is_empty() {
            return Err(ExperimentError::Config("layer_sizes is empty".into()));
        }
        MlpSpec::new(sizes, self.hidden_activation, Head::SoftmaxCrossEntropy)
            .map_err(|e| ExperimentError::Config(e.to_string()))
    }
}
