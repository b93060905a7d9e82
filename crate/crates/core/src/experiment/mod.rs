//! Training harness: configuration, runs, grid search, learning curves and
//! verification suites.

pub mod config;
pub mod curves;
pub mod grid;
pub mod run;
pub mod verify;

use thiserror::Error;

pub use config::{DatasetKind, ExperimentConfig, Method, ModelKind};
pub use curves::{emit_curves, read_curves, smooth, tau_sharp_ratio, write_curves, CurveRow};
pub use grid::{run_grid, select_best, GridCell, GridResult};
pub use run::{load_dataset, prepare, run, run_prepared, Prepared, RunRecord};
pub use verify::{verify, PropertyResult, Report, Suite, VerifyOptions};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Whiten(#[from] crate::whiten::WhitenError),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Optim(#[from] crate::optim::OptimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
