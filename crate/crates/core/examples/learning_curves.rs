//! Grid search over learning rate and momentum, then write the best mean
//! learning curve as CSV.

use rfim::experiment::{emit_curves, run_grid, DatasetKind, ExperimentConfig, Method};

fn main() {
    let cfg = ExperimentConfig {
        dataset: DatasetKind::Synth,
        classes: None,
        subset: None,
        synth_n: 400,
        synth_dim: 8,
        epochs: 40,
        repeats: 3,
        ..ExperimentConfig::logistic(Method::Gd)
    };
    let grid = run_grid(&cfg).unwrap();
    for c in &grid.cells {
        println!(
            "gamma {:>6} momentum {:>3}: final cost {:?}, diverged {}",
            c.gamma,
            c.momentum,
            c.final_cost(),
            c.diverged
        );
    }
    let best = grid.best_cell().unwrap();
    let dir = std::env::temp_dir().join("rfim_learning_curves");
    let path = dir.join("GD_best.csv");
    emit_curves(&best.mean_costs, &path, cfg.smooth_window).unwrap();
    println!(
        "best gamma {} momentum {} -> {}",
        best.gamma,
        best.momentum,
        path.display()
    );
}
