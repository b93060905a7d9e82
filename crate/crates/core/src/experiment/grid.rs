use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{load_dataset, prepare, run_prepared, RunRecord};
use super::ExperimentError;

/// One `(γ, momentum)` cell averaged over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub gamma: f64,
    pub momentum: f64,
    /// Pointwise mean of the per-iteration costs.
    pub mean_costs: Vec<f64>,
    /// Pointwise mean of the end-of-epoch training costs.
    pub mean_epoch_costs: Vec<f64>,
    /// Runs of this cell that diverged.
    pub diverged: usize,
    pub runs: usize,
    pub seconds: f64,
    /// Clamped probabilities summed over runs.
    pub clamped: usize,
    /// Clamps inside the final end-of-epoch costs, summed over runs.
    pub final_clamped: usize,
}

impl GridCell {
    pub fn is_valid(&self) -> bool {
        self.diverged == 0 && self.final_cost().is_some_and(f64::is_finite)
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.mean_epoch_costs.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    /// Index of the selected cell, if any cell stayed finite.
    pub best: Option<usize>,
}

impl GridResult {
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.best.map(|i| &self.cells[i])
    }
}

/// Lowest final training cost among valid cells; ties go to the smaller
/// learning rate, then the smaller momentum.
pub fn select_best(cells: &[GridCell]) -> Option<usize> {
    (0..cells.len()).filter(|&i| cells[i].is_valid()).min_by(|&a, &b| {
        let (ca, cb) = (&cells[a], &cells[b]);
        ca.final_cost()
            .unwrap()
            .total_cmp(&cb.final_cost().unwrap())
            .then(ca.gamma.total_cmp(&cb.gamma))
            .then(ca.momentum.total_cmp(&cb.momentum))
    })
}

fn accumulate(acc: &mut Vec<f64>, values: &[f64]) {
    if acc.len() < values.len() {
        acc.resize(values.len(), 0.0);
    }
    for (a, v) in acc.iter_mut().zip(values) {
        *a += v;
    }
}

/// Runs every grid cell `cfg.repeats` times. Repeat `r` splits with seed
/// `cfg.seed + r`; the prepared data is shared by all cells of a repeat.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridResult, ExperimentError> {
    cfg.validate()?;
    let ds = load_dataset(cfg)?;
    let mut cells: Vec<GridCell> = cfg
        .gamma_grid
        .iter()
        .flat_map(|&gamma| {
            cfg.momentum_grid.iter().map(move |&momentum| GridCell {
                gamma,
                momentum,
                mean_costs: Vec::new(),
                mean_epoch_costs: Vec::new(),
                diverged: 0,
                runs: 0,
                seconds: 0.0,
                clamped: 0,
                final_clamped: 0,
            })
        })
        .collect();
    for r in 0..cfg.repeats as u64 {
        let data = prepare(cfg, &ds, r)?;
        for cell in &mut cells {
            if cell.diverged > 0 {
                continue;
            }
            let run_cfg = ExperimentConfig {
                gamma: cell.gamma,
                momentum: cell.momentum,
                ..cfg.clone()
            };
            let rec: RunRecord = run_prepared(&run_cfg, &data)?;
            cell.runs += 1;
            cell.seconds += rec.epoch_seconds.iter().sum::<f64>();
            cell.clamped += rec.clamped;
            cell.final_clamped += rec.epoch_clamped.last().copied().unwrap_or(0);
            if rec.diverged_at.is_some() {
                cell.diverged += 1;
                continue;
            }
            accumulate(&mut cell.mean_costs, &rec.costs);
            accumulate(&mut cell.mean_epoch_costs, &rec.epoch_costs);
        }
    }
    for cell in &mut cells {
        let n = cell.runs as f64;
        if cell.diverged > 0 {
            cell.mean_costs.clear();
            cell.mean_epoch_costs.clear();
        }
        for v in cell.mean_costs.iter_mut().chain(cell.mean_epoch_costs.iter_mut()) {
            *v /= n;
        }
    }
    let best = select_best(&cells);
    Ok(GridResult { cells, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::{DatasetKind, Method};
    use crate::experiment::run::run;

    fn cell(gamma: f64, momentum: f64, cost: f64) -> GridCell {
        GridCell {
            gamma,
            momentum,
            mean_costs: vec![cost],
            mean_epoch_costs: vec![cost],
            diverged: 0,
            runs: 1,
            seconds: 0.0,
            clamped: 0,
            final_clamped: 0,
        }
    }

    #[test]
    fn selection_ignores_order_and_breaks_ties() {
        let mut cells = vec![
            cell(10.0, 0.8, 0.1),
            cell(1.0, 0.8, 0.1),
            cell(1.0, 0.0, 0.1),
            cell(0.1, 0.0, 0.5),
        ];
        let pick = |c: &[GridCell]| {
            let b = &c[select_best(c).unwrap()];
            (b.gamma, b.momentum)
        };
        assert_eq!(pick(&cells), (1.0, 0.0));
        cells.reverse();
        assert_eq!(pick(&cells), (1.0, 0.0));
        cells[0].diverged = 1;
        cells.iter_mut().for_each(|c| {
            if c.gamma == 1.0 {
                c.diverged = 1
            }
        });
        assert_eq!(pick(&cells), (10.0, 0.8));
    }

    fn synth() -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetKind::Synth,
            classes: None,
            subset: None,
            synth_n: 120,
            synth_dim: 4,
            epochs: 10,
            repeats: 3,
            ..ExperimentConfig::logistic(Method::Gd)
        }
    }

    #[test]
    fn single_cell_is_mean_of_repeats() {
        let cfg = ExperimentConfig {
            gamma_grid: vec![0.5],
            momentum_grid: vec![0.0],
            gamma: 0.5,
            ..synth()
        };
        let grid = run_grid(&cfg).unwrap();
        assert_eq!(grid.cells.len(), 1);
        let ds = load_dataset(&cfg).unwrap();
        let mut mean = vec![0.0; 10];
        for r in 0..3 {
            let rec = run_prepared(&cfg, &prepare(&cfg, &ds, r).unwrap()).unwrap();
            accumulate(&mut mean, &rec.epoch_costs);
        }
        for (a, b) in grid.cells[0].mean_epoch_costs.iter().zip(&mean) {
            assert!((a - b / 3.0).abs() < 1e-15);
        }
        let one = ExperimentConfig { repeats: 1, ..cfg };
        assert_eq!(
            run_grid(&one).unwrap().cells[0].mean_epoch_costs,
            run(&one).unwrap().epoch_costs
        );
    }

    #[test]
    fn diverging_cell_is_flagged() {
        let cfg = ExperimentConfig {
            gamma_grid: vec![0.1, f64::MAX],
            momentum_grid: vec![0.9],
            synth_separation: 0.5,
            ..synth()
        };
        let grid = run_grid(&cfg).unwrap();
        assert!(grid.cells[0].is_valid());
        assert!(!grid.cells[1].is_valid());
        assert_eq!(grid.cells[1].diverged, 1);
        assert_eq!(grid.best_cell().unwrap().gamma, 0.1);
        assert!(grid.cells[1].mean_epoch_costs.is_empty());
    }
}
