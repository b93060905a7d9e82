use rfim::data::{synth_blobs, Dataset};
use rfim::experiment::{
    load_dataset, prepare, read_curves, run, run_grid, run_prepared, write_curves, DatasetKind, ExperimentConfig,
    Method,
};
use rfim::whiten::Whitener;

fn synth_logistic(method: Method) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetKind::Synth,
        classes: None,
        subset: None,
        synth_n: 200,
        synth_dim: 6,
        synth_separation: 1.0,
        epochs: 20,
        gamma: 0.5,
        momentum: 0.0,
        ..ExperimentConfig::logistic(method)
    }
}

#[test]
fn white_gd_on_prewhitened_data_matches_gd() {
    let raw = synth_blobs(200, 6, 1.0, 3).unwrap();
    let w = Whitener::fit(&raw.features).unwrap();
    let white = Dataset::new(
        w.apply_rows(&raw.features).unwrap(),
        raw.labels.clone(),
        raw.class_names.clone(),
    )
    .unwrap();
    let cfg = ExperimentConfig {
        train_fraction: 1.0,
        ..synth_logistic(Method::Gd)
    };
    let gd = run_prepared(&cfg, &prepare(&cfg, &white, 0).unwrap()).unwrap();
    let wcfg = ExperimentConfig {
        method: Method::WhiteGd,
        ..cfg
    };
    let wdata = prepare(&wcfg, &white, 0).unwrap();
    assert_eq!(wdata.whitener.as_ref().unwrap().dropped(), 0);
    let wgd = run_prepared(&wcfg, &wdata).unwrap();
    assert_eq!(gd.costs.len(), wgd.costs.len());
    for (a, b) in gd.costs.iter().zip(&wgd.costs) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}

#[test]
fn gd_with_tiny_step_is_monotone() {
    let cfg = ExperimentConfig {
        gamma: 1e-3,
        epochs: 30,
        ..synth_logistic(Method::Gd)
    };
    let rec = run(&cfg).unwrap();
    assert!(rec.costs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn whitened_natural_gradient_beats_plain_gradient_on_blobs() {
    let gd = run(&ExperimentConfig {
        gamma: 0.5,
        ..synth_logistic(Method::Gd)
    })
    .unwrap();
    let ngd = run(&ExperimentConfig {
        gamma: 0.5,
        ..synth_logistic(Method::WhiteNgd)
    })
    .unwrap();
    assert!(ngd.final_cost().unwrap() < gd.final_cost().unwrap());
}

#[test]
fn rngd_with_frozen_identity_metric_is_sgd() {
    let base = ExperimentConfig {
        dataset: DatasetKind::Synth,
        synth_n: 256,
        synth_dim: 10,
        layer_sizes: vec![10, 8, 8, 2],
        epochs: 4,
        batch_size: Some(32),
        gamma: 0.05,
        momentum: 0.0,
        lambda: 1.0,
        refresh_period: 3,
        ..ExperimentConfig::mlp(Method::Sgd)
    };
    let ds = load_dataset(&base).unwrap();
    let data = prepare(&base, &ds, 0).unwrap();
    let sgd = run_prepared(&base, &data).unwrap();
    let rngd = run_prepared(
        &ExperimentConfig {
            method: Method::Rngd,
            ..base.clone()
        },
        &data,
    )
    .unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&sgd.costs), bits(&rngd.costs));
    let live = run_prepared(
        &ExperimentConfig {
            method: Method::Rngd,
            lambda: 0.9,
            ..base
        },
        &data,
    )
    .unwrap();
    assert_ne!(bits(&sgd.costs), bits(&live.costs));
}

#[test]
fn runs_are_deterministic_per_seed() {
    let cfg = ExperimentConfig {
        dataset: DatasetKind::Synth,
        synth_n: 128,
        synth_dim: 5,
        layer_sizes: vec![5, 4, 2],
        epochs: 2,
        batch_size: Some(16),
        ..ExperimentConfig::mlp(Method::Rngd)
    };
    let csv = |c: &ExperimentConfig| {
        let mut out = Vec::new();
        write_curves(&mut out, &run(c).unwrap().costs, 10).unwrap();
        out
    };
    assert_eq!(csv(&cfg), csv(&cfg));
    assert_ne!(csv(&cfg), csv(&ExperimentConfig { seed: 1, ..cfg.clone() }));
}

#[test]
fn grid_table_and_best_curve() {
    let cfg = ExperimentConfig {
        gamma_grid: vec![0.01, 1.0],
        momentum_grid: vec![0.0, 0.8],
        repeats: 2,
        ..synth_logistic(Method::Gd)
    };
    let grid = run_grid(&cfg).unwrap();
    assert_eq!(grid.cells.len(), 4);
    assert!(grid.cells.iter().all(|c| c.runs == 2 && c.mean_costs.len() == 20));
    let best = grid.best_cell().unwrap();
    assert!(grid.cells.iter().all(|c| best.final_cost() <= c.final_cost()));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("best.csv");
    rfim::experiment::emit_curves(&best.mean_costs, &p, 10).unwrap();
    let rows = read_curves(&p).unwrap();
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[19].cost, best.mean_costs[19]);
}

#[test]
fn config_json_overlays_preset() {
    let cfg = ExperimentConfig::from_json(r#"{"method": "RNGD", "epochs": 2, "lambda": 0.9}"#, None).unwrap();
    assert_eq!(cfg.method, Method::Rngd);
    assert_eq!((cfg.epochs, cfg.lambda, cfg.refresh_period), (2, 0.9, 100));
    assert_eq!(cfg.batch_size, Some(64));
    let back = ExperimentConfig::from_json(&cfg.to_json(), None).unwrap();
    assert_eq!(back, cfg);
    assert!(ExperimentConfig::from_json(r#"{"method": "NGD", "layer_size": [1]}"#, None).is_err());
    assert!(ExperimentConfig::from_json(r#"{"method": "NGD", "model": "mlp"}"#, None).is_err());
    assert!(ExperimentConfig::from_json(r#"{"gamma_grid": []}"#, None).is_err());
}
