//! Train a small relu MLP with SGD, Adam and the relative natural gradient
//! and compare the τ-sharp ratios. The last row uses a faster-moving metric
//! average, which matters on runs this short.

use rfim::experiment::{run, tau_sharp_ratio, DatasetKind, ExperimentConfig, Method};

fn main() {
    let have_mnist = rfim::data::find_mnist(&rfim::data::default_data_dir()).is_some();
    let runs = [
        (Method::Sgd, 0.995),
        (Method::Adam, 0.995),
        (Method::Rngd, 0.995),
        (Method::Rngd, 0.95),
    ];
    for (m, lambda) in runs {
        let mut cfg = ExperimentConfig {
            subset: Some(3000),
            epochs: 5,
            lambda,
            ..ExperimentConfig::mlp(m)
        };
        if !have_mnist {
            cfg.dataset = DatasetKind::Synth;
            cfg.synth_n = 2000;
            cfg.synth_dim = 20;
            cfg.layer_sizes = vec![20, 16, 16, 2];
        }
        let rec = run(&cfg).unwrap();
        let (mean, std) = tau_sharp_ratio(&rec.costs, 0.5).unwrap();
        let label = if m == Method::Rngd {
            format!("{m} l={lambda}")
        } else {
            m.to_string()
        };
        println!(
            "{label:>12} (gamma {}): {} iterations, tau=0.5 ratio {mean:.4} ± {std:.4}, train error {:.3}",
            cfg.gamma,
            rec.iterations(),
            rec.epoch_errors.last().unwrap()
        );
    }
}
