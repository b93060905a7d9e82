//! Plain, whitened and natural gradient training of a logistic classifier
//! on "3" vs "5" (synthetic blobs when MNIST is not available).

use rfim::experiment::{run, DatasetKind, ExperimentConfig, Method};

fn main() {
    let have_mnist = rfim::data::find_mnist(&rfim::data::default_data_dir()).is_some();
    for m in [Method::Gd, Method::WhiteGd, Method::Ngd, Method::WhiteNgd] {
        let mut cfg = ExperimentConfig {
            gamma: if m.is_natural() { 1.0 } else { 10.0 },
            momentum: 0.8,
            epochs: 30,
            ..ExperimentConfig::logistic(m)
        };
        if !have_mnist {
            cfg.dataset = DatasetKind::Synth;
            cfg.classes = None;
            cfg.subset = None;
        }
        let rec = run(&cfg).unwrap();
        println!(
            "{m:>8}: cost after 1/10/30 epochs = {:.3e} / {:.3e} / {:.3e}, train error {:.3}",
            rec.epoch_costs[0], rec.epoch_costs[9], rec.epoch_costs[29], rec.epoch_errors[29]
        );
    }
}
