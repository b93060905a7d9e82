//! Metric of the first layer of a two-layer tanh network seen through its
//! output, against brute-force enumeration.

use rfim::activations::ActivationKind;
use rfim::linalg::Matrix;
use rfim::metric::{two_layer_rfim, TwoLayerVariant};
use rfim::oracle::{observed_fisher_oracle, FisherMethod, OutputModel, Subsystem};

fn main() {
    let tanh = ActivationKind::tanh();
    let x = [0.5, -0.4, 0.9];
    let w = Matrix::from_fn(4, 2, |i, j| 0.25 * i as f64 - 0.5 * j as f64);
    let c = Matrix::from_fn(3, 2, |i, j| 0.6 - 0.3 * (i + j) as f64);
    let g = two_layer_rfim(&tanh, &w, &c, &x, TwoLayerVariant::Literal).unwrap();
    let params: Vec<f64> = (0..2).flat_map(|j| w.column(j).into_inner()).collect();
    let sys = Subsystem::TwoLayer {
        hidden: tanh,
        output: OutputModel::BernoulliTanh,
        second: c,
    };
    let oracle = observed_fisher_oracle(&sys, &params, &x, FisherMethod::Enumerate).unwrap();
    println!(
        "metric is {}x{} with {} neuron blocks",
        g.matrix().rows(),
        g.matrix().cols(),
        g.num_blocks()
    );
    println!("cross block (0,1) trace: {:.6}", g.block(0, 1).trace());
    println!(
        "max |analytic - enumeration| = {:.2e}",
        g.matrix().sub(&oracle.matrix).max_abs()
    );
}
