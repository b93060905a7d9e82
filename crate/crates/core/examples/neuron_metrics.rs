//! ν coefficients and single-neuron metrics for every activation family,
//! checked against the brute-force Fisher oracle.

use rfim::activations::ActivationKind;
use rfim::metric::neuron_rfim;
use rfim::oracle::{observed_fisher_oracle, FisherMethod, OutputModel, Subsystem};

fn main() {
    let w = [0.4, -0.7, 0.2];
    let x = [1.0, 0.5];
    let kinds = [
        ("tanh", ActivationKind::tanh()),
        ("sigm", ActivationKind::sigm()),
        ("relu_w", ActivationKind::relu_omega(0.0, 0.1, 1.0)),
        ("elu", ActivationKind::elu(1.0, 1.0)),
    ];
    println!("{:>7} {:>10} {:>10} {:>10}", "family", "nu(-1)", "nu(0)", "nu(1)");
    for (name, k) in &kinds {
        println!(
            "{name:>7} {:>10.5} {:>10.5} {:>10.5}",
            k.nu(-1.0).value(),
            k.nu(0.0).value(),
            k.nu(1.0).value()
        );
    }
    println!();
    for (name, k) in &kinds {
        let g = neuron_rfim(k, &w, &x).unwrap();
        let method = if k.is_bernoulli() {
            FisherMethod::Enumerate
        } else {
            FisherMethod::MonteCarlo {
                samples: 200_000,
                seed: 1,
            }
        };
        let est = observed_fisher_oracle(&Subsystem::Neuron(OutputModel::for_activation(k)), &w, &x, method).unwrap();
        let rel = g.sub(&est.matrix).frobenius_norm() / est.matrix.frobenius_norm();
        println!(
            "{name:>7}: G[0][0]={:.6} oracle={:.6} rel_err={rel:.2e}",
            g[(0, 0)],
            est.matrix[(0, 0)]
        );
    }
}
