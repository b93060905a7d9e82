//! The three oracle estimators (enumeration, Monte Carlo, finite-difference
//! Hessian) on one Gaussian relu neuron.

use rfim::activations::ActivationKind;
use rfim::metric::neuron_rfim;
use rfim::oracle::{observed_fisher_oracle, FisherMethod, OutputModel, Subsystem};

fn main() {
    let kind = ActivationKind::relu_omega(0.0, 0.1, 1.0);
    let (w, x) = ([0.8, -0.3], [1.5]);
    let sys = Subsystem::Neuron(OutputModel::for_activation(&kind));
    let exact = neuron_rfim(&kind, &w, &x).unwrap();
    match observed_fisher_oracle(&sys, &w, &x, FisherMethod::Enumerate) {
        Ok(_) => unreachable!("continuous outputs"),
        Err(e) => println!("enumeration: {e}"),
    }
    for samples in [1_000, 100_000] {
        let mc = observed_fisher_oracle(&sys, &w, &x, FisherMethod::MonteCarlo { samples, seed: 0 }).unwrap();
        let se = mc.std_error.unwrap();
        println!(
            "monte carlo n={samples:>6}: G00={:.5} (analytic {:.5}, se {:.1e})",
            mc.matrix[(0, 0)],
            exact[(0, 0)],
            se[(0, 0)]
        );
    }
    let h = observed_fisher_oracle(
        &sys,
        &w,
        &x,
        FisherMethod::HessianFd {
            step: 1e-4,
            samples: 100_000,
            seed: 0,
        },
    )
    .unwrap();
    println!("neg. hessian      : G00={:.5}", h.matrix[(0, 0)]);
}
