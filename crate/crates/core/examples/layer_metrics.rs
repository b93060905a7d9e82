//! Linear, nonlinear and softmax layer metrics: block structure, the
//! softmax null direction, and agreement with enumeration.

use rfim::activations::ActivationKind;
use rfim::linalg::{augment, Matrix, SymmetricEigen};
use rfim::metric::{linear_layer_rfim, nonlinear_layer_rfim, softmax_rfim};
use rfim::oracle::{observed_fisher_oracle, FisherMethod, Subsystem};

fn main() {
    let x = [0.3, -1.2, 0.8];
    let w = Matrix::from_fn(4, 3, |i, j| 0.3 * (i as f64) - 0.2 * (j as f64) + 0.1);

    let lin = linear_layer_rfim(1.0, &x, 3).unwrap();
    println!(
        "linear layer: {} blocks of size {}",
        lin.num_outputs(),
        lin.input_dim() + 1
    );

    let tanh = ActivationKind::tanh();
    let layer = nonlinear_layer_rfim(&tanh, &w, &x).unwrap();
    for (j, b) in layer.blocks().iter().enumerate() {
        println!("tanh neuron {j}: trace {:.5}", b.trace());
    }

    let g = softmax_rfim(&w, &x).unwrap();
    let eig = SymmetricEigen::new(g.matrix()).unwrap();
    let xt = augment(&x);
    let stacked: Vec<f64> = (0..3).flat_map(|_| xt.iter().copied()).collect();
    println!(
        "softmax metric: dim {}, min eigenvalue {:.2e}, |G (x;x;x)| = {:.2e}",
        g.matrix().rows(),
        eig.min_value(),
        g.matrix().matvec(&stacked).norm()
    );
    let params: Vec<f64> = (0..3).flat_map(|j| w.column(j).into_inner()).collect();
    let oracle =
        observed_fisher_oracle(&Subsystem::Softmax { outputs: 3 }, &params, &x, FisherMethod::Enumerate).unwrap();
    println!(
        "softmax vs enumeration: max |diff| = {:.2e}",
        g.matrix().sub(&oracle.matrix).max_abs()
    );
}
