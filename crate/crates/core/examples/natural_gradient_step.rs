//! One natural gradient step is invariant to a linear change of
//! coordinates, while a plain gradient step is not.

use rfim::linalg::Matrix;
use rfim::optim::ngd_logistic_step;

fn main() {
    let z = Matrix::from_fn(30, 3, |i, j| {
        if j == 2 {
            1.0
        } else {
            ((i * (j + 3)) % 7) as f64 / 7.0 - 0.4
        }
    });
    let y: Vec<usize> = (0..30).map(|i| (i % 3 == 0) as usize).collect();
    let j = Matrix::from_vec(3, 3, vec![2.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.3, 0.0, 1.0]).unwrap();
    let jinv = Matrix::from_vec(3, 3, vec![0.5, -0.25, 0.0, 0.0, 1.0, 0.0, -0.15, 0.075, 1.0]).unwrap();
    let theta = vec![0.1, -0.2, 0.05];

    let mut t = theta.clone();
    ngd_logistic_step(&mut t, &z, &y, 1.0, 0.0).unwrap();
    let lam = j.matvec(&theta).into_inner();
    let mut l = lam.clone();
    ngd_logistic_step(&mut l, &z.matmul(&jinv), &y, 1.0, 0.0).unwrap();
    let dl: Vec<f64> = l.iter().zip(&lam).map(|(a, b)| a - b).collect();
    let mapped = jinv.matvec(&dl);
    for k in 0..3 {
        println!(
            "dtheta[{k}] = {:+.8}  J^-1 dLambda[{k}] = {:+.8}",
            t[k] - theta[k],
            mapped[k]
        );
    }
}
