//! Fit a whitener on data with constant and correlated columns and check
//! the whitened moments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfim::linalg::Matrix;
use rfim::whiten::{whitening_residuals, Whitener};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let xs = Matrix::from_fn(500, 6, |_, j| match j {
        0 => 0.0,
        5 => 1.0,
        _ => rng.gen_range(0.0..1.0),
    });
    let mixed = Matrix::from_fn(500, 6, |i, j| {
        if j == 4 {
            xs[(i, 1)] + 2.0 * xs[(i, 2)]
        } else {
            xs[(i, j)]
        }
    });
    let w = Whitener::fit(&mixed).unwrap();
    println!(
        "input dims {}, retained {}, dropped {}",
        w.input_dim(),
        w.retained(),
        w.dropped()
    );
    println!("eigenvalues: {:?}", w.eigenvalues);
    let (mean, cov) = whitening_residuals(&w.apply_rows(&mixed).unwrap());
    println!("max |mean| = {mean:.1e}, max |cov - I| = {cov:.1e}");
    println!("first sample whitened: {:?}", w.apply(mixed.row(0)).unwrap());
}
