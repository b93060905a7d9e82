//! Run the property suites and print the report, then repeat the oracle
//! suite with a deliberately wrong ν to show that it is caught.

use rfim::experiment::{verify, Suite, VerifyOptions};

fn main() {
    let opts = VerifyOptions {
        mc_samples: 50_000,
        ..VerifyOptions::default()
    };
    let report = verify(&Suite::ALL, &opts);
    print!("{report}");
    println!("all passed: {}", report.all_passed());
    let broken = verify(&[Suite::Oracles], &VerifyOptions { nu_scale: 2.0, ..opts });
    let caught = broken.results.iter().filter(|r| !r.passed()).count();
    println!(
        "with nu doubled: {caught} of {} oracle properties fail",
        broken.results.len()
    );
}
