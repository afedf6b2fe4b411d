//! Differential testing: the fast pipeline against a brute-force reference
//! that enumerates pixel sets, on random frame pairs with void, crowd and
//! invalid depth.
//!
//!     cargo run --example oracle_check -- 500

use pdcq::synth::oracle::differential_check;

fn main() -> pdcq::Result<()> {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    let summary = differential_check(32, trials, 7, &[0.1, 0.25, 0.5], None)?;
    println!(
        "{} trials, {} score comparisons, largest difference {:e}",
        summary.trials, summary.checks, summary.max_abs_diff
    );
    match summary.divergence {
        None => println!("pipeline and reference agree"),
        Some(d) => {
            println!("divergence: {d}");
            std::process::exit(1);
        }
    }
    Ok(())
}
