//! Central-difference gradient check of every layer and of a micro network.
//!
//! `cargo run --release --example gradcheck`

use sketchnet::nn::gradcheck::run_suite;

fn main() -> sketchnet::Result<()> {
    let start = std::time::Instant::now();
    let reports = run_suite(0)?;
    for r in &reports {
        println!(
            "{:<24} {:>5} entries  max rel err {:.2e}  tol {:.0e}  {}",
            r.target,
            r.checked,
            r.max_relative_error,
            r.tolerance,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    println!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
