//! Finite-difference check of every training loss on random small graphs.
//!
//! ```text
//! cargo run --release --example gradcheck -- 20
//! ```

use glem::harness::verify::{gradcheck_suite, TOLERANCE};

fn main() -> glem::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    for r in gradcheck_suite(trials, 0)? {
        let verdict = if r.passed() { "ok" } else { "FAILED" };
        println!("{:<14} {:>3} instances  max rel err {:.2e}  {verdict}", r.loss, r.trials, r.max_rel_err);
    }
    println!("tolerance {TOLERANCE:.0e}");
    Ok(())
}
