//! Cross-checks the analytic safe region against a 1 mm grid on random
//! scenes, then shows that a 3 mm margin error is caught.
//!
//! ```bash
//! cargo run --example oracle_fuzz
//! ```

use std::error::Error;

use handover_sim::grasp::oracle::fuzz;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let clean = fuzz(500, 7, 0.0);
    println!(
        "{} random scenes, {} disagreements",
        clean.scenes,
        clean.failures.len()
    );
    if !clean.failures.is_empty() {
        return Err("analytic region disagrees with the grid".into());
    }

    let broken = fuzz(500, 7, 3.0);
    println!(
        "with the margin off by 3 mm: {} of {} scenes disagree",
        broken.failures.len(),
        broken.scenes
    );
    if let Some((i, diff)) = broken.failures.first() {
        println!(
            "  scene {i}: {} grid heights misclassified",
            diff.mismatched_heights.len()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
