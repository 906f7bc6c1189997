//! How the scores respond: human safety against hand clearance for several
//! sharpness values, and object safety against the relative force error.
//!
//! ```bash
//! cargo run --example safety_curves
//! ```

use std::error::Error;

use handover_sim::params::SafetyParams;
use handover_sim::safety::{human_safety, object_safety};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let base = SafetyParams::default();
    let sharpness = [0.5, 0.7, 0.9, 0.995];

    print!("{:>8}", "l mm");
    for c in sharpness {
        print!("{c:>9}");
    }
    println!();
    for l in [0.0, 5.0, 10.5, 15.0, 21.0, 30.0, 42.0] {
        print!("{l:>8.1}");
        for c in sharpness {
            print!("{:>9.4}", human_safety(l, &SafetyParams { c, ..base }));
        }
        println!();
    }

    println!("\nrelative force error -> object safety (c = {})", base.c);
    for err in [0.0, 0.05, 0.1, 0.25, 0.5, 1.0] {
        println!(
            "{err:>5.2} -> {:.4}",
            object_safety(1.0 + err, 1.0, &base).value
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
