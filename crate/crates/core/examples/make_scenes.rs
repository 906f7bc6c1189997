//! Writes the scripted fixture scenes as scenario directories that the
//! command-line tool reads.
//!
//! ```bash
//! cargo run --example make_scenes -- scenes
//! cargo run --bin handover-sim -- run scenes/cylinder_clean --out out/
//! ```

use std::error::Error;
use std::path::PathBuf;

use handover_sim::ingest::write_scenario;
use handover_sim::synth::standard_scenes;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let root = std::env::args()
        .nth(1)
        .filter(|a| !a.starts_with('-'))
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("handover_scenes"));
    for builder in standard_scenes() {
        let scenario = builder.build();
        let dir = root.join(&scenario.id);
        write_scenario(&dir, &scenario)?;
        println!(
            "{:<20} {:>3} frames  {}",
            scenario.id,
            scenario.frames.len(),
            dir.display()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
