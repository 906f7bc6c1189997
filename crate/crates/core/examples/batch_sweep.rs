//! A small sweep: two containers times two fillings, written to disk and
//! run as a batch. Prints the per-configuration human safety matrix.
//!
//! ```bash
//! cargo run --example batch_sweep
//! ```

use std::error::Error;

use handover_sim::commands::{cmd_batch, RunConfig};
use handover_sim::ingest::write_scenario;
use handover_sim::perception::ContentClass;
use handover_sim::synth::{Profile, SceneBuilder};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let root = tempfile::tempdir()?;
    let containers = [
        ("cup", Profile::cone(30.0, 38.0, 100.0)),
        ("jar", Profile::cylinder(36.0, 140.0)),
    ];
    let fillings = [ContentClass::Empty, ContentClass::R5];
    for (label, profile) in &containers {
        for class in fillings {
            let id = format!("{label}_{}", class.label());
            let scene = SceneBuilder::new(&id)
                .container(label, profile.clone())
                .filling(class, class);
            let scene = if class == ContentClass::Empty {
                scene
            } else {
                scene.mass_ratio(1.0)
            };
            write_scenario(&root.path().join("scenes").join(&id), &scene.build())?;
        }
    }

    let pattern = format!("{}/scenes/*", root.path().display());
    let config = RunConfig::new(root.path().join("out"));
    let reports = cmd_batch(&pattern, &config, Some(2))?;
    for r in &reports {
        println!(
            "{:<12} psi_h {:.3}  psi_f {:.3}  delta {:.3}  {}",
            r.scenario,
            r.psi_h,
            r.psi_f.value,
            r.delta,
            r.events.join(",")
        );
    }
    println!(
        "\n{}",
        std::fs::read_to_string(root.path().join("out/matrix_psi_f.csv"))?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
