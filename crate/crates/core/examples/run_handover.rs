//! One complete handover: a scripted person holds a half-full water bottle
//! from below, the robot grasps above the hand, carries it to the table and
//! the run is scored.
//!
//! ```bash
//! cargo run --example run_handover
//! ```

use std::error::Error;

use handover_sim::perception::ContentClass;
use handover_sim::safety::build_report;
use handover_sim::sim::run_handover;
use handover_sim::synth::{Profile, SceneBuilder};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let scenario = SceneBuilder::new("bottle")
        .container(
            "bottle",
            Profile::new(vec![(0.0, 33.0), (130.0, 33.0), (160.0, 15.0)]),
        )
        .filling(ContentClass::W5, ContentClass::W5)
        .mass_ratio(1.0)
        .build();

    let log = run_handover(&scenario, 0)?;
    for e in &log.events {
        println!("{:6.3}s  {}", e.time, e.kind.label());
    }
    if let Some(g) = &log.grasp {
        println!(
            "grasped {:.0} mm above the centroid, jaws {:.1} mm, effort {:.4} -> {:.3} N",
            g.height, g.width, g.effort.issued, g.applied_force
        );
    }

    let r = build_report(&log, &scenario);
    println!(
        "psi_h {:.1}%  psi_f {:.1}%  delta {:.1}%  mass bias {:+.1} g",
        r.psi_h * 100.0,
        r.psi_f.value * 100.0,
        r.delta * 100.0,
        r.delta_m
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
