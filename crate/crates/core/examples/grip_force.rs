//! From mass to joint effort and back: the force needed to hold a container
//! through peak acceleration, the effort the gripper is told to use, and
//! whether the grip survives when the mass was guessed wrong.
//!
//! ```bash
//! cargo run --example grip_force
//! ```

use std::error::Error;

use handover_sim::grasp::{effort_for_force, force_for_effort, required_force};
use handover_sim::params::GripModel;
use handover_sim::sim::grip_stability;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let model = GripModel::default();
    println!(
        "{:>8} {:>9} {:>8} {:>9}",
        "mass g", "force N", "effort", "clamped"
    );
    for mass in [0.0, 20.0, 100.0, 250.0, 500.0, 900.0] {
        let f = required_force(mass, &model);
        let e = effort_for_force(f, &model);
        println!("{mass:>8.0} {f:>9.3} {:>8.4} {:>9}", e.issued, e.clamped);
    }

    let true_mass = 400.0;
    for guess in [400.0, 380.0, 200.0] {
        let effort = effort_for_force(required_force(guess, &model), &model).issued;
        let applied = force_for_effort(effort, &model);
        let cruising = grip_stability(applied, true_mass, 0.0, &model);
        let ramping = grip_stability(applied, true_mass, model.a_max, &model);
        println!("guessed {guess:.0} g for {true_mass:.0} g: holds at rest {cruising}, at peak acceleration {ramping}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
