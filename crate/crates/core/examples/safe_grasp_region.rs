//! Where may the gripper close? A hand wraps a 200 mm bottle in the middle;
//! its keypoints split the graspable range into two pieces and the larger
//! one is used.
//!
//! ```bash
//! cargo run --example safe_grasp_region
//! ```

use std::error::Error;

use handover_sim::geom::Point3;
use handover_sim::grasp::{graspable_range, plan_grasp, safe_region, unsafe_heights};
use handover_sim::params::ParameterSet;
use handover_sim::perception::{hand_frame, ContainerShape, HandSide};
use handover_sim::synth::wrapping_hand;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let params = ParameterSet::default();
    let shape = ContainerShape::from_radii(-100.0, 2.0, &[32.0; 101])?;
    let t = Point3::new(0.0, 450.0, 260.0);
    let hand = wrapping_hand(t, 32.0, t.z - 30.0, t.z - 10.0, HandSide::Left);

    let z = graspable_range(&shape, params.gripper_width)?;
    let occluded = unsafe_heights([&hand], &t, 2.0 * shape.max_radius());
    let region = safe_region(z, &occluded, params.margin());
    println!(
        "graspable {:.0}..{:.0} mm, margin {:.0} mm",
        z.lo,
        z.hi,
        params.margin()
    );
    println!(
        "{} keypoints occlude heights {:.0}..{:.0}",
        occluded.len(),
        occluded.iter().copied().fold(f64::INFINITY, f64::min),
        occluded.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    );
    for piece in &region.safe {
        println!(
            "  safe {:.0}..{:.0} ({:.0} mm)",
            piece.lo,
            piece.hi,
            piece.length()
        );
    }

    let frame = hand_frame(&hand);
    let plan = plan_grasp(&region, &shape, &t, Some(&frame));
    match plan.target {
        Some(g) => println!(
            "grasp at ({:.0}, {:.0}, {:.0}) with jaws {:.0} mm apart, approaching along ({:.2}, {:.2}, {:.2})",
            g.x,
            g.y,
            g.z,
            plan.gripper_width,
            plan.approach().x,
            plan.approach().y,
            plan.approach().z
        ),
        None => println!("no safe grasp region"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
