//! Every example runs to completion.

#[path = "../examples/batch_sweep.rs"]
mod batch_sweep;
#[path = "../examples/fuse_content.rs"]
mod fuse_content;
#[path = "../examples/grip_force.rs"]
mod grip_force;
#[path = "../examples/make_scenes.rs"]
mod make_scenes;
#[path = "../examples/oracle_fuzz.rs"]
mod oracle_fuzz;
#[path = "../examples/reconstruct_shape.rs"]
mod reconstruct_shape;
#[path = "../examples/run_handover.rs"]
mod run_handover;
#[path = "../examples/safe_grasp_region.rs"]
mod safe_grasp_region;
#[path = "../examples/safety_curves.rs"]
mod safety_curves;
#[path = "../examples/triangulate_and_track.rs"]
mod triangulate_and_track;

#[test]
fn triangulate_and_track_runs() {
    triangulate_and_track::run_example().unwrap();
}

#[test]
fn reconstruct_shape_runs() {
    reconstruct_shape::run_example().unwrap();
}

#[test]
fn fuse_content_runs() {
    fuse_content::run_example().unwrap();
}

#[test]
fn safe_grasp_region_runs() {
    safe_grasp_region::run_example().unwrap();
}

#[test]
fn grip_force_runs() {
    grip_force::run_example().unwrap();
}

#[test]
fn run_handover_runs() {
    run_handover::run_example().unwrap();
}

#[test]
fn safety_curves_runs() {
    safety_curves::run_example().unwrap();
}

#[test]
fn make_scenes_runs() {
    make_scenes::run_example().unwrap();
}

#[test]
fn batch_sweep_runs() {
    batch_sweep::run_example().unwrap();
}

#[test]
fn oracle_fuzz_runs() {
    oracle_fuzz::run_example().unwrap();
}
