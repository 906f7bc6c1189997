//! Simulated human-to-robot container handover: perception of a container
//! held by a person, grasp planning away from their hand, a kinematic
//! gripper simulation and the safety scores of the result.

pub mod commands;
pub mod geom;
pub mod grasp;
pub mod ingest;
pub mod params;
pub mod perception;
pub mod safety;
pub mod sim;
pub mod synth;
