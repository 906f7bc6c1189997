//! Physical estimates derived from the ingested traces: hand frames, the
//! filtered container track, the container shape and the object mass.

mod content;
mod hand;
mod mesh;
mod shape;
mod track;

use thiserror::Error;

pub use content::{
    estimate_mass, fuse_content_step, fuse_stream, ClassProbs, ContentBelief, ContentClass,
    ContentType, TransitionMatrix, ZeroPosterior,
};
pub use hand::{
    hand_frame, HandFrame, HandSide, INDEX_MCP, KEYPOINTS, MIDDLE_MCP, PINKY_MCP, WRIST,
};
pub use mesh::{mesh_export, shape_mesh, TriMesh};
pub use shape::{lode_reconstruct, shape_metrics, ContainerShape, ShapeMetrics, Slice};
pub use track::{holding_hand, track_container, ContainerPose, ContainerTrack};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("no frame yields a container centroid")]
    NoValidFrames,
    #[error("no circumference fits inside both silhouettes")]
    EmptyIntersection,
    #[error("shape needs at least two slices with positive radius")]
    DegenerateShape,
    #[error("invalid container shape: {0}")]
    InvalidShape(String),
}
