//! Deterministic kinematic simulator: scene templates, world state, frame
//! rendering and task judging.

pub mod judge;
pub mod render;
pub mod scene;
pub mod shapes;
pub mod templates;
pub mod world;

use serde::{Deserialize, Serialize};

pub use judge::{approach_side_correct, judge, Goal, TaskSpec};
pub use render::{camera_pose, render_segmented_frame};
pub use scene::{JointSpec, ObjectSpec, PartBehavior, PartSpec, SceneSpec};
pub use templates::{generate_scene, TEMPLATES};
pub use world::{top_down, ObjectState, PullOutcome, ReleaseOutcome, SimWorld};

/// Perception and execution noise; all zero by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct NoiseConfig {
    /// Probability that a visible object is split into two segments.
    pub p_oversegment: f64,
    /// Standard deviation of the affordance centroid jitter (meters).
    pub aff_jitter_sigma: f64,
    /// Probability that localization returns another part of the object.
    pub p_wrong_part: f64,
    /// Probability that a grasped object slips out after the grasp.
    pub p_slip: f64,
}
