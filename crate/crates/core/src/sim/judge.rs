use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::scene::SceneSpec;
use super::world::SimWorld;

/// Goal predicate of a task; object references are scene object ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Goal {
    /// Scores the fraction of `objects` inside `container` (0.5 each for two).
    Contained { objects: Vec<String>, container: String },
    Pressed { object: String, part: String },
    OpenFraction { object: String, min: f64 },
    Held { object: String },
    Detached { object: String },
    PlacedOn { object: String, target: String },
}

impl Goal {
    pub fn check_references(&self, scene: &SceneSpec) -> Result<()> {
        let ids: Vec<&String> = match self {
            Goal::Contained { objects, container } => objects.iter().chain(std::iter::once(container)).collect(),
            Goal::Pressed { object, .. }
            | Goal::OpenFraction { object, .. }
            | Goal::Held { object }
            | Goal::Detached { object } => vec![object],
            Goal::PlacedOn { object, target } => vec![object, target],
        };
        for id in ids {
            if scene.object_index(id).is_none() {
                return Err(Error::InvalidParameter(format!("task references unknown object '{id}'")));
            }
        }
        if let Goal::Pressed { object, part } = self {
            let o = &scene.objects[scene.object_index(object).unwrap_or_default()];
            if !o.parts.iter().any(|p| &p.name == part) {
                return Err(Error::InvalidParameter(format!("object '{object}' has no part '{part}'")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub query: String,
    pub goal: Goal,
}

/// Task score in {0, 0.5, 1} for the shipped tasks.
pub fn judge(world: &SimWorld, task: &TaskSpec) -> f64 {
    let state = |id: &str| world.spec().object_index(id).map(|i| &world.objects[i]);
    let holds = |b: bool| if b { 1.0 } else { 0.0 };
    match &task.goal {
        Goal::Contained { objects, container } => {
            if objects.is_empty() {
                return 0.0;
            }
            let inside = objects
                .iter()
                .filter(|o| state(o).is_some_and(|s| s.contained_in.as_deref() == Some(container.as_str())))
                .count();
            inside as f64 / objects.len() as f64
        }
        Goal::Pressed { object, part } => holds(state(object).is_some_and(|s| s.pressed.contains(part))),
        Goal::OpenFraction { object, min } => holds(state(object).is_some_and(|s| s.open_fraction >= *min)),
        Goal::Held { object } => holds(world.held().is_some_and(|h| world.spec().objects[h].id == *object)),
        Goal::Detached { object } => holds(state(object).is_some_and(|s| s.detached)),
        Goal::PlacedOn { object, target } => holds(state(object).is_some_and(|s| {
            s.supported_by.as_deref() == Some(target.as_str()) || s.contained_in.as_deref() == Some(target.as_str())
        })),
    }
}

/// Whether the robot base stands within 60° of the outward joint axis of
/// `object` (the side its drawer opens toward).
pub fn approach_side_correct(world: &SimWorld, object: &str) -> bool {
    let Some(i) = world.spec().object_index(object) else { return false };
    let Some(front) = world.joint_axis_world(i) else { return false };
    let c = world.object_centroid(i);
    let (dx, dy) = (world.base.x - c.x, world.base.y - c.y);
    let d = dx.hypot(dy);
    d > 0.0 && (dx * front.x + dy * front.y) / d >= 0.5
}
