use serde::{Deserialize, Serialize};

use crate::config::Mode;
use crate::error::{Error, Result};
use crate::geom::{PointCloud, Pose2D, Pose3D};
use crate::nav::OccupancyGrid;
use crate::skills::SkillKind;

use super::judge::TaskSpec;

/// What a part does when a skill acts on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PartBehavior {
    #[default]
    None,
    /// tip_push registers a press event.
    Press,
    /// Pulling along the joint axis moves the prismatic joint.
    Pull,
    /// Pulling along the joint axis removes the whole object.
    Detach,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub name: String,
    /// Object frame.
    pub cloud: PointCloud,
    pub skill: SkillKind,
    /// Action words that select this part besides its name.
    #[serde(default)]
    pub verbs: Vec<String>,
    #[serde(default)]
    pub behavior: PartBehavior,
}

/// Prismatic joint (or extraction direction for removable objects).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    /// Horizontal unit axis in the object frame.
    pub axis: [f64; 2],
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    /// Unique within the scene.
    pub id: String,
    pub label: String,
    pub pose: Pose3D,
    /// Object frame: origin at the bottom center, z up.
    pub cloud: PointCloud,
    #[serde(default)]
    pub parts: Vec<PartSpec>,
    #[serde(default)]
    pub supported_by: Option<String>,
    #[serde(default)]
    pub container: bool,
    #[serde(default)]
    pub movable: bool,
    #[serde(default)]
    pub joint: Option<JointSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub template: String,
    pub seed: u64,
    pub mode: Mode,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub grid: Option<OccupancyGrid>,
    #[serde(default)]
    pub keyframes: Vec<Pose3D>,
    pub home_camera: Pose3D,
    pub robot_base: Pose2D,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

impl SceneSpec {
    pub fn object_index(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    pub fn task(&self, name: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        for (i, o) in self.objects.iter().enumerate() {
            if o.label.trim().is_empty() {
                return bad(format!("object '{}' has an empty label", o.id));
            }
            if o.cloud.is_empty() || !o.cloud.is_finite() {
                return bad(format!("object '{}' has an empty or non-finite cloud", o.id));
            }
            if self.objects[..i].iter().any(|p| p.id == o.id) {
                return bad(format!("duplicate object id '{}'", o.id));
            }
            if let Some(s) = &o.supported_by {
                if self.object_index(s).is_none() {
                    return bad(format!("object '{}' is supported by unknown '{s}'", o.id));
                }
            }
        }
        if self.mode == Mode::Mobile {
            if !(1..=5).contains(&self.keyframes.len()) {
                return bad(format!("mobile scenes need 1 to 5 keyframes, got {}", self.keyframes.len()));
            }
            let Some(grid) = &self.grid else {
                return bad("mobile scenes need an occupancy grid".into());
            };
            for o in &self.objects {
                let p = o.pose.position;
                if !grid.contains(p.x, p.y) {
                    return bad(format!("object '{}' lies outside the grid", o.id));
                }
            }
        }
        for t in &self.tasks {
            t.goal.check_references(self)?;
        }
        Ok(())
    }
}
