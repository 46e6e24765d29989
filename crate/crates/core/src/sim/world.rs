use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Mode;
use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Point3, PointCloud, Pose2D, Pose3D};
use crate::nav::{self, OccupancyGrid};

use super::render::camera_pose;
use super::scene::{PartBehavior, SceneSpec};
use super::NoiseConfig;

/// A pull engages a part only when the gripper closes this close to it.
pub const ENGAGE_RADIUS: f64 = 0.015;
/// A push registers on the nearest pressable part within this distance.
pub const PRESS_RADIUS: f64 = 0.02;
/// Grasps attach the nearest movable object within this distance.
pub const GRASP_RADIUS: f64 = 0.03;
/// Minimum alignment between the pull axis and a joint axis.
pub const PULL_ALIGNMENT: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub pose: Pose3D,
    pub supported_by: Option<String>,
    pub contained_in: Option<String>,
    pub attached_to_gripper: bool,
    pub open_fraction: f64,
    pub pressed: BTreeSet<String>,
    pub detached: bool,
}

#[derive(Serialize)]
struct DynamicState<'a> {
    objects: &'a [ObjectState],
    base: &'a Pose2D,
    gripper: &'a Pose3D,
    held: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PullOutcome {
    Opened { object: usize, open_fraction: f64 },
    Detached { object: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReleaseOutcome {
    Contained { container: usize },
    Supported { support: usize },
    OnGround,
}

/// Kinematic world: object states, robot base and gripper.
#[derive(Debug, Clone)]
pub struct SimWorld {
    spec: Arc<SceneSpec>,
    pub objects: Vec<ObjectState>,
    pub base: Pose2D,
    pub gripper: Pose3D,
    held: Option<usize>,
    /// Object pose expressed in the gripper frame while held.
    grip_offset: Pose3D,
    noise: NoiseConfig,
    rng: ChaCha8Rng,
    press_events: Vec<(String, String)>,
}

/// Gripper pointing straight down, fingers closing across `yaw`.
pub fn top_down(position: Point3, yaw: f64) -> Pose3D {
    Pose3D::new(
        position,
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), PI / 2.0),
    )
}

impl SimWorld {
    pub fn new(spec: Arc<SceneSpec>, noise: NoiseConfig) -> Self {
        let objects = spec
            .objects
            .iter()
            .map(|o| ObjectState {
                pose: o.pose,
                supported_by: o.supported_by.clone(),
                contained_in: None,
                attached_to_gripper: false,
                open_fraction: 0.0,
                pressed: BTreeSet::new(),
                detached: false,
            })
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
        let base = spec.robot_base;
        let mut w = Self {
            spec,
            objects,
            base,
            gripper: Pose3D::identity(),
            held: None,
            grip_offset: Pose3D::identity(),
            noise,
            rng,
            press_events: Vec::new(),
        };
        w.gripper = w.home_gripper_pose();
        w
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn spec_arc(&self) -> Arc<SceneSpec> {
        Arc::clone(&self.spec)
    }

    pub fn mode(&self) -> Mode {
        self.spec.mode
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    pub fn grid(&self) -> Option<&OccupancyGrid> {
        self.spec.grid.as_ref()
    }

    pub fn held(&self) -> Option<usize> {
        self.held
    }

    pub fn verify_held(&self) -> bool {
        self.held.is_some()
    }

    /// Every press registered so far as (object id, part name), in order.
    pub fn press_events(&self) -> &[(String, String)] {
        &self.press_events
    }

    pub fn world_cloud(&self, i: usize) -> PointCloud {
        let pose = &self.objects[i].pose;
        self.spec.objects[i].cloud.iter().map(|p| pose.transform_point(p)).collect()
    }

    pub fn part_cloud(&self, i: usize, part: usize) -> PointCloud {
        let pose = &self.objects[i].pose;
        self.spec.objects[i].parts[part].cloud.iter().map(|p| pose.transform_point(p)).collect()
    }

    pub fn object_centroid(&self, i: usize) -> Point3 {
        geom::centroid(&self.world_cloud(i)).expect("scene clouds are non-empty")
    }

    pub fn object_aabb(&self, i: usize) -> Aabb {
        Aabb::from_cloud(&self.world_cloud(i)).expect("scene clouds are non-empty")
    }

    /// World-frame joint axis of object `i`, if it has one.
    pub fn joint_axis_world(&self, i: usize) -> Option<Point3> {
        let j = self.spec.objects[i].joint?;
        Some(self.objects[i].pose.axis(Vector3::new(j.axis[0], j.axis[1], 0.0)))
    }

    pub fn shoulder(&self) -> Point3 {
        let (s, c) = self.base.theta.sin_cos();
        match self.spec.mode {
            Mode::Tabletop => Point3::new(self.base.x, self.base.y, 0.15),
            Mode::Mobile => Point3::new(self.base.x + 0.2 * c, self.base.y + 0.2 * s, 0.6),
        }
    }

    pub fn reach(&self) -> f64 {
        match self.spec.mode {
            Mode::Tabletop => 1.05,
            Mode::Mobile => 1.1,
        }
    }

    pub fn home_gripper_pose(&self) -> Pose3D {
        let (s, c) = self.base.theta.sin_cos();
        let (fwd, z) = match self.spec.mode {
            Mode::Tabletop => (0.25, 0.45),
            Mode::Mobile => (0.3, 0.9),
        };
        top_down(Point3::new(self.base.x + fwd * c, self.base.y + fwd * s, z), self.base.theta)
    }

    /// Camera used for remapping (tabletop) or redetection (mobile).
    pub fn observation_camera(&self) -> Pose3D {
        match self.spec.mode {
            Mode::Tabletop => self.spec.home_camera,
            Mode::Mobile => {
                let (s, c) = self.base.theta.sin_cos();
                camera_pose(
                    Point3::new(self.base.x + 0.1 * c, self.base.y + 0.1 * s, 1.2),
                    self.base.theta,
                    40f64.to_radians(),
                )
            }
        }
    }

    /// Heading whose +y direction counts as "left".
    pub fn observation_yaw(&self) -> f64 {
        match self.spec.mode {
            Mode::Tabletop => self.spec.home_camera.yaw(),
            Mode::Mobile => self.base.theta,
        }
    }

    /// Point that `distance_to` measures from.
    pub fn reference_point(&self) -> Point3 {
        match self.spec.mode {
            Mode::Tabletop => self.gripper.position,
            Mode::Mobile => Point3::new(self.base.x, self.base.y, 0.0),
        }
    }

    pub fn move_gripper(&mut self, pose: Pose3D) {
        self.gripper = pose;
        if let Some(h) = self.held {
            let g = pose.orientation * self.grip_offset.orientation;
            let p = pose.transform_point(&self.grip_offset.position);
            self.objects[h].pose = Pose3D::new(p, g);
        }
    }

    pub fn move_gripper_home(&mut self) {
        let home = self.home_gripper_pose();
        self.move_gripper(home);
    }

    /// Drives the base to `goal` along a grid path; fails when none exists.
    pub fn navigate(&mut self, goal: Pose2D, lethal: u8) -> Result<usize> {
        let grid = self.spec.grid.as_ref().ok_or_else(|| Error::NavigationFailed("scene has no occupancy grid".into()))?;
        let path = nav::plan_path(grid, [self.base.x, self.base.y], [goal.x, goal.y], lethal)?;
        self.base = goal;
        self.move_gripper_home();
        Ok(path.len())
    }

    /// Nearest movable, unheld object whose cloud passes within `radius` of `p`.
    pub fn nearest_movable(&self, p: &Point3, radius: f64) -> Option<usize> {
        (0..self.objects.len())
            .filter(|&i| self.spec.objects[i].movable && Some(i) != self.held)
            .filter_map(|i| {
                let d = geom::nearest_distance(p, &self.world_cloud(i)).ok()?;
                (d <= radius).then_some((i, d))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }

    /// Closes the gripper at `pose`; attaches the nearest movable object.
    pub fn grasp_at(&mut self, pose: Pose3D) -> Option<usize> {
        if self.held.is_some() {
            return None;
        }
        let target = self.nearest_movable(&pose.position, GRASP_RADIUS)?;
        self.gripper = pose;
        self.attach(target);
        Some(target)
    }

    fn attach(&mut self, i: usize) {
        let obj = self.objects[i].pose;
        let inv = self.gripper.orientation.inverse();
        self.grip_offset = Pose3D::new(
            Point3::from_vector(&(inv * (obj.position - self.gripper.position).to_vector())),
            inv * obj.orientation,
        );
        let st = &mut self.objects[i];
        st.attached_to_gripper = true;
        st.supported_by = None;
        st.contained_in = None;
        self.held = Some(i);
    }

    /// Lifts the held object by `dz` (post-grasp retreat).
    pub fn lift(&mut self, dz: f64) {
        let mut g = self.gripper;
        g.position.z += dz;
        self.move_gripper(g);
    }

    /// Draws the grasp-slip noise; on a slip the held object falls in place.
    pub fn maybe_slip(&mut self) -> bool {
        if self.noise.p_slip <= 0.0 || self.held.is_none() {
            return false;
        }
        if self.rng.random::<f64>() < self.noise.p_slip {
            let h = self.held.expect("checked above");
            let c = self.object_centroid(h);
            self.release_at([c.x, c.y]);
            return true;
        }
        false
    }

    /// Opens the gripper with the held object's footprint centered over `xy`.
    /// The object settles into a container, onto the highest support under
    /// it, or onto the ground.
    pub fn release_at(&mut self, xy: [f64; 2]) -> Option<ReleaseOutcome> {
        let h = self.held?;
        let local = &self.spec.objects[h].cloud;
        let yaw = self.objects[h].pose.yaw();
        let rotated = Pose3D::from_rpy(Point3::ORIGIN, 0.0, 0.0, yaw);
        let raw = Aabb::from_cloud(&local.iter().map(|p| rotated.transform_point(p)).collect())
            .expect("scene clouds are non-empty");
        let c = raw.center();
        let origin = [xy[0] - c.x, xy[1] - c.y];
        let footprint = Aabb {
            min: Point3::new(raw.min.x + origin[0], raw.min.y + origin[1], raw.min.z),
            max: Point3::new(raw.max.x + origin[0], raw.max.y + origin[1], raw.max.z),
        };
        let mut best: Option<(usize, Aabb)> = None;
        for i in 0..self.objects.len() {
            if i == h || self.objects[i].attached_to_gripper {
                continue;
            }
            let bb = self.object_aabb(i);
            if bb.contains_xy(xy[0], xy[1]) && best.as_ref().is_none_or(|(_, b)| bb.max.z > b.max.z) {
                best = Some((i, bb));
            }
        }
        let (outcome, z) = match best {
            Some((i, bb)) => {
                let fits = footprint.min.x >= bb.min.x
                    && footprint.max.x <= bb.max.x
                    && footprint.min.y >= bb.min.y
                    && footprint.max.y <= bb.max.y;
                if self.spec.objects[i].container && fits {
                    (ReleaseOutcome::Contained { container: i }, bb.min.z + 0.01)
                } else {
                    (ReleaseOutcome::Supported { support: i }, bb.max.z)
                }
            }
            None => (ReleaseOutcome::OnGround, 0.0),
        };
        let min_z = footprint.min.z;
        let st = &mut self.objects[h];
        st.pose = Pose3D::from_rpy(Point3::new(origin[0], origin[1], z - min_z), 0.0, 0.0, yaw);
        st.attached_to_gripper = false;
        st.supported_by = None;
        st.contained_in = None;
        match &outcome {
            ReleaseOutcome::Contained { container } => st.contained_in = Some(self.spec.objects[*container].id.clone()),
            ReleaseOutcome::Supported { support } => st.supported_by = Some(self.spec.objects[*support].id.clone()),
            ReleaseOutcome::OnGround => {}
        }
        self.held = None;
        Some(outcome)
    }

    /// Pushes at `p`; registers a press on the nearest pressable part in reach.
    pub fn press_at(&mut self, p: &Point3) -> Option<(usize, String)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.objects.len() {
            if self.objects[i].attached_to_gripper {
                continue;
            }
            for (k, part) in self.spec.objects[i].parts.iter().enumerate() {
                if part.behavior != PartBehavior::Press {
                    continue;
                }
                let d = geom::nearest_distance(p, &self.part_cloud(i, k)).unwrap_or(f64::INFINITY);
                if d <= PRESS_RADIUS && best.is_none_or(|(_, _, b)| d < b) {
                    best = Some((i, k, d));
                }
            }
        }
        let (i, k, _) = best?;
        let name = self.spec.objects[i].parts[k].name.clone();
        self.objects[i].pressed.insert(name.clone());
        self.press_events.push((self.spec.objects[i].id.clone(), name.clone()));
        Some((i, name))
    }

    /// Closes on the part at `p` and pulls `distance` along `axis`.
    pub fn pull_at(&mut self, p: &Point3, axis: &Point3, distance: f64, pinch: bool) -> std::result::Result<PullOutcome, String> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.objects.len() {
            if self.objects[i].attached_to_gripper {
                continue;
            }
            for (k, part) in self.spec.objects[i].parts.iter().enumerate() {
                if !matches!(part.behavior, PartBehavior::Pull | PartBehavior::Detach) {
                    continue;
                }
                let d = geom::nearest_distance(p, &self.part_cloud(i, k)).unwrap_or(f64::INFINITY);
                if d <= ENGAGE_RADIUS && best.is_none_or(|(_, _, b)| d < b) {
                    best = Some((i, k, d));
                }
            }
        }
        let Some((i, k, _)) = best else {
            return Err("the gripper did not engage any handle".into());
        };
        let joint = self.spec.objects[i].joint.ok_or_else(|| "the engaged part does not move".to_string())?;
        let jaxis = self.joint_axis_world(i).expect("joint present");
        if axis.dot(&jaxis) < PULL_ALIGNMENT {
            return Err(format!(
                "pull direction is misaligned with the motion of '{}' (alignment {:.2})",
                self.spec.objects[i].label,
                axis.dot(&jaxis)
            ));
        }
        match self.spec.objects[i].parts[k].behavior {
            PartBehavior::Pull => {
                let st = &mut self.objects[i];
                st.open_fraction = (st.open_fraction + distance / joint.range).clamp(0.0, 1.0);
                Ok(PullOutcome::Opened { object: i, open_fraction: st.open_fraction })
            }
            _ if !pinch => Err("a hook cannot pull this object free".into()),
            _ => {
                if self.held.is_some() {
                    return Err("the gripper is already holding an object".into());
                }
                self.gripper = Pose3D::new(*p, self.gripper.orientation);
                self.objects[i].detached = true;
                self.attach(i);
                let mut g = self.gripper;
                g.position = g.position + *axis * distance;
                self.move_gripper(g);
                Ok(PullOutcome::Detached { object: i })
            }
        }
    }

    /// SHA-256 over the serialized dynamic state.
    pub fn digest(&self) -> String {
        let state = DynamicState { objects: &self.objects, base: &self.base, gripper: &self.gripper, held: self.held };
        let bytes = serde_json::to_vec(&state).expect("world state serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
