//! Scripted skills: end-effector goals computed from object and affordance
//! clouds, checked by a motion checker and executed in the simulator.

use serde::{Deserialize, Serialize};

use crate::config::SkillConfig;
use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Point3, PointCloud, PointIndex, Pose3D};
use crate::sim::{top_down, PullOutcome, ReleaseOutcome, SimWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillKind {
    Grasp,
    Place,
    Drop,
    GraspPart,
    TipPush,
    PinchPull,
    HookPull,
}

impl SkillKind {
    pub const ALL: [SkillKind; 7] = [
        SkillKind::Grasp,
        SkillKind::Place,
        SkillKind::Drop,
        SkillKind::GraspPart,
        SkillKind::TipPush,
        SkillKind::PinchPull,
        SkillKind::HookPull,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SkillKind::Grasp => "grasp",
            SkillKind::Place => "place",
            SkillKind::Drop => "drop",
            SkillKind::GraspPart => "grasp_part",
            SkillKind::TipPush => "tip_push",
            SkillKind::PinchPull => "pinch_pull",
            SkillKind::HookPull => "hook_pull",
        }
    }

    /// Skills that need an empty gripper.
    pub fn needs_empty_hand(self) -> bool {
        matches!(self, SkillKind::Grasp | SkillKind::GraspPart | SkillKind::PinchPull | SkillKind::HookPull)
    }

    /// Skills that act with the held object.
    pub fn needs_held_object(self) -> bool {
        matches!(self, SkillKind::Place | SkillKind::Drop)
    }
}

impl std::fmt::Display for SkillKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub pose: Pose3D,
    pub score: f64,
    /// Opening needed to close on the candidate (meters).
    pub width: f64,
}

/// Grasp detector over a context cloud; results are sorted best first.
pub trait GraspProposer: Send {
    fn propose(&mut self, context: &PointCloud) -> Result<Vec<GraspCandidate>>;
}

/// Top-down antipodal grasps on the voxelized context.
///
/// Each voxel point is a grasp center closing across the minor horizontal
/// axis of its neighborhood. Score is height above the lowest context point
/// plus a small bonus for flat neighborhoods.
#[derive(Debug, Clone)]
pub struct MockGraspProposer {
    pub voxel: f64,
    pub patch_radius: f64,
    pub max_width: f64,
}

impl Default for MockGraspProposer {
    fn default() -> Self {
        Self { voxel: 0.01, patch_radius: 0.03, max_width: 0.085 }
    }
}

impl GraspProposer for MockGraspProposer {
    fn propose(&mut self, context: &PointCloud) -> Result<Vec<GraspCandidate>> {
        if context.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let pts = geom::voxel_downsample(context, self.voxel)?;
        let support = pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let index = PointIndex::new(&pts, self.patch_radius);
        let mut out = Vec::new();
        for p in pts.iter() {
            let nb: Vec<Point3> = index.within(p, self.patch_radius).copied().collect();
            if nb.len() < 3 {
                continue;
            }
            let n = nb.len() as f64;
            let (mx, my) = (nb.iter().map(|q| q.x).sum::<f64>() / n, nb.iter().map(|q| q.y).sum::<f64>() / n);
            let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
            for q in &nb {
                let (dx, dy) = (q.x - mx, q.y - my);
                cxx += dx * dx;
                cxy += dx * dy;
                cyy += dy * dy;
            }
            let major = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
            let close = major + std::f64::consts::FRAC_PI_2;
            let (s, c) = close.sin_cos();
            let proj = nb.iter().map(|q| q.x * c + q.y * s);
            let width = proj.clone().fold(f64::NEG_INFINITY, f64::max) - proj.fold(f64::INFINITY, f64::min);
            if width > self.max_width {
                continue;
            }
            let zr = nb.iter().map(|q| q.z).fold(f64::NEG_INFINITY, f64::max)
                - nb.iter().map(|q| q.z).fold(f64::INFINITY, f64::min);
            let flatness = 1.0 - (zr / self.patch_radius).min(1.0);
            out.push(GraspCandidate { pose: top_down(*p, close), score: (p.z - support) + 0.05 * flatness, width });
        }
        out.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(out)
    }
}

/// Where and how the end effector should move for one skill step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndEffectorGoal {
    pub skill: SkillKind,
    pub pose: Pose3D,
    /// Unit direction of the final approach motion.
    pub approach: Point3,
    /// Unit horizontal pull direction for pulling skills.
    pub pull_axis: Option<Point3>,
}

/// Motion planner stand-in; `Err` carries the reason.
pub trait MotionChecker: Send {
    fn feasible(&mut self, goal: &EndEffectorGoal, world: &SimWorld) -> std::result::Result<(), String>;
}

/// Reachability plus two direction rules: a horizontal approach must point
/// away from the shoulder, and a pull must move back toward it.
#[derive(Debug, Clone, Default)]
pub struct SimMotionChecker;

impl MotionChecker for SimMotionChecker {
    fn feasible(&mut self, goal: &EndEffectorGoal, world: &SimWorld) -> std::result::Result<(), String> {
        let shoulder = world.shoulder();
        let p = goal.pose.position;
        let d = p.distance(&shoulder);
        if d > world.reach() {
            return Err(format!("goal is out of reach ({d:.2} m > {:.2} m)", world.reach()));
        }
        let h = Point3::new(p.x - shoulder.x, p.y - shoulder.y, 0.0);
        let Some(h) = h.normalized() else { return Ok(()) };
        let a = goal.approach;
        if a.z.abs() < 0.9 {
            if let Some(a) = Point3::new(a.x, a.y, 0.0).normalized() {
                if a.dot(&h) < 0.5 {
                    return Err("approach direction faces away from the robot".into());
                }
            }
        }
        if let Some(axis) = goal.pull_axis {
            if axis.dot(&h) > -0.5 {
                return Err("pull direction does not lead back toward the robot".into());
            }
        }
        Ok(())
    }
}

/// Rejects the first `reject_first` checks, then defers to the sim checker.
#[derive(Debug, Clone, Default)]
pub struct ScriptedChecker {
    pub reject_first: usize,
    pub seen: usize,
}

impl ScriptedChecker {
    pub fn new(reject_first: usize) -> Self {
        Self { reject_first, seen: 0 }
    }
}

impl MotionChecker for ScriptedChecker {
    fn feasible(&mut self, goal: &EndEffectorGoal, world: &SimWorld) -> std::result::Result<(), String> {
        self.seen += 1;
        if self.seen <= self.reject_first {
            return Err(format!("scripted rejection {}", self.seen));
        }
        SimMotionChecker.feasible(goal, world)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillResult {
    pub skill: SkillKind,
    pub success: bool,
    pub feedback: String,
    /// Grasp candidates tried (1 for non-grasp skills that reached execution).
    pub attempts: usize,
    pub goal: Option<EndEffectorGoal>,
    /// The world changed in a way the map no longer reflects.
    pub remap: bool,
    /// The skill left an object in the gripper.
    pub now_held: bool,
}

impl SkillResult {
    fn fail(skill: SkillKind, feedback: impl Into<String>) -> Self {
        Self { skill, success: false, feedback: feedback.into(), attempts: 0, goal: None, remap: false, now_held: false }
    }

    fn ok(skill: SkillKind, feedback: impl Into<String>, goal: EndEffectorGoal) -> Self {
        Self { skill, success: true, feedback: feedback.into(), attempts: 1, goal: Some(goal), remap: true, now_held: false }
    }
}

/// Everything a skill acts through.
pub struct SkillEnv<'a> {
    pub world: &'a mut SimWorld,
    pub proposer: &'a mut dyn GraspProposer,
    pub checker: &'a mut dyn MotionChecker,
    pub cfg: &'a SkillConfig,
}

const DOWN: Point3 = Point3::new(0.0, 0.0, -1.0);

/// Grasp `object` anywhere; `scene` supplies the context around it.
pub fn skill_grasp(env: &mut SkillEnv, object: &PointCloud, scene: &PointCloud) -> SkillResult {
    grasp_near(env, SkillKind::Grasp, object, object, scene)
}

/// Grasp `object` at the part given by `aff`.
pub fn skill_grasp_part(env: &mut SkillEnv, object: &PointCloud, aff: &PointCloud, scene: &PointCloud) -> SkillResult {
    grasp_near(env, SkillKind::GraspPart, object, aff, scene)
}

fn grasp_near(env: &mut SkillEnv, kind: SkillKind, object: &PointCloud, near: &PointCloud, scene: &PointCloud) -> SkillResult {
    if env.world.held().is_some() {
        return SkillResult::fail(kind, "the gripper is already holding an object");
    }
    let (Ok(bb), false) = (Aabb::from_cloud(object), near.is_empty()) else {
        return SkillResult::fail(kind, "target point cloud is empty");
    };
    let bb = bb.inflated(env.cfg.context_margin);
    let mut context: PointCloud = scene.iter().filter(|p| bb.contains(p)).copied().collect();
    if context.is_empty() {
        context = object.clone();
    }
    let candidates = match env.proposer.propose(&context) {
        Ok(c) => c,
        Err(e) => return SkillResult::fail(kind, format!("grasp proposer failed: {e}")),
    };
    let index = PointIndex::new(near, env.cfg.proximity_radius);
    let candidates: Vec<GraspCandidate> =
        candidates.into_iter().filter(|c| index.any_within(&c.pose.position, env.cfg.proximity_radius)).collect();
    if candidates.is_empty() {
        return SkillResult::fail(kind, "no grasp candidates near the target");
    }
    let mut last_reason = String::new();
    let mut attempts = 0;
    for c in candidates.iter().take(env.cfg.max_grasp_attempts) {
        attempts += 1;
        let goal = EndEffectorGoal { skill: kind, pose: c.pose, approach: DOWN, pull_axis: None };
        if let Err(reason) = env.checker.feasible(&goal, env.world) {
            last_reason = reason;
            continue;
        }
        let mut result = SkillResult { attempts, goal: Some(goal), ..SkillResult::fail(kind, "") };
        if env.world.grasp_at(c.pose).is_none() {
            env.world.move_gripper_home();
            result.feedback = "the gripper closed on nothing".into();
            return result;
        }
        env.world.move_gripper_home();
        result.remap = true;
        if env.world.maybe_slip() || !verify_held(env.world) {
            result.feedback = "grasp slipped: the gripper is empty after lifting".into();
            return result;
        }
        result.success = true;
        result.now_held = true;
        result.feedback = format!("grasped after {attempts} attempt(s)");
        return result;
    }
    SkillResult {
        attempts,
        ..SkillResult::fail(kind, format!("no feasible grasp among {attempts} candidates: motion planning failed ({last_reason})"))
    }
}

/// Place the held object on top of `target`.
pub fn skill_place(env: &mut SkillEnv, target: &PointCloud) -> SkillResult {
    release_over(env, SkillKind::Place, target, env.cfg.place_clearance)
}

/// Drop the held object from above `target`.
pub fn skill_drop(env: &mut SkillEnv, target: &PointCloud) -> SkillResult {
    release_over(env, SkillKind::Drop, target, env.cfg.drop_height)
}

fn release_over(env: &mut SkillEnv, kind: SkillKind, target: &PointCloud, height: f64) -> SkillResult {
    if env.world.held().is_none() {
        return SkillResult::fail(kind, "the gripper is not holding anything");
    }
    let Ok(bb) = Aabb::from_cloud(target) else {
        return SkillResult::fail(kind, "target point cloud is empty");
    };
    let c = bb.center();
    let pose = top_down(Point3::new(c.x, c.y, bb.max.z + height), env.world.gripper.yaw());
    let goal = EndEffectorGoal { skill: kind, pose, approach: DOWN, pull_axis: None };
    if let Err(reason) = env.checker.feasible(&goal, env.world) {
        return SkillResult { goal: Some(goal), ..SkillResult::fail(kind, format!("motion planning failed: {reason}")) };
    }
    env.world.move_gripper(pose);
    let outcome = env.world.release_at([c.x, c.y]);
    env.world.move_gripper_home();
    let label = |i: usize| env.world.spec().objects[i].label.clone();
    let msg = match outcome {
        Some(ReleaseOutcome::Contained { container }) => format!("released inside the {}", label(container)),
        Some(ReleaseOutcome::Supported { support }) => format!("released onto the {}", label(support)),
        Some(ReleaseOutcome::OnGround) | None => "released onto the ground".to_string(),
    };
    SkillResult::ok(kind, msg, goal)
}

/// Normal of `aff` oriented away from the object centroid. Ties point up.
pub fn outward_normal(aff: &PointCloud, object_centroid: Point3) -> Result<Point3> {
    let c = geom::centroid(aff)?;
    let out = c - object_centroid;
    let n = match geom::dominant_normal(aff) {
        Ok(n) => n,
        Err(_) => out.normalized().unwrap_or(Point3::new(0.0, 0.0, 1.0)),
    };
    let d = n.dot(&out);
    let flip = if d.abs() > 1e-12 {
        d < 0.0
    } else {
        let first = [n.z, n.x, n.y].into_iter().find(|v| v.abs() > 1e-12).unwrap_or(1.0);
        first < 0.0
    };
    Ok(if flip { -n } else { n })
}

/// Horizontal unit pull direction for an affordance.
pub fn pull_axis(aff: &PointCloud, object_centroid: Point3) -> Result<Point3> {
    let n = outward_normal(aff, object_centroid)?;
    if let Some(h) = Point3::new(n.x, n.y, 0.0).normalized().filter(|_| n.x.hypot(n.y) > 1e-6) {
        return Ok(h);
    }
    let out = geom::centroid(aff)? - object_centroid;
    Point3::new(out.x, out.y, 0.0)
        .normalized()
        .filter(|_| out.x.hypot(out.y) > 1e-6)
        .ok_or(Error::NoHorizontalNormal)
}

/// Push the affordance centroid with the gripper tip.
pub fn skill_tip_push(env: &mut SkillEnv, object: &PointCloud, aff: &PointCloud) -> SkillResult {
    let kind = SkillKind::TipPush;
    let (Ok(c), Ok(oc)) = (geom::centroid(aff), geom::centroid(object)) else {
        return SkillResult::fail(kind, "affordance point cloud is empty");
    };
    let n = match outward_normal(aff, oc) {
        Ok(n) => n,
        Err(e) => return SkillResult::fail(kind, e.to_string()),
    };
    let goal = EndEffectorGoal { skill: kind, pose: Pose3D::looking_along(c, -n), approach: -n, pull_axis: None };
    if let Err(reason) = env.checker.feasible(&goal, env.world) {
        return SkillResult { goal: Some(goal), ..SkillResult::fail(kind, format!("motion planning failed: {reason}")) };
    }
    let before = env.world.gripper;
    env.world.move_gripper(Pose3D::new(c, before.orientation));
    let pressed = env.world.press_at(&c);
    env.world.move_gripper(before);
    match pressed {
        Some((i, part)) => {
            let label = env.world.spec().objects[i].label.clone();
            SkillResult::ok(kind, format!("pressed the {part} of the {label}"), goal)
        }
        None => SkillResult { attempts: 1, goal: Some(goal), ..SkillResult::fail(kind, "the push did not actuate anything") },
    }
}

/// Pinch the part and pull it along the inferred horizontal axis.
pub fn skill_pinch_pull(env: &mut SkillEnv, object: &PointCloud, aff: &PointCloud) -> SkillResult {
    pull(env, SkillKind::PinchPull, object, aff)
}

/// Hook the part from above and pull it along the inferred horizontal axis.
pub fn skill_hook_pull(env: &mut SkillEnv, object: &PointCloud, aff: &PointCloud) -> SkillResult {
    pull(env, SkillKind::HookPull, object, aff)
}

fn pull(env: &mut SkillEnv, kind: SkillKind, object: &PointCloud, aff: &PointCloud) -> SkillResult {
    if env.world.held().is_some() {
        return SkillResult::fail(kind, "the gripper must be empty to pull");
    }
    let (Ok(c), Ok(oc)) = (geom::centroid(aff), geom::centroid(object)) else {
        return SkillResult::fail(kind, "affordance point cloud is empty");
    };
    let axis = match pull_axis(aff, oc) {
        Ok(a) => a,
        Err(e) => return SkillResult::fail(kind, format!("cannot infer a pull axis: {e}")),
    };
    let pinch = kind == SkillKind::PinchPull;
    let (pose, approach) = if pinch {
        (Pose3D::looking_along(c, -axis), -axis)
    } else {
        (top_down(c, axis.y.atan2(axis.x) + std::f64::consts::FRAC_PI_2), DOWN)
    };
    let goal = EndEffectorGoal { skill: kind, pose, approach, pull_axis: Some(axis) };
    if let Err(reason) = env.checker.feasible(&goal, env.world) {
        return SkillResult { goal: Some(goal), ..SkillResult::fail(kind, format!("motion planning failed: {reason}")) };
    }
    env.world.move_gripper(pose);
    let outcome = env.world.pull_at(&c, &axis, env.cfg.pull_distance, pinch);
    env.world.move_gripper_home();
    match outcome {
        Ok(PullOutcome::Opened { object, open_fraction }) => {
            let label = env.world.spec().objects[object].label.clone();
            SkillResult::ok(kind, format!("pulled the {label} open to {:.0}%", open_fraction * 100.0), goal)
        }
        Ok(PullOutcome::Detached { object }) => {
            let label = env.world.spec().objects[object].label.clone();
            if env.world.maybe_slip() || !verify_held(env.world) {
                return SkillResult {
                    attempts: 1,
                    goal: Some(goal),
                    remap: true,
                    ..SkillResult::fail(kind, format!("the {label} came free but slipped from the gripper"))
                };
            }
            SkillResult { now_held: true, ..SkillResult::ok(kind, format!("pulled the {label} free"), goal) }
        }
        Err(msg) => SkillResult { attempts: 1, goal: Some(goal), ..SkillResult::fail(kind, msg) },
    }
}

/// Whether the gripper holds anything.
pub fn verify_held(world: &SimWorld) -> bool {
    world.verify_held()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scene, judge, NoiseConfig, SceneSpec};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn world(template: &str, seed: u64) -> SimWorld {
        SimWorld::new(Arc::new(generate_scene(template, seed).unwrap()), NoiseConfig::default())
    }

    fn scene_cloud(w: &SimWorld) -> PointCloud {
        let mut all = PointCloud::default();
        for i in 0..w.objects.len() {
            all.extend(&w.world_cloud(i));
        }
        all
    }

    struct Rig {
        proposer: MockGraspProposer,
        checker: Box<dyn MotionChecker>,
        cfg: SkillConfig,
    }

    impl Rig {
        fn new(checker: Box<dyn MotionChecker>) -> Self {
            Self { proposer: MockGraspProposer::default(), checker, cfg: SkillConfig::default() }
        }

        fn env<'a>(&'a mut self, world: &'a mut SimWorld) -> SkillEnv<'a> {
            SkillEnv { world, proposer: &mut self.proposer, checker: self.checker.as_mut(), cfg: &self.cfg }
        }
    }

    fn idx(w: &SimWorld, id: &str) -> usize {
        w.spec().object_index(id).unwrap()
    }

    #[test]
    fn grasp_cube_first_candidate() {
        let mut w = world("tabletop-pick", 0);
        let cube = w.world_cloud(idx(&w, "green_cube"));
        let scene = scene_cloud(&w);
        let mut rig = Rig::new(Box::new(SimMotionChecker));
        let r = skill_grasp(&mut rig.env(&mut w), &cube, &scene);
        assert!(r.success, "{}", r.feedback);
        assert_eq!(r.attempts, 1);
        assert_eq!(w.held(), Some(idx(&w, "green_cube")));
        assert!(verify_held(&w));
    }

    #[test]
    fn grasp_after_nine_rejections() {
        let mut w = world("tabletop-pick", 0);
        let cube = w.world_cloud(idx(&w, "green_cube"));
        let scene = scene_cloud(&w);
        let mut rig = Rig::new(Box::new(ScriptedChecker::new(9)));
        let r = skill_grasp(&mut rig.env(&mut w), &cube, &scene);
        assert!(r.success);
        assert_eq!(r.attempts, 10);
    }

    #[test]
    fn all_rejected_fails_without_touching_the_world() {
        let mut w = world("tabletop-pick", 0);
        let before = w.digest();
        let cube = w.world_cloud(idx(&w, "green_cube"));
        let scene = scene_cloud(&w);
        let mut rig = Rig::new(Box::new(ScriptedChecker::new(usize::MAX)));
        let r = skill_grasp(&mut rig.env(&mut w), &cube, &scene);
        assert!(!r.success);
        assert_eq!(r.attempts, 10);
        assert!(r.feedback.contains("motion planning"));
        assert!(!r.remap);
        assert_eq!(w.digest(), before);
    }

    #[test]
    fn grasp_part_lands_on_the_handle() {
        for seed in 0..5 {
            let mut w = world("tabletop-pick", seed);
            let mug = idx(&w, "blue_mug");
            let (body, handle) = (w.world_cloud(mug), w.part_cloud(mug, 0));
            let scene = scene_cloud(&w);
            let mut rig = Rig::new(Box::new(SimMotionChecker));
            let r = skill_grasp_part(&mut rig.env(&mut w), &body, &handle, &scene);
            assert!(r.success, "{}", r.feedback);
            let p = r.goal.unwrap().pose.position;
            assert!(geom::nearest_distance(&p, &handle).unwrap() <= 0.03);
            assert_eq!(w.held(), Some(mug));
        }
    }

    #[test]
    fn whole_mug_grasp_succeeds_anywhere() {
        let mut w = world("tabletop-pick", 2);
        let mug = idx(&w, "blue_mug");
        let body = w.world_cloud(mug);
        let scene = scene_cloud(&w);
        let mut rig = Rig::new(Box::new(SimMotionChecker));
        let r = skill_grasp_part(&mut rig.env(&mut w), &body, &body, &scene);
        assert!(r.success);
    }

    #[test]
    fn far_affordance_has_no_candidates() {
        let mut w = world("tabletop-pick", 0);
        let cube = w.world_cloud(idx(&w, "green_cube"));
        let far = cube.translated(Point3::new(5.0, 5.0, 0.0));
        let scene = scene_cloud(&w);
        let mut rig = Rig::new(Box::new(SimMotionChecker));
        let r = skill_grasp_part(&mut rig.env(&mut w), &cube, &far, &scene);
        assert!(!r.success);
    }

    #[test]
    fn pick_and_drop_into_bowl() {
        for seed in 0..5 {
            let mut w = world("tabletop-pick", seed);
            let ball = w.world_cloud(idx(&w, "red_ball"));
            let bowl = w.world_cloud(idx(&w, "bowl"));
            let scene = scene_cloud(&w);
            let mut rig = Rig::new(Box::new(SimMotionChecker));
            assert!(skill_grasp(&mut rig.env(&mut w), &ball, &scene).success);
            let r = skill_drop(&mut rig.env(&mut w), &bowl);
            assert!(r.success, "{}", r.feedback);
            assert!(!verify_held(&w));
            let task = w.spec().task("pick-place").unwrap().clone();
            assert_eq!(judge(&w, &task), 1.0);
        }
    }

    #[test]
    fn place_with_empty_hand_fails() {
        let mut w = world("tabletop-pick", 0);
        let bowl = w.world_cloud(idx(&w, "bowl"));
        let mut rig = Rig::new(Box::new(SimMotionChecker));
        assert!(!skill_place(&mut rig.env(&mut w), &bowl).success);
    }

    #[test]
    fn place_cube_on_table_region() {
        let mut w = world("tabletop-pick", 1);
        let cube_i = idx(&w, "green_cube");
        let cube = w.world_cloud(cube_i);
        let scene = scene_cloud(&w);
        let mut rig = Rig::new(Box::new(SimMotionChecker));
        assert!(skill_grasp(&mut rig.env(&mut w), &cube, &scene).success);
        let spot: PointCloud = vec![Point3::new(0.1, 0.3, 0.0), Point3::new(0.14, 0.34, 0.0)].into_iter().collect();
        let r = skill_place(&mut rig.env(&mut w), &spot);
        assert!(r.success);
        assert!(w.held().is_none());
        assert!(!w.objects[cube_i].attached_to_gripper);
    }

    #[test]
    fn bell_button_press() {
        let mut w = world("desk-bell", 3);
        let bell = idx(&w, "desk_bell");
        let (body, button) = (w.world_cloud(bell), w.part_cloud(bell, 0));
        let mut rig = Rig::new(Box::new(SimMotionChecker));
        let r = skill_tip_push(&mut rig.env(&mut w), &body, &button);
        assert!(r.success, "{}", r.feedback);
        assert!(w.objects[bell].pressed.contains("top button"));
    }

    #[test]
    fn keyboard_space_bar_press() {
        let mut w = world("keyboard", 3);
        let kb = idx(&w, "keyboard");
        let (body, space) = (w.world_cloud(kb), w.part_cloud(kb, 0));
        let mut rig = Rig::new(Box::new(SimMotionChecker));
        assert!(skill_tip_push(&mut rig.env(&mut w), &body, &space).success);
        assert_eq!(w.press_events(), &[("keyboard".to_string(), "space bar".to_string())]);
        // the keyboard centroid is not on any key
        let mut w2 = world("keyboard", 3);
        let r = skill_tip_push(&mut rig.env(&mut w2), &body, &body);
        assert!(!r.success);
    }

    fn drawer_seed(variant: &str) -> (u64, SceneSpec) {
        (0..50)
            .map(|s| (s, generate_scene("drawer", s).unwrap()))
            .find(|(_, sc)| sc.objects[0].parts[0].name == variant)
            .unwrap()
    }

    #[test]
    fn drawer_pull_is_prismatic_arithmetic() {
        for (variant, pinch) in [("knob", true), ("handle", false)] {
            let (_, spec) = drawer_seed(variant);
            let mut w = SimWorld::new(Arc::new(spec), NoiseConfig::default());
            let d = idx(&w, "drawer");
            let (body, part) = (w.world_cloud(d), w.part_cloud(d, 0));
            let mut rig = Rig::new(Box::new(SimMotionChecker));
            let r = if pinch {
                skill_pinch_pull(&mut rig.env(&mut w), &body, &part)
            } else {
                skill_hook_pull(&mut rig.env(&mut w), &body, &part)
            };
            assert!(r.success, "{variant}: {}", r.feedback);
            assert!((w.objects[d].open_fraction - 0.15 / 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn hook_cannot_free_a_thumbtack_but_pinch_can() {
        let mut w = world("thumbtack", 4);
        let t = idx(&w, "thumbtack");
        let (body, head) = (w.world_cloud(t), w.part_cloud(t, 0));
        let mut rig = Rig::new(Box::new(SimMotionChecker));
        assert!(!skill_hook_pull(&mut rig.env(&mut w), &body, &head).success);
        let r = skill_pinch_pull(&mut rig.env(&mut w), &body, &head);
        assert!(r.success, "{}", r.feedback);
        assert!(r.now_held);
        assert!(w.objects[t].detached);
        assert_eq!(w.held(), Some(t));
        // whole-object centroid is not on the head
        let mut w2 = world("thumbtack", 4);
        assert!(!skill_pinch_pull(&mut rig.env(&mut w2), &body, &body).success);
    }

    #[test]
    fn pull_axis_of_vertical_face() {
        let face: PointCloud =
            (0..5).flat_map(|i| (0..5).map(move |j| Point3::new(1.0, i as f64 * 0.01, j as f64 * 0.01))).collect();
        assert_eq!(pull_axis(&face, Point3::new(0.0, 0.02, 0.02)).unwrap(), Point3::new(1.0, 0.0, 0.0));
        let top: PointCloud =
            (0..5).flat_map(|i| (0..5).map(move |j| Point3::new(i as f64 * 0.01, j as f64 * 0.01, 1.0))).collect();
        assert_eq!(outward_normal(&top, Point3::new(0.02, 0.02, 0.0)).unwrap(), Point3::new(0.0, 0.0, 1.0));
        assert_eq!(pull_axis(&top, Point3::new(0.02, 0.02, 0.0)), Err(Error::NoHorizontalNormal));
    }

    #[test]
    fn slip_injection_fails_and_requests_remap() {
        let spec = Arc::new(generate_scene("tabletop-pick", 0).unwrap());
        let mut w = SimWorld::new(spec, NoiseConfig { p_slip: 1.0, ..NoiseConfig::default() });
        let ball = w.world_cloud(idx(&w, "red_ball"));
        let scene = scene_cloud(&w);
        let mut rig = Rig::new(Box::new(SimMotionChecker));
        let r = skill_grasp(&mut rig.env(&mut w), &ball, &scene);
        assert!(!r.success);
        assert!(r.remap);
        assert!(r.feedback.contains("slipped"));
        assert!(!verify_held(&w));
    }

    #[test]
    fn proposer_is_sorted_and_deterministic() {
        let w = world("tabletop-pick", 5);
        let scene = scene_cloud(&w);
        let a = MockGraspProposer::default().propose(&scene).unwrap();
        let b = MockGraspProposer::default().propose(&scene).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|p| p[0].score >= p[1].score));
        assert!(a.iter().all(|c| c.width >= 0.0 && c.width <= 0.085));
    }

    proptest! {
        #[test]
        fn pull_axis_is_horizontal_unit(yaw in 0.0f64..6.28, tilt in -0.6f64..0.6, off in 0.05f64..0.5) {
            let u = Point3::new(-yaw.sin(), yaw.cos(), 0.0);
            let n = Point3::new(yaw.cos() * tilt.cos(), yaw.sin() * tilt.cos(), tilt.sin());
            let v = n.cross(&u);
            let c = Point3::new(1.0, 2.0, 0.5);
            let patch: PointCloud = (0..6)
                .flat_map(|i| (0..6).map(move |j| c + u * (i as f64 * 0.01) + v * (j as f64 * 0.01)))
                .collect();
            let axis = pull_axis(&patch, c - n * off).unwrap();
            prop_assert!(axis.z.abs() < 1e-9);
            prop_assert!((axis.norm() - 1.0).abs() < 1e-9);
            prop_assert!(axis.x * n.x + axis.y * n.y > 0.0);
        }
    }
}
