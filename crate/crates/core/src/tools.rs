//! Agent-facing tools over a simulated scene: symbolic state, retrieval,
//! spatial queries, interaction, navigation and remapping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::affordance::{detect_affordances, whole_object_affordance, AffordanceBackend, SimAffordanceBackend};
use crate::config::{AspConfig, LateralFrame, Mode};
use crate::error::{Error, Result};
use crate::geom::{self, Point3, PointCloud};
use crate::nav::{preferred_view_position, select_nav_goal};
use crate::scene_map::{build_from_frame, integrate_keyframe, rank_crops, Affordance, Crop, Object, ObjectId, ObjectMap};
use crate::semantics::{top_k, EmbeddingProvider, MockClassifier, MockEmbedding, RelevanceClassifier};
use crate::sim::{render_segmented_frame, NoiseConfig, SimWorld};
use crate::skills::{
    skill_drop, skill_grasp, skill_grasp_part, skill_hook_pull, skill_pinch_pull, skill_place, skill_tip_push, GraspProposer,
    MockGraspProposer, MotionChecker, SimMotionChecker, SkillEnv, SkillKind, SkillResult,
};

/// Agent-visible object symbol such as `red_ball_0`.
pub type ObjectKey = String;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub held_object: Option<ObjectKey>,
    pub inventory: Vec<ObjectKey>,
}

impl State {
    /// Held object not in the inventory, and no duplicate keys.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if let Some(h) = &self.held_object {
            if self.inventory.contains(h) {
                return Err(format!("held object '{h}' is also in the inventory"));
            }
        }
        let mut sorted = self.inventory.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(format!("duplicate inventory key '{}'", w[0]));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ToolValue {
    State(State),
    Real(f64),
    Flag(bool),
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolOutput {
    pub success: bool,
    pub feedback: String,
    pub output: ToolValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<SkillResult>,
}

impl ToolOutput {
    fn ok(feedback: impl Into<String>, output: ToolValue) -> Self {
        Self { success: true, feedback: feedback.into(), output, skill: None }
    }

    fn fail(feedback: impl Into<String>, output: ToolValue) -> Self {
        let feedback = feedback.into();
        let feedback = if feedback.is_empty() { "tool call failed".to_string() } else { feedback };
        Self { success: false, feedback, output, skill: None }
    }
}

/// Links a key to the object it was grounded on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyBinding {
    pub key: ObjectKey,
    pub main_id: ObjectId,
    /// Object in the local map built after the last `go_to` to this key.
    pub local_id: Option<ObjectId>,
    pub origin_query: String,
}

/// Perception and planning backends used by a session.
pub struct Backends {
    pub embedding: Box<dyn EmbeddingProvider>,
    pub classifier: Box<dyn RelevanceClassifier>,
    pub affordance: Box<dyn AffordanceBackend>,
    pub grasp: Box<dyn GraspProposer>,
    pub motion: Box<dyn MotionChecker>,
}

impl Backends {
    /// Deterministic in-process backends.
    pub fn mock(cfg: &AspConfig, noise: &NoiseConfig, seed: u64) -> Self {
        Self {
            embedding: Box::new(MockEmbedding { dim: cfg.map.dim }),
            classifier: Box::new(MockClassifier::default()),
            affordance: Box::new(SimAffordanceBackend::new(noise, seed)),
            grasp: Box::new(MockGraspProposer::default()),
            motion: Box::new(SimMotionChecker),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ParamSpec>,
}

fn tool(name: &str, description: &str, params: &[(&str, &str)]) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        description: description.into(),
        parameters: params
            .iter()
            .map(|(n, d)| ParamSpec { name: n.to_string(), kind: "string".into(), description: d.to_string() })
            .collect(),
    }
}

/// Tools offered to an agent in `mode`.
pub fn manifest(mode: Mode) -> Vec<ToolSpec> {
    let key = "inventory key of the object, e.g. red_ball_0";
    let mut tools = vec![
        tool(
            "object_retrieval",
            "Find objects matching an open-vocabulary description. Matching objects get new keys appended to the \
             inventory; objects already in the inventory are not added twice. Returns the state. An empty result is \
             not an error: rephrase the query and try again. After a manipulation the scene is re-observed on the \
             next call, which clears the inventory; retrieve objects again before using them.",
            &[("query", "short description of the object, e.g. 'red ball'")],
        ),
        tool(
            "distance_between",
            "Distance in meters between the centers of two inventory objects.",
            &[("a", key), ("b", key)],
        ),
        tool("distance_to", "Distance in meters from the robot to the center of an inventory object.", &[("a", key)]),
        tool(
            "left_of",
            "True when object a is strictly left of object b as seen by the robot's camera.",
            &[("a", key), ("b", key)],
        ),
        tool(
            "right_of",
            "True when object a is strictly right of object b as seen by the robot's camera.",
            &[("a", key), ("b", key)],
        ),
        tool("size_of", "Largest dimension in meters of an inventory object.", &[("a", key)]),
        tool(
            "interact",
            "Perform an action on an inventory object, e.g. 'pick up', 'pick up by the handle', 'place in', \
             'drop into', 'press the button', 'open', 'remove'. Picking and pulling require an empty gripper \
             (held_object must be none); placing and dropping require a held object and act on the target. \
             The skill is chosen from what the object affords for the action. Returns the state.",
            &[("obj", key), ("action", "what to do with the object")],
        ),
    ];
    if mode == Mode::Mobile {
        tools.push(tool(
            "go_to",
            "Drive to a pose suited for performing the action on an inventory object, then re-detect it from \
             there. Objects must be reached with go_to before interact can act on them.",
            &[("obj", key), ("action", "the action planned at the destination")],
        ));
    }
    tools
}

/// Lowercase, underscores for whitespace, only `[a-z0-9_]` kept.
pub fn sanitize_query(query: &str) -> String {
    let words: Vec<String> = query
        .split_whitespace()
        .map(|w| w.to_lowercase().chars().filter(|c| c.is_ascii_alphanumeric() || *c == '_').collect::<String>())
        .filter(|w| !w.is_empty())
        .collect();
    if words.is_empty() {
        "object".into()
    } else {
        words.join("_")
    }
}

/// Skill, affordance and geometry resolved for an `interact` call.
#[derive(Debug, Clone)]
pub struct PreparedInteraction {
    pub key: ObjectKey,
    pub skill: SkillKind,
    pub affordance: Affordance,
    object_cloud: PointCloud,
    scene_cloud: PointCloud,
}

/// Objects the classifier accepts among the top-k for `query`, best first.
fn relevant_objects(
    map: &ObjectMap,
    query: &str,
    cfg: &AspConfig,
    embedding: &dyn EmbeddingProvider,
    classifier: &mut dyn RelevanceClassifier,
) -> Result<Vec<ObjectId>> {
    let q = embedding.embed_text(query)?;
    let mut out = Vec::new();
    for (id, _) in top_k(map, &q, cfg.retrieval.k)? {
        let obj = map.get(id).expect("top_k returns map ids");
        let views: Vec<Crop> =
            rank_crops(obj.crops.clone(), cfg.map.border_penalty).into_iter().take(cfg.retrieval.n_views).collect();
        if classifier.is_relevant(&views, query)? {
            out.push(id);
        }
    }
    Ok(out)
}

fn map_cloud(map: &ObjectMap) -> PointCloud {
    let mut all = PointCloud::default();
    for o in &map.objects {
        all.extend(&o.point_cloud);
    }
    all
}

/// One episode's tool layer: a strictly sequential state machine over a
/// simulated world.
pub struct Session {
    world: SimWorld,
    cfg: AspConfig,
    backends: Backends,
    main: ObjectMap,
    local: Option<ObjectMap>,
    state: State,
    bindings: Vec<KeyBinding>,
    counters: BTreeMap<String, usize>,
    next_frame: u32,
    map_builds: usize,
}

impl Session {
    pub fn new(world: SimWorld, cfg: AspConfig, backends: Backends) -> Result<Self> {
        if cfg.mode != world.mode() {
            return Err(Error::InvalidParameter(format!(
                "config mode {:?} does not match scene mode {:?}",
                cfg.mode,
                world.mode()
            )));
        }
        cfg.nav.validate()?;
        let mut s = Self {
            world,
            cfg,
            backends,
            main: ObjectMap::default(),
            local: None,
            state: State::default(),
            bindings: Vec::new(),
            counters: BTreeMap::new(),
            next_frame: 0,
            map_builds: 0,
        };
        s.rebuild_main()?;
        Ok(s)
    }

    /// Session with mock backends seeded from the scene.
    pub fn with_mocks(world: SimWorld, cfg: AspConfig) -> Result<Self> {
        let backends = Backends::mock(&cfg, world.noise(), world.spec().seed);
        Self::new(world, cfg, backends)
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut SimWorld {
        &mut self.world
    }

    pub fn config(&self) -> &AspConfig {
        &self.cfg
    }

    pub fn backends_mut(&mut self) -> &mut Backends {
        &mut self.backends
    }

    pub fn map(&self) -> &ObjectMap {
        &self.main
    }

    pub fn local_map(&self) -> Option<&ObjectMap> {
        self.local.as_ref()
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn bindings(&self) -> &[KeyBinding] {
        &self.bindings
    }

    pub fn binding(&self, key: &str) -> Option<&KeyBinding> {
        self.bindings.iter().find(|b| b.key == key)
    }

    /// How many times the main map has been built.
    pub fn map_builds(&self) -> usize {
        self.map_builds
    }

    /// Main-map object behind a key.
    pub fn object(&self, key: &str) -> Option<&Object> {
        self.main.get(self.binding(key)?.main_id)
    }

    fn take_frame_id(&mut self) -> u32 {
        let id = self.next_frame;
        self.next_frame += 1;
        id
    }

    fn rebuild_main(&mut self) -> Result<()> {
        let noise = self.world.noise().clone();
        let cameras = match self.world.mode() {
            Mode::Tabletop => vec![self.world.observation_camera()],
            Mode::Mobile => self.world.spec().keyframes.clone(),
        };
        let mut map: Option<ObjectMap> = None;
        for cam in cameras {
            let id = self.take_frame_id();
            let frame = render_segmented_frame(&self.world, &cam, id, &noise);
            map = Some(match map {
                None => build_from_frame(&frame, &self.cfg.map, self.backends.embedding.as_ref())?,
                Some(m) => integrate_keyframe(m, &frame, &self.cfg.map, self.backends.embedding.as_ref())?,
            });
        }
        self.main = map.unwrap_or_default();
        self.map_builds += 1;
        Ok(())
    }

    fn current_state(&self) -> ToolValue {
        ToolValue::State(self.state.clone())
    }

    fn fresh_key(&mut self, query: &str) -> ObjectKey {
        let prefix = sanitize_query(query);
        let n = self.counters.entry(prefix.clone()).or_insert(0);
        let key = format!("{prefix}_{n}");
        *n += 1;
        key
    }

    /// Marks the map stale and forgets every key except the held one.
    pub fn trigger_remap(&mut self, _reason: &str) {
        self.main.stale = true;
        self.local = None;
        self.state.inventory.clear();
        self.bindings.clear();
    }

    fn stale_failure(&self, out: ToolValue) -> Option<ToolOutput> {
        self.main.stale.then(|| ToolOutput::fail(Error::StaleMap.to_string(), out))
    }

    fn inventory_object(&self, key: &str, out: &ToolValue) -> std::result::Result<&Object, ToolOutput> {
        if !self.state.inventory.iter().any(|k| k == key) {
            return Err(ToolOutput::fail(format!("object '{key}' is not in inventory"), out.clone()));
        }
        self.object(key).ok_or_else(|| ToolOutput::fail(format!("object '{key}' is no longer in the map"), out.clone()))
    }

    pub fn object_retrieval(&mut self, query: &str) -> ToolOutput {
        if self.main.stale {
            self.world.move_gripper_home();
            if let Err(e) = self.rebuild_main() {
                return ToolOutput::fail(format!("could not rebuild the map: {e}"), self.current_state());
            }
        }
        let found = match relevant_objects(
            &self.main,
            query,
            &self.cfg,
            self.backends.embedding.as_ref(),
            self.backends.classifier.as_mut(),
        ) {
            Ok(f) => f,
            Err(e) => return ToolOutput::fail(format!("retrieval failed: {e}"), self.current_state()),
        };
        if found.is_empty() {
            return ToolOutput::ok(format!("no objects found for query '{query}'"), self.current_state());
        }
        let mut added = Vec::new();
        let mut known = Vec::new();
        for id in found {
            if let Some(b) = self.bindings.iter().find(|b| b.main_id == id) {
                known.push(b.key.clone());
                continue;
            }
            let key = self.fresh_key(query);
            self.bindings.push(KeyBinding { key: key.clone(), main_id: id, local_id: None, origin_query: query.to_string() });
            self.state.inventory.push(key.clone());
            added.push(key);
        }
        let mut msg = if added.is_empty() {
            format!("no new objects for query '{query}'")
        } else {
            format!("found {} object(s) for '{query}': {}", added.len(), added.join(", "))
        };
        if !known.is_empty() {
            msg.push_str(&format!("; already known: {}", known.join(", ")));
        }
        ToolOutput::ok(msg, self.current_state())
    }

    pub fn distance_between(&self, a: &str, b: &str) -> ToolOutput {
        let none = ToolValue::None;
        if let Some(f) = self.stale_failure(none.clone()) {
            return f;
        }
        let (oa, ob) = match (self.inventory_object(a, &none), self.inventory_object(b, &none)) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        let d = oa.centroid().distance(&ob.centroid());
        ToolOutput::ok(format!("{a} and {b} are {d:.3} m apart"), ToolValue::Real(d))
    }

    pub fn distance_to(&self, a: &str) -> ToolOutput {
        let none = ToolValue::None;
        if let Some(f) = self.stale_failure(none.clone()) {
            return f;
        }
        let oa = match self.inventory_object(a, &none) {
            Ok(o) => o,
            Err(e) => return e,
        };
        let d = self.world.reference_point().distance(&oa.centroid());
        ToolOutput::ok(format!("{a} is {d:.3} m from the robot"), ToolValue::Real(d))
    }

    /// Coordinate along the "left" axis of the configured frame.
    pub fn lateral(&self, p: &Point3) -> f64 {
        let yaw = match self.cfg.lateral_frame {
            LateralFrame::Observation => self.world.observation_yaw(),
            LateralFrame::World => 0.0,
        };
        -yaw.sin() * p.x + yaw.cos() * p.y
    }

    fn lateral_pair(&self, a: &str, b: &str) -> std::result::Result<(f64, f64), ToolOutput> {
        let none = ToolValue::None;
        if let Some(f) = self.stale_failure(none.clone()) {
            return Err(f);
        }
        let oa = self.inventory_object(a, &none)?;
        let ob = self.inventory_object(b, &none)?;
        Ok((self.lateral(&oa.centroid()), self.lateral(&ob.centroid())))
    }

    pub fn left_of(&self, a: &str, b: &str) -> ToolOutput {
        match self.lateral_pair(a, b) {
            Ok((la, lb)) => {
                let v = la > lb;
                ToolOutput::ok(format!("{a} is {}left of {b}", if v { "" } else { "not " }), ToolValue::Flag(v))
            }
            Err(e) => e,
        }
    }

    pub fn right_of(&self, a: &str, b: &str) -> ToolOutput {
        match self.lateral_pair(a, b) {
            Ok((la, lb)) => {
                let v = la < lb;
                ToolOutput::ok(format!("{a} is {}right of {b}", if v { "" } else { "not " }), ToolValue::Flag(v))
            }
            Err(e) => e,
        }
    }

    pub fn size_of(&self, a: &str) -> ToolOutput {
        let none = ToolValue::None;
        if let Some(f) = self.stale_failure(none.clone()) {
            return f;
        }
        let oa = match self.inventory_object(a, &none) {
            Ok(o) => o,
            Err(e) => return e,
        };
        let e = geom::aabb_extents(&oa.point_cloud).expect("map objects are non-empty");
        let s = e.x.max(e.y).max(e.z);
        ToolOutput::ok(format!("{a} is {s:.3} m across"), ToolValue::Real(s))
    }

    /// Resolves the skill and affordance for `interact` without acting.
    pub fn prepare_interact(&mut self, key: &str, action: &str) -> std::result::Result<PreparedInteraction, ToolOutput> {
        let st = self.current_state();
        if let Some(f) = self.stale_failure(st.clone()) {
            return Err(f);
        }
        self.inventory_object(key, &st)?;
        let binding = self.binding(key).expect("inventory keys are bound").clone();
        let (map, id) = match self.world.mode() {
            Mode::Tabletop => (&self.main, binding.main_id),
            Mode::Mobile => match (&self.local, binding.local_id) {
                (Some(local), Some(id)) => (local, id),
                _ => return Err(ToolOutput::fail(format!("'{key}' is out of reach; call go_to on it first"), st)),
            },
        };
        let obj = map.get(id).expect("bindings point into their map");
        let affordance = if self.cfg.no_aff {
            let views: Vec<Crop> =
                rank_crops(obj.crops.clone(), self.cfg.map.border_penalty).into_iter().take(self.cfg.affordance.k_crops).collect();
            let skill = match self.backends.affordance.propose(&views, action) {
                Ok(p) => p.first().map(|p| p.skill),
                Err(e) => return Err(ToolOutput::fail(Error::AffordanceDetectionFailed(e.to_string()).to_string(), st)),
            };
            match skill {
                Some(s) => whole_object_affordance(obj, s),
                None => return Err(ToolOutput::fail(format!("no skill of '{key}' matches the action '{action}'"), st)),
            }
        } else {
            match detect_affordances(obj, action, &self.cfg.affordance, self.cfg.map.border_penalty, self.backends.affordance.as_mut()) {
                Ok(affs) if !affs.is_empty() => affs.into_iter().next().expect("non-empty"),
                Ok(_) => return Err(ToolOutput::fail(format!("no affordance of '{key}' matches the action '{action}'"), st)),
                Err(e) => return Err(ToolOutput::fail(e.to_string(), st)),
            }
        };
        let skill = affordance.skill;
        if skill.needs_empty_hand() {
            if let Some(h) = &self.state.held_object {
                return Err(ToolOutput::fail(
                    format!("precondition failed: {skill} requires held_object to be none, but '{h}' is held"),
                    st,
                ));
            }
        }
        if skill.needs_held_object() && self.state.held_object.is_none() {
            return Err(ToolOutput::fail(format!("precondition failed: {skill} requires a held object, but held_object is none"), st));
        }
        Ok(PreparedInteraction {
            key: key.to_string(),
            skill,
            affordance,
            object_cloud: obj.point_cloud.clone(),
            scene_cloud: map_cloud(map),
        })
    }

    /// Runs a prepared interaction and updates the symbolic state.
    pub fn execute_interact(&mut self, p: PreparedInteraction) -> ToolOutput {
        let mut env = SkillEnv {
            world: &mut self.world,
            proposer: self.backends.grasp.as_mut(),
            checker: self.backends.motion.as_mut(),
            cfg: &self.cfg.skills,
        };
        let aff = &p.affordance.point_cloud;
        let result = match p.skill {
            SkillKind::Grasp => skill_grasp(&mut env, &p.object_cloud, &p.scene_cloud),
            SkillKind::GraspPart => skill_grasp_part(&mut env, &p.object_cloud, aff, &p.scene_cloud),
            SkillKind::Place => skill_place(&mut env, &p.object_cloud),
            SkillKind::Drop => skill_drop(&mut env, &p.object_cloud),
            SkillKind::TipPush => skill_tip_push(&mut env, &p.object_cloud, aff),
            SkillKind::PinchPull => skill_pinch_pull(&mut env, &p.object_cloud, aff),
            SkillKind::HookPull => skill_hook_pull(&mut env, &p.object_cloud, aff),
        };
        if result.success {
            if result.now_held {
                self.state.inventory.retain(|k| *k != p.key);
                self.state.held_object = Some(p.key.clone());
            } else if p.skill.needs_held_object() {
                if let Some(released) = self.state.held_object.take() {
                    self.bindings.retain(|b| b.key != released);
                }
            }
        }
        if result.remap && self.world.mode() == Mode::Tabletop {
            self.trigger_remap(&result.feedback);
        }
        let feedback = format!("{} ({} on '{}')", result.feedback, p.skill, p.affordance.part);
        let mut out = if result.success {
            ToolOutput::ok(feedback, self.current_state())
        } else {
            ToolOutput::fail(feedback, self.current_state())
        };
        out.skill = Some(result);
        out
    }

    pub fn interact(&mut self, key: &str, action: &str) -> ToolOutput {
        match self.prepare_interact(key, action) {
            Ok(p) => self.execute_interact(p),
            Err(f) => f,
        }
    }

    /// Navigates to a pose suited for `action` on `key`, then re-grounds the
    /// key in a local map built from the new viewpoint.
    pub fn go_to(&mut self, key: &str, action: &str) -> ToolOutput {
        let st = self.current_state();
        if let Some(f) = self.stale_failure(st.clone()) {
            return f;
        }
        if self.world.mode() != Mode::Mobile {
            return ToolOutput::fail("go_to is only available in mobile mode", st);
        }
        let obj = match self.inventory_object(key, &st) {
            Ok(o) => o.clone(),
            Err(e) => return e,
        };
        let Some(grid) = self.world.grid().cloned() else {
            return ToolOutput::fail("the scene has no occupancy grid", st);
        };
        let centroid = obj.centroid();
        let r0 = self.cfg.nav.radii[0];
        let mut nav = self.cfg.nav.clone();
        let p_aff = if self.cfg.no_aff {
            nav.lambda_aff = 0.0;
            None
        } else {
            match detect_affordances(&obj, action, &self.cfg.affordance, self.cfg.map.border_penalty, self.backends.affordance.as_mut()) {
                Ok(affs) => affs.first().and_then(|a| preferred_view_position(&a.point_cloud, centroid, r0).ok()),
                Err(_) => None,
            }
        };
        let goal = match select_nav_goal(&grid, centroid.xy(), p_aff, &nav) {
            Ok(g) => g,
            Err(e) => return ToolOutput::fail(e.to_string(), st),
        };
        if let Err(e) = self.world.navigate(goal.pose, nav.lethal_threshold) {
            return ToolOutput::fail(e.to_string(), st);
        }
        for b in &mut self.bindings {
            b.local_id = None;
        }
        self.local = None;
        let arrived = format!("arrived at ({:.2}, {:.2}) facing {:.0} deg", goal.pose.x, goal.pose.y, goal.pose.theta.to_degrees());
        let noise = self.world.noise().clone();
        let cam = self.world.observation_camera();
        let frame_id = self.take_frame_id();
        let frame = render_segmented_frame(&self.world, &cam, frame_id, &noise);
        let local = match build_from_frame(&frame, &self.cfg.map, self.backends.embedding.as_ref()) {
            Ok(m) => m,
            Err(e) => return ToolOutput::fail(format!("{arrived}, but the local map failed: {e}"), self.current_state()),
        };
        let query = self.binding(key).expect("inventory keys are bound").origin_query.clone();
        let found = match relevant_objects(&local, &query, &self.cfg, self.backends.embedding.as_ref(), self.backends.classifier.as_mut())
        {
            Ok(f) => f,
            Err(e) => return ToolOutput::fail(format!("{arrived}, but redetection failed: {e}"), self.current_state()),
        };
        let best = found.into_iter().min_by(|a, b| {
            let da = local.get(*a).expect("local id").centroid().distance(&centroid);
            let db = local.get(*b).expect("local id").centroid().distance(&centroid);
            da.total_cmp(&db).then(a.cmp(b))
        });
        self.local = Some(local);
        match best {
            Some(id) => {
                if let Some(b) = self.bindings.iter_mut().find(|b| b.key == key) {
                    b.local_id = Some(id);
                }
                ToolOutput::ok(format!("{arrived}; '{key}' redetected"), self.current_state())
            }
            None => ToolOutput::fail(format!("{arrived}, but redetection found nothing matching '{query}'"), self.current_state()),
        }
    }

    /// Grounds `key` on a main-map object directly (used by tests and log replay).
    pub fn bind_object(&mut self, key: &str, main_id: ObjectId, query: &str) -> Result<()> {
        if self.main.get(main_id).is_none() {
            return Err(Error::InvalidParameter(format!("no object {main_id} in the map")));
        }
        if self.binding(key).is_some() || self.state.held_object.as_deref() == Some(key) {
            return Err(Error::InvalidParameter(format!("key '{key}' is already bound")));
        }
        self.bindings.push(KeyBinding { key: key.into(), main_id, local_id: None, origin_query: query.into() });
        self.state.inventory.push(key.into());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{approach_side_correct, generate_scene, judge};
    use std::sync::Arc;

    fn session(template: &str, seed: u64, cfg: AspConfig) -> Session {
        let world = SimWorld::new(Arc::new(generate_scene(template, seed).unwrap()), NoiseConfig::default());
        Session::with_mocks(world, cfg).unwrap()
    }

    fn inventory(out: &ToolOutput) -> Vec<String> {
        match &out.output {
            ToolValue::State(s) => s.inventory.clone(),
            other => panic!("expected state, got {other:?}"),
        }
    }

    #[test]
    fn key_sanitizing() {
        assert_eq!(sanitize_query("Red  Ball!"), "red_ball");
        assert_eq!(sanitize_query("   "), "object");
        assert_eq!(sanitize_query("the mug's handle"), "the_mugs_handle");
    }

    #[test]
    fn retrieval_adds_keys_once() {
        let mut s = session("tabletop-pick", 0, AspConfig::tabletop());
        let out = s.object_retrieval("red ball");
        assert!(out.success);
        assert_eq!(inventory(&out), vec!["red_ball_0"]);
        let again = s.object_retrieval("red ball");
        assert_eq!(inventory(&again), vec!["red_ball_0"]);
        assert_eq!(s.map_builds(), 1);
        let none = s.object_retrieval("purple elephant");
        assert!(none.success);
        assert!(none.feedback.contains("no objects found for query"));
    }

    #[test]
    fn retrieval_returns_every_egg() {
        let seed = (0..100)
            .find(|&s| generate_scene("tabletop-pick", s).unwrap().objects.iter().filter(|o| o.label == "egg").count() == 2)
            .unwrap();
        let mut s = session("tabletop-pick", seed, AspConfig::tabletop());
        assert_eq!(inventory(&s.object_retrieval("egg")), vec!["egg_0", "egg_1"]);
    }

    #[test]
    fn spatial_tools_and_unknown_keys() {
        let mut s = session("tabletop-pick", 3, AspConfig::tabletop());
        s.object_retrieval("red ball");
        s.object_retrieval("bowl");
        let d = s.distance_between("red_ball_0", "bowl_0");
        let d2 = s.distance_between("bowl_0", "red_ball_0");
        assert_eq!(d.output, d2.output);
        assert_eq!(s.distance_between("bowl_0", "bowl_0").output, ToolValue::Real(0.0));
        let lf = s.left_of("red_ball_0", "bowl_0").output;
        let rt = s.right_of("red_ball_0", "bowl_0").output;
        assert_ne!(lf, rt);
        assert_eq!(s.left_of("bowl_0", "bowl_0").output, ToolValue::Flag(false));
        assert_eq!(s.right_of("bowl_0", "bowl_0").output, ToolValue::Flag(false));
        let bad = s.size_of("unicorn_0");
        assert!(!bad.success);
        assert!(bad.feedback.contains("not in inventory"));
    }

    #[test]
    fn larger_duckie_is_larger() {
        let mut s = session("duckie-pair", 4, AspConfig::tabletop());
        let keys = inventory(&s.object_retrieval("rubber duckie"));
        assert_eq!(keys.len(), 2);
        let size = |s: &Session, k: &str| match s.size_of(k).output {
            ToolValue::Real(v) => v,
            _ => unreachable!(),
        };
        let big_at = s.world().object_centroid(s.world().spec().object_index("duckie_big").unwrap());
        let dist = |k: &str| s.object(k).unwrap().centroid().distance(&big_at);
        let (big, small) = if dist(&keys[0]) < dist(&keys[1]) { (&keys[0], &keys[1]) } else { (&keys[1], &keys[0]) };
        assert!(size(&s, big) > size(&s, small));
    }

    #[test]
    fn pick_up_then_remap() {
        let mut s = session("tabletop-pick", 1, AspConfig::tabletop());
        s.object_retrieval("blue mug");
        s.object_retrieval("green cube");
        let out = s.interact("blue_mug_0", "pick up");
        assert!(out.success, "{}", out.feedback);
        assert_eq!(s.state().held_object.as_deref(), Some("blue_mug_0"));
        assert!(s.state().inventory.is_empty());
        assert!(s.map().stale);
        let stale = s.distance_to("green_cube_0");
        assert!(!stale.success);
        assert!(stale.feedback.contains("stale"));
        s.object_retrieval("green cube");
        assert_eq!(s.map_builds(), 2);
        assert_eq!(s.state().inventory, vec!["green_cube_1"]);
        let blocked = s.interact("green_cube_1", "pick up");
        assert!(!blocked.success);
        assert!(blocked.feedback.contains("held_object"));
        assert_eq!(s.state().held_object.as_deref(), Some("blue_mug_0"));
    }

    #[test]
    fn pick_and_place_scores_one() {
        let mut s = session("tabletop-pick", 2, AspConfig::tabletop());
        s.object_retrieval("red ball");
        assert!(s.interact("red_ball_0", "pick up").success);
        s.object_retrieval("bowl");
        let out = s.interact("bowl_0", "place in");
        assert!(out.success, "{}", out.feedback);
        assert!(s.state().held_object.is_none());
        let task = s.world().spec().task("pick-place").unwrap().clone();
        assert_eq!(judge(s.world(), &task), 1.0);
    }

    #[test]
    fn drawer_opens() {
        let mut s = session("drawer", 5, AspConfig::tabletop());
        s.object_retrieval("drawer");
        let out = s.interact("drawer_0", "open");
        assert!(out.success, "{}", out.feedback);
        assert!(s.world().objects[0].open_fraction > 0.0);
        let skill = out.skill.unwrap().skill;
        assert!(matches!(skill, SkillKind::PinchPull | SkillKind::HookPull));
    }

    #[test]
    fn no_aff_keyboard_misses_the_space_bar() {
        for no_aff in [false, true] {
            let mut s = session("keyboard", 2, AspConfig::tabletop().with_no_aff(no_aff));
            s.object_retrieval("keyboard");
            let out = s.interact("keyboard_0", "press the space bar");
            assert_eq!(out.success, !no_aff, "{}", out.feedback);
        }
    }

    #[test]
    fn go_to_is_mobile_only() {
        let mut s = session("tabletop-pick", 0, AspConfig::tabletop());
        s.object_retrieval("bowl");
        assert!(!s.go_to("bowl_0", "drop").success);
    }

    #[test]
    fn mobile_cabinet_approach_and_redetection() {
        let mut s = session("mobile-room", 3, AspConfig::mobile());
        s.object_retrieval("metal cabinet");
        assert_eq!(s.state().inventory, vec!["metal_cabinet_0"]);
        let blocked = s.interact("metal_cabinet_0", "open the drawer");
        assert!(blocked.feedback.contains("go_to"));
        let out = s.go_to("metal_cabinet_0", "open the drawer");
        assert!(out.success, "{}", out.feedback);
        assert!(approach_side_correct(s.world(), "metal_cabinet"));
        let b = s.binding("metal_cabinet_0").unwrap();
        let local = s.local_map().unwrap().get(b.local_id.unwrap()).unwrap().centroid();
        let main = s.map().get(b.main_id).unwrap().centroid();
        assert!(local.distance(&main) < 0.10, "{}", local.distance(&main));
        let open = s.interact("metal_cabinet_0", "open the drawer");
        assert!(open.success, "{}", open.feedback);
        let task = s.world().spec().task("cabinet-open").unwrap().clone();
        assert_eq!(judge(s.world(), &task), 1.0);
    }

    #[test]
    fn manifest_lists_go_to_only_in_mobile() {
        assert!(!manifest(Mode::Tabletop).iter().any(|t| t.name == "go_to"));
        assert!(manifest(Mode::Mobile).iter().any(|t| t.name == "go_to"));
    }
}
