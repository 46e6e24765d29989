//! Shipped scene templates. Layouts are randomized by seed; everything else
//! is fixed, so `generate_scene(name, seed)` is a pure function.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::Mode;
use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud, Pose2D, Pose3D};
use crate::nav::OccupancyGrid;
use crate::skills::SkillKind;

use super::judge::{Goal, TaskSpec};
use super::render::camera_pose;
use super::scene::{JointSpec, ObjectSpec, PartBehavior, PartSpec, SceneSpec};
use super::shapes;

pub const TEMPLATES: &[&str] =
    &["tabletop-pick", "duckie-pair", "keyboard", "desk-bell", "thumbtack", "power-adapter", "drawer", "mobile-room"];

/// Point spacing of tabletop clouds.
const TT: f64 = 0.01;
/// Point spacing of room-scale clouds.
const MS: f64 = 0.03;

const X: Point3 = Point3::new(1.0, 0.0, 0.0);
const Y: Point3 = Point3::new(0.0, 1.0, 0.0);
const Z: Point3 = Point3::new(0.0, 0.0, 1.0);

pub fn generate_scene(template: &str, seed: u64) -> Result<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(template_seed(template, seed));
    let spec = match template {
        "tabletop-pick" => tabletop_pick(&mut rng, seed),
        "duckie-pair" => duckie_pair(&mut rng, seed),
        "keyboard" => keyboard(&mut rng, seed),
        "desk-bell" => desk_bell(&mut rng, seed),
        "thumbtack" => thumbtack(&mut rng, seed),
        "power-adapter" => power_adapter(&mut rng, seed),
        "drawer" => drawer(&mut rng, seed),
        "mobile-room" => mobile_room(&mut rng, seed),
        other => return Err(Error::UnknownTemplate(other.to_string())),
    }?;
    spec.validate()?;
    Ok(spec)
}

fn template_seed(template: &str, seed: u64) -> u64 {
    let d = Sha256::digest(template.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes")) ^ seed
}

fn pose(x: f64, y: f64, z: f64, yaw: f64) -> Pose3D {
    Pose3D::from_rpy(Point3::new(x, y, z), 0.0, 0.0, yaw)
}

fn object(id: &str, label: &str, pose: Pose3D, cloud: PointCloud) -> ObjectSpec {
    ObjectSpec {
        id: id.into(),
        label: label.into(),
        pose,
        cloud,
        parts: vec![],
        supported_by: None,
        container: false,
        movable: true,
        joint: None,
    }
}

fn part(name: &str, cloud: PointCloud, skill: SkillKind, verbs: &[&str], behavior: PartBehavior) -> PartSpec {
    PartSpec { name: name.into(), cloud, skill, verbs: verbs.iter().map(|s| s.to_string()).collect(), behavior }
}

fn with_parts(mut o: ObjectSpec, parts: Vec<PartSpec>) -> ObjectSpec {
    for p in &parts {
        o.cloud.extend(&p.cloud);
    }
    o.parts = parts;
    o
}

fn tabletop_scene(template: &str, seed: u64, objects: Vec<ObjectSpec>, tasks: Vec<TaskSpec>) -> Result<SceneSpec> {
    let home = camera_pose(Point3::new(-0.25, 0.0, 0.8), 0.0, 58f64.to_radians());
    Ok(SceneSpec {
        template: template.into(),
        seed,
        mode: Mode::Tabletop,
        objects,
        grid: None,
        keyframes: vec![home],
        home_camera: home,
        robot_base: Pose2D::new(-0.45, 0.0, 0.0),
        tasks,
    })
}

/// Rejection-samples a free spot; `taken` holds (x, y, radius).
fn sample_spot(
    rng: &mut ChaCha8Rng,
    taken: &mut Vec<(f64, f64, f64)>,
    radius: f64,
    xr: (f64, f64),
    yr: (f64, f64),
    gap: f64,
) -> Result<(f64, f64)> {
    for _ in 0..5000 {
        let x = rng.random_range(xr.0..xr.1);
        let y = rng.random_range(yr.0..yr.1);
        if taken.iter().all(|&(tx, ty, tr)| (x - tx).hypot(y - ty) >= radius + tr + gap) {
            taken.push((x, y, radius));
            return Ok((x, y));
        }
    }
    Err(Error::InvalidParameter("could not place all objects; scene is too crowded".into()))
}

const TABLE_X: (f64, f64) = (0.0, 0.45);
const TABLE_Y: (f64, f64) = (-0.33, 0.33);

fn ball(r: f64, spacing: f64) -> PointCloud {
    shapes::sphere(Point3::new(0.0, 0.0, r), r, spacing)
}

fn cuboid(size: [f64; 3], spacing: f64) -> PointCloud {
    shapes::box_surface([0.0, 0.0], 0.0, size, spacing)
}

/// Tabletop distractors; no two labels share a token with each other or
/// with the fixed tabletop objects.
fn distractor(kind: usize) -> (&'static str, PointCloud, f64) {
    match kind {
        0 => ("yellow banana", cuboid([0.18, 0.04, 0.035], TT), 0.09),
        1 => ("tomato", ball(0.035, TT), 0.035),
        2 => ("sponge", cuboid([0.09, 0.06, 0.03], TT), 0.055),
        3 => ("toy car", cuboid([0.1, 0.05, 0.04], TT), 0.056),
        _ => ("apple", ball(0.04, TT), 0.04),
    }
}

fn add_distractors(
    rng: &mut ChaCha8Rng,
    taken: &mut Vec<(f64, f64, f64)>,
    objects: &mut Vec<ObjectSpec>,
    count: usize,
    eggs: usize,
) -> Result<()> {
    let mut kinds: Vec<usize> = (0..5).collect();
    kinds.shuffle(rng);
    for &k in kinds.iter().take(count) {
        let (label, cloud, r) = distractor(k);
        let (x, y) = sample_spot(rng, taken, r, TABLE_X, TABLE_Y, 0.06)?;
        let id = label.replace(' ', "_");
        objects.push(object(&id, label, pose(x, y, 0.0, rng.random_range(0.0..TAU)), cloud));
    }
    for e in 0..eggs {
        let (x, y) = sample_spot(rng, taken, 0.025, TABLE_X, TABLE_Y, 0.06)?;
        objects.push(object(&format!("egg_{e}"), "egg", pose(x, y, 0.0, 0.0), ball(0.025, TT)));
    }
    Ok(())
}

fn mug() -> ObjectSpec {
    let body = shapes::upright_cylinder(0.04, 0.1, TT, false, true);
    let handle = shapes::arc_tube(Point3::new(0.0, 0.04, 0.05), Y, Z, 0.025, -FRAC_PI_2, FRAC_PI_2, 0.005, 0.006);
    with_parts(
        object("blue_mug", "blue mug", Pose3D::identity(), body),
        vec![part("handle", handle, SkillKind::GraspPart, &["handle"], PartBehavior::None)],
    )
}

fn tabletop_pick(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneSpec> {
    let mut taken = Vec::new();
    let mut objects = Vec::new();
    let place = |rng: &mut ChaCha8Rng, taken: &mut Vec<_>, mut o: ObjectSpec, r: f64| -> Result<ObjectSpec> {
        let (x, y) = sample_spot(rng, taken, r, TABLE_X, TABLE_Y, 0.06)?;
        o.pose = pose(x, y, 0.0, rng.random_range(0.0..TAU));
        Ok(o)
    };
    let mut bowl = object("bowl", "bowl", Pose3D::identity(), shapes::upright_cylinder(0.08, 0.06, TT, false, true));
    bowl.container = true;
    bowl.movable = false;
    objects.push(place(rng, &mut taken, bowl, 0.08)?);
    objects.push(place(rng, &mut taken, object("red_ball", "red ball", Pose3D::identity(), ball(0.035, TT)), 0.035)?);
    objects.push(place(rng, &mut taken, mug(), 0.07)?);
    objects.push(place(rng, &mut taken, object("green_cube", "green cube", Pose3D::identity(), cuboid([0.05; 3], TT)), 0.036)?);
    let n = rng.random_range(0..=2);
    let eggs = rng.random_range(0..=2);
    add_distractors(rng, &mut taken, &mut objects, n, eggs)?;
    let tasks = vec![
        TaskSpec {
            name: "pick-place".into(),
            query: "put the red ball in the bowl".into(),
            goal: Goal::Contained { objects: vec!["red_ball".into()], container: "bowl".into() },
        },
        TaskSpec {
            name: "mug-handle".into(),
            query: "pick up the blue mug by the handle".into(),
            goal: Goal::Held { object: "blue_mug".into() },
        },
    ];
    tabletop_scene("tabletop-pick", seed, objects, tasks)
}

fn duckie(scale: f64, spacing: f64) -> PointCloud {
    let mut c = shapes::sphere(Point3::new(0.0, 0.0, 0.03 * scale), 0.03 * scale, spacing);
    c.extend(&shapes::sphere(Point3::new(0.02 * scale, 0.0, 0.07 * scale), 0.018 * scale, spacing));
    c
}

fn duckie_pair(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneSpec> {
    let small = rng.random_range(0.9..1.1);
    let big = small * rng.random_range(1.6..2.0);
    let mut taken = Vec::new();
    let mut objects = Vec::new();
    for (id, s) in [("duckie_small", small), ("duckie_big", big)] {
        let (x, y) = sample_spot(rng, &mut taken, 0.05 * s, TABLE_X, TABLE_Y, 0.08)?;
        objects.push(object(id, "rubber duckie", pose(x, y, 0.0, rng.random_range(0.0..TAU)), duckie(s, TT)));
    }
    let n = rng.random_range(1..=2);
    add_distractors(rng, &mut taken, &mut objects, n, 0)?;
    let tasks = vec![
        TaskSpec {
            name: "larger".into(),
            query: "pick up the larger rubber duckie".into(),
            goal: Goal::Held { object: "duckie_big".into() },
        },
        TaskSpec {
            name: "smaller".into(),
            query: "pick up the smaller rubber duckie".into(),
            goal: Goal::Held { object: "duckie_small".into() },
        },
    ];
    tabletop_scene("duckie-pair", seed, objects, tasks)
}

fn keyboard(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneSpec> {
    let body = cuboid([0.15, 0.44, 0.02], TT);
    let key = |c: Point3, hu: f64, hv: f64| shapes::rect_patch(c, X, Y, hu, hv, 0.004);
    let press = ["press", "push", "hit"];
    let kb = with_parts(
        object("keyboard", "keyboard", Pose3D::identity(), body),
        vec![
            part("space bar", key(Point3::new(-0.045, 0.0, 0.024), 0.008, 0.06), SkillKind::TipPush, &press, PartBehavior::Press),
            part("enter key", key(Point3::new(0.0, 0.17, 0.024), 0.015, 0.012), SkillKind::TipPush, &press, PartBehavior::Press),
            part("escape key", key(Point3::new(0.06, -0.19, 0.024), 0.008, 0.008), SkillKind::TipPush, &press, PartBehavior::Press),
        ],
    );
    let mut taken = Vec::new();
    let (x, y) = sample_spot(rng, &mut taken, 0.23, (0.15, 0.25), (-0.08, 0.08), 0.0)?;
    let mut objects = vec![ObjectSpec { pose: pose(x, y, 0.0, rng.random_range(-0.3..0.3)), ..kb }];
    let n = rng.random_range(1..=2);
    add_distractors(rng, &mut taken, &mut objects, n, 0)?;
    let tasks = vec![TaskSpec {
        name: "press-space".into(),
        query: "press the space bar on the keyboard".into(),
        goal: Goal::Pressed { object: "keyboard".into(), part: "space bar".into() },
    }];
    tabletop_scene("keyboard", seed, objects, tasks)
}

fn desk_bell(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneSpec> {
    let mut body = shapes::disk(Point3::new(0.0, 0.0, 0.005), X, Y, 0.05, TT);
    body.extend(&shapes::sphere(Point3::new(0.0, 0.0, 0.01), 0.045, TT).iter().copied().filter(|p| p.z >= 0.01).collect());
    body.extend(&shapes::cylinder(Point3::new(0.0, 0.0, 0.055), Z, 0.006, 0.015, 0.004));
    let button = shapes::disk(Point3::new(0.0, 0.0, 0.07), X, Y, 0.008, 0.003);
    let bell = with_parts(
        object("desk_bell", "desk bell", Pose3D::identity(), body),
        vec![part("top button", button, SkillKind::TipPush, &["ring", "press", "push", "button"], PartBehavior::Press)],
    );
    let mut taken = Vec::new();
    let (x, y) = sample_spot(rng, &mut taken, 0.05, TABLE_X, TABLE_Y, 0.06)?;
    let mut objects = vec![ObjectSpec { pose: pose(x, y, 0.0, rng.random_range(0.0..TAU)), ..bell }];
    let n = rng.random_range(1..=2);
    add_distractors(rng, &mut taken, &mut objects, n, 0)?;
    let tasks = vec![TaskSpec {
        name: "ring-bell".into(),
        query: "ring the desk bell".into(),
        goal: Goal::Pressed { object: "desk_bell".into(), part: "top button".into() },
    }];
    tabletop_scene("desk-bell", seed, objects, tasks)
}

fn wall_panel(id: &str, label: &str, x: f64, y: f64, size: [f64; 3]) -> ObjectSpec {
    let mut o = object(id, label, pose(x, y, 0.0, 0.0), cuboid(size, TT));
    o.movable = false;
    o
}

fn thumbtack(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneSpec> {
    let bx = rng.random_range(0.4..0.45);
    let by = rng.random_range(-0.1..0.1);
    let board = wall_panel("cork_board", "cork board", bx, by, [0.02, 0.4, 0.3]);
    let yz = |x: f64, r: f64, s: f64| shapes::disk(Point3::new(x, 0.0, 0.0), Y, Z, r, s);
    let mut body = yz(-0.002, 0.01, 0.003);
    body.extend(&shapes::cylinder(Point3::new(-0.002, 0.0, 0.0), -X, 0.005, 0.045, 0.003));
    let head = yz(-0.047, 0.006, 0.002);
    let mut tack = with_parts(
        object("thumbtack", "thumbtack", Pose3D::identity(), body),
        vec![part("head", head, SkillKind::PinchPull, &["remove", "pull", "take", "unpin"], PartBehavior::Detach)],
    );
    tack.pose = pose(bx - 0.01, by + rng.random_range(-0.12..0.12), rng.random_range(0.1..0.2), 0.0);
    tack.joint = Some(JointSpec { axis: [-1.0, 0.0], range: 0.03 });
    tack.supported_by = Some("cork_board".into());
    let mut taken = vec![(bx, by, 0.22)];
    let mut objects = vec![board, tack];
    let n = rng.random_range(1..=2);
    add_distractors(rng, &mut taken, &mut objects, n, 0)?;
    let tasks = vec![TaskSpec {
        name: "remove-thumbtack".into(),
        query: "remove the thumbtack from the cork board".into(),
        goal: Goal::Detached { object: "thumbtack".into() },
    }];
    tabletop_scene("thumbtack", seed, objects, tasks)
}

fn power_adapter(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneSpec> {
    let ox = rng.random_range(0.4..0.45);
    let oy = rng.random_range(-0.15..0.0);
    let outlet = wall_panel("wall_outlet", "wall outlet", ox, oy, [0.02, 0.12, 0.1]);
    let mut body = shapes::box_surface([-0.025, 0.0], -0.03, [0.04, 0.05, 0.06], 0.006);
    body.extend(&shapes::polyline(
        &[Point3::new(-0.025, 0.0, -0.03), Point3::new(-0.025, 0.0, -0.05), Point3::new(-0.03, 0.3, -0.05)],
        0.005,
    ));
    let front = shapes::rect_patch(Point3::new(-0.045, 0.0, 0.0), Y, Z, 0.025, 0.03, 0.006);
    let mut adapter = with_parts(
        object("power_adapter", "power adapter", Pose3D::identity(), body),
        vec![part("adapter body", front, SkillKind::PinchPull, &["unplug", "remove", "pull"], PartBehavior::Detach)],
    );
    adapter.pose = pose(ox - 0.01, oy, 0.05, 0.0);
    adapter.joint = Some(JointSpec { axis: [-1.0, 0.0], range: 0.04 });
    adapter.supported_by = Some("wall_outlet".into());
    let mut taken = vec![(ox, oy, 0.08), (ox - 0.03, oy + 0.15, 0.15)];
    let mut objects = vec![outlet, adapter];
    let n = rng.random_range(1..=2);
    add_distractors(rng, &mut taken, &mut objects, n, 0)?;
    let tasks = vec![TaskSpec {
        name: "unplug".into(),
        query: "unplug the power adapter".into(),
        goal: Goal::Detached { object: "power_adapter".into() },
    }];
    tabletop_scene("power-adapter", seed, objects, tasks)
}

fn drawer(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneSpec> {
    let body = cuboid([0.25, 0.3, 0.15], TT);
    let knob = rng.random_bool(0.5);
    let handle = if knob {
        let mut stem = shapes::cylinder(Point3::new(0.125, 0.0, 0.1), X, 0.006, 0.02, 0.003);
        let cap = shapes::disk(Point3::new(0.145, 0.0, 0.1), Y, Z, 0.012, 0.003);
        stem.extend(&cap);
        (part("knob", cap, SkillKind::PinchPull, &["open", "pull", "knob"], PartBehavior::Pull), stem)
    } else {
        let mut legs = shapes::polyline(&[Point3::new(0.125, -0.045, 0.1), Point3::new(0.15, -0.045, 0.1)], 0.004);
        legs.extend(&shapes::polyline(&[Point3::new(0.125, 0.045, 0.1), Point3::new(0.15, 0.045, 0.1)], 0.004));
        let bar = shapes::rect_patch(Point3::new(0.15, 0.0, 0.1), Y, Z, 0.05, 0.006, 0.003);
        (part("handle", bar, SkillKind::HookPull, &["open", "pull", "handle"], PartBehavior::Pull), legs)
    };
    let (p, extra) = handle;
    let mut unit = with_parts(object("drawer", "drawer", Pose3D::identity(), body), vec![p]);
    unit.cloud.extend(&extra);
    unit.movable = false;
    unit.joint = Some(JointSpec { axis: [1.0, 0.0], range: 0.3 });
    let mut taken = Vec::new();
    let (x, y) = sample_spot(rng, &mut taken, 0.2, (0.22, 0.3), (-0.1, 0.1), 0.0)?;
    unit.pose = pose(x, y, 0.0, PI + rng.random_range(-0.2..0.2));
    let mut objects = vec![unit];
    let n = rng.random_range(1..=2);
    add_distractors(rng, &mut taken, &mut objects, n, 0)?;
    let tasks = vec![TaskSpec {
        name: "open-drawer".into(),
        query: "open the drawer".into(),
        goal: Goal::OpenFraction { object: "drawer".into(), min: 0.4 },
    }];
    tabletop_scene("drawer", seed, objects, tasks)
}

/// Items for the room's pick tasks: (id, label, cloud).
fn room_item(kind: usize) -> (&'static str, &'static str, PointCloud) {
    match kind {
        0 => ("soda_can", "soda can", shapes::upright_cylinder(0.033, 0.12, 0.015, true, true)),
        1 => ("tennis_ball", "tennis ball", ball(0.033, 0.012)),
        2 => ("panda_plushie", "panda plushie", ball(0.08, 0.02)),
        _ => ("toy_car", "toy car", cuboid([0.1, 0.05, 0.04], 0.012)),
    }
}

const ROOM: f64 = 6.0;
const START: (f64, f64) = (0.8, 0.8);

fn mobile_room(rng: &mut ChaCha8Rng, seed: u64) -> Result<SceneSpec> {
    let mut taken = vec![(START.0, START.1, 0.6)];
    let mut objects = Vec::new();
    let room = (0.9, ROOM - 0.9);

    // filing cabinet, deeper than wide, with a drawer handle on its front (+x) face
    let body = cuboid([0.6, 0.5, 0.8], MS);
    let mut legs = shapes::polyline(&[Point3::new(0.3, -0.1, 0.6), Point3::new(0.33, -0.1, 0.6)], 0.01);
    legs.extend(&shapes::polyline(&[Point3::new(0.3, 0.1, 0.6), Point3::new(0.33, 0.1, 0.6)], 0.01));
    let bar = shapes::rect_patch(Point3::new(0.33, 0.0, 0.6), Y, Z, 0.12, 0.01, 0.01);
    let mut cabinet = with_parts(
        object("metal_cabinet", "metal cabinet", Pose3D::identity(), body),
        vec![part("drawer handle", bar, SkillKind::HookPull, &["open", "pull", "drawer", "handle"], PartBehavior::Pull)],
    );
    cabinet.cloud.extend(&legs);
    cabinet.movable = false;
    cabinet.joint = Some(JointSpec { axis: [1.0, 0.0], range: 0.35 });
    let (cx, cy) = sample_spot(rng, &mut taken, 0.45, (2.7, 3.3), (2.7, 3.3), 0.4)?;
    cabinet.pose = pose(cx, cy, 0.0, rng.random_range(0.0..TAU));
    objects.push(cabinet);

    let place = |rng: &mut ChaCha8Rng, taken: &mut Vec<_>, mut o: ObjectSpec, r: f64| -> Result<ObjectSpec> {
        let (x, y) = sample_spot(rng, taken, r, room, room, 1.1 - r.min(0.3))?;
        o.pose = pose(x, y, 0.0, rng.random_range(0.0..TAU));
        Ok(o)
    };
    let mut basket = object("basket", "basket", Pose3D::identity(), shapes::open_box([0.0, 0.0], 0.0, [0.4, 0.3, 0.25], MS));
    basket.container = true;
    basket.movable = false;
    objects.push(place(rng, &mut taken, basket, 0.25)?);
    let mut bin = object("bin", "bin", Pose3D::identity(), shapes::upright_cylinder(0.15, 0.35, MS, false, true));
    bin.container = true;
    bin.movable = false;
    objects.push(place(rng, &mut taken, bin, 0.15)?);
    let mut pan = shapes::disk(Point3::new(0.0, 0.0, 0.03), X, Y, 0.14, MS);
    pan.extend(&shapes::polyline(&[Point3::new(0.14, 0.0, 0.03), Point3::new(0.32, 0.0, 0.04)], 0.015));
    let mut pan = object("frying_pan", "frying pan", Pose3D::identity(), pan);
    pan.movable = false;
    objects.push(place(rng, &mut taken, pan, 0.2)?);

    let mut kinds: Vec<usize> = (0..4).collect();
    kinds.shuffle(rng);
    let mut item_ids = Vec::new();
    let mut item_labels = Vec::new();
    for &k in kinds.iter().take(2) {
        let (id, label, cloud) = room_item(k);
        objects.push(place(rng, &mut taken, object(id, label, Pose3D::identity(), cloud), 0.08)?);
        item_ids.push(id.to_string());
        item_labels.push(label);
    }

    // two duckies for the spatial tasks, clearly separated laterally as seen
    // from the start pose
    let start_yaw = FRAC_PI_4;
    let lateral = |x: f64, y: f64| -start_yaw.sin() * x + start_yaw.cos() * y;
    let small = rng.random_range(1.5..1.8);
    let big = small * rng.random_range(1.6..1.8);
    let snapshot = taken.clone();
    let (ducks, left) = 'outer: {
        for _ in 0..200 {
            taken.clone_from(&snapshot);
            let Ok(a) = place(rng, &mut taken, object("duckie_small", "rubber duckie", Pose3D::identity(), duckie(small, 0.015)), 0.12)
            else {
                continue;
            };
            let Ok(b) = place(rng, &mut taken, object("duckie_big", "rubber duckie", Pose3D::identity(), duckie(big, 0.015)), 0.2)
            else {
                continue;
            };
            let la = lateral(a.pose.position.x, a.pose.position.y);
            let lb = lateral(b.pose.position.x, b.pose.position.y);
            if (la - lb).abs() >= 0.5 {
                let left = if la > lb { "duckie_small" } else { "duckie_big" };
                break 'outer (vec![a, b], left);
            }
        }
        return Err(Error::InvalidParameter("could not separate the duckies".into()));
    };
    objects.extend(ducks);

    let grid = room_grid(&objects)?;
    let keyframes = [(0.25, 0.25), (ROOM - 0.25, 0.25), (ROOM - 0.25, ROOM - 0.25), (0.25, ROOM - 0.25)]
        .iter()
        .map(|&(x, y)| {
            let yaw = (ROOM / 2.0 - y).atan2(ROOM / 2.0 - x);
            camera_pose(Point3::new(x, y, 2.2), yaw, 30f64.to_radians())
        })
        .collect::<Vec<_>>();
    let tasks = vec![
        TaskSpec {
            name: "cabinet-open".into(),
            query: "open the drawer of the metal cabinet".into(),
            goal: Goal::OpenFraction { object: "metal_cabinet".into(), min: 0.4 },
        },
        TaskSpec {
            name: "double-pick".into(),
            query: format!("put the {} and the {} in the basket", item_labels[0], item_labels[1]),
            goal: Goal::Contained { objects: item_ids.clone(), container: "basket".into() },
        },
        TaskSpec {
            name: "spatial-larger".into(),
            query: "put the larger rubber duckie in the bin".into(),
            goal: Goal::Contained { objects: vec!["duckie_big".into()], container: "bin".into() },
        },
        TaskSpec {
            name: "spatial-left".into(),
            query: "put the rubber duckie on the left in the bin".into(),
            goal: Goal::Contained { objects: vec![left.into()], container: "bin".into() },
        },
    ];
    Ok(SceneSpec {
        template: "mobile-room".into(),
        seed,
        mode: Mode::Mobile,
        objects,
        grid: Some(grid),
        home_camera: keyframes[0],
        keyframes,
        robot_base: Pose2D::new(START.0, START.1, start_yaw),
        tasks,
    })
}

/// Walls and object footprints are lethal; an inflation band adds
/// non-lethal cost around them.
fn room_grid(objects: &[ObjectSpec]) -> Result<OccupancyGrid> {
    let res = 0.05;
    let n = (ROOM / res).round() as usize;
    let mut grid = OccupancyGrid::new(res, [0.0, 0.0], n, n, 0)?;
    grid.fill_rect([0.0, 0.0], [ROOM, 0.1], 255);
    grid.fill_rect([0.0, ROOM - 0.1], [ROOM, ROOM], 255);
    grid.fill_rect([0.0, 0.0], [0.1, ROOM], 255);
    grid.fill_rect([ROOM - 0.1, 0.0], [ROOM, ROOM], 255);
    for o in objects {
        for p in o.cloud.iter() {
            let w = o.pose.transform_point(p);
            if let Some((c, r)) = grid.world_to_cell(w.x, w.y) {
                grid.set(c, r, 255);
            }
        }
    }
    grid.inflate(255, 0.25, 120);
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom;

    #[test]
    fn every_template_generates_and_validates() {
        for t in TEMPLATES {
            for seed in 0..5 {
                let s = generate_scene(t, seed).unwrap();
                assert!(!s.tasks.is_empty(), "{t}");
                s.validate().unwrap();
            }
        }
        assert_eq!(generate_scene("kitchen", 0), Err(Error::UnknownTemplate("kitchen".into())));
    }

    #[test]
    fn same_seed_is_byte_identical() {
        for t in TEMPLATES {
            let a = serde_json::to_string(&generate_scene(t, 11).unwrap()).unwrap();
            let b = serde_json::to_string(&generate_scene(t, 11).unwrap()).unwrap();
            assert_eq!(a, b);
        }
        assert_ne!(generate_scene("tabletop-pick", 1).unwrap(), generate_scene("tabletop-pick", 2).unwrap());
    }

    #[test]
    fn duckie_pair_extent_ratio() {
        for seed in 0..20 {
            let s = generate_scene("duckie-pair", seed).unwrap();
            let ext = |id: &str| {
                let o = &s.objects[s.object_index(id).unwrap()];
                let e = geom::aabb_extents(&o.cloud).unwrap();
                e.x.max(e.y).max(e.z)
            };
            assert!(ext("duckie_big") / ext("duckie_small") >= 1.5);
        }
    }

    #[test]
    fn mobile_room_has_grid_and_keyframes() {
        let s = generate_scene("mobile-room", 0).unwrap();
        assert!(s.grid.is_some());
        assert!((1..=5).contains(&s.keyframes.len()));
        let g = s.grid.as_ref().unwrap();
        let (c, r) = g.world_to_cell(START.0, START.1).unwrap();
        assert!(g.get(c, r) < 254);
    }

    #[test]
    fn scene_json_roundtrip() {
        let s = generate_scene("mobile-room", 5).unwrap();
        let back: SceneSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back.objects.len(), s.objects.len());
        assert_eq!(back.grid, s.grid);
        assert_eq!(back.tasks, s.tasks);
    }
}
