//! Synthetic perception: projects object clouds through a pinhole camera and
//! emits one labeled segment per visible object.

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::geom::{self, Point3, PointCloud, Pose3D};
use crate::scene_map::{GtPart, Segment, SegmentedFrame};

use super::world::SimWorld;
use super::NoiseConfig;

pub const IMAGE_WIDTH: f64 = 640.0;
pub const IMAGE_HEIGHT: f64 = 480.0;
/// Focal length in pixels (90° horizontal field of view).
pub const FOCAL: f64 = 320.0;
pub const NEAR: f64 = 0.05;

/// Camera looking along its local +x axis (y left, z up), tilted down by `pitch`.
pub fn camera_pose(position: Point3, yaw: f64, pitch: f64) -> Pose3D {
    Pose3D::from_rpy(position, 0.0, pitch, yaw)
}

/// Pixel coordinates and depth of a world point, if it is in front of the camera.
pub fn project(camera: &Pose3D, p: &Point3) -> Option<(f64, f64, f64)> {
    let c = camera.inverse_transform_point(p);
    if c.x <= NEAR {
        return None;
    }
    Some((IMAGE_WIDTH / 2.0 - FOCAL * c.y / c.x, IMAGE_HEIGHT / 2.0 - FOCAL * c.z / c.x, c.x))
}

fn in_image(u: f64, v: f64) -> bool {
    (0.0..IMAGE_WIDTH).contains(&u) && (0.0..IMAGE_HEIGHT).contains(&v)
}

#[derive(Debug, Clone)]
struct Candidate {
    object: usize,
    kept: PointCloud,
    clipped: bool,
    bbox: [f64; 4],
    centroid_px: (f64, f64),
    centroid_depth: f64,
    max_depth: f64,
}

impl Candidate {
    fn area(&self) -> f64 {
        ((self.bbox[2] - self.bbox[0]) * (self.bbox[3] - self.bbox[1])).max(1.0)
    }
}

fn candidate(world: &SimWorld, camera: &Pose3D, i: usize) -> Option<Candidate> {
    let cloud = world.world_cloud(i);
    let c = geom::centroid(&cloud).ok()?;
    let (cu, cv, cd) = project(camera, &c)?;
    if !in_image(cu, cv) {
        return None;
    }
    let mut kept = Vec::with_capacity(cloud.len());
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    let mut max_depth: f64 = 0.0;
    for p in cloud.iter() {
        if let Some((u, v, d)) = project(camera, p) {
            if in_image(u, v) {
                kept.push(*p);
                bbox = [bbox[0].min(u), bbox[1].min(v), bbox[2].max(u), bbox[3].max(v)];
                max_depth = max_depth.max(d);
            }
        }
    }
    if kept.is_empty() {
        return None;
    }
    let clipped = kept.len() < cloud.len();
    Some(Candidate {
        object: i,
        kept: PointCloud::new(kept),
        clipped,
        bbox,
        centroid_px: (cu, cv),
        centroid_depth: cd,
        max_depth,
    })
}

/// `a` is hidden when its centroid pixel falls inside the box of a larger
/// object lying entirely in front of that centroid.
fn occludes(b: &Candidate, a: &Candidate) -> bool {
    let (u, v) = a.centroid_px;
    b.object != a.object
        && u >= b.bbox[0]
        && u <= b.bbox[2]
        && v >= b.bbox[1]
        && v <= b.bbox[3]
        && b.max_depth < a.centroid_depth
        && b.area() >= 0.5 * a.area()
}

/// Splits a cloud into two overlapping pieces along its principal
/// horizontal axis: points up to the 70th percentile and from the 30th.
pub fn oversegment(cloud: &PointCloud) -> Option<(PointCloud, PointCloud)> {
    if cloud.len() < 6 {
        return None;
    }
    let c = geom::centroid(cloud).ok()?;
    let mut m = Matrix2::zeros();
    for p in cloud.iter() {
        let d = nalgebra::Vector2::new(p.x - c.x, p.y - c.y);
        m += d * d.transpose();
    }
    let eig = m.symmetric_eigen();
    let k = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let axis = eig.eigenvectors.column(k).into_owned();
    let t: Vec<f64> = cloud.iter().map(|p| p.x * axis[0] + p.y * axis[1]).collect();
    let mut sorted = t.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() - 1;
    let lo = sorted[(0.3 * n as f64).floor() as usize];
    let hi = sorted[(0.7 * n as f64).floor() as usize];
    let a: PointCloud = cloud.iter().zip(&t).filter(|(_, &s)| s <= hi).map(|(p, _)| *p).collect();
    let b: PointCloud = cloud.iter().zip(&t).filter(|(_, &s)| s >= lo).map(|(p, _)| *p).collect();
    (a.len() >= 3 && b.len() >= 3).then_some((a, b))
}

fn render_seed(world: &SimWorld, camera: &Pose3D, frame_id: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(world.spec().seed.to_le_bytes());
    h.update(world.digest().as_bytes());
    h.update(serde_json::to_vec(camera).expect("pose serializes"));
    h.update(frame_id.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Renders the segments visible from `camera`. Pure: the world is not touched.
pub fn render_segmented_frame(world: &SimWorld, camera: &Pose3D, frame_id: u32, noise: &NoiseConfig) -> SegmentedFrame {
    let candidates: Vec<Candidate> = (0..world.objects.len())
        .filter(|&i| !world.objects[i].attached_to_gripper)
        .filter_map(|i| candidate(world, camera, i))
        .collect();
    let visible: Vec<&Candidate> =
        candidates.iter().filter(|a| !candidates.iter().any(|b| occludes(b, a))).collect();
    let mut rng = (noise.p_oversegment > 0.0).then(|| ChaCha8Rng::seed_from_u64(render_seed(world, camera, frame_id)));
    let mut segments = Vec::new();
    for cand in visible {
        let spec = &world.spec().objects[cand.object];
        let parts: Vec<GtPart> = spec
            .parts
            .iter()
            .enumerate()
            .map(|(k, p)| GtPart {
                name: p.name.clone(),
                point_cloud: world.part_cloud(cand.object, k),
                skill: p.skill,
                verbs: p.verbs.clone(),
            })
            .collect();
        let area = cand.area();
        let split = match rng.as_mut() {
            Some(r) => (r.random::<f64>() < noise.p_oversegment).then(|| oversegment(&cand.kept)).flatten(),
            None => None,
        };
        let pieces = match split {
            Some((a, b)) => vec![a, b],
            None => vec![cand.kept.clone()],
        };
        let total = cand.kept.len() as f64;
        for piece in pieces {
            let piece_area = (area * piece.len() as f64 / total).round().max(1.0) as u32;
            segments.push(Segment {
                mask_id: segments.len() as u32,
                point_cloud: piece,
                segment_area: piece_area,
                touches_border: cand.clipped,
                gt_label: Some(spec.label.clone()),
                gt_parts: parts.clone(),
            });
        }
    }
    SegmentedFrame { frame_id, camera_pose: *camera, segments }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::templates::generate_scene;
    use std::sync::Arc;

    fn world(template: &str, seed: u64) -> SimWorld {
        SimWorld::new(Arc::new(generate_scene(template, seed).unwrap()), NoiseConfig::default())
    }

    #[test]
    fn projection_center_and_left() {
        let cam = camera_pose(Point3::ORIGIN, 0.0, 0.0);
        let (u, v, d) = project(&cam, &Point3::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!((u, v, d), (320.0, 240.0, 2.0));
        let (u, _, _) = project(&cam, &Point3::new(1.0, 0.5, 0.0)).unwrap();
        assert!(u < 320.0);
        assert!(project(&cam, &Point3::new(-1.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn home_camera_sees_every_tabletop_object() {
        let w = world("tabletop-pick", 1);
        let f = render_segmented_frame(&w, &w.spec().home_camera, 0, &NoiseConfig::default());
        assert_eq!(f.segments.len(), w.spec().objects.len());
    }

    #[test]
    fn rendering_is_pure() {
        let w = world("tabletop-pick", 2);
        let d = w.digest();
        let noise = NoiseConfig { p_oversegment: 0.5, ..NoiseConfig::default() };
        let a = render_segmented_frame(&w, &w.spec().home_camera, 0, &noise);
        let b = render_segmented_frame(&w, &w.spec().home_camera, 0, &noise);
        assert_eq!(a, b);
        assert_eq!(w.digest(), d);
    }

    #[test]
    fn oversegment_union_is_the_cloud() {
        let w = world("tabletop-pick", 4);
        let noise = NoiseConfig { p_oversegment: 1.0, ..NoiseConfig::default() };
        let f = render_segmented_frame(&w, &w.spec().home_camera, 0, &noise);
        assert_eq!(f.segments.len(), 2 * w.spec().objects.len());
        let mug = w.spec().object_index("blue_mug").unwrap();
        let pieces: Vec<_> = f.segments.iter().filter(|s| s.gt_label.as_deref() == Some("blue mug")).collect();
        assert_eq!(pieces.len(), 2);
        let mut union: Vec<[u64; 3]> = pieces
            .iter()
            .flat_map(|s| s.point_cloud.iter().map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]))
            .collect();
        union.sort();
        union.dedup();
        let mut full: Vec<[u64; 3]> = w.world_cloud(mug).iter().map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]).collect();
        full.sort();
        full.dedup();
        assert_eq!(union, full);
    }

    #[test]
    fn occluded_object_is_omitted() {
        // z-test oracle: place a large box directly between the camera and a small cube
        use crate::sim::scene::ObjectSpec;
        use crate::sim::shapes;
        let mut spec = generate_scene("tabletop-pick", 1).unwrap();
        let cam = spec.home_camera;
        let target = spec.objects.iter().position(|o| o.id == "green_cube").unwrap();
        let c = spec.objects[target].pose.position;
        let ray = (c - cam.position).normalized().unwrap();
        let mid = cam.position + ray * (c.distance(&cam.position) * 0.5);
        spec.objects.push(ObjectSpec {
            id: "screen".into(),
            label: "screen".into(),
            pose: Pose3D::new(Point3::new(mid.x, mid.y, mid.z - 0.1), Default::default()),
            cloud: shapes::box_surface([0.0, 0.0], 0.0, [0.2, 0.2, 0.2], 0.01),
            parts: vec![],
            supported_by: None,
            container: false,
            movable: false,
            joint: None,
        });
        let w = SimWorld::new(Arc::new(spec), NoiseConfig::default());
        let f = render_segmented_frame(&w, &cam, 0, &NoiseConfig::default());
        let cube_depth = project(&cam, &w.object_centroid(target)).unwrap().2;
        let screen = w.spec().objects.len() - 1;
        let screen_far = w.world_cloud(screen).iter().filter_map(|p| project(&cam, p)).map(|x| x.2).fold(0.0, f64::max);
        assert!(screen_far < cube_depth);
        assert!(f.segments.iter().all(|s| s.gt_label.as_deref() != Some("green cube")));
        assert!(f.segments.iter().any(|s| s.gt_label.as_deref() == Some("screen")));
    }
}
