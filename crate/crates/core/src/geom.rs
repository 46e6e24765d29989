//! Point-cloud and pose primitives shared by every other module.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::TAU;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, SymmetricEigen, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neighbor radius used by [`overlap_ratio`] unless configured otherwise.
pub const DEFAULT_OVERLAP_RADIUS: f64 = 0.02;
/// Voxel edge used by [`iou_3d`] and downsampling unless configured otherwise.
pub const DEFAULT_VOXEL: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, o: &Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn distance(&self, o: &Point3) -> f64 {
        (*self - *o).norm()
    }

    pub fn distance_squared(&self, o: &Point3) -> f64 {
        (*self - *o).norm_squared()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(&self) -> Option<Point3> {
        let n = self.norm();
        (n > 1e-12).then(|| *self / n)
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Point3::new(v.x, v.y, v.z)
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    fn add_assign(&mut self, o: Point3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Ordered set of scene-frame points. Serializes as `[[x,y,z], ...]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(Point3::is_finite)
    }

    pub fn translated(&self, t: Point3) -> PointCloud {
        PointCloud::new(self.points.iter().map(|p| *p + t).collect())
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }

    pub fn concat(a: &PointCloud, b: &PointCloud) -> PointCloud {
        let mut points = Vec::with_capacity(a.len() + b.len());
        points.extend_from_slice(&a.points);
        points.extend_from_slice(&b.points);
        PointCloud::new(points)
    }

    pub fn aabb(&self) -> Result<Aabb> {
        Aabb::from_cloud(self)
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn from_cloud(pc: &PointCloud) -> Result<Aabb> {
        let first = *pc.points.first().ok_or(Error::EmptyCloud)?;
        let mut min = first;
        let mut max = first;
        for p in &pc.points[1..] {
            min = Point3::new(min.x.min(p.x), min.y.min(p.y), min.z.min(p.z));
            max = Point3::new(max.x.max(p.x), max.y.max(p.y), max.z.max(p.z));
        }
        Ok(Aabb { min, max })
    }

    pub fn extents(&self) -> Point3 {
        self.max - self.min
    }

    pub fn center(&self) -> Point3 {
        (self.min + self.max) * 0.5
    }

    pub fn inflated(&self, margin: f64) -> Aabb {
        let m = Point3::new(margin, margin, margin);
        Aabb { min: self.min - m, max: self.max + m }
    }

    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= self.min.x && x <= self.max.x && y >= self.min.y && y <= self.max.y
    }
}

/// Planar pose with heading normalized into `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: normalize_angle(theta) }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Smallest absolute difference between two headings, in `[0, π]`.
pub fn angle_between(a: f64, b: f64) -> f64 {
    let d = normalize_angle(a - b);
    d.min(TAU - d)
}

/// Position plus unit-quaternion orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "Pose3DRepr", into = "Pose3DRepr")]
pub struct Pose3D {
    pub position: Point3,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
struct Pose3DRepr {
    position: [f64; 3],
    /// `[w, x, y, z]`
    orientation: [f64; 4],
}

impl From<Pose3DRepr> for Pose3D {
    fn from(r: Pose3DRepr) -> Self {
        let [w, i, j, k] = r.orientation;
        Pose3D {
            position: r.position.into(),
            orientation: UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, i, j, k)),
        }
    }
}

impl From<Pose3D> for Pose3DRepr {
    fn from(p: Pose3D) -> Self {
        let q = p.orientation.quaternion();
        Pose3DRepr { position: p.position.into(), orientation: [q.w, q.i, q.j, q.k] }
    }
}

impl Pose3D {
    pub fn new(position: Point3, orientation: UnitQuaternion<f64>) -> Self {
        Self { position, orientation }
    }

    pub fn identity() -> Self {
        Self::new(Point3::ORIGIN, UnitQuaternion::identity())
    }

    /// Pose from roll/pitch/yaw (radians, extrinsic XYZ as in nalgebra).
    pub fn from_rpy(position: Point3, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(position, UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    /// Orientation whose local +z axis points along `dir`.
    pub fn looking_along(position: Point3, dir: Point3) -> Self {
        let z = Vector3::z();
        let d = dir.normalized().unwrap_or(Point3::new(0.0, 0.0, -1.0)).to_vector();
        let q = UnitQuaternion::rotation_between(&z, &d)
            .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
        Self::new(position, q)
    }

    /// Maps a point expressed in this pose's frame into the parent frame.
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from_vector(&(self.orientation * p.to_vector())) + self.position
    }

    /// Maps a parent-frame point into this pose's frame.
    pub fn inverse_transform_point(&self, p: &Point3) -> Point3 {
        Point3::from_vector(&(self.orientation.inverse() * (*p - self.position).to_vector()))
    }

    pub fn axis(&self, local: Vector3<f64>) -> Point3 {
        Point3::from_vector(&(self.orientation * local))
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.euler_angles().2
    }

    pub fn quaternion_norm(&self) -> f64 {
        self.orientation.quaternion().norm()
    }
}

/// Arithmetic mean of the points.
pub fn centroid(pc: &PointCloud) -> Result<Point3> {
    if pc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut sum = Point3::ORIGIN;
    for p in &pc.points {
        sum += *p;
    }
    Ok(sum / pc.len() as f64)
}

/// Per-axis `max - min`.
pub fn aabb_extents(pc: &PointCloud) -> Result<Point3> {
    Ok(Aabb::from_cloud(pc)?.extents())
}

pub(crate) fn voxel_key(p: &Point3, voxel: f64) -> (i64, i64, i64) {
    (
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}

fn check_voxel(voxel: f64) -> Result<()> {
    if voxel.is_finite() && voxel > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("voxel size must be positive, got {voxel}")))
    }
}

/// Replaces the points in each occupied voxel by their centroid.
///
/// Output is ordered by voxel index, so the result does not depend on the
/// input point order beyond floating-point summation.
pub fn voxel_downsample(pc: &PointCloud, voxel: f64) -> Result<PointCloud> {
    check_voxel(voxel)?;
    let mut cells: BTreeMap<(i64, i64, i64), (Point3, usize)> = BTreeMap::new();
    for p in &pc.points {
        let e = cells.entry(voxel_key(p, voxel)).or_insert((Point3::ORIGIN, 0));
        e.0 += *p;
        e.1 += 1;
    }
    Ok(cells.into_values().map(|(sum, n)| sum / n as f64).collect())
}

/// Set of occupied voxel indices.
pub fn voxel_set(pc: &PointCloud, voxel: f64) -> Result<HashSet<(i64, i64, i64)>> {
    check_voxel(voxel)?;
    Ok(pc.points.iter().map(|p| voxel_key(p, voxel)).collect())
}

/// Hash grid over a cloud for fixed-radius neighbor queries.
pub struct PointIndex<'a> {
    cloud: &'a PointCloud,
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> PointIndex<'a> {
    pub fn new(cloud: &'a PointCloud, cell: f64) -> Self {
        let mut cells: HashMap<_, Vec<usize>> = HashMap::new();
        for (i, p) in cloud.points.iter().enumerate() {
            cells.entry(voxel_key(p, cell)).or_default().push(i);
        }
        Self { cloud, cell, cells }
    }

    fn candidates(&self, p: &Point3, radius: f64) -> impl Iterator<Item = &Point3> + '_ {
        let reach = (radius / self.cell).ceil().max(1.0) as i64;
        let (cx, cy, cz) = voxel_key(p, self.cell);
        let cloud = self.cloud;
        (-reach..=reach).flat_map(move |dx| {
            (-reach..=reach).flat_map(move |dy| {
                (-reach..=reach).flat_map(move |dz| {
                    self.cells
                        .get(&(cx + dx, cy + dy, cz + dz))
                        .into_iter()
                        .flatten()
                        .map(move |&i| &cloud.points[i])
                })
            })
        })
    }

    /// True when some indexed point lies within `radius` of `p`.
    pub fn any_within(&self, p: &Point3, radius: f64) -> bool {
        let r2 = radius * radius;
        self.candidates(p, radius).any(|q| q.distance_squared(p) <= r2)
    }

    /// Indexed points within `radius` of `p`, in no particular order.
    pub fn within<'b>(&'b self, p: &'b Point3, radius: f64) -> impl Iterator<Item = &'b Point3> + 'b {
        let r2 = radius * radius;
        self.candidates(p, radius).filter(move |q| q.distance_squared(p) <= r2)
    }

    /// Distance to the nearest indexed point, if one lies within `radius`.
    pub fn nearest_within(&self, p: &Point3, radius: f64) -> Option<f64> {
        let r2 = radius * radius;
        self.candidates(p, radius)
            .map(|q| q.distance_squared(p))
            .filter(|d2| *d2 <= r2)
            .fold(None, |best: Option<f64>, d2| Some(best.map_or(d2, |b| b.min(d2))))
            .map(f64::sqrt)
    }
}

/// Distance from `p` to the closest point of `pc` (brute force).
pub fn nearest_distance(p: &Point3, pc: &PointCloud) -> Result<f64> {
    pc.points
        .iter()
        .map(|q| q.distance_squared(p))
        .min_by(f64::total_cmp)
        .map(f64::sqrt)
        .ok_or(Error::EmptyCloud)
}

fn directed_overlap(a: &PointCloud, b: &PointCloud, radius: f64) -> f64 {
    let index = PointIndex::new(b, radius);
    let hits = a.points.iter().filter(|p| index.any_within(p, radius)).count();
    hits as f64 / a.len() as f64
}

/// Geometric overlap: the larger of the two directed fractions of points
/// having a neighbor in the other cloud within `radius`.
pub fn overlap_ratio(a: &PointCloud, b: &PointCloud, radius: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("overlap radius must be positive, got {radius}")));
    }
    Ok(directed_overlap(a, b, radius).max(directed_overlap(b, a, radius)))
}

/// Voxelized intersection-over-union of two clouds.
pub fn iou_3d(a: &PointCloud, b: &PointCloud, voxel: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let va = voxel_set(a, voxel)?;
    let vb = voxel_set(b, voxel)?;
    let inter = va.intersection(&vb).count();
    let union = va.len() + vb.len() - inter;
    Ok(inter as f64 / union as f64)
}

/// Covariance of the cloud about its centroid.
pub fn covariance(pc: &PointCloud) -> Result<Matrix3<f64>> {
    let c = centroid(pc)?.to_vector();
    let mut cov = Matrix3::zeros();
    for p in &pc.points {
        let d = p.to_vector() - c;
        cov += d * d.transpose();
    }
    Ok(cov / pc.len() as f64)
}

/// Unit eigenvector of the point covariance with the smallest eigenvalue.
/// The sign is arbitrary; callers orient it.
pub fn dominant_normal(pc: &PointCloud) -> Result<Point3> {
    if pc.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("need at least 3 points, got {}", pc.len())));
    }
    let eig = SymmetricEigen::new(covariance(pc)?);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let (lo, mid, hi) = (order[0], order[1], order[2]);
    let largest = eig.eigenvalues[hi];
    if largest <= 1e-18 || eig.eigenvalues[mid] <= 1e-9 * largest {
        return Err(Error::DegenerateGeometry("points are collinear or coincident".into()));
    }
    let n = eig.eigenvectors.column(lo).into_owned();
    Ok(Point3::from_vector(&n.normalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, spacing: f64, f: impl Fn(f64, f64) -> Point3) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(f(i as f64 * spacing, j as f64 * spacing));
            }
        }
        PointCloud::new(pts)
    }

    fn cube_corners(dx: f64, dy: f64, dz: f64) -> PointCloud {
        let mut pts = Vec::new();
        for &x in &[0.0, dx] {
            for &y in &[0.0, dy] {
                for &z in &[0.0, dz] {
                    pts.push(Point3::new(x, y, z));
                }
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn centroid_examples() {
        let pc = PointCloud::new(vec![Point3::ORIGIN, Point3::new(2.0, 0.0, 0.0)]);
        assert_eq!(centroid(&pc).unwrap(), Point3::new(1.0, 0.0, 0.0));
        let one = PointCloud::new(vec![Point3::new(1.0, 1.0, 1.0)]);
        assert_eq!(centroid(&one).unwrap(), Point3::new(1.0, 1.0, 1.0));
        assert_eq!(centroid(&PointCloud::default()), Err(Error::EmptyCloud));
    }

    #[test]
    fn centroid_of_uniform_cube_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pc: PointCloud = (0..1000)
            .map(|_| {
                Point3::new(
                    3.0 + rng.random_range(-0.5..0.5),
                    4.0 + rng.random_range(-0.5..0.5),
                    5.0 + rng.random_range(-0.5..0.5),
                )
            })
            .collect();
        let c = centroid(&pc).unwrap();
        assert!(c.distance(&Point3::new(3.0, 4.0, 5.0)) < 0.05, "{c:?}");
    }

    #[test]
    fn aabb_extents_examples() {
        assert_eq!(aabb_extents(&cube_corners(1.0, 1.0, 1.0)).unwrap(), Point3::new(1.0, 1.0, 1.0));
        assert_eq!(aabb_extents(&cube_corners(2.0, 3.0, 4.0)).unwrap(), Point3::new(2.0, 3.0, 4.0));
        let single = PointCloud::new(vec![Point3::new(0.3, -2.0, 9.0)]);
        assert_eq!(aabb_extents(&single).unwrap(), Point3::ORIGIN);
        assert_eq!(aabb_extents(&PointCloud::default()), Err(Error::EmptyCloud));
    }

    #[test]
    fn voxel_downsample_examples() {
        let close = PointCloud::new(vec![Point3::new(0.001, 0.001, 0.001), Point3::new(0.002, 0.001, 0.001)]);
        assert_eq!(voxel_downsample(&close, 0.01).unwrap().len(), 1);
        let far = PointCloud::new(vec![Point3::new(0.005, 0.0, 0.0), Point3::new(1.005, 0.0, 0.0)]);
        assert_eq!(voxel_downsample(&far, 0.01).unwrap().len(), 2);
        assert!(matches!(voxel_downsample(&far, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(voxel_downsample(&far, -1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn voxel_downsample_matches_occupied_cell_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pc: PointCloud = (0..10_000)
            .map(|_| Point3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        // brute force: count distinct (floor) cells
        let mut seen = Vec::new();
        for p in &pc.points {
            let k = ((p.x / 0.1).floor() as i64, (p.y / 0.1).floor() as i64, (p.z / 0.1).floor() as i64);
            if !seen.contains(&k) {
                seen.push(k);
            }
        }
        let ds = voxel_downsample(&pc, 0.1).unwrap();
        assert_eq!(ds.len(), seen.len());
        assert!(ds.len() <= 1000);
    }

    #[test]
    fn overlap_examples() {
        let a = grid(10, 0.05, |x, y| Point3::new(x, y, 0.0));
        assert_eq!(overlap_ratio(&a, &a, 0.02).unwrap(), 1.0);
        let far = a.translated(Point3::new(10.0, 0.0, 0.0));
        assert_eq!(overlap_ratio(&a, &far, 0.02).unwrap(), 0.0);
        let shifted = a.translated(Point3::new(0.01, 0.0, 0.0));
        // brute force nearest neighbor check
        let brute = a
            .points
            .iter()
            .filter(|p| shifted.points.iter().any(|q| q.distance(p) <= 0.02))
            .count() as f64
            / a.len() as f64;
        assert_eq!(brute, 1.0);
        assert_eq!(overlap_ratio(&a, &shifted, 0.02).unwrap(), brute);
        assert_eq!(overlap_ratio(&a, &PointCloud::default(), 0.02), Err(Error::EmptyCloud));
    }

    #[test]
    fn iou_examples() {
        let a = grid(10, 0.05, |x, y| Point3::new(x, y, 0.0));
        assert_eq!(iou_3d(&a, &a, 0.02).unwrap(), 1.0);
        assert_eq!(iou_3d(&a, &a.translated(Point3::new(5.0, 0.0, 0.0)), 0.02).unwrap(), 0.0);
    }

    #[test]
    fn iou_half_overlapping_unit_cubes() {
        // Solid unit cubes sampled on a 0.025 lattice, offset by half an edge:
        // analytic IoU = 0.5 / 1.5 = 1/3.
        let solid = |ox: f64| {
            let mut pts = Vec::new();
            let n = 40;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        pts.push(Point3::new(
                            ox + (i as f64 + 0.5) / n as f64,
                            (j as f64 + 0.5) / n as f64,
                            (k as f64 + 0.5) / n as f64,
                        ));
                    }
                }
            }
            PointCloud::new(pts)
        };
        let iou = iou_3d(&solid(0.0), &solid(0.5), 0.05).unwrap();
        assert!((iou - 1.0 / 3.0).abs() < 0.05, "iou {iou}");
    }

    #[test]
    fn dominant_normal_of_planes() {
        let z0 = grid(10, 0.1, |x, y| Point3::new(x, y, 0.0));
        let n = dominant_normal(&z0).unwrap();
        assert!((n.z.abs() - 1.0).abs() < 1e-12);
        let x2 = grid(10, 0.1, |y, z| Point3::new(2.0, y, z));
        let n = dominant_normal(&x2).unwrap();
        assert!((n.x.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dominant_normal_rejects_degenerate_clouds() {
        let line = PointCloud::new((0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect());
        assert!(matches!(dominant_normal(&line), Err(Error::DegenerateGeometry(_))));
        let two = PointCloud::new(vec![Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)]);
        assert!(matches!(dominant_normal(&two), Err(Error::DegenerateGeometry(_))));
        let same = PointCloud::new(vec![Point3::ORIGIN; 5]);
        assert!(matches!(dominant_normal(&same), Err(Error::DegenerateGeometry(_))));
    }

    /// Independent smallest-eigenvector oracle: Jacobi rotations on the 3x3
    /// covariance, no nalgebra involved.
    fn jacobi_smallest(pc: &PointCloud) -> Point3 {
        let n = pc.len() as f64;
        let c = pc.points.iter().fold([0.0; 3], |acc, p| [acc[0] + p.x / n, acc[1] + p.y / n, acc[2] + p.z / n]);
        let mut a = [[0.0f64; 3]; 3];
        for p in &pc.points {
            let d = [p.x - c[0], p.y - c[1], p.z - c[2]];
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] += d[i] * d[j] / n;
                }
            }
        }
        let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for _ in 0..100 {
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..3 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = cs * akp - sn * akq;
                    a[k][q] = sn * akp + cs * akq;
                }
                for k in 0..3 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = cs * apk - sn * aqk;
                    a[q][k] = sn * apk + cs * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = cs * vp - sn * vq;
                    row[q] = sn * vp + cs * vq;
                }
            }
        }
        let i = (0..3).min_by(|&i, &j| a[i][i].total_cmp(&a[j][j])).unwrap();
        Point3::new(v[0][i], v[1][i], v[2][i])
    }

    #[test]
    fn dominant_normal_of_noisy_plane_matches_oracle() {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.001).unwrap();
        let pc: PointCloud = (0..500)
            .map(|_| Point3::new(rng.random::<f64>(), rng.random::<f64>(), noise.sample(&mut rng)))
            .collect();
        let n = dominant_normal(&pc).unwrap();
        let oracle = jacobi_smallest(&pc);
        assert!(n.dot(&oracle).abs() > 1.0 - 1e-9);
        let angle = n.z.abs().min(1.0).acos().to_degrees();
        assert!(angle < 2.0, "angle {angle}");
    }

    #[test]
    fn pose2d_normalizes_heading() {
        let p = Pose2D::new(0.0, 0.0, -std::f64::consts::FRAC_PI_2);
        assert!((p.theta - 1.5 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(Pose2D::new(0.0, 0.0, TAU).theta, 0.0);
        assert!(Pose2D::new(0.0, 0.0, -1e-18).theta < TAU);
    }

    #[test]
    fn pose3d_roundtrips_points_and_serializes_unit_quaternion() {
        let pose = Pose3D::from_rpy(Point3::new(1.0, 2.0, 3.0), 0.1, -0.4, 2.0);
        assert!((pose.quaternion_norm() - 1.0).abs() < 1e-9);
        let p = Point3::new(0.3, -0.2, 0.9);
        let back = pose.inverse_transform_point(&pose.transform_point(&p));
        assert!(back.distance(&p) < 1e-12);
        let json = serde_json::to_string(&pose).unwrap();
        let de: Pose3D = serde_json::from_str(&json).unwrap();
        assert!(de.position.distance(&pose.position) < 1e-15);
        assert!(de.orientation.angle_to(&pose.orientation) < 1e-9);
    }

    #[test]
    fn looking_along_points_local_z_at_direction() {
        for dir in [Point3::new(0.0, 0.0, -1.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 0.0, 1.0)] {
            let pose = Pose3D::looking_along(Point3::ORIGIN, dir);
            assert!(pose.axis(Vector3::z()).distance(&dir) < 1e-9);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cloud() -> impl Strategy<Value = PointCloud> {
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..60)
                .prop_map(|v| v.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect())
        }

        proptest! {
            #[test]
            fn centroid_translation_equivariant(pc in cloud(), t in (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0)) {
                let t = Point3::new(t.0, t.1, t.2);
                let lhs = centroid(&pc.translated(t)).unwrap();
                let rhs = centroid(&pc).unwrap() + t;
                prop_assert!(lhs.distance(&rhs) < 1e-9);
            }

            #[test]
            fn overlap_and_iou_symmetric_and_order_invariant(a in cloud(), b in cloud(), seed in any::<u64>()) {
                let ab = overlap_ratio(&a, &b, 0.2).unwrap();
                prop_assert_eq!(ab, overlap_ratio(&b, &a, 0.2).unwrap());
                prop_assert_eq!(iou_3d(&a, &b, 0.2).unwrap(), iou_3d(&b, &a, 0.2).unwrap());
                let mut shuffled = a.points.clone();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for i in (1..shuffled.len()).rev() {
                    shuffled.swap(i, rand::Rng::random_range(&mut rng, 0..=i));
                }
                let sa = PointCloud::new(shuffled);
                prop_assert_eq!(ab, overlap_ratio(&sa, &b, 0.2).unwrap());
                prop_assert_eq!(iou_3d(&a, &b, 0.2).unwrap(), iou_3d(&sa, &b, 0.2).unwrap());
                prop_assert!((0.0..=1.0).contains(&ab));
            }

            #[test]
            fn voxel_downsample_idempotent(pc in cloud(), voxel in 0.05f64..0.5) {
                let once = voxel_downsample(&pc, voxel).unwrap();
                let twice = voxel_downsample(&once, voxel).unwrap();
                prop_assert_eq!(once.len(), twice.len());
                for (p, q) in once.points.iter().zip(&twice.points) {
                    prop_assert!(p.distance(q) < 1e-9);
                }
            }

            #[test]
            fn dominant_normal_rotation_equivariant(roll in -3.0f64..3.0, pitch in -1.5f64..1.5, yaw in -3.0f64..3.0) {
                let plane = grid(8, 0.1, |x, y| Point3::new(x, y, 0.0));
                let rot = Pose3D::from_rpy(Point3::ORIGIN, roll, pitch, yaw);
                let rotated: PointCloud = plane.points.iter().map(|p| rot.transform_point(p)).collect();
                let n = dominant_normal(&rotated).unwrap();
                let expected = rot.axis(Vector3::z());
                let cos = n.dot(&expected).abs().min(1.0);
                prop_assert!(cos.acos() < 1e-6);
            }
        }
    }
}
