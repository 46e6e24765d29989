//! Surface samplers for the synthetic object clouds. Every generator is
//! deterministic and expressed in the object frame (origin at the bottom
//! center, z up).

use std::f64::consts::{PI, TAU};

use crate::geom::{Point3, PointCloud};

fn steps(length: f64, spacing: f64) -> usize {
    ((length / spacing).round() as usize).max(1)
}

/// Regular grid on the rectangle `center ± hu·u ± hv·v` (edges included).
pub fn rect_patch(center: Point3, u: Point3, v: Point3, hu: f64, hv: f64, spacing: f64) -> PointCloud {
    let (nu, nv) = (steps(2.0 * hu, spacing), steps(2.0 * hv, spacing));
    let mut pts = Vec::with_capacity((nu + 1) * (nv + 1));
    for i in 0..=nu {
        for j in 0..=nv {
            let a = -hu + 2.0 * hu * i as f64 / nu as f64;
            let b = -hv + 2.0 * hv * j as f64 / nv as f64;
            pts.push(center + u * a + v * b);
        }
    }
    PointCloud::new(pts)
}

/// The six faces of a box resting on z = `z0`.
pub fn box_surface(center_xy: [f64; 2], z0: f64, size: [f64; 3], spacing: f64) -> PointCloud {
    box_faces(center_xy, z0, size, spacing, true)
}

/// Box without its top face (containers).
pub fn open_box(center_xy: [f64; 2], z0: f64, size: [f64; 3], spacing: f64) -> PointCloud {
    box_faces(center_xy, z0, size, spacing, false)
}

fn box_faces(c: [f64; 2], z0: f64, [sx, sy, sz]: [f64; 3], spacing: f64, top: bool) -> PointCloud {
    let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
    let x = Point3::new(1.0, 0.0, 0.0);
    let y = Point3::new(0.0, 1.0, 0.0);
    let z = Point3::new(0.0, 0.0, 1.0);
    let mid = Point3::new(c[0], c[1], z0 + hz);
    let mut out = PointCloud::default();
    if top {
        out.extend(&rect_patch(mid + z * hz, x, y, hx, hy, spacing));
    }
    out.extend(&rect_patch(mid - z * hz, x, y, hx, hy, spacing));
    out.extend(&rect_patch(mid + x * hx, y, z, hy, hz, spacing));
    out.extend(&rect_patch(mid - x * hx, y, z, hy, hz, spacing));
    out.extend(&rect_patch(mid + y * hy, x, z, hx, hz, spacing));
    out.extend(&rect_patch(mid - y * hy, x, z, hx, hz, spacing));
    out
}

/// Fibonacci-lattice sphere.
pub fn sphere(center: Point3, radius: f64, spacing: f64) -> PointCloud {
    let n = ((4.0 * PI * radius * radius) / (spacing * spacing)).ceil().max(12.0) as usize;
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let zz = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - zz * zz).sqrt();
            let th = golden * i as f64;
            center + Point3::new(r * th.cos(), r * th.sin(), zz) * radius
        })
        .collect()
}

/// Disk in the plane spanned by `u`, `v`.
pub fn disk(center: Point3, u: Point3, v: Point3, radius: f64, spacing: f64) -> PointCloud {
    let mut pts = vec![center];
    let rings = steps(radius, spacing);
    for k in 1..=rings {
        let r = radius * k as f64 / rings as f64;
        let n = steps(TAU * r, spacing).max(6);
        for i in 0..n {
            let a = TAU * i as f64 / n as f64;
            pts.push(center + u * (r * a.cos()) + v * (r * a.sin()));
        }
    }
    PointCloud::new(pts)
}

/// Lateral surface of a cylinder along `axis` starting at `base`.
pub fn cylinder(base: Point3, axis: Point3, radius: f64, length: f64, spacing: f64) -> PointCloud {
    let a = axis.normalized().expect("cylinder axis must be non-zero");
    let helper = if a.z.abs() < 0.9 { Point3::new(0.0, 0.0, 1.0) } else { Point3::new(1.0, 0.0, 0.0) };
    let u = a.cross(&helper).normalized().expect("independent helper axis");
    let v = a.cross(&u);
    let n_around = steps(TAU * radius, spacing).max(8);
    let n_along = steps(length, spacing);
    let mut pts = Vec::new();
    for j in 0..=n_along {
        let c = base + a * (length * j as f64 / n_along as f64);
        for i in 0..n_around {
            let t = TAU * i as f64 / n_around as f64;
            pts.push(c + u * (radius * t.cos()) + v * (radius * t.sin()));
        }
    }
    PointCloud::new(pts)
}

/// Upright cylinder resting on z = 0 with optional caps.
pub fn upright_cylinder(radius: f64, height: f64, spacing: f64, top: bool, bottom: bool) -> PointCloud {
    let x = Point3::new(1.0, 0.0, 0.0);
    let y = Point3::new(0.0, 1.0, 0.0);
    let mut out = cylinder(Point3::ORIGIN, Point3::new(0.0, 0.0, 1.0), radius, height, spacing);
    if top {
        out.extend(&disk(Point3::new(0.0, 0.0, height), x, y, radius, spacing));
    }
    if bottom {
        out.extend(&disk(Point3::ORIGIN, x, y, radius, spacing));
    }
    out
}

/// Thin tube along a circular arc in the plane spanned by `u`, `v`.
pub fn arc_tube(center: Point3, u: Point3, v: Point3, radius: f64, from: f64, to: f64, tube: f64, spacing: f64) -> PointCloud {
    let n = steps((to - from).abs() * radius, spacing).max(4);
    let normal = u.cross(&v);
    let mut pts = Vec::new();
    for i in 0..=n {
        let a = from + (to - from) * i as f64 / n as f64;
        let dir = u * a.cos() + v * a.sin();
        let c = center + dir * radius;
        for k in 0..6 {
            let t = TAU * k as f64 / 6.0;
            pts.push(c + dir * (tube * t.cos()) + normal * (tube * t.sin()));
        }
    }
    PointCloud::new(pts)
}

/// Polyline of points spaced `spacing` apart.
pub fn polyline(vertices: &[Point3], spacing: f64) -> PointCloud {
    let mut pts = Vec::new();
    for w in vertices.windows(2) {
        let n = steps(w[0].distance(&w[1]), spacing);
        for i in 0..n {
            pts.push(w[0] + (w[1] - w[0]) * (i as f64 / n as f64));
        }
    }
    if let Some(last) = vertices.last() {
        pts.push(*last);
    }
    PointCloud::new(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom;

    #[test]
    fn box_extents_and_centroid() {
        let b = box_surface([0.0, 0.0], 0.0, [0.2, 0.1, 0.3], 0.01);
        let e = geom::aabb_extents(&b).unwrap();
        assert!((e.x - 0.2).abs() < 1e-12 && (e.y - 0.1).abs() < 1e-12 && (e.z - 0.3).abs() < 1e-12);
        let c = geom::centroid(&b).unwrap();
        assert!(c.x.abs() < 1e-9 && c.y.abs() < 1e-9);
    }

    #[test]
    fn sphere_points_on_surface() {
        let c = Point3::new(0.0, 0.0, 0.05);
        let s = sphere(c, 0.05, 0.01);
        assert!(s.len() > 50);
        assert!(s.iter().all(|p| (p.distance(&c) - 0.05).abs() < 1e-12));
    }

    #[test]
    fn disk_normal_is_plane_normal() {
        let d = disk(Point3::ORIGIN, Point3::new(0.0, 1.0, 0.0), Point3::new(0.0, 0.0, 1.0), 0.02, 0.004);
        let n = geom::dominant_normal(&d).unwrap();
        assert!(n.x.abs() > 1.0 - 1e-9);
    }
}
