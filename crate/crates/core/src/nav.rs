//! Affordance-guided navigation: occupancy grid, footprint cost, preferred
//! viewing position and the radius-relaxed goal search.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::config::NavConfig;
use crate::error::{Error, Result};
use crate::geom::{self, Point3, PointCloud, Pose2D};

/// Row-major cost grid; row `j` spans `origin.y + j*res .. origin.y + (j+1)*res`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub origin: [f64; 2],
    pub width: usize,
    pub height: usize,
    cells: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct GridDoc {
    resolution: f64,
    origin: [f64; 2],
    width: usize,
    height: usize,
    data: String,
}

impl Serialize for OccupancyGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridDoc {
            resolution: self.resolution,
            origin: self.origin,
            width: self.width,
            height: self.height,
            data: base64::engine::general_purpose::STANDARD.encode(&self.cells),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OccupancyGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = GridDoc::deserialize(d)?;
        let cells = base64::engine::general_purpose::STANDARD.decode(doc.data.as_bytes()).map_err(D::Error::custom)?;
        OccupancyGrid::from_cells(doc.resolution, doc.origin, doc.width, doc.height, cells).map_err(D::Error::custom)
    }
}

impl OccupancyGrid {
    pub fn new(resolution: f64, origin: [f64; 2], width: usize, height: usize, fill: u8) -> Result<Self> {
        Self::from_cells(resolution, origin, width, height, vec![fill; width * height])
    }

    pub fn from_cells(resolution: f64, origin: [f64; 2], width: usize, height: usize, cells: Vec<u8>) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid resolution must be positive, got {resolution}")));
        }
        if width == 0 || height == 0 || cells.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "grid of {width}x{height} needs {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        Ok(Self { resolution, origin, width, height, cells })
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, cost: u8) {
        self.cells[row * self.width + col] = cost;
    }

    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.origin[0] + (col as f64 + 0.5) * self.resolution,
            self.origin[1] + (row as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.origin[0]) / self.resolution).floor();
        let r = ((y - self.origin[1]) / self.resolution).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height).then(|| (c as usize, r as usize))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.origin[0]
            && y >= self.origin[1]
            && x <= self.origin[0] + self.width as f64 * self.resolution
            && y <= self.origin[1] + self.height as f64 * self.resolution
    }

    /// Raises every cell whose center lies in the axis-aligned box to at least `cost`.
    pub fn fill_rect(&mut self, min: [f64; 2], max: [f64; 2], cost: u8) {
        for row in 0..self.height {
            for col in 0..self.width {
                let [x, y] = self.cell_center(col, row);
                if x >= min[0] && x <= max[0] && y >= min[1] && y <= max[1] {
                    let i = row * self.width + col;
                    self.cells[i] = self.cells[i].max(cost);
                }
            }
        }
    }

    /// Adds a linearly decaying cost band of width `radius` around cells at
    /// or above `source`.
    pub fn inflate(&mut self, source: u8, radius: f64, peak: u8) {
        let reach = (radius / self.resolution).ceil() as i64;
        let mut out = self.cells.clone();
        for row in 0..self.height as i64 {
            for col in 0..self.width as i64 {
                if self.cells[(row as usize) * self.width + col as usize] < source {
                    continue;
                }
                for dr in -reach..=reach {
                    for dc in -reach..=reach {
                        let (r, c) = (row + dr, col + dc);
                        if r < 0 || c < 0 || r >= self.height as i64 || c >= self.width as i64 {
                            continue;
                        }
                        let d = ((dr * dr + dc * dc) as f64).sqrt() * self.resolution;
                        if d > radius || d == 0.0 {
                            continue;
                        }
                        let cost = (f64::from(peak) * (1.0 - d / radius)).round() as u8;
                        let i = r as usize * self.width + c as usize;
                        out[i] = out[i].max(cost);
                    }
                }
            }
        }
        self.cells = out;
    }
}

/// Robot footprint as rectangle half-extents in the robot frame (x forward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub half_length: f64,
    pub half_width: f64,
}

impl Footprint {
    pub fn from_config(cfg: &NavConfig) -> Self {
        Self { half_length: cfg.footprint_half_length, half_width: cfg.footprint_half_width }
    }

    pub fn corners(&self, pose: &Pose2D) -> [[f64; 2]; 4] {
        let (s, c) = pose.theta.sin_cos();
        let mut out = [[0.0; 2]; 4];
        for (i, (sx, sy)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)].into_iter().enumerate() {
            let (lx, ly) = (sx * self.half_length, sy * self.half_width);
            out[i] = [pose.x + c * lx - s * ly, pose.y + s * lx + c * ly];
        }
        out
    }

    /// Whether a world-frame point lies under the footprint at `pose`.
    pub fn covers(&self, pose: &Pose2D, x: f64, y: f64) -> bool {
        let (s, c) = pose.theta.sin_cos();
        let (dx, dy) = (x - pose.x, y - pose.y);
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        lx.abs() <= self.half_length + 1e-12 && ly.abs() <= self.half_width + 1e-12
    }
}

/// Mean cost of the cells whose centers lie under the oriented footprint.
/// Infinite when any such cell is lethal or the footprint leaves the grid.
pub fn footprint_cost(grid: &OccupancyGrid, pose: &Pose2D, fp: &Footprint, lethal: u8) -> f64 {
    if fp.corners(pose).iter().any(|[x, y]| !grid.contains(*x, *y)) {
        return f64::INFINITY;
    }
    let reach = fp.half_length.hypot(fp.half_width);
    let lo_c = (((pose.x - reach - grid.origin[0]) / grid.resolution).floor().max(0.0)) as usize;
    let lo_r = (((pose.y - reach - grid.origin[1]) / grid.resolution).floor().max(0.0)) as usize;
    let hi_c = ((((pose.x + reach - grid.origin[0]) / grid.resolution).ceil()) as usize).min(grid.width - 1);
    let hi_r = ((((pose.y + reach - grid.origin[1]) / grid.resolution).ceil()) as usize).min(grid.height - 1);
    let (mut sum, mut count) = (0u64, 0u64);
    for row in lo_r..=hi_r {
        for col in lo_c..=hi_c {
            let [x, y] = grid.cell_center(col, row);
            if !fp.covers(pose, x, y) {
                continue;
            }
            let cost = grid.get(col, row);
            if cost >= lethal {
                return f64::INFINITY;
            }
            sum += u64::from(cost);
            count += 1;
        }
    }
    if count == 0 {
        // footprint smaller than a cell: use the cell under the robot center
        return match grid.world_to_cell(pose.x, pose.y) {
            Some((c, r)) if grid.get(c, r) < lethal => f64::from(grid.get(c, r)),
            _ => f64::INFINITY,
        };
    }
    sum as f64 / count as f64
}

/// Standoff point in front of an affordance, `r` meters from the object
/// along the affordance's outward horizontal normal.
pub fn preferred_view_position(aff_cloud: &PointCloud, obj_centroid: Point3, r: f64) -> Result<[f64; 2]> {
    let mut n = geom::dominant_normal(aff_cloud)?;
    let outward = geom::centroid(aff_cloud)? - obj_centroid;
    let d = n.dot(&outward);
    if d < -1e-12 || (d.abs() <= 1e-12 && first_nonzero_negative(&n)) {
        n = -n;
    }
    let h = n.xy();
    let len = h[0].hypot(h[1]);
    if len < 0.1 {
        return Err(Error::NoHorizontalNormal);
    }
    Ok([obj_centroid.x + r * h[0] / len, obj_centroid.y + r * h[1] / len])
}

fn first_nonzero_negative(n: &Point3) -> bool {
    [n.x, n.y, n.z].into_iter().find(|v| v.abs() > 1e-12).is_some_and(|v| v < 0.0)
}

/// A sampled base pose on one of the search circles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavCandidate {
    pub pose: Pose2D,
    pub radius: f64,
    pub angle_index: usize,
    pub footprint_cost: f64,
    pub objective: f64,
}

pub fn angle_count(step: f64) -> usize {
    ((TAU / step) - 1e-9).ceil().max(1.0) as usize
}

/// All candidates on the circle of radius `r`, including colliding ones.
pub fn ring_candidates(
    grid: &OccupancyGrid,
    center: [f64; 2],
    r: f64,
    p_aff: Option<[f64; 2]>,
    lambda: f64,
    cfg: &NavConfig,
) -> Vec<NavCandidate> {
    let fp = Footprint::from_config(cfg);
    (0..angle_count(cfg.angular_step))
        .map(|k| {
            let phi = k as f64 * cfg.angular_step;
            let (x, y) = (center[0] + r * phi.cos(), center[1] + r * phi.sin());
            let pose = Pose2D::new(x, y, phi + PI);
            let f = footprint_cost(grid, &pose, &fp, cfg.lethal_threshold);
            let pen = p_aff.map_or(0.0, |p| lambda * (x - p[0]).hypot(y - p[1]));
            NavCandidate { pose, radius: r, angle_index: k, footprint_cost: f, objective: f + pen }
        })
        .collect()
}

/// Minimizes `F + λ‖p − p_aff‖` over object-facing poses on the first radius
/// with any collision-free candidate.
pub fn select_nav_goal(
    grid: &OccupancyGrid,
    obj_centroid: [f64; 2],
    p_aff: Option<[f64; 2]>,
    cfg: &NavConfig,
) -> Result<NavCandidate> {
    cfg.validate()?;
    for &r in &cfg.radii {
        let mut best: Option<NavCandidate> = None;
        for cand in ring_candidates(grid, obj_centroid, r, p_aff, cfg.lambda_aff, cfg) {
            if !cand.footprint_cost.is_finite() {
                continue;
            }
            if best.is_none_or(|b| cand.objective < b.objective) {
                best = Some(cand);
            }
        }
        if let Some(b) = best {
            return Ok(b);
        }
    }
    Err(Error::NoValidPose)
}

/// 8-connected breadth-first path over non-lethal cells without corner cutting.
pub fn plan_path(grid: &OccupancyGrid, start: [f64; 2], goal: [f64; 2], lethal: u8) -> Result<Vec<(usize, usize)>> {
    let s = grid
        .world_to_cell(start[0], start[1])
        .ok_or_else(|| Error::NavigationFailed("start is outside the map".into()))?;
    let g = grid
        .world_to_cell(goal[0], goal[1])
        .ok_or_else(|| Error::NavigationFailed("goal is outside the map".into()))?;
    if grid.get(g.0, g.1) >= lethal {
        return Err(Error::NavigationFailed("goal cell is occupied".into()));
    }
    let idx = |(c, r): (usize, usize)| r * grid.width + c;
    let mut prev = vec![usize::MAX; grid.width * grid.height];
    let mut queue = VecDeque::from([s]);
    prev[idx(s)] = idx(s);
    let free = |c: i64, r: i64| {
        c >= 0 && r >= 0 && (c as usize) < grid.width && (r as usize) < grid.height && grid.get(c as usize, r as usize) < lethal
    };
    while let Some(cur) = queue.pop_front() {
        if cur == g {
            let mut path = vec![g];
            let mut at = idx(g);
            while at != idx(s) {
                at = prev[at];
                path.push((at % grid.width, at / grid.width));
            }
            path.reverse();
            return Ok(path);
        }
        let (c, r) = (cur.0 as i64, cur.1 as i64);
        for (dc, dr) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let (nc, nr) = (c + dc, r + dr);
            if !free(nc, nr) || (dc != 0 && dr != 0 && !(free(c + dc, r) && free(c, r + dr))) {
                continue;
            }
            let n = (nc as usize, nr as usize);
            if prev[idx(n)] == usize::MAX {
                prev[idx(n)] = idx(cur);
                queue.push_back(n);
            }
        }
    }
    Err(Error::NavigationFailed("no path to the goal".into()))
}
