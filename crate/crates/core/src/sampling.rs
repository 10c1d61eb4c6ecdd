//! Antipodal grasp candidates sampled directly from a depth image.
//!
//! Edge pixels are found from the depth gradient, then pairs of edge pixels
//! are drawn at random and kept when their gradients oppose each other along
//! the line joining them (inside the friction cone) and the gripper can span
//! the metric distance between them.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imaging::{deproject, CameraIntrinsics, DepthImage, Pixel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Minimum depth-gradient magnitude of an edge pixel, meters per pixel.
    pub gradient_threshold: f64,
    pub friction_coefficient: f64,
    /// Widest opening of the gripper, meters.
    pub max_gripper_width: f64,
    pub max_candidates: usize,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            gradient_threshold: 0.0025,
            friction_coefficient: 0.5,
            // Robotiq 2F-140
            max_gripper_width: 0.14,
            max_candidates: 500,
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.friction_coefficient > 0.0) || self.max_candidates == 0 || !(self.max_gripper_width > 0.0) {
            return Err(crate::Error::InvalidConfig(format!("bad sampler config {self:?}")));
        }
        Ok(())
    }
}

/// A pixel on a depth discontinuity with its unit gradient direction.
///
/// The gradient points toward increasing depth, i.e. away from the nearer
/// surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgePixel {
    pub pixel: Pixel,
    pub direction: [f64; 2],
    pub magnitude: f64,
}

/// A parallel-jaw grasp in image space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub center: Pixel,
    /// Orientation of the jaw axis in `[0, pi)`, radians from the +x image axis.
    pub axis_angle: f64,
    /// The jaw with the smaller (row, column).
    pub jaw1: Pixel,
    pub jaw2: Pixel,
    /// Unit depth gradients at the jaws.
    pub jaw1_normal: [f64; 2],
    pub jaw2_normal: [f64; 2],
    /// Depth at the center pixel, meters.
    pub d0: f64,
    pub jaw_separation_px: f64,
    /// Lateral distance between the jaws deprojected at their own depths.
    pub jaw_separation_m: f64,
}

impl GraspCandidate {
    /// Real-valued midpoint of the jaws.
    pub fn midpoint(&self) -> [f64; 2] {
        [
            (self.jaw1.x as f64 + self.jaw2.x as f64) / 2.0,
            (self.jaw1.y as f64 + self.jaw2.y as f64) / 2.0,
        ]
    }

    /// Unit vector from jaw1 to jaw2.
    pub fn axis(&self) -> [f64; 2] {
        let dx = self.jaw2.x as f64 - self.jaw1.x as f64;
        let dy = self.jaw2.y as f64 - self.jaw1.y as f64;
        let n = dx.hypot(dy);
        [dx / n, dy / n]
    }

    /// Same grasp with the jaw labels exchanged.
    pub fn swapped(&self) -> Self {
        GraspCandidate {
            jaw1: self.jaw2,
            jaw2: self.jaw1,
            jaw1_normal: self.jaw2_normal,
            jaw2_normal: self.jaw1_normal,
            ..self.clone()
        }
    }
}

/// Sobel derivative normalized to depth change per pixel.
#[inline]
pub(crate) fn sobel(depth: &DepthImage, x: usize, y: usize) -> [f64; 2] {
    let d = |dx: isize, dy: isize| depth.get((x as isize + dx) as usize, (y as isize + dy) as usize);
    let gx = (d(1, -1) - d(-1, -1)) + 2.0 * (d(1, 0) - d(-1, 0)) + (d(1, 1) - d(-1, 1));
    let gy = (d(-1, 1) - d(-1, -1)) + 2.0 * (d(0, 1) - d(0, -1)) + (d(1, 1) - d(1, -1));
    [gx / 8.0, gy / 8.0]
}

/// Pixels whose 3x3 central-difference gradient exceeds the threshold.
///
/// The gradient is the Sobel operator scaled by 1/8 so that a unit-slope ramp
/// reads as one depth unit per pixel. Border pixels are skipped. Output is in
/// row-major order.
pub fn depth_edges(depth: &DepthImage, cfg: &SamplerConfig) -> Vec<EdgePixel> {
    let (w, h) = (depth.width(), depth.height());
    let mut edges = Vec::new();
    if w < 3 || h < 3 {
        return edges;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let [gx, gy] = sobel(depth, x, y);
            let m = gx.hypot(gy);
            if m > cfg.gradient_threshold {
                edges.push(EdgePixel {
                    pixel: Pixel::new(x as u32, y as u32),
                    direction: [gx / m, gy / m],
                    magnitude: m,
                });
            }
        }
    }
    edges
}

/// Friction-cone antipodality of two contacts.
///
/// Each gradient must lie within `atan(mu)` of the jaw axis and point away
/// from the other contact, so the surface between the jaws is the nearer one.
pub fn is_antipodal(p1: [f64; 2], n1: [f64; 2], p2: [f64; 2], n2: [f64; 2], mu: f64) -> bool {
    let (dx, dy) = (p2[0] - p1[0], p2[1] - p1[1]);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return false;
    }
    let axis = [dx / len, dy / len];
    let cos_cone = mu.atan().cos();
    let out1 = -(n1[0] * axis[0] + n1[1] * axis[1]);
    let out2 = n2[0] * axis[0] + n2[1] * axis[1];
    out1 >= cos_cone && out2 >= cos_cone
}

/// Samples up to `max_candidates` antipodal grasps.
///
/// Pairs are drawn with the seeded RNG: the first jaw uniformly among edge
/// pixels, the second uniformly among edge pixels in the neighboring grid
/// cells (cells are as wide as the gripper can reach in pixels). At most
/// `100 * max_candidates` pairs are tried.
pub fn sample_antipodal(depth: &DepthImage, k: &CameraIntrinsics, cfg: &SamplerConfig) -> Vec<GraspCandidate> {
    let edges = depth_edges(depth, cfg);
    if edges.len() < 2 {
        return Vec::new();
    }
    let min_depth = depth
        .data()
        .iter()
        .copied()
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let reach_px = (cfg.max_gripper_width * k.fx.max(k.fy) / min_depth).ceil().max(1.0);
    let grid = EdgeGrid::new(&edges, reach_px, depth.width(), depth.height());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let attempts = 100 * cfg.max_candidates;
    for _ in 0..attempts {
        if out.len() >= cfg.max_candidates {
            break;
        }
        let i = rng.random_range(0..edges.len());
        let Some(j) = grid.sample_neighbor(&edges[i], &mut rng) else {
            continue;
        };
        if i == j || !seen.insert((i.min(j), i.max(j))) {
            continue;
        }
        if let Some(g) = make_candidate(depth, k, cfg, &edges[i], &edges[j]) {
            out.push(g);
        }
    }
    out
}

fn make_candidate(
    depth: &DepthImage,
    k: &CameraIntrinsics,
    cfg: &SamplerConfig,
    a: &EdgePixel,
    b: &EdgePixel,
) -> Option<GraspCandidate> {
    let (e1, e2) = if a.pixel.row_major() <= b.pixel.row_major() { (a, b) } else { (b, a) };
    let (p1, p2) = (e1.pixel.as_f64(), e2.pixel.as_f64());
    if !is_antipodal(p1, e1.direction, p2, e2.direction, cfg.friction_coefficient) {
        return None;
    }
    let q1 = deproject(p1[0], p1[1], depth.at(e1.pixel), k).ok()?;
    let q2 = deproject(p2[0], p2[1], depth.at(e2.pixel), k).ok()?;
    // the jaws close across the optical axis, so only the lateral offset counts
    let sep_m = (q1.x - q2.x).hypot(q1.y - q2.y);
    if sep_m > cfg.max_gripper_width {
        return None;
    }
    let center = Pixel::new(
        ((p1[0] + p2[0]) / 2.0).round() as u32,
        ((p1[1] + p2[1]) / 2.0).round() as u32,
    );
    let d0 = depth.at(center);
    if d0 <= 0.0 {
        return None;
    }
    let mut angle = (p2[1] - p1[1]).atan2(p2[0] - p1[0]);
    if angle < 0.0 {
        angle += PI;
    }
    if angle >= PI {
        angle -= PI;
    }
    Some(GraspCandidate {
        center,
        axis_angle: angle,
        jaw1: e1.pixel,
        jaw2: e2.pixel,
        jaw1_normal: e1.direction,
        jaw2_normal: e2.direction,
        d0,
        jaw_separation_px: (p2[0] - p1[0]).hypot(p2[1] - p1[1]),
        jaw_separation_m: sep_m,
    })
}

/// Buckets edge indices into square cells so that every pair within reach
/// shares a cell or sits in adjacent cells.
struct EdgeGrid {
    cell: f64,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<usize>>,
}

impl EdgeGrid {
    fn new(edges: &[EdgePixel], cell: f64, width: usize, height: usize) -> Self {
        let cols = ((width as f64 / cell).ceil() as usize).max(1);
        let rows = ((height as f64 / cell).ceil() as usize).max(1);
        let mut cells = vec![Vec::new(); cols * rows];
        for (i, e) in edges.iter().enumerate() {
            let (cx, cy) = Self::cell_of(cell, cols, rows, e.pixel);
            cells[cy * cols + cx].push(i);
        }
        EdgeGrid { cell, cols, rows, cells }
    }

    fn cell_of(cell: f64, cols: usize, rows: usize, p: Pixel) -> (usize, usize) {
        (
            ((p.x as f64 / cell) as usize).min(cols - 1),
            ((p.y as f64 / cell) as usize).min(rows - 1),
        )
    }

    fn sample_neighbor(&self, e: &EdgePixel, rng: &mut impl Rng) -> Option<usize> {
        let (cx, cy) = Self::cell_of(self.cell, self.cols, self.rows, e.pixel);
        let xs = cx.saturating_sub(1)..=(cx + 1).min(self.cols - 1);
        let ys = cy.saturating_sub(1)..=(cy + 1).min(self.rows - 1);
        let total: usize = ys
            .clone()
            .flat_map(|y| xs.clone().map(move |x| (x, y)))
            .map(|(x, y)| self.cells[y * self.cols + x].len())
            .sum();
        if total == 0 {
            return None;
        }
        let mut r = rng.random_range(0..total);
        for y in ys {
            for x in xs.clone() {
                let c = &self.cells[y * self.cols + x];
                if r < c.len() {
                    return Some(c[r]);
                }
                r -= c.len();
            }
        }
        unreachable!("index drawn below the neighborhood size")
    }
}
