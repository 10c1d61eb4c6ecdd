//! Synthetic RGB-D scenes of express bags and envelopes lying on a table,
//! rendered from a camera looking straight down, with ground truth.
//!
//! Surfaces are height fields over the table plane. Every object footprint is
//! a rectangle; a pixel is assigned the table point its ray meets at table
//! depth and takes the highest surface above that point, so overlapping
//! objects composite by per-pixel minimum depth.
//!
//! A bag is a thin plate with a stuffed lump on top,
//! `lump_height * max(0, 1 - (x/a')^4 - (y/b')^4)` over the footprint shrunk
//! by the flap band, and four curled corner ears. An ear rises across the
//! corner as `ear_height * sin^2(pi * u / ear_length)`, `u` being the distance
//! from the corner tip along the inward diagonal; its outer half shows the
//! bag lining. With `ear_height = 0` the corners are flat flaps. An envelope
//! is a plate. A striped label is painted on top when the barcode faces up.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{CameraIntrinsics, ColorImage, DepthImage, Pixel};
use crate::mask::{convex_intersection, polygon_area, BBox, Mask, Polygon, Rle};

/// Thickness of an envelope and of a bag's flat margin, meters.
pub const PLATE_THICKNESS: f64 = 0.003;

const LABEL_BAR: f64 = 0.004;
const BAR_COLOR: [u8; 3] = [20, 20, 20];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PackageClass {
    Envelope,
    Bag,
}

/// Position on the table plane in camera-frame meters, plus yaw in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub class: PackageClass,
    pub pose: PlanarPose,
    /// Footprint half-extents along the object's local x and y, meters.
    pub half_extents: [f64; 2],
    /// Bags only.
    pub lump_height: f64,
    /// Width of the flat margin around the lump; bags only.
    pub flap_band: f64,
    /// Peak lift of the curled corners; 0 for flat corners. Bags only.
    pub ear_height: f64,
    /// Extent of a corner region along the inward diagonal. Bags only.
    pub ear_length: f64,
    pub barcode_up: bool,
    pub color: [u8; 3],
    pub lining_color: [u8; 3],
    pub label_color: [u8; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    Plate,
    Lump,
    EarOuter,
    EarInner,
    Label,
}

struct Surface {
    elevation: f64,
    part: Part,
    /// Local x, used for label stripes.
    lx: f64,
}

impl SceneObject {
    pub fn envelope(id: u32, pose: PlanarPose, half_extents: [f64; 2], barcode_up: bool) -> Self {
        SceneObject {
            id,
            class: PackageClass::Envelope,
            pose,
            half_extents,
            lump_height: 0.0,
            flap_band: 0.0,
            ear_height: 0.0,
            ear_length: 0.0,
            barcode_up,
            color: [214, 196, 160],
            lining_color: [214, 196, 160],
            label_color: [245, 245, 240],
        }
    }

    /// A bag with the default margin, lump and ear proportions.
    pub fn bag(id: u32, pose: PlanarPose, half_extents: [f64; 2], barcode_up: bool) -> Self {
        let flap_band = 0.018;
        let mut bag = SceneObject {
            id,
            class: PackageClass::Bag,
            pose,
            half_extents,
            lump_height: 0.06,
            flap_band,
            ear_height: 0.05,
            ear_length: 0.045,
            barcode_up,
            color: [228, 228, 222],
            lining_color: [62, 62, 66],
            label_color: [245, 245, 240],
        };
        bag.ear_length = bag.ear_length.min(0.9 * bag.max_ear_length());
        bag
    }

    fn inner_extents(&self) -> [f64; 2] {
        [self.half_extents[0] - self.flap_band, self.half_extents[1] - self.flap_band]
    }

    /// Largest corner extent whose region stays clear of the lump.
    pub fn max_ear_length(&self) -> f64 {
        let [a, b] = self.half_extents;
        let clear = |u: f64| {
            // the region's inner boundary is the segment px + py = sqrt(2) u
            let span = std::f64::consts::SQRT_2 * u;
            (0..=64).all(|i| {
                let px = span * i as f64 / 64.0;
                let py = span - px;
                self.lump_at((a - px).max(0.0), (b - py).max(0.0)) <= 0.0
            })
        };
        let (mut lo, mut hi) = (0.0, a.min(b) * std::f64::consts::SQRT_2);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if clear(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn lump_at(&self, ax: f64, ay: f64) -> f64 {
        let [ai, bi] = self.inner_extents();
        if self.class != PackageClass::Bag || ax >= ai || ay >= bi {
            return 0.0;
        }
        self.lump_height * (1.0 - (ax / ai).powi(4) - (ay / bi).powi(4)).max(0.0)
    }

    fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.pose.yaw.sin_cos();
        let (dx, dy) = (x - self.pose.x, y - self.pose.y);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    fn to_table(&self, lx: f64, ly: f64) -> (f64, f64) {
        let (s, c) = self.pose.yaw.sin_cos();
        (self.pose.x + c * lx - s * ly, self.pose.y + s * lx + c * ly)
    }

    /// Footprint corners on the table plane, counter-clockwise in local frame.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let [a, b] = self.half_extents;
        [(-a, -b), (a, -b), (a, b), (-a, b)].map(|(lx, ly)| {
            let (x, y) = self.to_table(lx, ly);
            [x, y]
        })
    }

    fn label_half_extents(&self) -> [f64; 2] {
        match self.class {
            PackageClass::Bag => {
                let [ai, bi] = self.inner_extents();
                [0.4 * ai, 0.3 * bi]
            }
            PackageClass::Envelope => [0.4 * self.half_extents[0], 0.3 * self.half_extents[1]],
        }
    }

    fn surface(&self, lx: f64, ly: f64) -> Option<Surface> {
        let [a, b] = self.half_extents;
        let (ax, ay) = (lx.abs(), ly.abs());
        if ax > a || ay > b {
            return None;
        }
        let [hx, hy] = self.label_half_extents();
        let on_label = self.barcode_up && ax <= hx && ay <= hy;
        if self.class == PackageClass::Envelope {
            let part = if on_label { Part::Label } else { Part::Plate };
            return Some(Surface { elevation: PLATE_THICKNESS, part, lx });
        }
        let lump = self.lump_at(ax, ay);
        let u = ((a - ax) + (b - ay)) * FRAC_1_SQRT_2;
        let (ear, ear_part) = if self.ear_height > 0.0 && u < self.ear_length {
            let s = u / self.ear_length;
            let part = if s < 0.5 { Part::EarOuter } else { Part::EarInner };
            (self.ear_height * (PI * s).sin().powi(2), Some(part))
        } else {
            (0.0, None)
        };
        let part = if on_label && lump > 0.0 {
            Part::Label
        } else if lump > 0.0 {
            Part::Lump
        } else {
            ear_part.unwrap_or(Part::Plate)
        };
        Some(Surface { elevation: PLATE_THICKNESS + lump + ear, part, lx })
    }

    fn color_of(&self, s: &Surface) -> [u8; 3] {
        match s.part {
            Part::Plate | Part::Lump | Part::EarInner => self.color,
            Part::EarOuter => self.lining_color,
            Part::Label => {
                let bar = ((s.lx / LABEL_BAR).floor() as i64).rem_euclid(2) == 0;
                if bar {
                    BAR_COLOR
                } else {
                    self.label_color
                }
            }
        }
    }

    /// Corner regions on the table plane: the triangle cut off each corner by
    /// the line at `ear_length` along the inward diagonal.
    pub fn corner_triangles(&self) -> Vec<[[f64; 2]; 3]> {
        if self.class != PackageClass::Bag || self.ear_length <= 0.0 {
            return Vec::new();
        }
        let [a, b] = self.half_extents;
        let leg = self.ear_length * std::f64::consts::SQRT_2;
        [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .map(|&(sx, sy)| {
                let tip = (sx * a, sy * b);
                let along_x = (sx * (a - leg), sy * b);
                let along_y = (sx * a, sy * (b - leg));
                [tip, along_x, along_y].map(|(lx, ly)| {
                    let (x, y) = self.to_table(lx, ly);
                    [x, y]
                })
            })
            .collect()
    }
}

/// Everything needed to render one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub objects: Vec<SceneObject>,
    pub intrinsics: CameraIntrinsics,
    pub table_depth: f64,
    pub table_color: [u8; 3],
    /// Standard deviation of additive depth noise, meters.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl SceneSpec {
    pub fn new(objects: Vec<SceneObject>) -> Self {
        SceneSpec {
            objects,
            intrinsics: CameraIntrinsics::d435_vga(),
            table_depth: 1.0,
            table_color: [78, 80, 86],
            noise_sigma: 0.0015,
            noise_seed: 0,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_sigma = 0.0;
        self
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.noise_seed = seed;
        self
    }

    pub fn without(&self, id: u32) -> Self {
        let mut s = self.clone();
        s.objects.retain(|o| o.id != id);
        s
    }
}

/// Ground truth for one object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectTruth {
    pub id: u32,
    pub class: PackageClass,
    pub barcode_up: bool,
    /// Full footprint, regardless of occlusion.
    pub mask: Rle,
    /// Pixels where this object is the top surface.
    pub visible: Rle,
    /// Pixels over the bag contents; bags only.
    pub lump_interior: Option<Rle>,
    pub corner_regions: Vec<Polygon>,
    pub label_bbox: Option<BBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub table_depth: f64,
    pub objects: Vec<SceneObject>,
    pub annotations: Vec<ObjectTruth>,
}

impl SceneTruth {
    pub fn annotation(&self, id: u32) -> Option<&ObjectTruth> {
        self.annotations.iter().find(|a| a.id == id)
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

#[derive(Clone, Debug)]
pub struct RenderedScene {
    pub color: ColorImage,
    pub depth: DepthImage,
    pub truth: SceneTruth,
    /// Top object per pixel, row-major.
    pub top_ids: Vec<Option<u32>>,
}

impl RenderedScene {
    pub fn top_object(&self, p: Pixel) -> Option<u32> {
        self.top_ids[p.y as usize * self.depth.width() + p.x as usize]
    }
}

fn project_table(k: &CameraIntrinsics, z: f64, p: [f64; 2]) -> [f64; 2] {
    [k.fx * p[0] / z + k.cx, k.fy * p[1] / z + k.cy]
}

fn pixel_bounds(k: &CameraIntrinsics, z: f64, corners: &[[f64; 2]]) -> (f64, f64, f64, f64) {
    let px: Vec<[f64; 2]> = corners.iter().map(|c| project_table(k, z, *c)).collect();
    let fold = |f: fn(f64, f64) -> f64, i: usize, init: f64| px.iter().map(|p| p[i]).fold(init, f);
    (
        fold(f64::min, 0, f64::INFINITY),
        fold(f64::min, 1, f64::INFINITY),
        fold(f64::max, 0, f64::NEG_INFINITY),
        fold(f64::max, 1, f64::NEG_INFINITY),
    )
}

/// Renders color, depth and ground truth.
pub fn render_scene(spec: &SceneSpec) -> Result<RenderedScene> {
    let k = &spec.intrinsics;
    k.validate()?;
    let (w, h) = (k.width as usize, k.height as usize);
    let z = spec.table_depth;

    // pixel-space bounding boxes for culling
    let mut boxes = Vec::with_capacity(spec.objects.len());
    for o in &spec.objects {
        let (x0, y0, x1, y1) = pixel_bounds(k, z, &o.footprint());
        if x0 < 0.0 || y0 < 0.0 || x1 >= w as f64 || y1 >= h as f64 {
            return Err(Error::Frustum(o.id));
        }
        boxes.push((x0.floor() as usize, y0.floor() as usize, x1.ceil() as usize, y1.ceil() as usize));
    }

    let n = spec.objects.len();
    let mut depth = vec![z; w * h];
    let mut top_ids = vec![None; w * h];
    let mut color = ColorImage::filled(w, h, spec.table_color);
    let mut footprint = vec![Mask::new(w, h); n];
    let mut lump = vec![Mask::new(w, h); n];
    for y in 0..h {
        for x in 0..w {
            let tx = (x as f64 - k.cx) * z / k.fx;
            let ty = (y as f64 - k.cy) * z / k.fy;
            let mut best: Option<(f64, usize, [u8; 3])> = None;
            for (i, o) in spec.objects.iter().enumerate() {
                let (x0, y0, x1, y1) = boxes[i];
                if x < x0 || x > x1 || y < y0 || y > y1 {
                    continue;
                }
                let (lx, ly) = o.to_local(tx, ty);
                let Some(s) = o.surface(lx, ly) else { continue };
                footprint[i].set(x, y, true);
                if o.lump_at(lx.abs(), ly.abs()) > 0.0 {
                    lump[i].set(x, y, true);
                }
                if best.is_none_or(|(e, _, _)| s.elevation > e) {
                    best = Some((s.elevation, i, o.color_of(&s)));
                }
            }
            if let Some((e, i, rgb)) = best {
                depth[y * w + x] = z - e;
                top_ids[y * w + x] = Some(spec.objects[i].id);
                color.put(x, y, rgb);
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InvalidConfig(format!("noise sigma: {e}")))?;
        for d in depth.iter_mut() {
            *d = (*d + normal.sample(&mut rng)).max(0.0);
        }
    }

    let annotations = spec
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let visible = Mask::from_fn(w, h, |x, y| top_ids[y * w + x] == Some(o.id));
            let corner_regions = o
                .corner_triangles()
                .iter()
                .map(|tri| Polygon { vertices: tri.iter().map(|p| project_table(k, z, *p)).collect() })
                .collect();
            let label_bbox = o.barcode_up.then(|| {
                let [hx, hy] = o.label_half_extents();
                let corners = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)].map(|(lx, ly)| {
                    let (x, y) = o.to_table(lx, ly);
                    [x, y]
                });
                let (x0, y0, x1, y1) = pixel_bounds(k, z, &corners);
                BBox {
                    min: Pixel::new(x0.round() as u32, y0.round() as u32),
                    max: Pixel::new(x1.round() as u32, y1.round() as u32),
                }
            });
            ObjectTruth {
                id: o.id,
                class: o.class,
                barcode_up: o.barcode_up,
                mask: footprint[i].to_rle(),
                visible: visible.to_rle(),
                lump_interior: (o.class == PackageClass::Bag).then(|| lump[i].to_rle()),
                corner_regions,
                label_bbox,
            }
        })
        .collect();

    Ok(RenderedScene {
        color,
        depth: DepthImage::new(w, h, depth)?,
        truth: SceneTruth { table_depth: z, objects: spec.objects.clone(), annotations },
        top_ids,
    })
}

/// Region of the table where objects may be placed.
#[derive(Clone, Debug, PartialEq)]
pub struct Workspace {
    pub intrinsics: CameraIntrinsics,
    pub table_depth: f64,
    /// Clearance between any footprint corner and the image border.
    pub margin_px: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace { intrinsics: CameraIntrinsics::d435_vga(), table_depth: 1.0, margin_px: 30.0 }
    }
}

/// Largest pairwise overlap tolerated when placing objects, as a fraction
/// of the smaller footprint.
pub const MAX_OVERLAP: f64 = 0.6;
const MAX_REJECTIONS: usize = 10_000;

/// Overlap of two footprints as a fraction of the smaller one.
pub fn overlap_fraction(a: &SceneObject, b: &SceneObject) -> f64 {
    let (fa, fb) = (a.footprint(), b.footprint());
    let inter = polygon_area(&convex_intersection(&fa, &fb));
    inter / polygon_area(&fa).min(polygon_area(&fb))
}

/// Random bags and envelopes in the default workspace.
pub fn random_scene(n_bags: usize, n_envelopes: usize, seed: u64) -> Result<Vec<SceneObject>> {
    random_scene_in(&Workspace::default(), n_bags, n_envelopes, seed)
}

pub fn random_scene_in(ws: &Workspace, n_bags: usize, n_envelopes: usize, seed: u64) -> Result<Vec<SceneObject>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = &ws.intrinsics;
    let z = ws.table_depth;
    let x_range = ((ws.margin_px - k.cx) * z / k.fx, (k.width as f64 - 1.0 - ws.margin_px - k.cx) * z / k.fx);
    let y_range = ((ws.margin_px - k.cy) * z / k.fy, (k.height as f64 - 1.0 - ws.margin_px - k.cy) * z / k.fy);

    let mut placed: Vec<SceneObject> = Vec::new();
    let mut rejections = 0;
    let classes = std::iter::repeat_n(PackageClass::Bag, n_bags).chain(std::iter::repeat_n(PackageClass::Envelope, n_envelopes));
    for (id, class) in classes.enumerate() {
        let mut obj = random_object(&mut rng, id as u32, class);
        loop {
            obj.pose = PlanarPose {
                x: rng.random_range(x_range.0..x_range.1),
                y: rng.random_range(y_range.0..y_range.1),
                yaw: rng.random_range(0.0..PI),
            };
            let inside = obj
                .footprint()
                .iter()
                .all(|p| p[0] >= x_range.0 && p[0] <= x_range.1 && p[1] >= y_range.0 && p[1] <= y_range.1);
            if inside && placed.iter().all(|o| overlap_fraction(o, &obj) <= MAX_OVERLAP) {
                break;
            }
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(Error::Placement(rejections));
            }
        }
        placed.push(obj);
    }
    Ok(placed)
}

fn jitter(rng: &mut impl Rng, base: [u8; 3], amount: i32) -> [u8; 3] {
    let d = rng.random_range(-amount..=amount);
    base.map(|c| (c as i32 + d).clamp(0, 255) as u8)
}

fn random_object(rng: &mut impl Rng, id: u32, class: PackageClass) -> SceneObject {
    let pose = PlanarPose { x: 0.0, y: 0.0, yaw: 0.0 };
    match class {
        PackageClass::Bag => {
            // the lump is kept wider than a 14 cm gripper can span
            let a = rng.random_range(0.13..0.16);
            let b = rng.random_range(0.11..0.125);
            let mut bag = SceneObject::bag(id, pose, [a, b], rng.random_bool(0.5));
            bag.flap_band = rng.random_range(0.012..0.018);
            bag.lump_height = rng.random_range(0.045..0.075);
            bag.ear_height = rng.random_range(0.04..0.055);
            bag.ear_length = rng.random_range(0.04..0.05_f64).min(0.9 * bag.max_ear_length());
            const BODIES: [[u8; 3]; 3] = [[228, 228, 222], [214, 220, 232], [232, 222, 200]];
            let body = BODIES[rng.random_range(0..BODIES.len())];
            bag.color = jitter(rng, body, 8);
            bag.lining_color = jitter(rng, [62, 62, 66], 10);
            bag
        }
        PackageClass::Envelope => {
            let a = rng.random_range(0.11..0.16);
            let b = rng.random_range(0.075..0.11);
            let mut env = SceneObject::envelope(id, pose, [a, b], rng.random_bool(0.5));
            const PAPERS: [[u8; 3]; 2] = [[214, 196, 160], [236, 236, 230]];
            let paper = PAPERS[rng.random_range(0..PAPERS.len())];
            env.color = jitter(rng, paper, 8);
            env
        }
    }
}
