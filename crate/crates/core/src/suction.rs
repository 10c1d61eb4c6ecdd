//! Suction points near the middle of a detected package.
//!
//! Pixels are drawn around the box center; a plane is fitted to the
//! deprojected neighborhood of each one and the flattest, most central
//! sample that is not too tilted wins.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{CameraIntrinsics, DepthImage, Pixel, Point3};
use crate::mask::{BBox, Mask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuctionConfig {
    pub n_samples: usize,
    /// Spread around the box center; `None` uses a sixth of the shorter box side.
    pub sigma_px: Option<f64>,
    /// Side of the plane-fit window, odd.
    pub window_px: usize,
    pub max_rms: f64,
    /// Radians from the optical axis.
    pub max_tilt: f64,
    pub rng_seed: u64,
}

impl Default for SuctionConfig {
    fn default() -> Self {
        SuctionConfig {
            n_samples: 32,
            sigma_px: None,
            window_px: 15,
            max_rms: 0.002,
            max_tilt: 15f64.to_radians(),
            rng_seed: 0,
        }
    }
}

impl SuctionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.window_px < 3 || self.window_px.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "suction needs n_samples >= 1 and an odd window >= 3, got {} and {}",
                self.n_samples, self.window_px
            )));
        }
        if self.sigma_px.is_some_and(|s| !(s > 0.0)) || !(self.max_rms >= 0.0) || !(self.max_tilt >= 0.0) {
            return Err(Error::InvalidConfig("suction sigma, max_rms and max_tilt must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuctionCandidate {
    pub pixel: Pixel,
    pub point: Point3,
    /// Unit normal, pointing toward the camera.
    pub normal: [f64; 3],
    pub planarity_rms: f64,
    pub tilt: f64,
    /// Distance from the box center, pixels.
    pub center_distance: f64,
}

/// Least-squares plane through a point set: centroid, unit normal with
/// negative z, and RMS orthogonal residual.
pub fn fit_plane(points: &[Vector3<f64>]) -> Option<(Vector3<f64>, Vector3<f64>, f64)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let scatter: Matrix3<f64> = points.iter().map(|p| (p - centroid) * (p - centroid).transpose()).sum();
    let eig = SymmetricEigen::new(scatter);
    let i = eig.eigenvalues.imin();
    let mut normal = eig.eigenvectors.column(i).normalize();
    if normal.z > 0.0 {
        normal = -normal;
    }
    let rms = (points.iter().map(|p| (p - centroid).dot(&normal).powi(2)).sum::<f64>() / n).sqrt();
    Some((centroid, normal, rms))
}

fn window_points(depth: &DepthImage, k: &CameraIntrinsics, p: Pixel, half: i64) -> Option<Vec<Vector3<f64>>> {
    let (cx, cy) = (p.x as i64, p.y as i64);
    if !depth.contains(cx - half, cy - half) || !depth.contains(cx + half, cy + half) {
        return None;
    }
    let mut pts = Vec::with_capacity(((2 * half + 1) * (2 * half + 1)) as usize);
    for y in cy - half..=cy + half {
        for x in cx - half..=cx + half {
            let d = depth.get(x as usize, y as usize);
            if d > 0.0 {
                let q = k.deproject(x as f64, y as f64, d).ok()?;
                pts.push(Vector3::new(q.x, q.y, q.z));
            }
        }
    }
    Some(pts)
}

pub fn sample_suction(depth: &DepthImage, k: &CameraIntrinsics, bbox: &BBox, cfg: &SuctionConfig) -> Result<SuctionCandidate> {
    sample_suction_in(depth, k, bbox, None, cfg)
}

/// Like [`sample_suction`], but samples must also fall inside `mask`, and
/// the spread is centered on the mask pixel nearest the box center.
///
/// Merged detections can have a box center on bare table, which is as flat
/// as any envelope.
pub fn sample_suction_in(
    depth: &DepthImage,
    k: &CameraIntrinsics,
    bbox: &BBox,
    mask: Option<&Mask>,
    cfg: &SuctionConfig,
) -> Result<SuctionCandidate> {
    cfg.validate()?;
    if bbox.max.x as usize >= depth.width() || bbox.max.y as usize >= depth.height() || bbox.min.x > bbox.max.x || bbox.min.y > bbox.max.y {
        return Err(Error::OutOfBounds);
    }
    let [bx, by] = bbox.center();
    let [mx, my] = match mask {
        Some(m) => m
            .pixels()
            .filter(|p| bbox.contains(p.x as f64, p.y as f64))
            .min_by(|a, b| {
                let da = (a.x as f64 - bx).hypot(a.y as f64 - by);
                let db = (b.x as f64 - bx).hypot(b.y as f64 - by);
                da.total_cmp(&db).then(a.row_major().cmp(&b.row_major()))
            })
            .ok_or(Error::NoSuction)?
            .as_f64(),
        None => [bx, by],
    };
    let sigma = cfg.sigma_px.unwrap_or(bbox.width().min(bbox.height()) as f64 / 6.0).max(1e-9);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let mut pixels = Vec::with_capacity(cfg.n_samples);
    let mut attempts = 0;
    while pixels.len() < cfg.n_samples && attempts < 100 * cfg.n_samples {
        attempts += 1;
        let x = (mx + normal.sample(&mut rng)).round();
        let y = (my + normal.sample(&mut rng)).round();
        if bbox.contains(x, y) && mask.is_none_or(|m| m.get(x as usize, y as usize)) {
            pixels.push(Pixel::new(x as u32, y as u32));
        }
    }

    let half = (cfg.window_px / 2) as i64;
    let mut best: Option<SuctionCandidate> = None;
    for p in pixels {
        let Some(pts) = window_points(depth, k, p, half) else { continue };
        let Some((_, n, rms)) = fit_plane(&pts) else { continue };
        let tilt = (-n.z).clamp(-1.0, 1.0).acos();
        if rms > cfg.max_rms || tilt > cfg.max_tilt || !depth.is_valid(p.x as usize, p.y as usize) {
            continue;
        }
        let point = k.deproject(p.x as f64, p.y as f64, depth.at(p))?;
        let cand = SuctionCandidate {
            pixel: p,
            point,
            normal: [n.x, n.y, n.z],
            planarity_rms: rms,
            tilt,
            center_distance: (p.x as f64 - mx).hypot(p.y as f64 - my),
        };
        let better = best.as_ref().is_none_or(|b| {
            (cand.planarity_rms, cand.center_distance, cand.pixel.row_major())
                < (b.planarity_rms, b.center_distance, b.pixel.row_major())
        });
        if better {
            best = Some(cand);
        }
    }
    best.ok_or(Error::NoSuction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::d435_vga()
    }

    fn bbox(x0: u32, y0: u32, x1: u32, y1: u32) -> BBox {
        BBox { min: Pixel::new(x0, y0), max: Pixel::new(x1, y1) }
    }

    /// Depth of the plane `n . p = n . p0` along each pixel ray.
    fn plane_depth(n: [f64; 3], p0: [f64; 3]) -> DepthImage {
        let k = k();
        let c = n[0] * p0[0] + n[1] * p0[1] + n[2] * p0[2];
        DepthImage::from_fn(640, 480, |x, y| {
            let rx = (x as f64 - k.cx) / k.fx;
            let ry = (y as f64 - k.cy) / k.fy;
            c / (n[0] * rx + n[1] * ry + n[2])
        })
    }

    /// Plane z = a x + b y + c by the normal equations, solved with Cramer's rule.
    fn oracle_normal(pts: &[Vector3<f64>]) -> [f64; 3] {
        let (mut sxx, mut sxy, mut sx, mut syy, mut sy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut sxz, mut syz, mut sz) = (0.0, 0.0, 0.0);
        for p in pts {
            sxx += p.x * p.x;
            sxy += p.x * p.y;
            sx += p.x;
            syy += p.y * p.y;
            sy += p.y;
            n += 1.0;
            sxz += p.x * p.z;
            syz += p.y * p.z;
            sz += p.z;
        }
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let a_m = [[sxx, sxy, sx], [sxy, syy, sy], [sx, sy, n]];
        let rhs = [sxz, syz, sz];
        let d = det3(a_m);
        let col = |i: usize| {
            let mut m = a_m;
            for r in 0..3 {
                m[r][i] = rhs[r];
            }
            det3(m) / d
        };
        let (a, b) = (col(0), col(1));
        let len = (a * a + b * b + 1.0).sqrt();
        [a / len, b / len, -1.0 / len]
    }

    fn angle(u: [f64; 3], v: [f64; 3]) -> f64 {
        let dot: f64 = (0..3).map(|i| u[i] * v[i]).sum();
        dot.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn flat_plane_faces_camera() {
        let depth = DepthImage::constant(640, 480, 0.997);
        let s = sample_suction(&depth, &k(), &bbox(250, 200, 390, 280), &SuctionConfig::default()).unwrap();
        assert!(angle(s.normal, [0.0, 0.0, -1.0]) < 1e-6);
        assert!(s.planarity_rms < 1e-9);
        assert!(bbox(250, 200, 390, 280).contains(s.pixel.x as f64, s.pixel.y as f64));
    }

    #[test]
    fn tilted_plane_rejected() {
        let t = 10f64.to_radians();
        let depth = plane_depth([t.sin(), 0.0, -t.cos()], [0.0, 0.0, 1.0]);
        let cfg = SuctionConfig { max_tilt: 5f64.to_radians(), ..Default::default() };
        assert!(matches!(sample_suction(&depth, &k(), &bbox(250, 200, 390, 280), &cfg), Err(Error::NoSuction)));
        let ok = sample_suction(&depth, &k(), &bbox(250, 200, 390, 280), &SuctionConfig::default()).unwrap();
        assert!((ok.tilt - t).abs() < 1e-6);
    }

    #[test]
    fn avoids_central_bump() {
        let (cx, cy, r) = (320.0, 240.0, 12.0);
        let bump = |x: usize, y: usize| {
            let d = (x as f64 - cx).hypot(y as f64 - cy);
            if d < r { 0.01 * (0.5 + 0.5 * (std::f64::consts::PI * d / r).cos()) } else { 0.0 }
        };
        let depth = DepthImage::from_fn(640, 480, |x, y| 0.997 - bump(x, y));
        let cfg = SuctionConfig { sigma_px: Some(30.0), ..Default::default() };
        let s = sample_suction(&depth, &k(), &bbox(220, 160, 420, 320), &cfg).unwrap();
        assert!(s.planarity_rms < cfg.max_rms);
        let half = 7;
        for y in s.pixel.y - half..=s.pixel.y + half {
            for x in s.pixel.x - half..=s.pixel.x + half {
                assert_eq!(bump(x as usize, y as usize), 0.0, "window touches bump at ({x},{y})");
            }
        }
    }

    #[test]
    fn mask_keeps_samples_on_the_object() {
        let depth = DepthImage::from_fn(640, 480, |x, _| if x < 300 { 0.997 } else { 1.0 });
        let b = bbox(200, 200, 500, 300);
        let m = Mask::from_fn(640, 480, |x, y| x < 300 && b.contains(x as f64, y as f64));
        let free = sample_suction(&depth, &k(), &b, &SuctionConfig::default()).unwrap();
        assert!(free.pixel.x >= 300);
        let s = sample_suction_in(&depth, &k(), &b, Some(&m), &SuctionConfig::default()).unwrap();
        assert!(m.contains_pixel(s.pixel));
        let empty = Mask::new(640, 480);
        assert!(matches!(sample_suction_in(&depth, &k(), &b, Some(&empty), &SuctionConfig::default()), Err(Error::NoSuction)));
    }

    #[test]
    fn bad_config_and_box() {
        let depth = DepthImage::constant(640, 480, 1.0);
        let even = SuctionConfig { window_px: 14, ..Default::default() };
        assert!(matches!(sample_suction(&depth, &k(), &bbox(0, 0, 10, 10), &even), Err(Error::InvalidConfig(_))));
        let outside = bbox(600, 400, 700, 470);
        assert!(matches!(sample_suction(&depth, &k(), &outside, &SuctionConfig::default()), Err(Error::OutOfBounds)));
    }

    #[test]
    fn deterministic() {
        let depth = plane_depth([0.1, -0.05, -1.0], [0.0, 0.0, 0.95]);
        let b = bbox(100, 100, 300, 250);
        let cfg = SuctionConfig { rng_seed: 9, ..Default::default() };
        assert_eq!(sample_suction(&depth, &k(), &b, &cfg).unwrap(), sample_suction(&depth, &k(), &b, &cfg).unwrap());
    }

    proptest! {
        #[test]
        fn fit_matches_normal_equation_oracle(
            a in -0.5f64..0.5, b in -0.5f64..0.5, z0 in 0.5f64..1.5,
            px in 50u32..590, py in 50u32..430,
        ) {
            let depth = plane_depth([a, b, -1.0], [0.0, 0.0, z0]);
            let pts = window_points(&depth, &k(), Pixel::new(px, py), 7).unwrap();
            let (_, n, rms) = fit_plane(&pts).unwrap();
            let n = [n.x, n.y, n.z];
            prop_assert!((n.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(angle(n, oracle_normal(&pts)) < 1e-6);
            let truth = { let l = (a * a + b * b + 1.0).sqrt(); [a / l, b / l, -1.0 / l] };
            prop_assert!(angle(n, truth) < 1e-6);
            prop_assert!(rms < 1e-9);
        }
    }
}
