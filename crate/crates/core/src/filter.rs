//! The depth/color consistency filter applied to sampled grasps.
//!
//! For every candidate the statistics of the rectangle swept by the closing
//! jaws are computed, and the candidate survives only when all five tests
//! hold:
//!
//! 1. both jaws sit deeper than the grasp center by more than `eps1`;
//! 2. the depth range inside the region exceeds `eps2`;
//! 3. the mean region depth lies more than `eps3` behind the center and the
//!    depth spread exceeds `eps4`;
//! 4. the luma spread inside the region exceeds `eps5`;
//! 5. the mean channel difference between the two jaw colors exceeds `eps6`.
//!
//! Together these keep grasps whose center is a raised, thin part of an
//! object that contrasts with its surroundings, which on a stuffed bag are
//! its corners rather than its contents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ColorImage, DepthImage, Pixel};
use crate::sampling::GraspCandidate;

/// Depth and color statistics of one grasp region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub mu_d: f64,
    pub sigma_d: f64,
    pub d_max: f64,
    pub d_min: f64,
    pub c1: [f64; 3],
    pub c2: [f64; 3],
    pub mu_c: [f64; 3],
    /// Standard deviation of luma over the region.
    pub sigma_c: f64,
}

impl RegionStats {
    /// Mean over channels of `c1 - c2`.
    pub fn mean_color_difference(&self) -> f64 {
        (0..3).map(|i| self.c1[i] - self.c2[i]).sum::<f64>() / 3.0
    }
}

/// How condition 5 treats the sign of the jaw color difference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorDifference {
    /// `|mean(c1 - c2)| > eps6`; independent of jaw labelling.
    #[default]
    Absolute,
    /// `mean(c1 - c2) > eps6`, taken literally.
    Signed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterThresholds {
    /// meters
    pub eps1: f64,
    /// meters
    pub eps2: f64,
    /// meters
    pub eps3: f64,
    /// meters
    pub eps4: f64,
    /// 8-bit intensity
    pub eps5: f64,
    /// 8-bit intensity
    pub eps6: f64,
    pub color_difference: ColorDifference,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            eps1: 0.01,
            eps2: 0.01,
            eps3: 0.01,
            eps4: 0.01,
            eps5: 30.0,
            eps6: 50.0,
            color_difference: ColorDifference::Absolute,
        }
    }
}

impl FilterThresholds {
    pub fn as_array(&self) -> [f64; 6] {
        [self.eps1, self.eps2, self.eps3, self.eps4, self.eps5, self.eps6]
    }

    pub fn from_array(eps: [f64; 6]) -> Self {
        FilterThresholds {
            eps1: eps[0],
            eps2: eps[1],
            eps3: eps[2],
            eps4: eps[3],
            eps5: eps[4],
            eps6: eps[5],
            color_difference: ColorDifference::Absolute,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|e| *e >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("thresholds must be non-negative: {self:?}")))
        }
    }
}

/// Shape of the region swept by the fingers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionGeometry {
    /// Finger thickness across the grasp axis, pixels.
    pub rect_height_px: u32,
    /// Side of the square window averaged at each jaw; odd.
    pub jaw_window_px: u32,
}

impl Default for RegionGeometry {
    fn default() -> Self {
        RegionGeometry { rect_height_px: 15, jaw_window_px: 5 }
    }
}

impl RegionGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.rect_height_px >= 1 && self.jaw_window_px % 2 == 1 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad region geometry {self:?}")))
        }
    }
}

/// Pixels of the grasp rectangle, sorted row-major and deduplicated.
///
/// The rectangle is sampled on a unit-ish grid in grasp coordinates (along
/// the axis from jaw to jaw, across it over the finger thickness) and each
/// sample is rounded to its pixel. Sample offsets are symmetric about the
/// midpoint, so both jaw labellings give the same set.
pub fn region_pixels(g: &GraspCandidate, geom: &RegionGeometry, width: usize, height: usize) -> Result<Vec<Pixel>> {
    let m = g.midpoint();
    let a = g.axis();
    let n = [-a[1], a[0]];
    let len = g.jaw_separation_px;
    let ns = (len.round() as usize).max(1) + 1;
    let step_s = len / (ns - 1) as f64;
    let nt = geom.rect_height_px as usize;
    let mut px = Vec::with_capacity(ns * nt);
    for i in 0..ns {
        let s = (i as f64 - (ns - 1) as f64 / 2.0) * step_s;
        for j in 0..nt {
            let t = j as f64 - (nt - 1) as f64 / 2.0;
            let x = (m[0] + s * a[0] + t * n[0]).round();
            let y = (m[1] + s * a[1] + t * n[1]).round();
            if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
                return Err(Error::OutOfBounds);
            }
            px.push(Pixel::new(x as u32, y as u32));
        }
    }
    px.sort_by_key(|p| p.row_major());
    px.dedup();
    Ok(px)
}

fn jaw_window(center: Pixel, side: u32, width: usize, height: usize) -> Result<(usize, usize, usize, usize)> {
    let r = (side / 2) as i64;
    let (x0, y0) = (center.x as i64 - r, center.y as i64 - r);
    let (x1, y1) = (center.x as i64 + r, center.y as i64 + r);
    if x0 < 0 || y0 < 0 || x1 >= width as i64 || y1 >= height as i64 {
        return Err(Error::OutOfBounds);
    }
    Ok((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
}

fn window_means(depth: &DepthImage, color: &ColorImage, jaw: Pixel, side: u32) -> Result<(f64, [f64; 3])> {
    let (x0, y0, x1, y1) = jaw_window(jaw, side, depth.width(), depth.height())?;
    let n = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
    let mut d = 0.0;
    let mut c = [0.0; 3];
    for y in y0..=y1 {
        for x in x0..=x1 {
            d += depth.get(x, y);
            let rgb = color.get(x, y);
            for k in 0..3 {
                c[k] += rgb[k] as f64;
            }
        }
    }
    Ok((d / n, c.map(|v| v / n)))
}

/// Statistics of the grasp region of `g`.
pub fn region_stats(depth: &DepthImage, color: &ColorImage, g: &GraspCandidate, geom: &RegionGeometry) -> Result<RegionStats> {
    let pixels = region_pixels(g, geom, depth.width(), depth.height())?;
    let (d1, c1) = window_means(depth, color, g.jaw1, geom.jaw_window_px)?;
    let (d2, c2) = window_means(depth, color, g.jaw2, geom.jaw_window_px)?;

    let n = pixels.len() as f64;
    let mut sum_d = 0.0;
    let mut sum_l = 0.0;
    let mut sum_c = [0.0; 3];
    let mut d_min = f64::INFINITY;
    let mut d_max = f64::NEG_INFINITY;
    for p in &pixels {
        let d = depth.at(*p);
        sum_d += d;
        d_min = d_min.min(d);
        d_max = d_max.max(d);
        let rgb = color.get(p.x as usize, p.y as usize);
        for k in 0..3 {
            sum_c[k] += rgb[k] as f64;
        }
        sum_l += color.luma(p.x as usize, p.y as usize);
    }
    let mu_d = sum_d / n;
    let mu_l = sum_l / n;
    let mut var_d = 0.0;
    let mut var_l = 0.0;
    for p in &pixels {
        var_d += (depth.at(*p) - mu_d).powi(2);
        var_l += (color.luma(p.x as usize, p.y as usize) - mu_l).powi(2);
    }
    Ok(RegionStats {
        d0: g.d0,
        d1,
        d2,
        // guards against the last-ulp drift of a constant region's mean
        mu_d: mu_d.clamp(d_min, d_max),
        sigma_d: (var_d / n).sqrt(),
        d_max,
        d_min,
        c1,
        c2,
        mu_c: sum_c.map(|v| v / n),
        sigma_c: (var_l / n).sqrt(),
    })
}

/// Which of the five tests a candidate passed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub jaws_deeper: bool,
    pub depth_range: bool,
    pub depth_spread: bool,
    pub color_spread: bool,
    pub jaw_color_difference: bool,
    pub passed: bool,
}

impl FilterVerdict {
    pub fn conditions(&self) -> [bool; 5] {
        [
            self.jaws_deeper,
            self.depth_range,
            self.depth_spread,
            self.color_spread,
            self.jaw_color_difference,
        ]
    }
}

pub const CONDITION_NAMES: [&str; 5] = [
    "jaws_deeper",
    "depth_range",
    "depth_spread",
    "color_spread",
    "jaw_color_difference",
];

pub fn passes_filter(s: &RegionStats, t: &FilterThresholds) -> FilterVerdict {
    let jaws_deeper = s.d1 > s.d0 + t.eps1 && s.d2 > s.d0 + t.eps1;
    let depth_range = s.d_max - s.d_min > t.eps2;
    let depth_spread = s.mu_d > s.d0 + t.eps3 && s.sigma_d > t.eps4;
    let color_spread = s.sigma_c > t.eps5;
    let diff = s.mean_color_difference();
    let jaw_color_difference = match t.color_difference {
        ColorDifference::Absolute => diff.abs() > t.eps6,
        ColorDifference::Signed => diff > t.eps6,
    };
    FilterVerdict {
        jaws_deeper,
        depth_range,
        depth_spread,
        color_spread,
        jaw_color_difference,
        passed: jaws_deeper && depth_range && depth_spread && color_spread && jaw_color_difference,
    }
}

/// Outcome of filtering one candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub candidate: GraspCandidate,
    /// `None` when the region left the image.
    pub stats: Option<RegionStats>,
    pub verdict: Option<FilterVerdict>,
}

impl CandidateEvaluation {
    pub fn passed(&self) -> bool {
        self.verdict.is_some_and(|v| v.passed)
    }
}

/// Per-candidate results of a filtering pass, in input order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub evaluations: Vec<CandidateEvaluation>,
}

impl FilterReport {
    /// The surviving candidates, in input order.
    pub fn kept(&self) -> Vec<GraspCandidate> {
        self.evaluations
            .iter()
            .filter(|e| e.passed())
            .map(|e| e.candidate.clone())
            .collect()
    }

    pub fn kept_with_stats(&self) -> impl Iterator<Item = (&GraspCandidate, &RegionStats)> {
        self.evaluations
            .iter()
            .filter(|e| e.passed())
            .map(|e| (&e.candidate, e.stats.as_ref().expect("passed implies stats")))
    }

    pub fn out_of_bounds(&self) -> usize {
        self.evaluations.iter().filter(|e| e.stats.is_none()).count()
    }

    /// How many evaluated candidates failed each condition.
    pub fn violation_counts(&self) -> [usize; 5] {
        let mut counts = [0; 5];
        for v in self.evaluations.iter().filter_map(|e| e.verdict) {
            for (c, ok) in counts.iter_mut().zip(v.conditions()) {
                *c += usize::from(!ok);
            }
        }
        counts
    }

    /// Name of the condition failed by the most candidates, if any failed.
    pub fn most_violated(&self) -> Option<&'static str> {
        let counts = self.violation_counts();
        let (i, n) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        (*n > 0).then_some(CONDITION_NAMES[i])
    }
}

/// Runs every candidate through the filter; regions leaving the image are
/// dropped and recorded without statistics.
pub fn filter_grasps(
    candidates: &[GraspCandidate],
    depth: &DepthImage,
    color: &ColorImage,
    geom: &RegionGeometry,
    t: &FilterThresholds,
) -> FilterReport {
    let evaluations = candidates
        .iter()
        .map(|g| match region_stats(depth, color, g, geom) {
            Ok(s) => CandidateEvaluation {
                candidate: g.clone(),
                verdict: Some(passes_filter(&s, t)),
                stats: Some(s),
            },
            Err(_) => CandidateEvaluation { candidate: g.clone(), stats: None, verdict: None },
        })
        .collect();
    FilterReport { evaluations }
}
