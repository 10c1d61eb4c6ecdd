//! Scoring grasp plans against scene ground truth.

use serde::{Deserialize, Serialize};

use crate::mask::Mask;
use crate::plan::GraspPlan;
use crate::sampling::GraspCandidate;
use crate::synth::{ObjectTruth, SceneTruth};

/// Pixels along the jaw-to-jaw segment, one per pixel of length.
pub fn axis_pixels(g: &GraspCandidate) -> Vec<(usize, usize)> {
    let (a, b) = (g.jaw1.as_f64(), g.jaw2.as_f64());
    let n = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            ((a[0] + t * (b[0] - a[0])).round() as usize, (a[1] + t * (b[1] - a[1])).round() as usize)
        })
        .collect()
}

/// Whether the closing fingers would sweep across `mask`.
pub fn axis_crosses(g: &GraspCandidate, mask: &Mask) -> bool {
    axis_pixels(g).into_iter().any(|(x, y)| x < mask.width() && y < mask.height() && mask.get(x, y))
}

pub fn in_corner(g: &GraspCandidate, truth: &ObjectTruth) -> bool {
    let [x, y] = g.center.as_f64();
    truth.corner_regions.iter().any(|c| c.contains(x, y))
}

/// Union of every bag's lump interior.
pub fn lump_mask(truth: &SceneTruth) -> Option<Mask> {
    let mut masks = truth.annotations.iter().filter_map(|a| a.lump_interior.as_ref()).map(|r| r.to_mask());
    let mut acc = masks.next()?;
    for m in masks {
        for p in m.pixels() {
            acc.set(p.x as usize, p.y as usize, true);
        }
    }
    Some(acc)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanMetrics {
    pub candidates: usize,
    pub kept: usize,
    pub kept_in_corner: usize,
    pub kept_over_lump: usize,
    /// How many of the ten best-ranked grasps sweep across a lump.
    pub top10_crossing_lump: usize,
    pub selected_in_corner: Option<bool>,
    pub selected_crosses_lump: Option<bool>,
}

pub fn plan_metrics(plan: &GraspPlan, truth: &SceneTruth) -> PlanMetrics {
    let lump = lump_mask(truth);
    let over_lump = |g: &GraspCandidate| lump.as_ref().is_some_and(|m| m.contains_pixel(g.center));
    let crosses = |g: &GraspCandidate| lump.as_ref().is_some_and(|m| axis_crosses(g, m));
    let corner = |g: &GraspCandidate| truth.annotations.iter().any(|a| in_corner(g, a));
    let kept = plan.filter.kept();
    PlanMetrics {
        candidates: plan.filter.evaluations.len(),
        kept: kept.len(),
        kept_in_corner: kept.iter().filter(|g| corner(g)).count(),
        kept_over_lump: kept.iter().filter(|g| over_lump(g)).count(),
        top10_crossing_lump: plan.ranked.iter().take(10).filter(|s| crosses(&s.candidate)).count(),
        selected_in_corner: plan.selected.as_ref().map(|s| corner(&s.candidate)),
        selected_crosses_lump: plan.selected.as_ref().map(|s| crosses(&s.candidate)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Pixel;

    #[test]
    fn axis_pixels_cover_segment() {
        let g = GraspCandidate {
            center: Pixel::new(5, 5),
            axis_angle: 0.0,
            jaw1: Pixel::new(0, 5),
            jaw2: Pixel::new(10, 5),
            jaw1_normal: [-1.0, 0.0],
            jaw2_normal: [1.0, 0.0],
            d0: 1.0,
            jaw_separation_px: 10.0,
            jaw_separation_m: 0.02,
        };
        assert_eq!(axis_pixels(&g).len(), 11);
        let mut m = Mask::new(20, 20);
        m.set(7, 5, true);
        assert!(axis_crosses(&g, &m));
        m.set(7, 5, false);
        m.set(7, 6, true);
        assert!(!axis_crosses(&g, &m));
    }
}
