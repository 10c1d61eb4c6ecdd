//! Ranking of filtered grasps with a pluggable scorer.
//!
//! The bundled scorer is analytic: a weighted sum of how well the jaw
//! gradients line up with the grasp axis, how far the jaws sit below the
//! grasp center, and how much depth range the region spans.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::RegionStats;
use crate::sampling::GraspCandidate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub w_antipodal: f64,
    pub w_elevation: f64,
    pub w_contrast: f64,
    /// Elevation margin at which the elevation component saturates, meters.
    pub elevation_saturation: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig { w_antipodal: 0.4, w_elevation: 0.4, w_contrast: 0.2, elevation_saturation: 0.03 }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_antipodal, self.w_elevation, self.w_contrast];
        if w.iter().any(|w| !(*w >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("scorer weights must be non-negative and sum to 1, got {w:?}")));
        }
        if !(self.elevation_saturation > 0.0) {
            return Err(Error::InvalidConfig("elevation_saturation must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreComponents {
    pub antipodality: f64,
    pub elevation: f64,
    pub contrast: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspScore {
    pub candidate: GraspCandidate,
    pub score: f64,
    pub components: ScoreComponents,
}

/// Anything that can put a number on a candidate.
pub trait GraspScorer {
    fn score(&self, g: &GraspCandidate, s: &RegionStats) -> GraspScore;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnalyticScorer {
    pub config: ScorerConfig,
}

impl AnalyticScorer {
    pub fn new(config: ScorerConfig) -> Self {
        AnalyticScorer { config }
    }
}

impl GraspScorer for AnalyticScorer {
    fn score(&self, g: &GraspCandidate, s: &RegionStats) -> GraspScore {
        score_grasp(g, s, &self.config)
    }
}

pub fn score_grasp(g: &GraspCandidate, s: &RegionStats, cfg: &ScorerConfig) -> GraspScore {
    let axis = g.axis();
    let dot = |n: [f64; 2]| n[0] * axis[0] + n[1] * axis[1];
    // jaw gradients point outward: jaw1 against the axis, jaw2 along it
    let antipodality = ((-dot(g.jaw1_normal) + dot(g.jaw2_normal)) / 2.0).clamp(0.0, 1.0);
    let elevation = ((s.d1.min(s.d2) - s.d0) / cfg.elevation_saturation).clamp(0.0, 1.0);
    let range = (s.d_max - s.d_min).max(0.0);
    let contrast = range / (range + 0.05);
    let components = ScoreComponents { antipodality, elevation, contrast };
    GraspScore { candidate: g.clone(), score: weighted(&components, cfg), components }
}

fn weighted(c: &ScoreComponents, cfg: &ScorerConfig) -> f64 {
    cfg.w_antipodal * c.antipodality + cfg.w_elevation * c.elevation + cfg.w_contrast * c.contrast
}

/// Total order used for ranking: higher score first, then smaller row,
/// column and axis angle.
pub fn rank_order(a: &GraspScore, b: &GraspScore) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.candidate.center.row_major().cmp(&b.candidate.center.row_major()))
        .then(a.candidate.axis_angle.total_cmp(&b.candidate.axis_angle))
}

/// Scores every candidate and sorts best first.
pub fn rank<'a>(
    scorer: &dyn GraspScorer,
    candidates: impl IntoIterator<Item = (&'a GraspCandidate, &'a RegionStats)>,
) -> Vec<GraspScore> {
    let mut scores: Vec<GraspScore> = candidates.into_iter().map(|(g, s)| scorer.score(g, s)).collect();
    scores.sort_by(rank_order);
    scores
}

pub fn select_best(scores: &[GraspScore]) -> Result<GraspScore> {
    scores.iter().min_by(|a, b| rank_order(a, b)).cloned().ok_or(Error::NoGrasp)
}
