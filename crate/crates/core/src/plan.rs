//! Sample, filter and rank in one call.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{filter_grasps, FilterReport, FilterThresholds, RegionGeometry};
use crate::imaging::{inpaint_invalid, CameraIntrinsics, ColorImage, DepthImage};
use crate::mask::Mask;
use crate::ranking::{rank, GraspScore, GraspScorer};
use crate::sampling::{sample_antipodal, SamplerConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraspPlanConfig {
    pub sampler: SamplerConfig,
    pub geometry: RegionGeometry,
    pub thresholds: FilterThresholds,
    /// Rank raw candidates instead of the filtered set.
    pub skip_filter: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspPlan {
    pub filter: FilterReport,
    /// Best first. Filtered candidates, or every in-bounds one when the
    /// filter is skipped.
    pub ranked: Vec<GraspScore>,
    pub selected: Option<GraspScore>,
    pub most_violated: Option<String>,
}

impl GraspPlan {
    pub fn best(&self) -> Result<&GraspScore> {
        self.selected.as_ref().ok_or(Error::NoGrasp)
    }
}

/// Plans grasps over the whole image, keeping only candidates centered in
/// `region` when one is given.
pub fn plan_grasps(
    color: &ColorImage,
    depth: &DepthImage,
    k: &CameraIntrinsics,
    region: Option<&Mask>,
    cfg: &GraspPlanConfig,
    scorer: &dyn GraspScorer,
) -> Result<GraspPlan> {
    cfg.sampler.validate()?;
    cfg.geometry.validate()?;
    cfg.thresholds.validate()?;
    let filled;
    let depth = if depth.valid_count() < depth.data().len() {
        filled = inpaint_invalid(depth)?;
        &filled
    } else {
        depth
    };
    let mut candidates = sample_antipodal(depth, k, &cfg.sampler);
    if let Some(m) = region {
        candidates.retain(|g| m.contains_pixel(g.center));
    }
    let filter = filter_grasps(&candidates, depth, color, &cfg.geometry, &cfg.thresholds);
    let ranked = if cfg.skip_filter {
        rank(scorer, filter.evaluations.iter().filter_map(|e| e.stats.as_ref().map(|s| (&e.candidate, s))))
    } else {
        rank(scorer, filter.kept_with_stats())
    };
    let most_violated = filter.most_violated().map(str::to_owned);
    Ok(GraspPlan { selected: ranked.first().cloned(), filter, ranked, most_violated })
}
