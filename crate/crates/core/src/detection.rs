//! Package detection and the barcode check.
//!
//! The baseline detector segments everything that stands out from the table,
//! either by sitting above it or by not looking like it, and calls a blob an
//! envelope when it is thin. A ground-truth detector with the same output
//! lets the pipeline run against perfect perception.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ColorImage, DepthImage, Pixel};
use crate::mask::{BBox, Mask, Rle};
use crate::synth::{ObjectTruth, PackageClass, SceneTruth};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class: PackageClass,
    pub confidence: f64,
    pub mask: Option<Rle>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Height above the table that makes a pixel foreground, meters.
    pub foreground_elevation: f64,
    /// Largest per-channel difference from the table color still counted as
    /// table. Catches packages too thin to clear the depth test.
    pub color_tolerance: f64,
    pub min_area: usize,
    /// Components whose 95th-percentile elevation stays below this are envelopes.
    pub envelope_max_elevation: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { foreground_elevation: 0.005, color_tolerance: 40.0, min_area: 400, envelope_max_elevation: 0.02 }
    }
}

/// What a detector gets to look at. Only oracle detectors read `truth`.
#[derive(Clone, Copy, Debug)]
pub struct Frame<'a> {
    pub color: &'a ColorImage,
    pub depth: &'a DepthImage,
    pub truth: Option<&'a SceneTruth>,
}

pub trait Detector {
    fn detect(&self, frame: &Frame) -> Result<Vec<Detection>>;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BaselineDetector {
    pub config: DetectorConfig,
}

impl Detector for BaselineDetector {
    fn detect(&self, frame: &Frame) -> Result<Vec<Detection>> {
        detect_packages(frame.color, frame.depth, &self.config)
    }
}

/// Emits each visible ground-truth object as a detection.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GroundTruthDetector;

impl Detector for GroundTruthDetector {
    fn detect(&self, frame: &Frame) -> Result<Vec<Detection>> {
        let truth = frame.truth.ok_or_else(|| Error::Protocol("ground-truth detector needs scene truth".into()))?;
        let mut out: Vec<(usize, Detection)> = truth
            .annotations
            .iter()
            .filter_map(|a| {
                let m = a.visible.to_mask();
                let bbox = m.bbox()?;
                Some((m.count(), Detection { bbox, class: a.class, confidence: 1.0, mask: Some(a.visible.clone()) }))
            })
            .collect();
        out.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.bbox.min.row_major().cmp(&b.1.bbox.min.row_major())));
        Ok(out.into_iter().map(|(_, d)| d).collect())
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    Some(*m)
}

/// Depth of the table: median of all valid depths.
pub fn table_depth(depth: &DepthImage) -> Option<f64> {
    median(depth.data().iter().copied().filter(|d| *d > 0.0).collect())
}

/// Foreground mask and the table depth it was measured against.
pub fn foreground_mask(color: &ColorImage, depth: &DepthImage, cfg: &DetectorConfig) -> Result<(Mask, f64)> {
    if color.width() != depth.width() || color.height() != depth.height() {
        return Err(Error::Registration {
            color_width: color.width(),
            color_height: color.height(),
            depth_width: depth.width(),
            depth_height: depth.height(),
        });
    }
    let (w, h) = (depth.width(), depth.height());
    let table = table_depth(depth).ok_or(Error::EmptyDepth)?;
    let raised = Mask::from_fn(w, h, |x, y| depth.is_valid(x, y) && table - depth.get(x, y) > cfg.foreground_elevation);
    let flat: Vec<[u8; 3]> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| !raised.get(x, y)).map(|(x, y)| color.get(x, y)).collect();
    let table_color: [f64; 3] =
        std::array::from_fn(|c| median(flat.iter().map(|p| p[c] as f64).collect()).unwrap_or(0.0));
    let mask = Mask::from_fn(w, h, |x, y| {
        raised.get(x, y) || {
            let p = color.get(x, y);
            (0..3).any(|c| (p[c] as f64 - table_color[c]).abs() > cfg.color_tolerance)
        }
    });
    Ok((mask, table))
}

/// 4-connected components of a mask, each as a list of pixels in scan order.
pub fn connected_components(mask: &Mask) -> Vec<Vec<Pixel>> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !mask.get(start % w, start / w) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            comp.push(Pixel::new(x as u32, y as u32));
            let mut visit = |j: usize| {
                if !seen[j] && mask.get(j % w, j / w) {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        comp.sort_by_key(|p| p.row_major());
        comps.push(comp);
    }
    comps
}

pub fn detect_packages(color: &ColorImage, depth: &DepthImage, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
    let (fg, table) = foreground_mask(color, depth, cfg)?;
    let (w, h) = (depth.width(), depth.height());
    let mut found: Vec<(usize, Detection)> = Vec::new();
    for comp in connected_components(&fg) {
        if comp.len() < cfg.min_area {
            continue;
        }
        let mut elev: Vec<f64> = comp.iter().map(|p| if depth.is_valid(p.x as usize, p.y as usize) { table - depth.at(*p) } else { 0.0 }).collect();
        elev.sort_by(f64::total_cmp);
        let p95 = elev[((elev.len() - 1) as f64 * 0.95).round() as usize];
        let class = if p95 < cfg.envelope_max_elevation { PackageClass::Envelope } else { PackageClass::Bag };
        let mut m = Mask::new(w, h);
        for p in &comp {
            m.set(p.x as usize, p.y as usize, true);
        }
        let bbox = m.bbox().expect("component is non-empty");
        found.push((comp.len(), Detection { bbox, class, confidence: 1.0, mask: Some(m.to_rle()) }));
    }
    found.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.bbox.min.row_major().cmp(&b.1.bbox.min.row_major())));
    Ok(found.into_iter().map(|(_, d)| d).collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BarcodeObservation {
    pub present: bool,
    pub bbox: Option<BBox>,
}

/// The side camera's view of the item in the gripper.
pub trait BarcodeReader {
    fn observe(&self, held: Option<&ObjectTruth>) -> Result<BarcodeObservation>;
}

/// Reads the barcode orientation straight from ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OracleBarcodeReader;

impl BarcodeReader for OracleBarcodeReader {
    fn observe(&self, held: Option<&ObjectTruth>) -> Result<BarcodeObservation> {
        let held = held.ok_or_else(|| Error::Protocol("barcode check with nothing in the gripper".into()))?;
        Ok(BarcodeObservation { present: held.barcode_up, bbox: held.label_bbox.filter(|_| held.barcode_up) })
    }
}
