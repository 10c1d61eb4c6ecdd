use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use parcelpick::detection::{detect_packages, BaselineDetector, Detection, Detector, GroundTruthDetector, OracleBarcodeReader};
use parcelpick::eval::{plan_metrics, PlanMetrics};
use parcelpick::filter::{ColorDifference, FilterThresholds, CONDITION_NAMES};
use parcelpick::imaging::{save_color_png, CameraIntrinsics, Pixel};
use parcelpick::mask::BBox;
use parcelpick::overlay::{render_overlay, Glyph, BOX, FAIL, PASS, SELECTED};
use parcelpick::pipeline::{action_codes, ActionKind, PickPlan, Pipeline, PipelineConfig, RunReport};
use parcelpick::plan::{plan_grasps, GraspPlan, GraspPlanConfig};
use parcelpick::ranking::AnalyticScorer;
use parcelpick::suction::{sample_suction, sample_suction_in, SuctionCandidate};
use parcelpick::synth::{random_scene_in, render_scene, PackageClass, SceneSpec, Workspace};
use serde::Serialize;
use serde_json::json;

use crate::bundle::{corpus_dirs, ensure_dir, read_bundle, write_bundle, write_json, Manifest, ManifestEntry, MANIFEST};
use crate::config::ToolkitConfig;
use crate::{CliError, Common};

/// Settings after merging defaults, the config file and flags.
struct Resolved {
    cfg: ToolkitConfig,
    seed: u64,
}

impl Resolved {
    fn from(common: &Common) -> Result<Self, CliError> {
        let mut cfg = match &common.config {
            Some(p) => ToolkitConfig::load(p)?,
            None => ToolkitConfig::default(),
        };
        if let Some(t) = &common.thresholds {
            let eps: [f64; 6] = t
                .as_slice()
                .try_into()
                .map_err(|_| CliError::Usage(format!("--thresholds needs 6 values, got {}", t.len())))?;
            cfg.thresholds = FilterThresholds { color_difference: cfg.thresholds.color_difference, ..FilterThresholds::from_array(eps) };
        }
        if common.signed_color_difference {
            cfg.thresholds.color_difference = ColorDifference::Signed;
        }
        if let Some(n) = common.max_candidates {
            cfg.sampler.max_candidates = n;
        }
        if let Some(mu) = common.friction {
            cfg.sampler.friction_coefficient = mu;
        }
        if let Some(p) = &common.intrinsics {
            cfg.camera = Some(CameraIntrinsics::from_json_file(p).map_err(|e| CliError::Usage(e.to_string()))?);
        }
        let seed = common.seed.or(cfg.seed).unwrap_or_else(|| {
            let s = rand::random::<u64>();
            eprintln!("seed: {s}");
            s
        });
        cfg.sampler.rng_seed = seed;
        cfg.suction.rng_seed = seed;
        cfg.validate()?;
        Ok(Resolved { cfg, seed })
    }

    fn intrinsics(&self, spec: Option<&SceneSpec>) -> CameraIntrinsics {
        self.cfg.camera.or(spec.map(|s| s.intrinsics)).unwrap_or_else(CameraIntrinsics::d435_vga)
    }

    fn grasp_config(&self, skip_filter: bool) -> GraspPlanConfig {
        GraspPlanConfig {
            sampler: self.cfg.sampler.clone(),
            geometry: self.cfg.region.clone(),
            thresholds: self.cfg.thresholds.clone(),
            skip_filter,
        }
    }

    fn scorer(&self) -> AnalyticScorer {
        AnalyticScorer::new(self.cfg.scorer.clone())
    }

    fn random_spec(&self, bags: usize, envelopes: usize, scene_seed: u64, flat_corners: bool) -> Result<SceneSpec, CliError> {
        let k = self.intrinsics(None);
        let ws = Workspace { intrinsics: k, table_depth: self.cfg.scene.table_depth, ..Workspace::default() };
        let mut objects = random_scene_in(&ws, bags, envelopes, scene_seed)?;
        if flat_corners {
            for o in &mut objects {
                o.ear_height = 0.0;
            }
        }
        Ok(SceneSpec {
            objects,
            intrinsics: k,
            table_depth: self.cfg.scene.table_depth,
            table_color: self.cfg.scene.table_color,
            noise_sigma: self.cfg.scene.noise_sigma,
            noise_seed: scene_seed,
        })
    }
}

#[derive(Args, Debug)]
pub struct GenSceneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    bags: usize,
    #[arg(long, default_value_t = 0)]
    envelopes: usize,
    /// Depth noise standard deviation, meters.
    #[arg(long)]
    noise: Option<f64>,
    /// Render bags with flat corner flaps instead of curled ones.
    #[arg(long)]
    flat_corners: bool,
    /// Number of scenes; more than one writes scene_NNN directories and a manifest.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(short, long)]
    out: PathBuf,
}

pub fn gen_scene(a: GenSceneArgs) -> Result<(), CliError> {
    let mut r = Resolved::from(&a.common)?;
    if let Some(n) = a.noise {
        if !(n >= 0.0) {
            return Err(CliError::Usage("--noise must be non-negative".into()));
        }
        r.cfg.scene.noise_sigma = n;
    }
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let mut manifest = Manifest::default();
    for i in 0..a.count {
        let scene_seed = r.seed.wrapping_add(i as u64);
        let spec = r.random_spec(a.bags, a.envelopes, scene_seed, a.flat_corners)?;
        let rendered = render_scene(&spec)?;
        let (dir, prefix) = if a.count == 1 { (a.out.clone(), String::new()) } else {
            let name = format!("scene_{i:03}");
            (a.out.join(&name), format!("{name}/"))
        };
        write_bundle(&dir, &spec, &rendered)?;
        manifest.scenes.push(ManifestEntry {
            scene: format!("{prefix}scene.json"),
            color: format!("{prefix}color.png"),
            depth: format!("{prefix}depth.png"),
            truth: format!("{prefix}truth.json"),
        });
    }
    if a.count > 1 {
        write_json(&a.out.join(MANIFEST), &manifest)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct PlanGraspArgs {
    #[command(flatten)]
    common: Common,
    /// Scene bundle directory.
    #[arg(long)]
    scene: PathBuf,
    /// Rank raw candidates without the region filter.
    #[arg(long)]
    no_filter: bool,
    /// Output directory; defaults to the scene directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn violation_map(plan: &GraspPlan) -> BTreeMap<&'static str, usize> {
    CONDITION_NAMES.iter().copied().zip(plan.filter.violation_counts()).collect()
}

#[derive(Serialize)]
struct GraspPlanOutput<'a> {
    seed: u64,
    filter_applied: bool,
    candidates: usize,
    kept: usize,
    out_of_bounds: usize,
    violation_counts: BTreeMap<&'static str, usize>,
    most_violated: Option<&'a str>,
    selected: Option<&'a parcelpick::ranking::GraspScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<PlanMetrics>,
    ranked: &'a [parcelpick::ranking::GraspScore],
    evaluations: &'a [parcelpick::filter::CandidateEvaluation],
}

pub fn plan_grasp(a: PlanGraspArgs) -> Result<(), CliError> {
    let r = Resolved::from(&a.common)?;
    let b = read_bundle(&a.scene)?;
    let k = r.intrinsics(b.spec.as_ref());
    let plan = plan_grasps(&b.color, &b.depth, &k, None, &r.grasp_config(a.no_filter), &r.scorer())?;
    let out = a.out.unwrap_or_else(|| a.scene.clone());
    ensure_dir(&out)?;

    let output = GraspPlanOutput {
        seed: r.seed,
        filter_applied: !a.no_filter,
        candidates: plan.filter.evaluations.len(),
        kept: plan.filter.kept().len(),
        out_of_bounds: plan.filter.out_of_bounds(),
        violation_counts: violation_map(&plan),
        most_violated: plan.most_violated.as_deref(),
        selected: plan.selected.as_ref(),
        metrics: b.truth.as_ref().map(|t| plan_metrics(&plan, t)),
        ranked: &plan.ranked,
        evaluations: &plan.filter.evaluations,
    };
    write_json(&out.join("plans.json"), &output)?;

    let mut glyphs: Vec<Glyph> = if a.no_filter {
        plan.ranked.iter().take(10).map(|s| Glyph::Grasp { candidate: s.candidate.clone(), color: FAIL }).collect()
    } else {
        plan.filter
            .evaluations
            .iter()
            .map(|e| Glyph::Grasp { candidate: e.candidate.clone(), color: if e.passed() { PASS } else { FAIL } })
            .collect()
    };
    if let Some(s) = &plan.selected {
        glyphs.push(Glyph::Grasp { candidate: s.candidate.clone(), color: SELECTED });
    }
    save_color_png(&render_overlay(&b.color, &glyphs, &k), out.join("overlay.png"))?;

    match &plan.selected {
        Some(s) => {
            println!("{}", serde_json::to_string(&s.candidate).expect("serializable"));
            Ok(())
        }
        None => Err(CliError::NoPlan(json!({
            "error": "no_grasp",
            "candidates": output.candidates,
            "kept": output.kept,
            "most_violated": plan.most_violated,
            "violation_counts": output.violation_counts,
        }))),
    }
}

#[derive(Args, Debug)]
pub struct PlanSuctionArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scene: PathBuf,
    /// Box to plan in, as x0,y0,x1,y1 (inclusive). Detected when omitted.
    #[arg(long, value_delimiter = ',')]
    bbox: Option<Vec<u32>>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SuctionOutput<'a> {
    seed: u64,
    bbox: BBox,
    class: Option<PackageClass>,
    suction: &'a SuctionCandidate,
}

pub fn plan_suction(a: PlanSuctionArgs) -> Result<(), CliError> {
    let r = Resolved::from(&a.common)?;
    let b = read_bundle(&a.scene)?;
    let k = r.intrinsics(b.spec.as_ref());
    let (bbox, class, result) = match &a.bbox {
        Some(v) => {
            let [x0, y0, x1, y1]: [u32; 4] = v.as_slice().try_into().map_err(|_| CliError::Usage("--bbox needs x0,y0,x1,y1".into()))?;
            if x0 > x1 || y0 > y1 {
                return Err(CliError::Usage("--bbox corners are out of order".into()));
            }
            let bbox = BBox { min: Pixel::new(x0, y0), max: Pixel::new(x1, y1) };
            (bbox, None, sample_suction(&b.depth, &k, &bbox, &r.cfg.suction))
        }
        None => {
            let dets = detect_packages(&b.color, &b.depth, &r.cfg.detector)?;
            let Some(d) = dets.iter().find(|d| d.class == PackageClass::Envelope).or(dets.first()) else {
                return Err(CliError::NoPlan(json!({ "error": "no_detection" })));
            };
            let mask = d.mask.as_ref().map(|m| m.to_mask());
            (d.bbox, Some(d.class), sample_suction_in(&b.depth, &k, &d.bbox, mask.as_ref(), &r.cfg.suction))
        }
    };
    let s = match result {
        Ok(s) => s,
        Err(parcelpick::Error::NoSuction) => return Err(CliError::NoPlan(json!({ "error": "no_suction", "bbox": bbox }))),
        Err(parcelpick::Error::OutOfBounds) => return Err(CliError::Usage("--bbox lies outside the image".into())),
        Err(e) => return Err(e.into()),
    };
    let out = a.out.unwrap_or_else(|| a.scene.clone());
    ensure_dir(&out)?;
    write_json(&out.join("suction.json"), &SuctionOutput { seed: r.seed, bbox, class, suction: &s })?;
    let glyphs = [Glyph::Box { bbox, color: BOX }, Glyph::Suction { candidate: s.clone(), color: SELECTED }];
    save_color_png(&render_overlay(&b.color, &glyphs, &k), out.join("suction_overlay.png"))?;
    println!("{}", serde_json::to_string(&s).expect("serializable"));
    Ok(())
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scene: PathBuf,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

pub fn detect(a: DetectArgs) -> Result<(), CliError> {
    let r = Resolved::from(&a.common)?;
    let b = read_bundle(&a.scene)?;
    let k = r.intrinsics(b.spec.as_ref());
    let dets = detect_packages(&b.color, &b.depth, &r.cfg.detector)?;
    let out = a.out.unwrap_or_else(|| a.scene.clone());
    ensure_dir(&out)?;
    write_json(&out.join("detections.json"), &json!({ "detections": dets }))?;
    let glyphs: Vec<Glyph> = dets.iter().map(Glyph::detection).collect();
    save_color_png(&render_overlay(&b.color, &glyphs, &k), out.join("detections.png"))?;
    for d in &dets {
        let class = serde_json::to_string(&d.class).expect("serializable");
        println!("{} {},{},{},{}", class.trim_matches('"'), d.bbox.min.x, d.bbox.min.y, d.bbox.max.x, d.bbox.max.y);
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct RunPipelineArgs {
    #[command(flatten)]
    common: Common,
    /// Scene bundle to start from; otherwise a random scene is generated.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    bags: usize,
    #[arg(long, default_value_t = 0)]
    envelopes: usize,
    /// Use ground-truth masks instead of the baseline detector.
    #[arg(long)]
    ground_truth_detector: bool,
    /// Chance that a sound pick fails anyway.
    #[arg(long)]
    pick_failure: Option<f64>,
    /// Skip writing per-cycle overlay frames.
    #[arg(long)]
    no_frames: bool,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct PipelineOutput<'a> {
    seed: u64,
    protocol: String,
    report: &'a RunReport,
}

fn frame_glyphs(dets: &[Detection], selected: Option<usize>, plan: Option<&PickPlan>) -> Vec<Glyph> {
    let mut glyphs: Vec<Glyph> = dets
        .iter()
        .enumerate()
        .map(|(i, d)| Glyph::Box { bbox: d.bbox, color: if Some(i) == selected { SELECTED } else { BOX } })
        .collect();
    match plan {
        Some(PickPlan::Grasp(g)) => glyphs.push(Glyph::Grasp { candidate: g.candidate.clone(), color: SELECTED }),
        Some(PickPlan::Suction(s)) => glyphs.push(Glyph::Suction { candidate: s.clone(), color: SELECTED }),
        None => {}
    }
    glyphs
}

pub fn run_pipeline(a: RunPipelineArgs) -> Result<(), CliError> {
    let mut r = Resolved::from(&a.common)?;
    if let Some(p) = a.pick_failure {
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::Usage("--pick-failure must lie in [0, 1]".into()));
        }
        r.cfg.pipeline.pick_failure_probability = p;
    }
    let spec = match &a.scene {
        Some(dir) => read_bundle(dir)?
            .spec
            .ok_or_else(|| CliError::Usage(format!("{} has no scene.json to simulate", dir.display())))?,
        None => r.random_spec(a.bags, a.envelopes, r.seed, false)?,
    };
    let k = spec.intrinsics;
    let config = PipelineConfig {
        grasp: r.grasp_config(false),
        suction: r.cfg.suction.clone(),
        noise_seed: r.seed,
        pick_failure_probability: r.cfg.pipeline.pick_failure_probability,
        failure_seed: r.seed,
    };
    let baseline = BaselineDetector { config: r.cfg.detector.clone() };
    let detector: &dyn Detector = if a.ground_truth_detector { &GroundTruthDetector } else { &baseline };
    let scorer = r.scorer();
    let mut pipeline = Pipeline::new(spec, config, detector, &OracleBarcodeReader, &scorer);

    ensure_dir(&a.out)?;
    let frames = a.out.join("frames");
    if !a.no_frames {
        ensure_dir(&frames)?;
    }
    while !pipeline.is_done() {
        pipeline.check_budget()?;
        let detected = pipeline.step()?.is_some_and(|act| act.kind == ActionKind::Detect);
        if detected && !a.no_frames {
            if let Some(f) = pipeline.last_frame() {
                let img = render_overlay(&f.color, &frame_glyphs(&f.detections, f.selected, f.plan.as_ref()), &k);
                save_color_png(&img, frames.join(format!("frame_{:03}.png", f.cycle)))?;
            }
        }
    }
    let report = pipeline.report();
    let protocol = action_codes(&report.actions);
    write_json(&a.out.join("report.json"), &PipelineOutput { seed: r.seed, protocol: protocol.clone(), report: &report })?;
    let placed = report.outcomes.iter().filter(|o| o.status == parcelpick::pipeline::ObjectStatus::Placed).count();
    println!("{protocol} placed {placed}/{}", report.outcomes.len());
    if report.all_placed {
        Ok(())
    } else {
        Err(CliError::Aborted(format!("{} of {} objects not placed", report.outcomes.len() - placed, report.outcomes.len())))
    }
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Directory with a manifest.json (or a single bundle). Generated when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Scenes to generate when no corpus is given.
    #[arg(long, default_value_t = 50)]
    scenes: usize,
    #[arg(long, default_value_t = 1)]
    bags: usize,
    #[arg(long, default_value_t = 0)]
    envelopes: usize,
    /// Where to write compare.json.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SceneComparison {
    scene: String,
    filtered: PlanMetrics,
    raw: PlanMetrics,
}

#[derive(Serialize)]
struct CompareSummary {
    scenes: usize,
    kept: usize,
    kept_in_corner_fraction: f64,
    kept_over_lump_fraction: f64,
    /// Scenes where some top-10 raw grasp sweeps across a lump.
    raw_top10_lump_scene_fraction: f64,
    filtered_top10_lump_scene_fraction: f64,
    filtered_selected_in_corner: usize,
    raw_selected_crosses_lump: usize,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

pub fn compare(a: CompareArgs) -> Result<(), CliError> {
    let r = Resolved::from(&a.common)?;
    let mut scenes: Vec<(String, parcelpick::imaging::ColorImage, parcelpick::imaging::DepthImage, CameraIntrinsics, parcelpick::synth::SceneTruth)> = Vec::new();
    match &a.corpus {
        Some(dir) => {
            for d in corpus_dirs(dir)? {
                let b = read_bundle(&d)?;
                let truth = b.truth.ok_or_else(|| CliError::Usage(format!("{} has no truth.json", d.display())))?;
                let k = r.intrinsics(b.spec.as_ref());
                let name = d.strip_prefix(dir).unwrap_or(&d).display().to_string();
                scenes.push((name, b.color, b.depth, k, truth));
            }
        }
        None => {
            for i in 0..a.scenes {
                let s = r.seed.wrapping_add(i as u64);
                let spec = r.random_spec(a.bags, a.envelopes, s, false)?;
                let rendered = render_scene(&spec)?;
                scenes.push((format!("seed_{s}"), rendered.color, rendered.depth, spec.intrinsics, rendered.truth));
            }
        }
    }
    let scorer = r.scorer();
    let mut rows = Vec::with_capacity(scenes.len());
    for (i, (name, color, depth, k, truth)) in scenes.iter().enumerate() {
        let mut cfg = r.grasp_config(false);
        cfg.sampler.rng_seed = r.seed.wrapping_add(i as u64);
        let filtered = plan_grasps(color, depth, k, None, &cfg, &scorer)?;
        cfg.skip_filter = true;
        let raw = plan_grasps(color, depth, k, None, &cfg, &scorer)?;
        rows.push(SceneComparison { scene: name.clone(), filtered: plan_metrics(&filtered, truth), raw: plan_metrics(&raw, truth) });
    }
    let kept: usize = rows.iter().map(|r| r.filtered.kept).sum();
    let summary = CompareSummary {
        scenes: rows.len(),
        kept,
        kept_in_corner_fraction: ratio(rows.iter().map(|r| r.filtered.kept_in_corner).sum(), kept),
        kept_over_lump_fraction: ratio(rows.iter().map(|r| r.filtered.kept_over_lump).sum(), kept),
        raw_top10_lump_scene_fraction: ratio(rows.iter().filter(|r| r.raw.top10_crossing_lump > 0).count(), rows.len()),
        filtered_top10_lump_scene_fraction: ratio(rows.iter().filter(|r| r.filtered.top10_crossing_lump > 0).count(), rows.len()),
        filtered_selected_in_corner: rows.iter().filter(|r| r.filtered.selected_in_corner == Some(true)).count(),
        raw_selected_crosses_lump: rows.iter().filter(|r| r.raw.selected_crosses_lump == Some(true)).count(),
    };
    if let Some(out) = &a.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            ensure_dir(parent)?;
        }
        write_json(out, &json!({ "seed": r.seed, "summary": summary, "scenes": rows }))?;
    }
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    Ok(())
}
