//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the verdicts always print; the process fails if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Rotation3, Vector3};
use parcelpick::detection::{BaselineDetector, OracleBarcodeReader};
use parcelpick::eval::{axis_crosses, in_corner, lump_mask};
use parcelpick::filter::{filter_grasps, passes_filter, FilterThresholds, RegionGeometry, RegionStats};
use parcelpick::imaging::{CameraIntrinsics, ColorImage, DepthImage, Pixel};
use parcelpick::mask::BBox;
use parcelpick::pipeline::{self, ActionKind, PipelineConfig};
use parcelpick::plan::{plan_grasps, GraspPlanConfig};
use parcelpick::ranking::AnalyticScorer;
use parcelpick::sampling::{sample_antipodal, SamplerConfig};
use parcelpick::suction::{fit_plane, sample_suction, SuctionConfig};
use parcelpick::synth::{random_scene, render_scene, PackageClass, SceneSpec};
use parcelpick::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn ms(d: Duration) -> String {
    format!("{:.1} ms", d.as_secs_f64() * 1e3)
}

// Written from the condition definitions, not from the library code: every
// condition is a list of strict inequalities lhs > rhs.
fn oracle_passes(s: &RegionStats, t: &FilterThresholds) -> [bool; 5] {
    let diff = ((s.c1[0] - s.c2[0]) + (s.c1[1] - s.c2[1]) + (s.c1[2] - s.c2[2])) / 3.0;
    let groups: [Vec<(f64, f64)>; 5] = [
        vec![(s.d1, s.d0 + t.eps1), (s.d2, s.d0 + t.eps1)],
        vec![(s.d_max - s.d_min, t.eps2)],
        vec![(s.mu_d, s.d0 + t.eps3), (s.sigma_d, t.eps4)],
        vec![(s.sigma_c, t.eps5)],
        vec![(diff.abs(), t.eps6)],
    ];
    groups.map(|g| g.iter().all(|&(lhs, rhs)| lhs > rhs))
}

/// Stats drawn near the default thresholds, with some exactly on them.
fn random_stats(rng: &mut ChaCha8Rng) -> RegionStats {
    let t = FilterThresholds::default();
    let d0 = rng.random_range(0.6..1.2);
    // Each condition term: 5% on the threshold, 5% below, 90% above, so
    // about half of the draws pass all seven terms.
    let near = |base: f64, eps: f64, rng: &mut ChaCha8Rng| match rng.random_range(0..20) {
        0 => base + eps,
        1 => base + rng.random_range(-eps..eps),
        _ => base + eps * rng.random_range(1.0..4.0) + f64::EPSILON * base.abs().max(1.0) * 4.0,
    };
    let d1 = near(d0, t.eps1, rng);
    let d2 = near(d0, t.eps1, rng);
    let d_min = d0 - rng.random_range(0.0..0.01);
    let d_max = near(d_min, t.eps2, rng);
    let mu_d = near(d0, t.eps3, rng);
    let sigma_d = near(0.0, t.eps4, rng).abs();
    let sigma_c = near(0.0, t.eps5, rng).abs();
    let c2 = [0, 1, 2].map(|_| rng.random_range(0.0..255.0));
    let shift = near(0.0, t.eps6, rng) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let c1 = c2.map(|c| c + shift);
    let mu_c = [0, 1, 2].map(|i| (c1[i] + c2[i]) / 2.0);
    RegionStats { d0, d1, d2, mu_d, sigma_d, d_max, d_min, c1, c2, mu_c, sigma_c }
}

fn fidelity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = FilterThresholds::default();
    let stats: Vec<RegionStats> = (0..1000).map(|_| random_stats(&mut rng)).collect();
    let start = Instant::now();
    let mut mismatches = 0;
    let mut passed = 0;
    for s in &stats {
        let v = passes_filter(s, &t);
        let o = oracle_passes(s, &t);
        if v.conditions() != o || v.passed != o.iter().all(|c| *c) {
            mismatches += 1;
        }
        passed += v.passed as usize;
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && elapsed < Duration::from_secs(1),
        format!("{mismatches} mismatches over 1000 stats ({passed} pass), {}", ms(elapsed)),
    )
}

fn monotonicity() -> Verdict {
    let spec = SceneSpec::new(random_scene(2, 1, 11).unwrap()).with_noise(0.0015, 11);
    let scene = render_scene(&spec).unwrap();
    let k = CameraIntrinsics::d435_vga();
    let candidates = sample_antipodal(&scene.depth, &k, &SamplerConfig { rng_seed: 11, ..Default::default() });
    let geom = RegionGeometry::default();
    let base = FilterThresholds::default().as_array();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut violations, mut nonempty) = (0, 0);
    for _ in 0..100 {
        let lo: [f64; 6] = base.map(|b| rng.random_range(0.0..2.0 * b));
        let hi: [f64; 6] = std::array::from_fn(|i| if rng.random_bool(0.2) { lo[i] } else { lo[i] + rng.random_range(0.0..base[i]) });
        let loose = filter_grasps(&candidates, &scene.depth, &scene.color, &geom, &FilterThresholds::from_array(lo));
        let strict = filter_grasps(&candidates, &scene.depth, &scene.color, &geom, &FilterThresholds::from_array(hi));
        let strict_kept = strict.evaluations.iter().filter(|e| e.passed()).count();
        nonempty += (strict_kept > 0) as usize;
        violations += strict
            .evaluations
            .iter()
            .zip(&loose.evaluations)
            .filter(|(s, l)| s.passed() && !l.passed())
            .count();
    }
    verdict(
        violations == 0,
        format!("{violations} violations over 100 pairs x {} candidates ({nonempty} pairs keep something)", candidates.len()),
    )
}

fn flat_plane() -> Verdict {
    let k = CameraIntrinsics::d435_vga();
    let depth = DepthImage::constant(640, 480, 0.8);
    let color = ColorImage::filled(640, 480, [120, 110, 100]);
    let plan = plan_grasps(&color, &depth, &k, None, &GraspPlanConfig::default(), &AnalyticScorer::default()).unwrap();
    let rendered = render_scene(&SceneSpec::new(vec![]).noiseless()).unwrap();
    let table = plan_grasps(&rendered.color, &rendered.depth, &k, None, &GraspPlanConfig::default(), &AnalyticScorer::default()).unwrap();
    let candidates = plan.filter.evaluations.len() + table.filter.evaluations.len();
    let kept = plan.filter.kept().len() + table.filter.kept().len();
    verdict(candidates == 0 && kept == 0, format!("{candidates} candidates, {kept} filtered"))
}

struct CornerStats {
    kept: usize,
    in_corner: usize,
    over_lump: usize,
    elapsed: Duration,
    raw_top: usize,
    raw_top_crossing: usize,
}

fn corner_sweep() -> CornerStats {
    let k = CameraIntrinsics::d435_vga();
    let scorer = AnalyticScorer::default();
    let mut s = CornerStats { kept: 0, in_corner: 0, over_lump: 0, elapsed: Duration::ZERO, raw_top: 0, raw_top_crossing: 0 };
    for seed in 0..50u64 {
        let start = Instant::now();
        let spec = SceneSpec::new(random_scene(1, 0, seed).unwrap()).with_noise(0.0015, seed);
        let scene = render_scene(&spec).unwrap();
        let mut cfg = GraspPlanConfig::default();
        cfg.sampler.rng_seed = seed;
        let plan = plan_grasps(&scene.color, &scene.depth, &k, None, &cfg, &scorer).unwrap();
        s.elapsed += start.elapsed();

        let lump = lump_mask(&scene.truth).expect("a bag has a lump");
        for g in plan.filter.kept() {
            s.kept += 1;
            s.in_corner += scene.truth.annotations.iter().any(|a| in_corner(&g, a)) as usize;
            s.over_lump += lump.contains_pixel(g.center) as usize;
        }

        cfg.skip_filter = true;
        let raw = plan_grasps(&scene.color, &scene.depth, &k, None, &cfg, &scorer).unwrap();
        for r in raw.ranked.iter().take(10) {
            s.raw_top += 1;
            s.raw_top_crossing += axis_crosses(&r.candidate, &lump) as usize;
        }
    }
    s
}

fn corner(s: &CornerStats) -> Verdict {
    let frac = |n: usize| if s.kept == 0 { 0.0 } else { 100.0 * n as f64 / s.kept as f64 };
    let (corner, lump) = (frac(s.in_corner), frac(s.over_lump));
    verdict(
        s.kept > 0 && corner >= 80.0 && s.over_lump == 0 && s.elapsed < Duration::from_secs(30),
        format!("{} filtered; {corner:.1}% in corners, {lump:.1}% over lump, {}", s.kept, ms(s.elapsed)),
    )
}

fn raw_crossing(s: &CornerStats) -> Verdict {
    let pct = 100.0 * s.raw_top_crossing as f64 / s.raw_top.max(1) as f64;
    verdict(s.raw_top_crossing > 0, format!("{}/{} unfiltered top-10 grasps cross the lump ({pct:.1}%)", s.raw_top_crossing, s.raw_top))
}

fn protocol() -> Verdict {
    let log_grammar = Regex::new(r"^(D[GS]BR?L)*D$").unwrap();
    let per_object = Regex::new(r"^[GS]BR?L$").unwrap();
    let scorer = AnalyticScorer::default();
    let detector = BaselineDetector::default();
    let (mut bad_logs, mut bad_reverse, mut picks, mut bad_picks) = (0, 0, 0, 0);
    for s in 0..20u64 {
        let seed = 1000 + s;
        let spec = SceneSpec::new(random_scene(1 + (s % 2) as usize, 1 + ((s / 2) % 2) as usize, seed).unwrap()).with_noise(0.0015, seed);
        let mut config = PipelineConfig { noise_seed: seed, failure_seed: seed, ..Default::default() };
        config.grasp.sampler.rng_seed = seed;
        config.suction.rng_seed = seed;
        let report = pipeline::run(spec.clone(), config, &detector, &OracleBarcodeReader, &scorer).unwrap();

        let codes = pipeline::action_codes(&report.actions);
        let mut ok = log_grammar.is_match(&codes) && report.all_placed;
        for o in &spec.objects {
            let mine: Vec<_> = report.actions.iter().filter(|a| a.target == Some(o.id)).collect();
            ok &= per_object.is_match(&mine.iter().map(|a| a.kind.code()).collect::<String>());
            let reverses = mine.iter().filter(|a| a.kind == ActionKind::Reverse).count();
            bad_reverse += (reverses != if o.barcode_up { 0 } else { 1 }) as usize;
            for a in mine.iter().filter(|a| matches!(a.kind, ActionKind::PickGrasp | ActionKind::PickSuction)) {
                picks += 1;
                let matched = match a.kind {
                    ActionKind::PickGrasp => o.class == PackageClass::Bag,
                    _ => o.class == PackageClass::Envelope,
                };
                bad_picks += (!matched) as usize;
            }
        }
        if !ok {
            eprintln!("    scene {seed}: {codes}");
            bad_logs += 1;
        }
    }
    let pct = if picks == 0 { 0.0 } else { 100.0 * (picks - bad_picks) as f64 / picks as f64 };
    verdict(
        bad_logs == 0 && bad_reverse == 0 && bad_picks == 0 && picks > 0,
        format!("{bad_logs}/20 logs off protocol, {bad_reverse} objects with wrong reversal count, {pct:.0}% of {picks} picks match class"),
    )
}

fn geometry() -> Verdict {
    let k = CameraIntrinsics::d435_vga();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_px: f64 = 0.0;
    for _ in 0..1000 {
        let (u, v) = (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let d = rng.random_range(0.2..3.0);
        let (pu, pv) = k.project(k.deproject(u, v, d).unwrap()).unwrap();
        worst_px = worst_px.max((pu - u).hypot(pv - v));
    }

    let mut worst_rad: f64 = 0.0;
    for _ in 0..100 {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
        let tilt = rng.random_range(0.0..1.2);
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), tilt);
        let truth = rot * Vector3::new(0.0, 0.0, -1.0);
        let (e1, e2) = (rot * Vector3::x(), rot * Vector3::y());
        let origin = Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(0.5..1.5));
        let pts: Vec<Vector3<f64>> =
            (0..200).map(|_| origin + e1 * rng.random_range(-0.05..0.05) + e2 * rng.random_range(-0.05..0.05)).collect();
        let (_, n, _) = fit_plane(&pts).unwrap();
        worst_rad = worst_rad.max(n.dot(&truth).clamp(-1.0, 1.0).acos());
    }

    // A plane through (0, 0, 1) tilted 10 degrees about the image y axis.
    let slope = 10f64.to_radians().tan();
    let tilted = DepthImage::from_fn(640, 480, |x, _| {
        let ray = (x as f64 - k.cx) / k.fx;
        1.0 / (1.0 - slope * ray)
    });
    let bbox = BBox { min: Pixel::new(220, 140), max: Pixel::new(420, 340) };
    let strict = SuctionConfig { max_tilt: 5f64.to_radians(), ..Default::default() };
    let rejected = matches!(sample_suction(&tilted, &k, &bbox, &strict), Err(Error::NoSuction));
    let loose = SuctionConfig { max_tilt: 15f64.to_radians(), ..Default::default() };
    let accepted_tilt = sample_suction(&tilted, &k, &bbox, &loose).map(|s| s.tilt.to_degrees()).ok();

    verdict(
        worst_px < 1e-6 && worst_rad < 1e-6 && rejected && accepted_tilt.is_some(),
        format!(
            "round trip {worst_px:.2e} px, plane normal {worst_rad:.2e} rad, 10deg plane {} at 5deg (tilt {:.3} deg at 15deg)",
            if rejected { "rejected" } else { "accepted" },
            accepted_tilt.unwrap_or(f64::NAN)
        ),
    )
}

fn cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_parcelpick"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut ran = true;
    for d in &dirs {
        let scene = d.path().join("scene");
        let scene = scene.to_str().unwrap();
        let run = d.path().join("run");
        ran &= cli(&["gen-scene", "--seed", "42", "--bags", "2", "--envelopes", "1", "-o", scene]);
        ran &= cli(&["plan-grasp", "--seed", "42", "--scene", scene]);
        ran &= cli(&["run-pipeline", "--seed", "42", "--scene", scene, "--no-frames", "-o", run.to_str().unwrap()]);
    }
    let files = ["scene/scene.json", "scene/truth.json", "scene/plans.json", "run/report.json"];
    let read = |root: &Path, f: &str| std::fs::read(root.join(f)).unwrap_or_default();
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| {
            let a = read(dirs[0].path(), f);
            a.is_empty() || a != read(dirs[1].path(), f)
        })
        .collect();
    verdict(
        ran && differing.is_empty(),
        if differing.is_empty() { format!("{} JSON outputs byte-identical across two runs", files.len()) } else { format!("differ or missing: {differing:?}") },
    )
}

fn main() {
    let start = Instant::now();
    let sweep = corner_sweep();
    let criteria: Vec<(&str, Verdict)> = vec![
        ("filter fidelity", fidelity()),
        ("threshold monotonicity", monotonicity()),
        ("flat plane null", flat_plane()),
        ("corner grasps", corner(&sweep)),
        ("unfiltered crosses lump", raw_crossing(&sweep)),
        ("pipeline protocol", protocol()),
        ("geometry oracles", geometry()),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (i, (name, v)) in criteria.iter().enumerate() {
        println!("{} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        failed += (!v.pass) as usize;
    }
    println!("acceptance: {} passed, {failed} failed in {:.1} s", criteria.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
