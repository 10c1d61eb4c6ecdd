use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn parcelpick(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parcelpick")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn gen(dir: &Path, extra: &[&str]) {
    let mut args = vec!["gen-scene", "--seed", "3", "-o", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = parcelpick(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_usage_exits_2() {
    assert_eq!(code(&parcelpick(&[])), 2);
    assert_eq!(code(&parcelpick(&["plan-grasp"])), 2);
    assert_eq!(code(&parcelpick(&["plan-grasp", "--scene", "/nonexistent/scene"])), 2);
    let t = tempfile::tempdir().unwrap();
    gen(t.path(), &["--bags", "1"]);
    let scene = t.path().to_str().unwrap();
    assert_eq!(code(&parcelpick(&["plan-grasp", "--scene", scene, "--thresholds", "0.1,0.2"])), 2);
    assert_eq!(code(&parcelpick(&["plan-grasp", "--scene", scene, "--thresholds", "-1,0,0,0,0,0"])), 2);
}

#[test]
fn empty_table_has_no_grasp_and_exits_3() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path(), &["--noise", "0"]);
    let o = parcelpick(&["plan-grasp", "--seed", "1", "--scene", t.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["error"], "no_grasp");
    assert_eq!(v["candidates"], 0);
}

#[test]
fn gen_scene_writes_bundle_and_manifest() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path(), &["--bags", "1", "--envelopes", "1", "--count", "3"]);
    let m = json(&t.path().join("manifest.json"));
    let scenes = m["scenes"].as_array().unwrap();
    assert_eq!(scenes.len(), 3);
    for s in scenes {
        for key in ["scene", "color", "depth", "truth"] {
            assert!(t.path().join(s[key].as_str().unwrap()).is_file());
        }
    }
    let truth = json(&t.path().join("scene_001/truth.json"));
    assert_eq!(truth["objects"].as_array().unwrap().len(), 2);
}

#[test]
fn plan_grasp_reports_filter_and_overlay() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path(), &["--bags", "1"]);
    let o = parcelpick(&["plan-grasp", "--seed", "3", "--scene", t.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let plans = json(&t.path().join("plans.json"));
    assert_eq!(plans["filter_applied"], true);
    let kept = plans["kept"].as_u64().unwrap();
    assert!(kept > 0 && kept <= plans["candidates"].as_u64().unwrap());
    assert_eq!(plans["ranked"].as_array().unwrap().len() as u64, kept);
    assert_eq!(plans["metrics"]["kept_over_lump"], 0);
    assert!(t.path().join("overlay.png").is_file());
}

#[test]
fn flags_override_config_file() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path(), &["--bags", "1"]);
    let cfg = t.path().join("cfg.toml");
    // Thresholds nothing can pass.
    std::fs::write(&cfg, "seed = 3\n[thresholds]\neps1 = 5.0\n").unwrap();
    let scene = t.path().to_str().unwrap();
    let from_file = parcelpick(&["plan-grasp", "--config", cfg.to_str().unwrap(), "--scene", scene]);
    assert_eq!(code(&from_file), 3);
    let v: Value = serde_json::from_slice(&from_file.stdout).unwrap();
    assert_eq!(v["most_violated"], "jaws_deeper");
    let overridden = parcelpick(&[
        "plan-grasp", "--config", cfg.to_str().unwrap(), "--scene", scene, "--thresholds", "0.01,0.01,0.01,0.01,30,50",
    ]);
    assert_eq!(code(&overridden), 0);
    assert_eq!(json(&t.path().join("plans.json"))["seed"], 3);
}

#[test]
fn json_config_is_accepted_and_unknown_keys_rejected() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path(), &["--bags", "1"]);
    let good = t.path().join("cfg.json");
    std::fs::write(&good, r#"{"seed": 9, "sampler": {"max_candidates": 50}}"#).unwrap();
    let scene = t.path().to_str().unwrap();
    let o = parcelpick(&["plan-grasp", "--config", good.to_str().unwrap(), "--scene", scene, "--no-filter"]);
    assert_eq!(code(&o), 0);
    let plans = json(&t.path().join("plans.json"));
    assert_eq!(plans["seed"], 9);
    assert!(plans["candidates"].as_u64().unwrap() <= 50);

    let bad = t.path().join("bad.json");
    std::fs::write(&bad, r#"{"sampler": {"max_candidate": 50}}"#).unwrap();
    assert_eq!(code(&parcelpick(&["plan-grasp", "--config", bad.to_str().unwrap(), "--scene", scene])), 2);
}

#[test]
fn detect_and_suction_on_envelope() {
    let t = tempfile::tempdir().unwrap();
    gen(t.path(), &["--envelopes", "1"]);
    let scene = t.path().to_str().unwrap();
    let d = parcelpick(&["detect", "--seed", "1", "--scene", scene]);
    assert_eq!(code(&d), 0);
    let dets = json(&t.path().join("detections.json"));
    assert_eq!(dets["detections"].as_array().unwrap().len(), 1);
    assert_eq!(dets["detections"][0]["class"], "envelope");

    let s = parcelpick(&["plan-suction", "--seed", "1", "--scene", scene]);
    assert_eq!(code(&s), 0);
    let suction = json(&t.path().join("suction.json"));
    assert_eq!(suction["class"], "envelope");
    assert!(suction["suction"]["tilt"].as_f64().unwrap() < 15f64.to_radians());
}

#[test]
fn suction_on_rough_surface_exits_3() {
    let t = tempfile::tempdir().unwrap();
    // 1 cm depth noise is far rougher than the default 2 mm planarity bound.
    gen(t.path(), &["--envelopes", "1", "--noise", "0.01"]);
    let o = parcelpick(&["plan-suction", "--seed", "1", "--scene", t.path().to_str().unwrap(), "--bbox", "200,100,440,380"]);
    assert_eq!(code(&o), 3);
    assert_eq!(serde_json::from_slice::<Value>(&o.stdout).unwrap()["error"], "no_suction");
}

#[test]
fn pipeline_clears_table_and_writes_frames() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("run");
    let o = parcelpick(&["run-pipeline", "--seed", "5", "--bags", "1", "--envelopes", "1", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("report.json"));
    let protocol = report["protocol"].as_str().unwrap();
    assert!(regex::Regex::new(r"^(D[GS]BR?L)*D$").unwrap().is_match(protocol), "{protocol}");
    assert_eq!(report["report"]["all_placed"], true);
    let frames = std::fs::read_dir(out.join("frames")).unwrap().count();
    assert_eq!(frames, protocol.matches('D').count());
}

#[test]
fn pipeline_abort_exits_4() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("run");
    let o = parcelpick(&["run-pipeline", "--seed", "5", "--bags", "1", "--pick-failure", "1", "--no-frames", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    let report = json(&out.join("report.json"));
    assert!(report["protocol"].as_str().unwrap().contains('A'));
    assert!(!out.join("frames").exists());
}

#[test]
fn compare_summarizes_filtered_against_raw() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("compare.json");
    let o = parcelpick(&["compare", "--seed", "1", "--scenes", "3", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = json(&out);
    assert_eq!(v["scenes"].as_array().unwrap().len(), 3);
    assert_eq!(v["summary"]["kept_over_lump_fraction"], 0.0);
}

#[test]
fn missing_seed_is_drawn_and_printed() {
    let t = tempfile::tempdir().unwrap();
    let o = parcelpick(&["gen-scene", "--bags", "1", "-o", t.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let stderr = String::from_utf8_lossy(&o.stderr);
    let seed: u64 = stderr.trim().strip_prefix("seed: ").expect("seed printed").parse().unwrap();
    let again = tempfile::tempdir().unwrap();
    let o = parcelpick(&["gen-scene", "--seed", &seed.to_string(), "--bags", "1", "-o", again.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(t.path().join("scene.json")).unwrap(), std::fs::read(again.path().join("scene.json")).unwrap());
}

#[test]
fn book_config_example_is_valid() {
    let chapter = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../book/src/cli.md")).unwrap();
    let start = chapter.find("```toml\n").expect("toml listing") + "```toml\n".len();
    let listing = &chapter[start..start + chapter[start..].find("```").unwrap()];
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("example.toml");
    std::fs::write(&cfg, listing).unwrap();
    gen(t.path(), &["--bags", "1"]);
    let o = parcelpick(&["plan-grasp", "--config", cfg.to_str().unwrap(), "--scene", t.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&t.path().join("plans.json"))["seed"], 7);
}
