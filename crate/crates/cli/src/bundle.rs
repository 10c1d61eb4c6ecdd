//! Scene bundles on disk: color.png, depth.png, scene.json, truth.json, and
//! a manifest.json when a directory holds several of them.

use std::path::{Path, PathBuf};

use parcelpick::imaging::{load_rgbd, save_color_png, save_depth_png, ColorImage, DepthImage};
use parcelpick::synth::{RenderedScene, SceneSpec, SceneTruth};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::CliError;

pub const COLOR: &str = "color.png";
pub const DEPTH: &str = "depth.png";
pub const SCENE: &str = "scene.json";
pub const TRUTH: &str = "truth.json";
pub const MANIFEST: &str = "manifest.json";

pub struct Bundle {
    pub color: ColorImage,
    pub depth: DepthImage,
    pub spec: Option<SceneSpec>,
    pub truth: Option<SceneTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene: String,
    pub color: String,
    pub depth: String,
    pub truth: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenes: Vec<ManifestEntry>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(parcelpick::Error::Io { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn write_bundle(dir: &Path, spec: &SceneSpec, scene: &RenderedScene) -> Result<(), CliError> {
    ensure_dir(dir)?;
    save_color_png(&scene.color, dir.join(COLOR))?;
    save_depth_png(&scene.depth, dir.join(DEPTH))?;
    write_json(&dir.join(SCENE), spec)?;
    write_json(&dir.join(TRUTH), &scene.truth)
}

pub fn read_bundle(dir: &Path) -> Result<Bundle, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("{} is not a scene directory", dir.display())));
    }
    let (color, depth) = load_rgbd(dir.join(COLOR), dir.join(DEPTH))?;
    let optional = |name: &str| -> Result<Option<PathBuf>, CliError> {
        let p = dir.join(name);
        Ok(p.is_file().then_some(p))
    };
    let spec = optional(SCENE)?.map(|p| read_json(&p)).transpose()?;
    let truth = optional(TRUTH)?.map(|p| read_json(&p)).transpose()?;
    Ok(Bundle { color, depth, spec, truth })
}

/// Bundle directories listed by a manifest, or the directory itself.
pub fn corpus_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let manifest = dir.join(MANIFEST);
    if manifest.is_file() {
        let m: Manifest = read_json(&manifest)?;
        Ok(m.scenes
            .iter()
            .map(|e| dir.join(&e.scene).parent().map(Path::to_path_buf).unwrap_or_else(|| dir.to_path_buf()))
            .collect())
    } else {
        Ok(vec![dir.to_path_buf()])
    }
}
