use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the planners, the scene generator and the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read or write {path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("color is {color_width}x{color_height} but depth is {depth_width}x{depth_height}")]
    Registration {
        color_width: usize,
        color_height: usize,
        depth_width: usize,
        depth_height: usize,
    },

    #[error("depth image has no valid pixel")]
    EmptyDepth,

    #[error("depth must be positive, got {0}")]
    InvalidDepth(f64),

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("grasp region leaves the image")]
    OutOfBounds,

    #[error("no grasp candidate available")]
    NoGrasp,

    #[error("no suction point survived the plane-fit checks")]
    NoSuction,

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("object {0} is outside the camera frustum")]
    Frustum(u32),

    #[error("could not place object after {0} attempts")]
    Placement(usize),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
