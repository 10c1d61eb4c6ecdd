//! Grasp and suction planning for overlapping parcels seen by a top-down
//! RGB-D camera.
//!
//! Antipodal jaw pairs are sampled from depth edges ([`sampling`]), screened
//! by depth/color statistics of the swept region ([`filter`]) and ranked
//! ([`ranking`]); [`plan::plan_grasps`] chains the three. Envelopes get a
//! plane-fit suction point instead ([`suction`]). [`synth`] renders scenes
//! with ground truth and [`pipeline`] runs the whole pick, barcode check and
//! place loop on them.
//!
//! ```
//! use parcelpick::plan::{plan_grasps, GraspPlanConfig};
//! use parcelpick::ranking::AnalyticScorer;
//! use parcelpick::synth::{random_scene, render_scene, SceneSpec};
//!
//! let spec = SceneSpec::new(random_scene(1, 0, 2).unwrap());
//! let scene = render_scene(&spec).unwrap();
//! let plan = plan_grasps(&scene.color, &scene.depth, &spec.intrinsics, None, &GraspPlanConfig::default(), &AnalyticScorer::default()).unwrap();
//! println!("{} of {} candidates kept", plan.filter.kept().len(), plan.filter.evaluations.len());
//! ```

// `!(x > 0.0)` is how validation rejects NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod error;
pub mod eval;
pub mod filter;
pub mod imaging;
pub mod mask;
pub mod overlay;
pub mod pipeline;
pub mod plan;
pub mod ranking;
pub mod sampling;
pub mod suction;
pub mod synth;

pub use error::{Error, Result};
