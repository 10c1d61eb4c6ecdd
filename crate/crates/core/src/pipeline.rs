//! The pick-recognize-place loop, simulated against synthetic scenes.
//!
//! Each cycle re-renders what is left on the table, detects packages and
//! works on the topmost one: bags are picked with the gripper at the best
//! filtered grasp, envelopes with suction near their middle. The side camera
//! then checks the barcode; an item showing its blank side is flipped before
//! it is placed.
//!
//! A plan that cannot be made, or a pick that comes up empty, earns one more
//! look at the scene. A second failure aborts that object, which is then
//! cleared from the table by hand so the run can go on.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{BarcodeReader, Detection, Detector, Frame};
use crate::error::{Error, Result};
use crate::imaging::{ColorImage, DepthImage, Pixel};
use crate::mask::Mask;
use crate::plan::{plan_grasps, GraspPlan, GraspPlanConfig};
use crate::ranking::{GraspScore, GraspScorer};
use crate::suction::{sample_suction_in, SuctionCandidate, SuctionConfig};
use crate::synth::{render_scene, ObjectTruth, PackageClass, RenderedScene, SceneObject, SceneSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Detect,
    PickGrasp,
    PickSuction,
    BarcodeCheck,
    Reverse,
    Place,
    Abort,
}

impl ActionKind {
    /// One-letter code used when matching logs against the protocol.
    pub fn code(self) -> char {
        match self {
            ActionKind::Detect => 'D',
            ActionKind::PickGrasp => 'G',
            ActionKind::PickSuction => 'S',
            ActionKind::BarcodeCheck => 'B',
            ActionKind::Reverse => 'R',
            ActionKind::Place => 'L',
            ActionKind::Abort => 'A',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub target: Option<u32>,
    pub tick: u64,
    /// Set on picks that came up empty or took the wrong item.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

/// The log as a string of action codes.
pub fn action_codes(log: &[Action]) -> String {
    log.iter().map(|a| a.kind.code()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndEffectorMode {
    Gripper,
    Suction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PickPlan {
    Grasp(GraspScore),
    Suction(SuctionCandidate),
}

impl PickPlan {
    /// Where the end effector touches the scene.
    pub fn contact(&self) -> Pixel {
        match self {
            PickPlan::Grasp(g) => g.candidate.center,
            PickPlan::Suction(s) => s.pixel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grasp: GraspPlanConfig,
    pub suction: SuctionConfig,
    /// Seed of the depth noise in the first frame; later frames count up.
    pub noise_seed: u64,
    /// Chance that an otherwise sound pick fails anyway.
    pub pick_failure_probability: f64,
    pub failure_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grasp: GraspPlanConfig::default(),
            suction: SuctionConfig::default(),
            noise_seed: 0,
            pick_failure_probability: 0.0,
            failure_seed: 0,
        }
    }
}

/// Snapshot of the work cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    /// What is still on the table.
    pub scene: SceneSpec,
    pub held: Option<ObjectTruth>,
    pub mode: Option<EndEffectorMode>,
    pub log: Vec<Action>,
    pub placed: Vec<u32>,
    pub aborted: Vec<u32>,
    pub tick: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectStatus {
    Placed,
    Aborted,
    Remaining,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectOutcome {
    pub id: u32,
    pub class: PackageClass,
    pub status: ObjectStatus,
    pub reversed: bool,
    pub pick_attempts: u32,
    /// Plan of the pick that lifted the object.
    pub plan: Option<PickPlan>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub actions: Vec<Action>,
    pub outcomes: Vec<ObjectOutcome>,
    pub picks_attempted: usize,
    pub reversals: usize,
    pub all_placed: bool,
}

/// What the robot saw in one perception step, for overlays and debugging.
#[derive(Clone, Debug)]
pub struct CycleFrame {
    pub cycle: u64,
    pub color: ColorImage,
    pub depth: DepthImage,
    pub detections: Vec<Detection>,
    pub selected: Option<usize>,
    pub plan: Option<PickPlan>,
    pub grasp_plan: Option<GraspPlan>,
}

#[derive(Clone, Debug, PartialEq)]
enum Stage {
    Perceive { retry: bool },
    Pick { plan: PickPlan, class: PackageClass, fallback: Option<u32>, retry: bool },
    Check,
    Reverse,
    Place,
    Abort { target: Option<u32> },
    Done,
}

pub struct Pipeline<'a> {
    config: PipelineConfig,
    detector: &'a dyn Detector,
    barcode: &'a dyn BarcodeReader,
    scorer: &'a dyn GraspScorer,
    state: PipelineState,
    initial: Vec<SceneObject>,
    stage: Stage,
    cycle: u64,
    failures: ChaCha8Rng,
    outcomes: Vec<ObjectOutcome>,
    last_frame: Option<CycleFrame>,
    last_render: Option<RenderedScene>,
}

impl fmt::Debug for Pipeline<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline").field("state", &self.state).field("stage", &self.stage).finish_non_exhaustive()
    }
}

impl<'a> Pipeline<'a> {
    pub fn new(
        scene: SceneSpec,
        config: PipelineConfig,
        detector: &'a dyn Detector,
        barcode: &'a dyn BarcodeReader,
        scorer: &'a dyn GraspScorer,
    ) -> Self {
        let outcomes = scene
            .objects
            .iter()
            .map(|o| ObjectOutcome {
                id: o.id,
                class: o.class,
                status: ObjectStatus::Remaining,
                reversed: false,
                pick_attempts: 0,
                plan: None,
            })
            .collect();
        Pipeline {
            failures: ChaCha8Rng::seed_from_u64(config.failure_seed),
            config,
            detector,
            barcode,
            scorer,
            initial: scene.objects.clone(),
            state: PipelineState {
                scene,
                held: None,
                mode: None,
                log: Vec::new(),
                placed: Vec::new(),
                aborted: Vec::new(),
                tick: 0,
            },
            stage: Stage::Perceive { retry: false },
            cycle: 0,
            outcomes,
            last_frame: None,
            last_render: None,
        }
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.stage == Stage::Done
    }

    /// The most recent perception step.
    pub fn last_frame(&self) -> Option<&CycleFrame> {
        self.last_frame.as_ref()
    }

    fn log(&mut self, kind: ActionKind, target: Option<u32>, failed: bool) {
        self.state.log.push(Action { kind, target, tick: self.state.tick, failed });
        self.state.tick += 1;
    }

    fn outcome(&mut self, id: u32) -> Option<&mut ObjectOutcome> {
        self.outcomes.iter_mut().find(|o| o.id == id)
    }

    /// Runs the next protocol stage; returns the action it logged, or `None`
    /// once the table is clear.
    pub fn step(&mut self) -> Result<Option<&Action>> {
        match std::mem::replace(&mut self.stage, Stage::Done) {
            Stage::Done => return Ok(None),
            Stage::Perceive { retry } => self.perceive(retry)?,
            Stage::Abort { target } => {
                self.log(ActionKind::Abort, target, false);
                match target {
                    Some(id) => {
                        self.state.scene.objects.retain(|o| o.id != id);
                        self.state.aborted.push(id);
                        if let Some(o) = self.outcome(id) {
                            o.status = ObjectStatus::Aborted;
                        }
                        self.stage = Stage::Perceive { retry: false };
                    }
                    // nothing identifiable to clear away; stop rather than loop
                    None => self.stage = Stage::Done,
                }
            }
            Stage::Pick { plan, class, fallback, retry } => self.pick(plan, class, fallback, retry)?,
            Stage::Check => {
                let held = self.state.held.as_ref().map(|h| h.id);
                let seen = self.barcode.observe(self.state.held.as_ref())?;
                self.log(ActionKind::BarcodeCheck, held, false);
                self.stage = if seen.present { Stage::Place } else { Stage::Reverse };
            }
            Stage::Reverse => {
                let held = self.state.held.as_mut().ok_or_else(|| Error::Protocol("reverse with empty gripper".into()))?;
                held.barcode_up = !held.barcode_up;
                let id = held.id;
                if let Some(o) = self.outcome(id) {
                    o.reversed = true;
                }
                self.log(ActionKind::Reverse, Some(id), false);
                self.stage = Stage::Place;
            }
            Stage::Place => {
                let held = self.state.held.take().ok_or_else(|| Error::Protocol("place with empty gripper".into()))?;
                self.state.mode = None;
                self.state.placed.push(held.id);
                if let Some(o) = self.outcome(held.id) {
                    o.status = ObjectStatus::Placed;
                }
                self.log(ActionKind::Place, Some(held.id), false);
                self.stage = Stage::Perceive { retry: false };
            }
        }
        Ok(self.state.log.last())
    }

    fn perceive(&mut self, retry: bool) -> Result<()> {
        let spec = SceneSpec { noise_seed: self.config.noise_seed.wrapping_add(self.cycle), ..self.state.scene.clone() };
        let rendered = render_scene(&spec)?;
        let frame = Frame { color: &rendered.color, depth: &rendered.depth, truth: Some(&rendered.truth) };
        let detections = self.detector.detect(&frame)?;
        self.log(ActionKind::Detect, None, false);
        let cycle = self.cycle;
        self.cycle += 1;

        let masks: Vec<Mask> = detections
            .iter()
            .map(|d| d.mask.as_ref().map(|m| m.to_mask()).unwrap_or_else(|| Mask::from_fn(rendered.depth.width(), rendered.depth.height(), |x, y| d.bbox.contains(x as f64, y as f64))))
            .collect();
        // topmost first: smallest median depth
        let selected = masks
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut d: Vec<f64> = m.pixels().map(|p| rendered.depth.at(p)).collect();
                d.sort_by(f64::total_cmp);
                (i, d.get(d.len() / 2).copied().unwrap_or(f64::INFINITY))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i);

        let mut frame_record = CycleFrame {
            cycle,
            color: rendered.color.clone(),
            depth: rendered.depth.clone(),
            detections: detections.clone(),
            selected,
            plan: None,
            grasp_plan: None,
        };
        let Some(sel) = selected else {
            self.last_frame = Some(frame_record);
            self.stage = Stage::Done;
            return Ok(());
        };
        let det = &detections[sel];
        let mask = &masks[sel];
        // the object an operator would clear if this one has to be given up
        let fallback = dominant_object(&rendered.top_ids, mask);

        let k = &spec.intrinsics;
        let plan = match det.class {
            PackageClass::Bag => {
                let cfg = GraspPlanConfig {
                    sampler: crate::sampling::SamplerConfig {
                        rng_seed: self.config.grasp.sampler.rng_seed.wrapping_add(cycle),
                        ..self.config.grasp.sampler.clone()
                    },
                    ..self.config.grasp.clone()
                };
                let gp = plan_grasps(&rendered.color, &rendered.depth, k, Some(mask), &cfg, self.scorer)?;
                let best = gp.selected.clone().map(PickPlan::Grasp);
                frame_record.grasp_plan = Some(gp);
                best
            }
            PackageClass::Envelope => {
                let cfg = SuctionConfig { rng_seed: self.config.suction.rng_seed.wrapping_add(cycle), ..self.config.suction.clone() };
                match sample_suction_in(&rendered.depth, k, &det.bbox, Some(mask), &cfg) {
                    Ok(s) => Some(PickPlan::Suction(s)),
                    Err(Error::NoSuction) => None,
                    Err(e) => return Err(e),
                }
            }
        };
        frame_record.plan = plan.clone();
        self.last_frame = Some(frame_record);
        self.last_render = Some(rendered);
        self.stage = match plan {
            Some(plan) => Stage::Pick { plan, class: det.class, fallback, retry },
            None if retry => Stage::Abort { target: fallback },
            None => Stage::Perceive { retry: true },
        };
        Ok(())
    }

    fn pick(&mut self, plan: PickPlan, class: PackageClass, fallback: Option<u32>, retry: bool) -> Result<()> {
        let rendered = self.last_render.take().ok_or_else(|| Error::Protocol("pick without a perceived scene".into()))?;
        let (kind, mode) = match plan {
            PickPlan::Grasp(_) => (ActionKind::PickGrasp, EndEffectorMode::Gripper),
            PickPlan::Suction(_) => (ActionKind::PickSuction, EndEffectorMode::Suction),
        };
        let target = rendered.top_object(plan.contact());
        let truth = target.and_then(|id| rendered.truth.annotation(id));
        let unlucky = self.config.pick_failure_probability > 0.0 && self.failures.random_bool(self.config.pick_failure_probability.min(1.0));
        let failed = truth.is_none_or(|t| t.class != class) || unlucky;
        if let Some(o) = target.and_then(|id| self.outcome(id)) {
            o.pick_attempts += 1;
        }
        self.log(kind, target, failed);
        if failed {
            self.stage = if retry { Stage::Abort { target: target.or(fallback) } } else { Stage::Perceive { retry: true } };
            return Ok(());
        }
        let held = truth.cloned().expect("checked above");
        self.state.scene.objects.retain(|o| o.id != held.id);
        if let Some(o) = self.outcome(held.id) {
            o.plan = Some(plan);
        }
        self.state.mode = Some(mode);
        self.state.held = Some(held);
        self.stage = Stage::Check;
        Ok(())
    }

    /// Steps until the table is clear.
    /// Most actions a run may take. Every object costs at most two
    /// perceptions, two picks and three more actions; anything beyond that
    /// is a bug.
    pub fn action_budget(&self) -> usize {
        16 * (self.initial.len() + 1)
    }

    /// Fails once the log outgrows [`Pipeline::action_budget`].
    pub fn check_budget(&self) -> Result<()> {
        let budget = self.action_budget();
        if self.state.log.len() > budget {
            return Err(Error::Protocol(format!("no progress after {budget} actions")));
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<RunReport> {
        while !self.is_done() {
            self.check_budget()?;
            self.step()?;
        }
        Ok(self.report())
    }

    pub fn report(&self) -> RunReport {
        let log = &self.state.log;
        RunReport {
            actions: log.clone(),
            outcomes: self.outcomes.clone(),
            picks_attempted: log.iter().filter(|a| matches!(a.kind, ActionKind::PickGrasp | ActionKind::PickSuction)).count(),
            reversals: log.iter().filter(|a| a.kind == ActionKind::Reverse).count(),
            all_placed: self.outcomes.iter().all(|o| o.status == ObjectStatus::Placed),
        }
    }

    /// Objects picked (placed or in hand), still on the table, or aborted.
    pub fn object_counts(&self) -> (usize, usize, usize) {
        (
            self.state.placed.len() + usize::from(self.state.held.is_some()),
            self.state.scene.objects.len(),
            self.state.aborted.len(),
        )
    }
}

/// Object with the most visible pixels inside `mask`; ties go to the smaller id.
fn dominant_object(top_ids: &[Option<u32>], mask: &Mask) -> Option<u32> {
    let mut counts: std::collections::BTreeMap<u32, usize> = std::collections::BTreeMap::new();
    for p in mask.pixels() {
        if let Some(id) = top_ids[p.y as usize * mask.width() + p.x as usize] {
            *counts.entry(id).or_default() += 1;
        }
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(id, _)| id)
}

/// Runs a scene from start to finish.
pub fn run(
    scene: SceneSpec,
    config: PipelineConfig,
    detector: &dyn Detector,
    barcode: &dyn BarcodeReader,
    scorer: &dyn GraspScorer,
) -> Result<RunReport> {
    Pipeline::new(scene, config, detector, barcode, scorer).run_to_end()
}
