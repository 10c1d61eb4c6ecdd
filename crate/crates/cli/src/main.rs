//! `parcelpick`: generate scenes, plan grasps and suction points, run the
//! pick-recognize-place loop and compare filtered against raw grasps.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad usage, 3 nothing to plan,
//! 4 the pipeline had to abort an object.

// `!(x > 0.0)` is how validation rejects NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bundle;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    /// No plan could be made; the payload is printed as JSON.
    NoPlan(serde_json::Value),
    Aborted(String),
    Runtime(parcelpick::Error),
}

impl From<parcelpick::Error> for CliError {
    fn from(e: parcelpick::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::NoPlan(_) => 3,
            CliError::Aborted(_) => 4,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "parcelpick", version, about = "Grasp and suction planning for overlapped parcels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML or JSON settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw. Drawn from entropy and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Camera intrinsics JSON, overriding the config file and the scene.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Filter thresholds eps1..eps6, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Compare jaw colors with sign instead of absolute value.
    #[arg(long)]
    pub signed_color_difference: bool,
    #[arg(long)]
    pub max_candidates: Option<usize>,
    #[arg(long)]
    pub friction: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render synthetic scenes to color.png, depth.png, scene.json and truth.json.
    GenScene(commands::GenSceneArgs),
    /// Sample, filter and rank grasps for a scene bundle.
    PlanGrasp(commands::PlanGraspArgs),
    /// Pick a suction point on a detected (or given) box.
    PlanSuction(commands::PlanSuctionArgs),
    /// Find packages and classify them.
    Detect(commands::DetectArgs),
    /// Run pick-recognize-place until the table is clear.
    RunPipeline(commands::RunPipelineArgs),
    /// Filtered versus raw grasps over a corpus of scenes.
    Compare(commands::CompareArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::GenScene(a) => commands::gen_scene(a),
        Command::PlanGrasp(a) => commands::plan_grasp(a),
        Command::PlanSuction(a) => commands::plan_suction(a),
        Command::Detect(a) => commands::detect(a),
        Command::RunPipeline(a) => commands::run_pipeline(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::NoPlan(v) => {
                    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
                    eprintln!("no plan");
                }
                CliError::Aborted(m) => eprintln!("aborted: {m}"),
                CliError::Runtime(err) => eprintln!("error: {err}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
