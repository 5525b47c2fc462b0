//! `fluorar`: batch front end for the simulator, the experiment harness, the
//! image-link server and offline triangulation.
//!
//! Exit codes: 0 success, 2 configuration error, 3 experiment or I/O
//! failure, 4 near-parallel triangulation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "fluorar",
    version,
    about = "Simulated on-the-fly AR guidance for fluoroscopy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render both views and write images, cameras, lock records and exact annotations
    Simulate(SimulateArgs),
    /// Run one experiment and write trials.csv, summary.txt and summary.json
    Experiment(ExperimentArgs),
    /// Serve the simulated image link over TCP
    Serve(ServeArgs),
    /// Turn an annotation file into guidance geometry
    Triangulate(TriangulateArgs),
    /// Run every experiment and print the combined report
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Calib,
    Tracking,
    Landmarks,
    Guidance,
    #[value(name = "demo-twoview")]
    DemoTwoview,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 5] = [
        ExperimentName::Calib,
        ExperimentName::Tracking,
        ExperimentName::Landmarks,
        ExperimentName::Guidance,
        ExperimentName::DemoTwoview,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Calib => "calib",
            ExperimentName::Tracking => "tracking",
            ExperimentName::Landmarks => "landmarks",
            ExperimentName::Guidance => "guidance",
            ExperimentName::DemoTwoview => "demo-twoview",
        }
    }
}

/// Options shared by `experiment` and `report`.
#[derive(Args, Clone)]
pub struct RunOptions {
    #[arg(long)]
    pub seed: u64,
    /// Experiment configuration (TOML); flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene description (TOML), replacing the config's scene section
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Multiply every noise sigma by this factor (0 turns noise off)
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Args)]
pub struct ExperimentArgs {
    pub name: ExperimentName,
    #[command(flatten)]
    pub run: RunOptions,
    /// Output directory [default: out/<name>]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub run: RunOptions,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub bind: String,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct TriangulateArgs {
    /// Annotation file, one `<view> point|line ... <color>` per line
    #[arg(long)]
    pub annotations: PathBuf,
    /// Calibration record of a view (repeatable)
    #[arg(long = "calibration", required = true)]
    pub calibrations: Vec<PathBuf>,
    /// X-ray camera shared by all views
    #[arg(long)]
    pub camera: PathBuf,
    /// Geometry output file
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Experiment(a) => commands::experiment(&a),
        Command::Serve(a) => commands::serve(&a),
        Command::Triangulate(a) => commands::triangulate(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fluorar: {e}");
            ExitCode::from(e.code())
        }
    }
}
