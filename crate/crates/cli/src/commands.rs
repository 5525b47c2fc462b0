use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use fluorar::geometry::{read_camera, write_camera};
use fluorar::guidance::{build_geometry, read_annotations, write_annotations, Annotation, GuidanceError};
use fluorar::simulator::experiments::{
    run_demo_twoview, run_experiment_calibration, run_experiment_guidance, run_experiment_landmarks,
    run_experiment_tracking, ExperimentConfig, ExperimentReport, Table,
};
use fluorar::simulator::{FrameKind, SceneConfig, SimulatorError, SimulatorSession, VIEWS};
use fluorar::textfmt::join_numbers;
use fluorar::tracking::CalibrationRecord;
use serde::Serialize;

use crate::{
    ExperimentArgs, ExperimentName, ReportArgs, RunOptions, ServeArgs, SimulateArgs, TriangulateArgs,
};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failed(String),
    NearParallel(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failed(_) => 3,
            CliError::NearParallel(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Failed(m) => write!(f, "failed: {m}"),
            CliError::NearParallel(m) => f.write_str(m),
        }
    }
}

impl From<SimulatorError> for CliError {
    fn from(e: SimulatorError) -> Self {
        match e {
            SimulatorError::Config(m) => CliError::Config(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

fn io_failed(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Failed(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_failed(path))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(io_failed(path))
}

fn load_scene(path: Option<&PathBuf>) -> Result<Option<SceneConfig>, CliError> {
    path.map(|p| {
        toml::from_str(&read_text(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
    })
    .transpose()
}

/// Config file, then scene file, then flags.
fn load_config(o: &RunOptions) -> Result<ExperimentConfig, CliError> {
    let mut cfg: ExperimentConfig = match &o.config {
        Some(p) => {
            toml::from_str(&read_text(p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(scene) = load_scene(o.scene.as_ref())? {
        cfg.scene = scene;
    }
    cfg.seed = o.seed;
    if let Some(f) = o.noise {
        if !(f.is_finite() && f >= 0.0) {
            return Err(CliError::Config(format!(
                "--noise must be a finite factor ≥ 0, got {f}"
            )));
        }
        cfg.noise = cfg.noise.scaled(f);
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Summary<'a, R: Serialize> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    report: &'a R,
}

fn write_csv(path: &Path, table: &Table) -> Result<(), CliError> {
    let fail = |e: csv::Error| CliError::Failed(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(&table.header).map_err(fail)?;
    for row in &table.rows {
        w.write_record(row).map_err(fail)?;
    }
    w.flush().map_err(io_failed(path))
}

fn emit<R: ExperimentReport + Serialize>(
    name: ExperimentName,
    cfg: &ExperimentConfig,
    report: &R,
    out: &Path,
) -> Result<String, CliError> {
    create_dir(out)?;
    write_csv(&out.join("trials.csv"), &report.trials())?;
    let text = report.summary_text();
    write_file(&out.join("summary.txt"), &text)?;
    let summary = Summary {
        experiment: name.as_str(),
        config: cfg,
        report,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Failed(e.to_string()))?;
    write_file(&out.join("summary.json"), json + "\n")?;
    Ok(text)
}

fn run_one(name: ExperimentName, cfg: &ExperimentConfig, out: &Path) -> Result<String, CliError> {
    let op = cfg.operator;
    match name {
        ExperimentName::Calib => emit(name, cfg, &run_experiment_calibration(cfg)?, out),
        ExperimentName::Tracking => emit(name, cfg, &run_experiment_tracking(cfg)?, out),
        ExperimentName::Landmarks => emit(name, cfg, &run_experiment_landmarks(cfg)?, out),
        ExperimentName::Guidance => emit(name, cfg, &run_experiment_guidance(cfg, &op)?, out),
        ExperimentName::DemoTwoview => emit(name, cfg, &run_demo_twoview(cfg, &op)?, out),
    }
}

pub fn experiment(a: &ExperimentArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.run)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(a.name.as_str()));
    let text = run_one(a.name, &cfg, &out)?;
    print!("{text}");
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let cfg = load_config(&a.run)?;
    let mut all = format!("seed {}\n", cfg.seed);
    for name in ExperimentName::ALL {
        let text = run_one(name, &cfg, &a.out.join(name.as_str()))?;
        all += &format!("\n== {} ==\n{text}", name.as_str());
    }
    create_dir(&a.out)?;
    write_file(&a.out.join("report.txt"), &all)?;
    print!("{all}");
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let scene = load_scene(a.scene.as_ref())?.unwrap_or_default();
    let session = SimulatorSession::new(scene, a.seed)?;
    create_dir(&a.out)?;
    let rig = &session.rig;
    let mut written = Vec::new();
    let mut annotations = Vec::new();
    for view in VIEWS {
        for kind in [FrameKind::Xray, FrameKind::XrayMarker] {
            let name = format!("{view}_{kind}.pgm");
            let pgm = session
                .frame(view, kind)?
                .to_pgm()
                .map_err(|e| CliError::Failed(e.to_string()))?;
            write_file(&a.out.join(&name), pgm)?;
            written.push(name);
        }
        let name = format!("{view}.calib");
        // both locks at t = 0, before the tracker has drifted
        write_file(&a.out.join(&name), session.lock(view, 0.0, true)?.to_text())?;
        written.push(name);
        let cam = rig.xray_camera_at(session.gantry_deg(view)?);
        for (i, b) in rig.phantom.beads.iter().enumerate() {
            let px = cam
                .project(&b.position)
                .map_err(|e| CliError::Failed(e.to_string()))?;
            annotations.push(Annotation::point(view, px, i as u32 + 1));
        }
    }
    let rgb = session
        .frame(VIEWS[0], FrameKind::Rgb)?
        .to_pgm()
        .map_err(|e| CliError::Failed(e.to_string()))?;
    write_file(&a.out.join("rgb.pgm"), rgb)?;
    write_file(
        &a.out.join("xray_camera.txt"),
        write_camera(&rig.xray_device_camera()?),
    )?;
    write_file(&a.out.join("annotations.txt"), write_annotations(&annotations))?;
    let mut beads = String::from("# ground-truth bead centers, world frame, mm\n");
    for (b, p) in rig.phantom.beads.iter().zip(rig.beads_w()) {
        beads += &format!("{} {}\n", b.label, join_numbers(p.as_slice()));
    }
    write_file(&a.out.join("beads.txt"), beads)?;
    written.extend(["rgb.pgm", "xray_camera.txt", "annotations.txt", "beads.txt"].map(String::from));
    for f in written {
        println!("{}", a.out.join(f).display());
    }
    Ok(())
}

pub fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let scene = load_scene(a.scene.as_ref())?.unwrap_or_default();
    let session = SimulatorSession::new(scene, a.seed)?;
    let handle = fluorar::stream::serve(&a.bind, session).map_err(|e| CliError::Failed(e.to_string()))?;
    println!("listening on {}", handle.local_addr());
    let _ = std::io::stdout().flush();
    handle.wait();
    Ok(())
}

pub fn triangulate(a: &TriangulateArgs) -> Result<(), CliError> {
    let annotations = read_annotations(&read_text(&a.annotations)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", a.annotations.display())))?;
    let cam = read_camera(&read_text(&a.camera)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", a.camera.display())))?;
    let mut views = BTreeMap::new();
    for p in &a.calibrations {
        let rec = CalibrationRecord::from_text(&read_text(p)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        if views.insert(rec.view_id.clone(), (rec, cam)).is_some() {
            return Err(CliError::Config(format!("{}: view locked twice", p.display())));
        }
    }
    let geometry = build_geometry(&annotations, &views).map_err(|e| match e {
        GuidanceError::NearParallel {
            angle_deg,
            color: Some(c),
        } => CliError::NearParallel(format!(
            "rays for color {c} are nearly parallel ({angle_deg:.4}°)"
        )),
        e @ GuidanceError::NearParallel { .. } => CliError::NearParallel(e.to_string()),
        e => CliError::Config(e.to_string()),
    })?;
    write_file(&a.out, geometry.to_text())?;
    for p in &geometry.points {
        println!("color {} residual {} mm", p.color, p.residual);
    }
    println!(
        "{} rays, {} points, {} planes, {} trajectories -> {}",
        geometry.rays.len(),
        geometry.points.len(),
        geometry.planes.len(),
        geometry.trajectories.len(),
        a.out.display()
    );
    Ok(())
}
