//! `stcalib`: simulate detection streams, calibrate a stereo rig from them,
//! and evaluate calibration reports against ground truth.
//!
//! Exit codes: 0 success, 2 input error, 3 pipeline error.

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use stcalib::io::{self, CalibrationReport, Config, DetectionFile, Evaluation, TruthSidecar};
use stcalib::pipeline::{run_calibration, CalibrationInput};
use stcalib::simulator::generate;
use stcalib::tracking::CameraId;

#[derive(Parser)]
#[command(name = "stcalib", version, about = "Spatiotemporal calibration of stereo camera rigs")]
struct Cli {
    /// Print stage progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Calibrator configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate detection files and a ground-truth sidecar from a scenario.
    Simulate {
        /// Scenario description (TOML).
        scenario: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Calibrate from two detection files.
    Calibrate {
        detections_a: PathBuf,
        detections_b: PathBuf,
        /// Report path; the histogram CSV is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Compare one report, or a directory of reports, with ground truth.
    Evaluate {
        /// Report file or directory of `*.json` reports.
        report: PathBuf,
        /// Ground-truth sidecar written by `simulate`.
        truth: PathBuf,
        /// Also write the metrics as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Input(String),
    Pipeline(String),
}

impl From<io::IoError> for Failure {
    fn from(e: io::IoError) -> Self {
        Failure::Input(e.to_string())
    }
}

fn load_config(arg: &ConfigArg) -> Result<Config, Failure> {
    match &arg.config {
        Some(path) => Ok(Config::load(path)?),
        None => Ok(Config::default()),
    }
}

fn simulate(scenario: &Path, out: &Path, seed: Option<u64>, config: &ConfigArg) -> Result<(), Failure> {
    load_config(config)?;
    let mut spec = io::load_scenario(scenario)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let bundle = generate(&spec).map_err(|e| Failure::Input(format!("{}: {e}", scenario.display())))?;
    let paths = io::save_simulation(out, &bundle)?;
    for (cam, s) in ["A", "B"].iter().zip(&bundle.streams) {
        println!("camera {cam}: {} frames, {} complete patterns", s.frames.len(), s.patterns.len());
    }
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn calibrate(path_a: &Path, path_b: &Path, out: &Path, config: &ConfigArg) -> Result<(), Failure> {
    let config = load_config(config)?;
    let a = DetectionFile::load(path_a)?;
    let b = DetectionFile::load(path_b)?;
    if a.header.board != b.header.board {
        return Err(Failure::Input(format!(
            "board specs differ between {} and {}",
            path_a.display(),
            path_b.display()
        )));
    }
    if a.header.camera != CameraId::A || b.header.camera != CameraId::B {
        return Err(Failure::Input(format!(
            "expected camera A then camera B, got {:?} and {:?}",
            a.header.camera, b.header.camera
        )));
    }
    if a.header.scenario_id != b.header.scenario_id {
        return Err(Failure::Input("detection files come from different scenarios".into()));
    }
    let input = CalibrationInput {
        board: a.header.board,
        cameras: vec![a.camera_input(), b.camera_input()],
        config: config.pipeline(),
    };
    let result = run_calibration(&input).map_err(|e| Failure::Pipeline(e.to_string()))?;
    let report = CalibrationReport::new(&result, &a.header, &config);
    io::save_report(out, &report, &result)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let p = &report.b_in_a;
    println!("reference camera: {:?}", report.reference_camera);
    println!(
        "B in A: euler [{:.4}, {:.4}, {:.4}] deg, translation [{:.5}, {:.5}, {:.5}] m, offset {:.6} s",
        p.rotation_euler_deg[0],
        p.rotation_euler_deg[1],
        p.rotation_euler_deg[2],
        p.translation_m[0],
        p.translation_m[1],
        p.translation_m[2],
        p.time_offset_s
    );
    for t in &report.tracking {
        println!(
            "camera {:?}: complete {:.2}% incomplete {:.2}% total {:.2}%",
            t.camera,
            100.0 * t.stats.complete_rate,
            100.0 * t.stats.incomplete_rate,
            100.0 * t.stats.total_rate
        );
    }
    println!("wrote {} and {}", out.display(), io::histogram_path(out).display());
    Ok(())
}

fn report_paths(path: &Path) -> Result<Vec<PathBuf>, Failure> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Input(format!("{}: no *.json reports", path.display())));
    }
    Ok(paths)
}

fn evaluate_cmd(report: &Path, truth_path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let truth = TruthSidecar::load(truth_path)?;
    let reports = report_paths(report)?
        .into_iter()
        .map(|p| Ok((p.display().to_string(), CalibrationReport::load(&p)?)))
        .collect::<Result<Vec<_>, io::IoError>>()?;
    let evaluation = Evaluation::new(&truth, &reports).map_err(Failure::Input)?;
    print!("{}", evaluation.table());
    if let Some(out) = out {
        fs::write(out, evaluation.to_json()).map_err(|e| Failure::Input(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { LevelFilter::Info } else { LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    let outcome = match &cli.command {
        Command::Simulate {
            scenario,
            out,
            seed,
            config,
        } => simulate(scenario, out, *seed, config),
        Command::Calibrate {
            detections_a,
            detections_b,
            out,
            config,
        } => calibrate(detections_a, detections_b, out, config),
        Command::Evaluate { report, truth, out } => evaluate_cmd(report, truth, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
