use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use stcalib::io::CalibrationReport;
use tempfile::TempDir;

fn stcalib(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stcalib"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scenario(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("scenario.toml");
    fs::write(&path, body).unwrap();
    path
}

const SHORT: &str = "scenario_id = \"short\"\nduration = 4.0\ntime_shift = 0.02\n";

fn simulate(dir: &Path, body: &str, seed: &str) -> PathBuf {
    let out = dir.join(format!("sim{seed}"));
    let o = stcalib(&["simulate", s(&scenario(dir, body)), "--out", s(&out), "--seed", seed]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn simulate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = simulate(tmp.path(), SHORT, "5");
    let b = tmp.path().join("again");
    let o = stcalib(&["simulate", s(&tmp.path().join("scenario.toml")), "--out", s(&b), "--seed", "5"]);
    assert!(o.status.success());
    for f in ["detections_a.ndjson", "detections_b.ndjson", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = simulate(tmp.path(), SHORT, "6");
    assert_ne!(
        fs::read(a.join("detections_a.ndjson")).unwrap(),
        fs::read(c.join("detections_a.ndjson")).unwrap()
    );
}

#[test]
fn invisible_board_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let body = format!("{SHORT}[trajectory]\norigin = [4.0, 4.0, -0.6]\naim = [4.0, 4.0, 0.0]\n");
    let o = stcalib(&["simulate", s(&scenario(tmp.path(), &body)), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("visible"));
}

#[test]
fn malformed_scenario_reports_its_line() {
    let tmp = TempDir::new().unwrap();
    let path = scenario(tmp.path(), "duration = 4.0\n\nnoise_sigma = \"high\"\n");
    let o = stcalib(&["simulate", s(&path), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("scenario.toml:3:"), "{err}");
    let path = scenario(tmp.path(), "duration = 4.0\nwarp_factor = 9\n");
    let o = stcalib(&["simulate", s(&path), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mismatched_boards_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), SHORT, "1");
    let b = fs::read_to_string(sim.join("detections_b.ndjson")).unwrap();
    let patched = sim.join("b_other_board.ndjson");
    fs::write(&patched, b.replacen("\"spacing\":0.05", "\"spacing\":0.04", 1)).unwrap();
    let o = stcalib(&[
        "calibrate",
        s(&sim.join("detections_a.ndjson")),
        s(&patched),
        "--out",
        s(&tmp.path().join("r.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("board"));
}

#[test]
fn missing_inputs_are_input_errors() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    let o = stcalib(&["evaluate", s(&missing), s(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    let o = stcalib(&["calibrate", s(&missing), s(&missing), "--out", s(&tmp.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[solver]\nmax_iterations = 0\n").unwrap();
    let sim = simulate(tmp.path(), SHORT, "1");
    let o = stcalib(&[
        "calibrate",
        s(&sim.join("detections_a.ndjson")),
        s(&sim.join("detections_b.ndjson")),
        "--out",
        s(&tmp.path().join("r.json")),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pipeline_failure_names_the_stage() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), SHORT, "1");
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "[segmentation]\nmin_run_length = 100000\n").unwrap();
    let o = stcalib(&[
        "calibrate",
        s(&sim.join("detections_a.ndjson")),
        s(&sim.join("detections_b.ndjson")),
        "--out",
        s(&tmp.path().join("r.json")),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("segmentation"));
}

#[test]
fn default_round_trip_recovers_the_shift() {
    let tmp = TempDir::new().unwrap();
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/scenario.toml");
    let sim = tmp.path().join("sim");
    let o = stcalib(&["simulate", s(&scenario), "--out", s(&sim)]);
    assert!(o.status.success());
    let reports = tmp.path().join("reports");
    fs::create_dir(&reports).unwrap();
    let report = reports.join("run0.json");
    let o = stcalib(&[
        "calibrate",
        s(&sim.join("detections_a.ndjson")),
        s(&sim.join("detections_b.ndjson")),
        "--out",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(reports.join("run0.hist.csv").exists());

    let text = fs::read_to_string(&report).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let offset = value["b_in_a"]["time_offset_s"].as_f64().unwrap();
    assert!((offset - 0.01).abs() < 1e-3, "{offset}");
    // Every number survives a parse/print cycle unchanged.
    let parsed = CalibrationReport::parse(&text, &report).unwrap();
    assert_eq!(parsed.to_json(), text);

    let csv = fs::read_to_string(reports.join("run0.hist.csv")).unwrap();
    let total: u64 = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    let counted: usize = parsed.residuals.iter().map(|r| r.count).sum();
    assert_eq!(total as usize, counted);
    assert!(counted > 2 * 3000 * 21 - 200);

    let metrics = tmp.path().join("metrics.json");
    let o = stcalib(&["evaluate", s(&report), s(&sim.join("truth.json")), "--out", s(&metrics)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("offset [ms]"));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert!(m["runs"][0]["errors"]["offset_ms"].as_f64().unwrap().abs() < 1.0);

    // Directory mode aggregates over every report inside.
    fs::copy(&report, reports.join("run1.json")).unwrap();
    let o = stcalib(&["evaluate", s(&reports), s(&sim.join("truth.json")), "--out", s(&metrics)]);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert_eq!(m["estimates"]["runs"].as_u64(), Some(2));
    assert_eq!(m["estimates"]["offset_ms"]["std"].as_f64(), Some(0.0));

    // A sidecar from another scenario is refused.
    let other = simulate(tmp.path(), SHORT, "2");
    let o = stcalib(&["evaluate", s(&report), s(&other.join("truth.json"))]);
    assert_eq!(o.status.code(), Some(2));
}
