//! On-disk formats.
//!
//! * configuration and scenarios: TOML, unknown keys rejected;
//! * detections: newline-delimited JSON, a header line followed by
//!   time-ordered `{t, centers}` frame and `{t, points}` pattern records;
//! * calibration reports and ground-truth sidecars: JSON, with the residual
//!   histograms in a CSV file next to the report.
//!
//! Floats are written in shortest round-trip form, so every `f64` reads back
//! bit-exact.

use crate::geometry::{CameraIntrinsics, Rotation};
use crate::init::{HandEyeConfig, SpatiotemporalParams};
use crate::pipeline::{
    CalibrationResult, CameraInput, InitSummary, PipelineConfig, ResidualCounts, ResidualStats,
};
use crate::simulator::{evaluate, summarize, ErrorMetrics, EstimateSummary, GroundTruthBundle, ScenarioSpec};
use crate::solver::{SolverOptions, SolverReport};
use crate::spline::PiecewiseTrajectory;
use crate::tracking::{BoardSpec, CameraId, EllipseFrame, GridPattern, PatternTrack, TrackingConfig, TrackingStats};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DETECTION_FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const TRUTH_FORMAT_VERSION: u32 = 1;
/// Label carried by simulated data into every downstream report.
pub const SYNTHETIC_SOURCE: &str = "synthetic: sum-of-sinusoids trajectory recipe";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl IoError {
    fn parse(path: &Path, line: usize, message: impl ToString) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        }
    }

    fn invalid(path: &Path, message: impl ToString) -> Self {
        Self::Invalid {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, IoError> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| line_of(text, s.start));
        IoError::parse(path, line, e.message())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationSection {
    /// Gap that splits pose runs, seconds.
    pub gap: f64,
    pub min_run_length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineSection {
    pub knot_spacing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleAdjustmentSection {
    pub huber_delta: f64,
    /// Half-width of the time-offset box around the hand-eye estimate.
    pub offset_margin: f64,
}

/// Calibrator configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub tracking: TrackingConfig,
    pub segmentation: SegmentationSection,
    pub spline: SplineSection,
    pub hand_eye: HandEyeConfig,
    pub bundle_adjustment: BundleAdjustmentSection,
    pub solver: SolverOptions,
}

impl Default for Config {
    fn default() -> Self {
        Self::from_pipeline(&PipelineConfig::default())
    }
}

impl Default for SegmentationSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            gap: p.segment_gap,
            min_run_length: p.min_run_length,
        }
    }
}

impl Default for SplineSection {
    fn default() -> Self {
        Self {
            knot_spacing: PipelineConfig::default().knot_spacing,
        }
    }
}

impl Default for BundleAdjustmentSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            huber_delta: p.huber_delta,
            offset_margin: p.ba_offset_margin,
        }
    }
}

impl Config {
    pub fn from_pipeline(p: &PipelineConfig) -> Self {
        Self {
            tracking: p.tracking,
            segmentation: SegmentationSection {
                gap: p.segment_gap,
                min_run_length: p.min_run_length,
            },
            spline: SplineSection {
                knot_spacing: p.knot_spacing,
            },
            hand_eye: p.hand_eye,
            bundle_adjustment: BundleAdjustmentSection {
                huber_delta: p.huber_delta,
                offset_margin: p.ba_offset_margin,
            },
            solver: p.solver.clone(),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            tracking: self.tracking,
            segment_gap: self.segmentation.gap,
            min_run_length: self.segmentation.min_run_length,
            knot_spacing: self.spline.knot_spacing,
            hand_eye: self.hand_eye,
            huber_delta: self.bundle_adjustment.huber_delta,
            ba_offset_margin: self.bundle_adjustment.offset_margin,
            solver: self.solver.clone(),
        }
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self, IoError> {
        let cfg: Self = parse_toml(text, path)?;
        cfg.pipeline().validate().map_err(|m| IoError::invalid(path, m))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_toml(&read(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }
}

pub fn parse_scenario(text: &str, path: &Path) -> Result<ScenarioSpec, IoError> {
    let spec: ScenarioSpec = parse_toml(text, path)?;
    spec.validate().map_err(|e| IoError::invalid(path, e))?;
    Ok(spec)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, IoError> {
    parse_scenario(&read(path)?, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionHeader {
    pub version: u32,
    pub camera: CameraId,
    pub intrinsics: CameraIntrinsics,
    pub board: BoardSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: f64,
    centers: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternRecord {
    t: f64,
    points: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum Record {
    Frame(FrameRecord),
    Pattern(PatternRecord),
}

/// One camera's detection stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFile {
    pub header: DetectionHeader,
    pub frames: Vec<EllipseFrame>,
    /// Complete patterns from the recognizer.
    pub patterns: PatternTrack,
}

impl DetectionFile {
    pub fn camera_input(&self) -> CameraInput {
        CameraInput {
            intrinsics: self.header.intrinsics,
            patterns: self.patterns.clone(),
            frames: self.frames.clone(),
        }
    }

    /// Serializes to NDJSON. Frame and pattern records are merged in time
    /// order, a frame before the pattern that shares its timestamp.
    pub fn to_ndjson(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        let patterns = self.patterns.patterns();
        let (mut i, mut j) = (0, 0);
        while i < self.frames.len() || j < patterns.len() {
            let take_frame = j == patterns.len() || (i < self.frames.len() && self.frames[i].timestamp <= patterns[j].timestamp);
            let line = if take_frame {
                let f = &self.frames[i];
                i += 1;
                serde_json::to_string(&FrameRecord {
                    t: f.timestamp,
                    centers: f.centers.iter().map(|c| [c.x, c.y]).collect(),
                })
            } else {
                let p = &patterns[j];
                j += 1;
                serde_json::to_string(&PatternRecord {
                    t: p.timestamp,
                    points: p.points.iter().map(|q| (q.index, q.image.x, q.image.y)).collect(),
                })
            };
            out.push_str(&line.expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, IoError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, first) = lines.next().ok_or_else(|| IoError::parse(path, 1, "empty detection file"))?;
        let header: DetectionHeader = serde_json::from_str(first).map_err(|e| IoError::parse(path, hl + 1, e))?;
        if header.version != DETECTION_FORMAT_VERSION {
            return Err(IoError::parse(
                path,
                hl + 1,
                format!("unsupported format version {} (expected {DETECTION_FORMAT_VERSION})", header.version),
            ));
        }
        header.board.validate().map_err(|e| IoError::parse(path, hl + 1, e))?;
        header.intrinsics.validate().map_err(|e| IoError::parse(path, hl + 1, e))?;
        let mut frames = Vec::new();
        let mut patterns = Vec::new();
        let mut last_t = f64::NEG_INFINITY;
        for (ln, line) in lines {
            let record: Record = serde_json::from_str(line)
                .map_err(|e| IoError::parse(path, ln + 1, format!("not a frame or pattern record: {e}")))?;
            let t = match &record {
                Record::Frame(f) => f.t,
                Record::Pattern(p) => p.t,
            };
            if !t.is_finite() || t < last_t {
                return Err(IoError::parse(path, ln + 1, format!("timestamp {t} out of order")));
            }
            last_t = t;
            match record {
                Record::Frame(f) => frames.push(EllipseFrame {
                    timestamp: f.t,
                    centers: f.centers.iter().map(|c| Vector2::new(c[0], c[1])).collect(),
                }),
                Record::Pattern(p) => {
                    let obs = p.points.iter().map(|&(i, x, y)| (i, Vector2::new(x, y))).collect();
                    let pattern = GridPattern::new(&header.board, p.t, obs).map_err(|e| IoError::parse(path, ln + 1, e))?;
                    if !pattern.complete {
                        return Err(IoError::parse(path, ln + 1, "pattern records must contain every circle"));
                    }
                    patterns.push(pattern);
                }
            }
        }
        let patterns = PatternTrack::new(patterns).map_err(|e| IoError::invalid(path, e))?;
        Ok(Self {
            header,
            frames,
            patterns,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write(path, &self.to_ndjson())
    }
}

/// Extrinsics and offset in display-friendly form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsRecord {
    /// `[w, x, y, z]`.
    pub rotation_quaternion: [f64; 4],
    /// Intrinsic X-Y-Z Euler angles, degrees. Display only.
    pub rotation_euler_deg: [f64; 3],
    pub translation_m: [f64; 3],
    pub time_offset_s: f64,
}

impl ParamsRecord {
    pub fn new(p: &SpatiotemporalParams) -> Self {
        Self {
            rotation_quaternion: p.rotation.quaternion(),
            rotation_euler_deg: p.rotation.to_euler_xyz().map(f64::to_degrees),
            translation_m: p.translation.into(),
            time_offset_s: p.time_offset,
        }
    }

    pub fn params(&self) -> SpatiotemporalParams {
        let [w, x, y, z] = self.rotation_quaternion;
        SpatiotemporalParams {
            rotation: Rotation::from_quaternion(w, x, y, z),
            translation: Vector3::from(self.translation_m),
            time_offset: self.time_offset_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraTracking {
    pub camera: CameraId,
    #[serde(flatten)]
    pub stats: TrackingStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualRole {
    Reference,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraResiduals {
    pub camera: CameraId,
    pub role: ResidualRole,
    pub count: usize,
    pub mean: [f64; 2],
    pub sigma: [f64; 2],
    pub rms: f64,
    pub robust_cost: f64,
}

/// Calibration report. Self-contained: evaluation needs nothing else.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub reference_camera: CameraId,
    /// Target camera w.r.t. the reference camera; `τ_ref = τ_target + offset`.
    pub target_in_reference: ParamsRecord,
    /// Camera B w.r.t. camera A, whichever was the reference.
    pub b_in_a: ParamsRecord,
    pub tracking: Vec<CameraTracking>,
    pub residuals: Vec<CameraResiduals>,
    pub residual_counts: ResidualCounts,
    pub initialization: InitSummary,
    pub bundle_adjustment: SolverReport,
    pub warnings: Vec<String>,
    pub config: Config,
    pub trajectory: PiecewiseTrajectory,
}

impl CalibrationReport {
    pub fn new(result: &CalibrationResult, header: &DetectionHeader, config: &Config) -> Self {
        let target = result.reference.other();
        let residual = |camera, role, s: &ResidualStats| CameraResiduals {
            camera,
            role,
            count: s.count,
            mean: s.mean,
            sigma: s.sigma,
            rms: s.rms,
            robust_cost: s.robust_cost,
        };
        Self {
            version: REPORT_FORMAT_VERSION,
            scenario_id: header.scenario_id.clone(),
            source: header.source.clone(),
            reference_camera: result.reference,
            target_in_reference: ParamsRecord::new(&result.params),
            b_in_a: ParamsRecord::new(&result.params_b_in_a()),
            tracking: vec![
                CameraTracking {
                    camera: CameraId::A,
                    stats: result.tracking[0],
                },
                CameraTracking {
                    camera: CameraId::B,
                    stats: result.tracking[1],
                },
            ],
            residuals: vec![
                residual(result.reference, ResidualRole::Reference, &result.residuals[0]),
                residual(target, ResidualRole::Target, &result.residuals[1]),
            ],
            residual_counts: result.counts,
            initialization: result.init.clone(),
            bundle_adjustment: result.ba_report.clone(),
            warnings: result.warnings.clone(),
            config: config.clone(),
            trajectory: result.trajectory.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, IoError> {
        let report: Self = serde_json::from_str(text).map_err(|e| IoError::parse(path, e.line(), e))?;
        if report.version != REPORT_FORMAT_VERSION {
            return Err(IoError::invalid(path, format!("unsupported report version {}", report.version)));
        }
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read(path)?, path)
    }
}

/// `report.json` → `report.hist.csv`.
pub fn histogram_path(report_path: &Path) -> PathBuf {
    report_path.with_extension("hist.csv")
}

/// Residual histograms as CSV rows `camera,role,x_center,y_center,count`.
pub fn histogram_csv(result: &CalibrationResult) -> String {
    let mut out = String::from("camera,role,x_center,y_center,count\n");
    let roles = [(result.reference, "reference"), (result.reference.other(), "target")];
    for ((camera, role), stats) in roles.iter().zip(&result.residuals) {
        let h = &stats.histogram;
        for iy in 0..h.bins {
            for ix in 0..h.bins {
                let _ = writeln!(
                    out,
                    "{camera:?},{role},{},{},{}",
                    h.bin_center(ix),
                    h.bin_center(iy),
                    h.counts[iy * h.bins + ix]
                );
            }
        }
    }
    out
}

/// Writes the report and its histogram sidecar.
pub fn save_report(path: &Path, report: &CalibrationReport, result: &CalibrationResult) -> Result<(), IoError> {
    write(path, &report.to_json())?;
    write(&histogram_path(path), &histogram_csv(result))
}

/// Ground truth of a simulated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSidecar {
    pub version: u32,
    pub scenario_id: String,
    pub source: String,
    /// Camera B w.r.t. camera A.
    pub b_in_a: ParamsRecord,
    pub visible_fraction: f64,
    pub scenario: ScenarioSpec,
}

impl TruthSidecar {
    pub fn new(bundle: &GroundTruthBundle) -> Self {
        Self {
            version: TRUTH_FORMAT_VERSION,
            scenario_id: bundle.spec.scenario_id.clone(),
            source: SYNTHETIC_SOURCE.into(),
            b_in_a: ParamsRecord::new(&bundle.truth),
            visible_fraction: bundle.visible_fraction,
            scenario: bundle.spec.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = read(path)?;
        let truth: Self = serde_json::from_str(&text).map_err(|e| IoError::parse(path, e.line(), e))?;
        if truth.version != TRUTH_FORMAT_VERSION {
            return Err(IoError::invalid(path, format!("unsupported sidecar version {}", truth.version)));
        }
        Ok(truth)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sidecar serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub report: String,
    pub errors: ErrorMetrics,
}

/// Error metrics of one or more reports against a ground-truth sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub scenario_id: String,
    pub source: String,
    pub truth: ParamsRecord,
    pub runs: Vec<RunMetrics>,
    /// Estimates aggregated over all runs.
    pub estimates: EstimateSummary,
}

impl Evaluation {
    /// Fails when a report names a different scenario than the sidecar.
    pub fn new(truth: &TruthSidecar, reports: &[(String, CalibrationReport)]) -> Result<Self, String> {
        let truth_params = truth.b_in_a.params();
        let mut runs = Vec::with_capacity(reports.len());
        let mut estimates = Vec::with_capacity(reports.len());
        for (name, r) in reports {
            if let Some(id) = &r.scenario_id {
                if *id != truth.scenario_id {
                    return Err(format!("{name}: scenario '{id}' does not match ground truth '{}'", truth.scenario_id));
                }
            }
            let est = r.b_in_a.params();
            runs.push(RunMetrics {
                report: name.clone(),
                errors: evaluate(&est, &truth_params),
            });
            estimates.push(est);
        }
        Ok(Self {
            scenario_id: truth.scenario_id.clone(),
            source: truth.source.clone(),
            truth: truth.b_in_a,
            runs,
            estimates: summarize(&estimates),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("evaluation serializes")
    }

    /// Per-run error rows followed by the aggregated estimate rows.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} ({})", self.scenario_id, self.source);
        let _ = writeln!(
            s,
            "{:<32} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "errors", "geo[deg]", "roll[deg]", "pitch[deg]", "yaw[deg]", "x[cm]", "y[cm]", "z[cm]", "off[ms]"
        );
        for run in &self.runs {
            let m = &run.errors;
            let name = Path::new(&run.report)
                .file_name()
                .map_or_else(|| run.report.clone(), |n| n.to_string_lossy().into_owned());
            let _ = writeln!(
                s,
                "{:<32} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
                name,
                m.rotation_deg,
                m.rotation_euler_deg[0],
                m.rotation_euler_deg[1],
                m.rotation_euler_deg[2],
                m.translation_cm[0],
                m.translation_cm[1],
                m.translation_cm[2],
                m.offset_ms
            );
        }
        let (e, t) = (&self.estimates, &self.truth);
        let _ = writeln!(s, "estimates over {} run(s), mean ± std (truth in brackets):", e.runs);
        let _ = writeln!(
            s,
            "  euler [deg]       {:.3} | {:.3} | {:.3}   [{:.3} | {:.3} | {:.3}]",
            e.euler_deg[0], e.euler_deg[1], e.euler_deg[2], t.rotation_euler_deg[0], t.rotation_euler_deg[1], t.rotation_euler_deg[2]
        );
        let _ = writeln!(
            s,
            "  translation [cm]  {:.3} | {:.3} | {:.3}   [{:.3} | {:.3} | {:.3}]",
            e.translation_cm[0],
            e.translation_cm[1],
            e.translation_cm[2],
            t.translation_m[0] * 100.0,
            t.translation_m[1] * 100.0,
            t.translation_m[2] * 100.0
        );
        let _ = writeln!(s, "  offset [ms]       {:.3}   [{:.3}]", e.offset_ms, t.time_offset_s * 1e3);
        s
    }
}

/// Detection files `[A, B]` of a simulated bundle.
pub fn detection_files(bundle: &GroundTruthBundle) -> [DetectionFile; 2] {
    [CameraId::A, CameraId::B].map(|camera| {
        let s = &bundle.streams[camera as usize];
        DetectionFile {
            header: DetectionHeader {
                version: DETECTION_FORMAT_VERSION,
                camera,
                intrinsics: s.intrinsics,
                board: bundle.spec.board,
                scenario_id: Some(bundle.spec.scenario_id.clone()),
                source: Some(SYNTHETIC_SOURCE.into()),
            },
            frames: s.frames.clone(),
            patterns: s.patterns.clone(),
        }
    })
}

/// Output file names inside a simulation directory.
pub const DETECTIONS_A: &str = "detections_a.ndjson";
pub const DETECTIONS_B: &str = "detections_b.ndjson";
pub const TRUTH_FILE: &str = "truth.json";

/// Writes both detection files and the ground-truth sidecar into `dir`.
pub fn save_simulation(dir: &Path, bundle: &GroundTruthBundle) -> Result<[PathBuf; 3], IoError> {
    fs::create_dir_all(dir).map_err(|source| IoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let [a, b] = detection_files(bundle);
    let paths = [dir.join(DETECTIONS_A), dir.join(DETECTIONS_B), dir.join(TRUTH_FILE)];
    a.save(&paths[0])?;
    b.save(&paths[1])?;
    write(&paths[2], &TruthSidecar::new(bundle).to_json())?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{DEFAULT_MIN_RUN_LENGTH, DEFAULT_OFFSET_BOUND, DEFAULT_OFFSET_GRID_STEP, DEFAULT_SEGMENT_GAP};
    use crate::pipeline::{DEFAULT_BA_OFFSET_MARGIN, DEFAULT_HUBER_DELTA};
    use crate::simulator::generate;
    use crate::solver::{DEFAULT_FUNCTION_TOLERANCE, DEFAULT_GRADIENT_TOLERANCE, DEFAULT_INITIAL_DAMPING, DEFAULT_MAX_ITERATIONS};
    use crate::spline::DEFAULT_KNOT_SPACING;
    use crate::tracking::{DEFAULT_ASSOCIATION_THRESHOLD, DEFAULT_MAX_TRAVERSAL_OFFSET};

    fn p() -> &'static Path {
        Path::new("test.toml")
    }

    #[test]
    fn config_defaults_come_from_owning_modules() {
        let c: Config = Config::from_toml("", p()).unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.tracking.association_threshold, DEFAULT_ASSOCIATION_THRESHOLD);
        assert_eq!(c.tracking.max_traversal_offset, DEFAULT_MAX_TRAVERSAL_OFFSET);
        assert_eq!(c.tracking.min_points, None);
        assert_eq!(c.segmentation.gap, DEFAULT_SEGMENT_GAP);
        assert_eq!(c.segmentation.min_run_length, DEFAULT_MIN_RUN_LENGTH);
        assert_eq!(c.spline.knot_spacing, DEFAULT_KNOT_SPACING);
        assert_eq!(c.hand_eye.offset_bound, DEFAULT_OFFSET_BOUND);
        assert_eq!(c.hand_eye.grid_step, DEFAULT_OFFSET_GRID_STEP);
        assert_eq!(c.bundle_adjustment.huber_delta, DEFAULT_HUBER_DELTA);
        assert_eq!(c.bundle_adjustment.offset_margin, DEFAULT_BA_OFFSET_MARGIN);
        assert_eq!(c.solver.max_iterations, DEFAULT_MAX_ITERATIONS);
        assert_eq!(c.solver.function_tolerance, DEFAULT_FUNCTION_TOLERANCE);
        assert_eq!(c.solver.gradient_tolerance, DEFAULT_GRADIENT_TOLERANCE);
        assert_eq!(c.solver.initial_damping, DEFAULT_INITIAL_DAMPING);
        assert_eq!(c.pipeline(), PipelineConfig::default());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = Config::default();
        c.tracking.min_points = Some(9);
        c.spline.knot_spacing = 0.025;
        let back = Config::from_toml(&c.to_toml(), p()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_rejects_unknown_and_invalid_keys() {
        let e = Config::from_toml("[tracking]\nassociation_threshold = 2.0\nbogus = 1\n", p()).unwrap_err();
        assert!(matches!(e, IoError::Parse { line: 3, .. }), "{e}");
        let e = Config::from_toml("[spline]\nknot_spacing = -0.1\n", p()).unwrap_err();
        assert!(e.to_string().contains("spline.knot_spacing"), "{e}");
        assert!(Config::from_toml("[hand_eye]\ngrid_step = 0.5\n", p()).is_err());
    }

    #[test]
    fn scenario_errors_carry_line_numbers() {
        let text = "scenario_id = \"x\"\nduration = 5.0\nframe_rate = \"fast\"\n";
        match parse_scenario(text, p()).unwrap_err() {
            IoError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
        let s = parse_scenario("time_shift = 0.05\nseed = 3\n[trajectory.representation]\nkind = \"spline\"\nknot_spacing = 0.05\n", p())
            .unwrap();
        assert_eq!(s.time_shift, 0.05);
        assert_eq!(s.board, ScenarioSpec::default().board);
    }

    #[test]
    fn detection_file_round_trip_is_bit_exact() {
        let spec = ScenarioSpec {
            duration: 1.0,
            dropout: crate::simulator::DropoutModel {
                rate: 0.05,
                ..Default::default()
            },
            ..Default::default()
        };
        let bundle = generate(&spec).unwrap();
        for file in detection_files(&bundle) {
            let text = file.to_ndjson();
            let back = DetectionFile::parse(&text, p()).unwrap();
            assert_eq!(back, file);
            assert_eq!(back.to_ndjson(), text);
        }
    }

    #[test]
    fn detection_parse_errors() {
        let bundle = generate(&ScenarioSpec {
            duration: 0.5,
            ..Default::default()
        })
        .unwrap();
        let text = detection_files(&bundle)[0].to_ndjson();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(1, 3);
        let e = DetectionFile::parse(&lines.join("\n"), p()).unwrap_err();
        assert!(e.to_string().contains("out of order"), "{e}");
        let bad = text.replacen("\"version\":1", "\"version\":9", 1);
        assert!(DetectionFile::parse(&bad, p()).is_err());
        let bad = format!("{text}{{\"t\": 99.0, \"oops\": []}}\n");
        assert!(matches!(DetectionFile::parse(&bad, p()), Err(IoError::Parse { .. })));
        assert!(DetectionFile::parse("", p()).is_err());
    }

    fn fake_report(truth: &TruthSidecar, params: &SpatiotemporalParams) -> CalibrationReport {
        CalibrationReport {
            version: REPORT_FORMAT_VERSION,
            scenario_id: Some(truth.scenario_id.clone()),
            source: None,
            reference_camera: CameraId::A,
            target_in_reference: ParamsRecord::new(params),
            b_in_a: ParamsRecord::new(params),
            tracking: Vec::new(),
            residuals: Vec::new(),
            residual_counts: ResidualCounts::default(),
            initialization: InitSummary {
                pnp_failures: [0; 2],
                segments: Vec::new(),
                hand_eye_seed: *params,
                hand_eye: *params,
                hand_eye_seed_cost: 0.0,
                hand_eye_cost: 0.0,
                hand_eye_pairs: 0,
            },
            bundle_adjustment: SolverReport {
                initial_cost: 0.0,
                final_cost: 0.0,
                iterations: 0,
                termination: crate::solver::Termination::FunctionTolerance,
                cost_history: Vec::new(),
                group_rms: Default::default(),
                residual_count: 0,
                condition_estimate: 1.0,
            },
            warnings: Vec::new(),
            config: Config::default(),
            trajectory: PiecewiseTrajectory::default(),
        }
    }

    fn sidecar() -> TruthSidecar {
        TruthSidecar::new(&generate(&ScenarioSpec {
            duration: 0.5,
            ..Default::default()
        })
        .unwrap())
    }

    #[test]
    fn evaluation_of_truth_is_zero() {
        let truth = sidecar();
        let report = fake_report(&truth, &truth.b_in_a.params());
        let text = report.to_json();
        let back = CalibrationReport::parse(&text, p()).unwrap();
        assert_eq!(back.b_in_a, report.b_in_a);
        let ev = Evaluation::new(&truth, &[("r.json".into(), back)]).unwrap();
        let m = ev.runs[0].errors;
        assert!(m.rotation_deg < 1e-12);
        assert_eq!(m.translation_cm, [0.0; 3]);
        assert_eq!(m.offset_ms, 0.0);
        assert!(ev.table().contains("r.json"));
    }

    #[test]
    fn evaluation_aggregates_match_recomputation() {
        let truth = sidecar();
        let base = truth.b_in_a.params();
        let reports: Vec<(String, CalibrationReport)> = (0..5)
            .map(|i| {
                let mut p = base;
                p.time_offset += 1e-4 * i as f64;
                p.translation.x += 1e-4 * (i as f64 - 2.0);
                (format!("run{i}.json"), fake_report(&truth, &p))
            })
            .collect();
        let ev = Evaluation::new(&truth, &reports).unwrap();
        let offsets: Vec<f64> = reports.iter().map(|(_, r)| r.b_in_a.time_offset_s * 1e3).collect();
        let mean = offsets.iter().sum::<f64>() / 5.0;
        let std = (offsets.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((ev.estimates.offset_ms.mean - mean).abs() < 1e-12);
        assert!((ev.estimates.offset_ms.std - std).abs() < 1e-12);
        for (run, (_, r)) in ev.runs.iter().zip(&reports) {
            let expected = (r.b_in_a.time_offset_s - truth.b_in_a.time_offset_s) * 1e3;
            assert!((run.errors.offset_ms - expected).abs() < 1e-12);
        }
        let mut other = reports[0].1.clone();
        other.scenario_id = Some("elsewhere".into());
        assert!(Evaluation::new(&truth, &[("x".into(), other)]).is_err());
    }

    #[test]
    fn params_record_round_trip() {
        let truth = ScenarioSpec::default().truth();
        let back = ParamsRecord::new(&truth).params();
        assert!(back.rotation.angle_to(&truth.rotation) < 1e-15);
        assert_eq!(back.translation, truth.translation);
        assert_eq!(back.time_offset, truth.time_offset);
    }
}
