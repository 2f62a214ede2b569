//! Board geometry, grid patterns, and motion-prior incomplete pattern tracking.
//!
//! Complete patterns (every circle recognized) come from an upstream
//! recognizer. [`track_incomplete`] walks the pattern track, predicts where
//! each circle seen in three consecutive patterns will appear in a nearby
//! ellipse frame with a quadratic Lagrange prior, and associates predictions
//! with detected ellipse centers. Accepted incomplete patterns immediately
//! become part of the track, so later predictions can chain off them.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Default association radius in pixels.
pub const DEFAULT_ASSOCIATION_THRESHOLD: f64 = 3.0;
/// Largest |i| tried by the traversal before giving up on a gap.
pub const DEFAULT_MAX_TRAVERSAL_OFFSET: usize = 3;
/// Frames and patterns whose timestamps differ by less than this are the same instant.
pub const TIME_MATCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// Asymmetric circle grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoardSpec {
    pub rows: usize,
    pub cols: usize,
    /// Center-to-center spacing in meters.
    pub spacing: f64,
}

impl BoardSpec {
    pub fn new(rows: usize, cols: usize, spacing: f64) -> Result<Self, TrackingError> {
        let b = Self { rows, cols, spacing };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), TrackingError> {
        if self.rows < 2 || self.cols < 2 {
            return Err(TrackingError::InvalidArgument(format!(
                "board needs at least 2x2 circles, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(TrackingError::InvalidArgument(format!("board spacing must be positive, got {}", self.spacing)));
        }
        Ok(())
    }

    pub fn num_circles(&self) -> usize {
        self.rows * self.cols
    }

    /// Board-frame position of circle `j` (row-major).
    pub fn object_point(&self, j: usize) -> Vector3<f64> {
        let (r, c) = (j / self.cols, j % self.cols);
        Vector3::new(
            c as f64 * self.spacing,
            (2 * r + c % 2) as f64 * self.spacing / 2.0,
            0.0,
        )
    }

    /// `max(5, ⌈0.3 · rows · cols⌉)`.
    pub fn default_min_points(&self) -> usize {
        5.max((0.3 * self.num_circles() as f64).ceil() as usize)
    }
}

pub fn board_object_points(spec: &BoardSpec) -> Vec<Vector3<f64>> {
    (0..spec.num_circles()).map(|j| spec.object_point(j)).collect()
}

/// One ellipse frame: all ellipse centers detected at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseFrame {
    pub timestamp: f64,
    pub centers: Vec<Vector2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternPoint {
    pub index: usize,
    pub image: Vector2<f64>,
    pub board: Vector3<f64>,
}

/// Circle-to-image correspondences at one timestamp, sorted by circle index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPattern {
    pub timestamp: f64,
    pub points: Vec<PatternPoint>,
    pub complete: bool,
}

impl GridPattern {
    pub fn new(board: &BoardSpec, timestamp: f64, observations: Vec<(usize, Vector2<f64>)>) -> Result<Self, TrackingError> {
        if !timestamp.is_finite() {
            return Err(TrackingError::InvalidArgument("non-finite pattern timestamp".into()));
        }
        let mut points: Vec<PatternPoint> = observations
            .into_iter()
            .map(|(index, image)| {
                if index >= board.num_circles() {
                    return Err(TrackingError::InvalidArgument(format!(
                        "circle index {index} outside a {}-circle board",
                        board.num_circles()
                    )));
                }
                if !image.iter().all(|v| v.is_finite()) {
                    return Err(TrackingError::InvalidArgument(format!("non-finite center for circle {index}")));
                }
                Ok(PatternPoint {
                    index,
                    image,
                    board: board.object_point(index),
                })
            })
            .collect::<Result<_, _>>()?;
        points.sort_by_key(|p| p.index);
        if points.windows(2).any(|w| w[0].index == w[1].index) {
            return Err(TrackingError::InvalidArgument(format!("duplicate circle index at t = {timestamp}")));
        }
        let complete = points.len() == board.num_circles();
        Ok(Self {
            timestamp,
            points,
            complete,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn image_point(&self, index: usize) -> Option<Vector2<f64>> {
        self.points
            .binary_search_by_key(&index, |p| p.index)
            .ok()
            .map(|i| self.points[i].image)
    }
}

/// Time-ordered patterns of one camera.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatternTrack {
    patterns: Vec<GridPattern>,
}

impl PatternTrack {
    pub fn new(mut patterns: Vec<GridPattern>) -> Result<Self, TrackingError> {
        patterns.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        if patterns.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(TrackingError::InvalidArgument("pattern timestamps must be distinct".into()));
        }
        Ok(Self { patterns })
    }

    pub fn patterns(&self) -> &[GridPattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn complete_count(&self) -> usize {
        self.patterns.iter().filter(|p| p.complete).count()
    }

    pub fn incomplete_count(&self) -> usize {
        self.len() - self.complete_count()
    }

    /// Observations of one circle across the track, in time order.
    pub fn circle_history(&self, index: usize) -> Vec<(f64, Vector2<f64>)> {
        self.patterns
            .iter()
            .filter_map(|p| p.image_point(index).map(|x| (p.timestamp, x)))
            .collect()
    }
}

/// Quadratic Lagrange inter/extrapolation through three samples.
pub fn lagrange_predict(samples: &[(f64, Vector2<f64>); 3], t: f64) -> Result<Vector2<f64>, TrackingError> {
    let ts = [samples[0].0, samples[1].0, samples[2].0];
    if ts[0] == ts[1] || ts[0] == ts[2] || ts[1] == ts[2] {
        return Err(TrackingError::InvalidArgument("Lagrange samples need distinct timestamps".into()));
    }
    let mut out = Vector2::zeros();
    for k in 0..3 {
        let mut w = 1.0;
        for l in 0..3 {
            if l != k {
                w *= (t - ts[l]) / (ts[k] - ts[l]);
            }
        }
        out += samples[k].1 * w;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    /// Association radius in pixels.
    pub association_threshold: f64,
    /// Minimum associated circles for an incomplete pattern; `None` uses
    /// [`BoardSpec::default_min_points`].
    pub min_points: Option<usize>,
    pub max_traversal_offset: usize,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            association_threshold: DEFAULT_ASSOCIATION_THRESHOLD,
            min_points: None,
            max_traversal_offset: DEFAULT_MAX_TRAVERSAL_OFFSET,
        }
    }
}

/// One accepted circle association.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association {
    pub timestamp: f64,
    pub circle: usize,
    /// Index of the consumed ellipse within its frame.
    pub ellipse: usize,
    pub predicted: Vector2<f64>,
    pub center: Vector2<f64>,
}

#[derive(Debug, Clone)]
pub struct TrackingOutcome {
    pub track: PatternTrack,
    pub associations: Vec<Association>,
    /// Full traversal passes run before reaching the fixed point.
    pub passes: usize,
}

struct Timeline<'a> {
    times: Vec<f64>,
    centers: Vec<&'a [Vector2<f64>]>,
}

impl<'a> Timeline<'a> {
    /// Frame times merged with pattern times; patterns without a matching
    /// frame get an empty one so they still anchor predictions.
    fn build(frames: &'a [EllipseFrame], patterns: &[GridPattern]) -> (Self, Vec<usize>) {
        let mut entries: Vec<(f64, &'a [Vector2<f64>])> =
            frames.iter().map(|f| (f.timestamp, f.centers.as_slice())).collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        for p in patterns {
            if !entries.iter().any(|e| (e.0 - p.timestamp).abs() <= TIME_MATCH_TOLERANCE) {
                entries.push((p.timestamp, &[]));
            }
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let times: Vec<f64> = entries.iter().map(|e| e.0).collect();
        let slots = patterns
            .iter()
            .map(|p| {
                let i = times.partition_point(|&t| t < p.timestamp - TIME_MATCH_TOLERANCE);
                debug_assert!((times[i] - p.timestamp).abs() <= TIME_MATCH_TOLERANCE);
                i
            })
            .collect();
        (
            Self {
                times,
                centers: entries.into_iter().map(|e| e.1).collect(),
            },
            slots,
        )
    }
}

/// Extends a pattern track with incomplete patterns found in `frames`.
pub fn track_incomplete(
    patterns: &PatternTrack,
    frames: &[EllipseFrame],
    board: &BoardSpec,
    config: &TrackingConfig,
) -> Result<PatternTrack, TrackingError> {
    Ok(track_incomplete_with_log(patterns, frames, board, config)?.track)
}

pub fn track_incomplete_with_log(
    patterns: &PatternTrack,
    frames: &[EllipseFrame],
    board: &BoardSpec,
    config: &TrackingConfig,
) -> Result<TrackingOutcome, TrackingError> {
    board.validate()?;
    if !(config.association_threshold > 0.0) {
        return Err(TrackingError::InvalidArgument("association threshold must be positive".into()));
    }
    let min_points = config.min_points.unwrap_or_else(|| board.default_min_points()).max(1);
    let (timeline, slots) = Timeline::build(frames, patterns.patterns());
    let mut track: BTreeMap<usize, GridPattern> = slots.into_iter().zip(patterns.patterns().iter().cloned()).collect();
    let mut associations = Vec::new();
    let mut passes = 0;
    loop {
        passes += 1;
        let mut pass_added = false;
        for offset in 2..=config.max_traversal_offset.max(2) {
            loop {
                let forward = sweep(&timeline, &mut track, offset as isize, board, config, min_points, &mut associations)?;
                let backward = sweep(&timeline, &mut track, -(offset as isize), board, config, min_points, &mut associations)?;
                if forward + backward == 0 {
                    break;
                }
                pass_added = true;
            }
        }
        if !pass_added {
            break;
        }
    }
    Ok(TrackingOutcome {
        track: PatternTrack {
            patterns: track.into_values().collect(),
        },
        associations,
        passes,
    })
}

/// One directional sweep over all track triples. Returns the number of new
/// patterns.
fn sweep(
    timeline: &Timeline,
    track: &mut BTreeMap<usize, GridPattern>,
    offset: isize,
    board: &BoardSpec,
    config: &TrackingConfig,
    min_points: usize,
    log: &mut Vec<Association>,
) -> Result<usize, TrackingError> {
    let mut added = 0;
    // Middle entry of the current triple.
    let mut cursor = if offset > 0 {
        track.keys().nth(1).copied()
    } else {
        track.keys().rev().nth(1).copied()
    };
    while let Some(mid) = cursor {
        let prev = track.range(..mid).next_back().map(|e| *e.0);
        let next = track.range(mid + 1..).next().map(|e| *e.0);
        let (Some(prev), Some(next)) = (prev, next) else {
            break;
        };
        let target = if offset > 0 {
            next.checked_add((offset - 1) as usize)
        } else {
            prev.checked_sub((-offset - 1) as usize)
        };
        if let Some(target) = target.filter(|t| *t < timeline.times.len() && !track.contains_key(t)) {
            let triple = [&track[&prev], &track[&mid], &track[&next]];
            if let Some((pattern, assoc)) = predict_and_associate(timeline, target, triple, board, config, min_points)? {
                track.insert(target, pattern);
                log.extend(assoc);
                added += 1;
            }
        }
        cursor = if offset > 0 {
            track.range(mid + 1..).next().map(|e| *e.0)
        } else {
            track.range(..mid).next_back().map(|e| *e.0)
        };
    }
    Ok(added)
}

fn predict_and_associate(
    timeline: &Timeline,
    target: usize,
    triple: [&GridPattern; 3],
    board: &BoardSpec,
    config: &TrackingConfig,
    min_points: usize,
) -> Result<Option<(GridPattern, Vec<Association>)>, TrackingError> {
    let centers = timeline.centers[target];
    if centers.len() < min_points {
        return Ok(None);
    }
    let t = timeline.times[target];
    let mut predictions = Vec::new();
    for p in &triple[1].points {
        let (Some(a), Some(c)) = (triple[0].image_point(p.index), triple[2].image_point(p.index)) else {
            continue;
        };
        let samples = [
            (triple[0].timestamp, a),
            (triple[1].timestamp, p.image),
            (triple[2].timestamp, c),
        ];
        predictions.push((p.index, lagrange_predict(&samples, t)?));
    }
    if predictions.len() < min_points {
        return Ok(None);
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, (_, pred)) in predictions.iter().enumerate() {
        for (ei, c) in centers.iter().enumerate() {
            let d = (c - pred).norm();
            if d <= config.association_threshold {
                candidates.push((d, pi, ei));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(predictions[a.1].0.cmp(&predictions[b.1].0)));
    let mut circle_used = vec![false; predictions.len()];
    let mut ellipse_used = vec![false; centers.len()];
    let mut assoc = Vec::new();
    for (_, pi, ei) in candidates {
        if circle_used[pi] || ellipse_used[ei] {
            continue;
        }
        circle_used[pi] = true;
        ellipse_used[ei] = true;
        assoc.push(Association {
            timestamp: t,
            circle: predictions[pi].0,
            ellipse: ei,
            predicted: predictions[pi].1,
            center: centers[ei],
        });
    }
    if assoc.len() < min_points {
        return Ok(None);
    }
    let pattern = GridPattern::new(board, t, assoc.iter().map(|a| (a.circle, a.center)).collect())?;
    Ok(Some((pattern, assoc)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CameraId {
    A,
    B,
}

impl CameraId {
    pub fn other(self) -> Self {
        match self {
            CameraId::A => CameraId::B,
            CameraId::B => CameraId::A,
        }
    }
}

/// The camera with strictly more patterns is the reference; ties go to A.
pub fn select_reference(a: &PatternTrack, b: &PatternTrack) -> Result<CameraId, TrackingError> {
    if a.is_empty() || b.is_empty() {
        return Err(TrackingError::InsufficientData(format!(
            "both cameras need patterns (A has {}, B has {})",
            a.len(),
            b.len()
        )));
    }
    Ok(if b.len() > a.len() { CameraId::B } else { CameraId::A })
}

/// Per-camera tracking rates relative to the number of ellipse frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingStats {
    pub frames: usize,
    pub complete: usize,
    pub incomplete: usize,
    pub complete_rate: f64,
    pub incomplete_rate: f64,
    pub total_rate: f64,
}

impl TrackingStats {
    pub fn new(track: &PatternTrack, frames: usize) -> Self {
        let complete = track.complete_count();
        let incomplete = track.incomplete_count();
        let denom = frames.max(1) as f64;
        Self {
            frames,
            complete,
            incomplete,
            complete_rate: complete as f64 / denom,
            incomplete_rate: incomplete as f64 / denom,
            total_rate: (complete + incomplete) as f64 / denom,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn board() -> BoardSpec {
        BoardSpec::new(3, 7, 0.05).unwrap()
    }

    #[test]
    fn object_points_layout() {
        let b = BoardSpec::new(2, 2, 1.0).unwrap();
        let pts = board_object_points(&b);
        let expected = [[0.0, 0.0], [1.0, 0.5], [0.0, 1.0], [1.0, 1.5]];
        for (p, e) in pts.iter().zip(expected) {
            assert_eq!([p.x, p.y, p.z], [e[0], e[1], 0.0]);
        }
        let pts = board_object_points(&board());
        assert_eq!(pts.len(), 21);
        let max_x = pts.iter().map(|p| p.x).fold(f64::MIN, f64::max);
        assert!((max_x - 0.30).abs() < 1e-15);
        assert!(pts.iter().all(|p| p.z == 0.0));
    }

    #[test]
    fn board_validation() {
        assert!(BoardSpec::new(1, 7, 0.05).is_err());
        assert!(BoardSpec::new(3, 7, 0.0).is_err());
        assert_eq!(board().default_min_points(), 7);
        assert_eq!(BoardSpec::new(2, 2, 1.0).unwrap().default_min_points(), 5);
    }

    #[test]
    fn pattern_rejects_bad_indices() {
        let b = board();
        assert!(GridPattern::new(&b, 0.0, vec![(21, Vector2::zeros())]).is_err());
        assert!(GridPattern::new(&b, 0.0, vec![(1, Vector2::zeros()), (1, Vector2::zeros())]).is_err());
        let p = GridPattern::new(&b, 0.0, vec![(3, Vector2::new(1.0, 2.0)), (0, Vector2::zeros())]).unwrap();
        assert!(!p.complete);
        assert_eq!(p.points[0].index, 0);
        assert_eq!(p.points[1].board, b.object_point(3));
    }

    #[test]
    fn lagrange_examples() {
        let s = [
            (0.0, Vector2::new(0.0, 0.0)),
            (1.0, Vector2::new(1.0, 0.0)),
            (2.0, Vector2::new(4.0, 0.0)),
        ];
        let p = lagrange_predict(&s, 3.0).unwrap();
        assert!((p - Vector2::new(9.0, 0.0)).norm() < 1e-12);
        let c = Vector2::new(3.5, -2.0);
        let s = [(0.1, c), (0.4, c), (0.45, c)];
        assert!((lagrange_predict(&s, 0.6).unwrap() - c).norm() < 1e-12);
        let s = [(0.1, c), (0.1, c), (0.45, c)];
        assert!(lagrange_predict(&s, 7.0).is_err());
    }

    proptest! {
        #[test]
        fn lagrange_reproduces_quadratics(
            a in -100.0..100.0f64, b in -100.0..100.0f64, c in -100.0..100.0f64,
            t0 in 0.0..1.0f64, d1 in 0.005..0.05f64, d2 in 0.005..0.05f64, dq in -0.1..0.1f64,
        ) {
            let f = |t: f64| Vector2::new(a * t * t + b * t + c, -b * t * t + c * t + a);
            let ts = [t0, t0 + d1, t0 + d1 + d2];
            let s = [(ts[0], f(ts[0])), (ts[1], f(ts[1])), (ts[2], f(ts[2]))];
            let tq = ts[2] + dq;
            prop_assert!((lagrange_predict(&s, tq).unwrap() - f(tq)).norm() < 1e-10);
        }
    }

    /// Circle `j` moves along a quadratic image-space path.
    fn quadratic_center(j: usize, t: f64) -> Vector2<f64> {
        let base = Vector2::new(40.0 + 20.0 * (j % 7) as f64, 50.0 + 30.0 * (j / 7) as f64);
        base + Vector2::new(30.0 * t + 40.0 * t * t, -20.0 * t + 25.0 * t * t)
    }

    fn frames_and_patterns(
        n: usize,
        dt: f64,
        keep: impl Fn(usize, usize) -> bool,
    ) -> (Vec<EllipseFrame>, PatternTrack) {
        let b = board();
        let mut frames = Vec::new();
        let mut patterns = Vec::new();
        for f in 0..n {
            let t = f as f64 * dt;
            let visible: Vec<usize> = (0..21).filter(|&j| keep(f, j)).collect();
            let centers: Vec<Vector2<f64>> = visible.iter().rev().map(|&j| quadratic_center(j, t)).collect();
            if visible.len() == 21 {
                patterns.push(GridPattern::new(&b, t, visible.iter().map(|&j| (j, quadratic_center(j, t))).collect()).unwrap());
            }
            frames.push(EllipseFrame { timestamp: t, centers });
        }
        (frames, PatternTrack::new(patterns).unwrap())
    }

    #[test]
    fn no_extra_frames_returns_input() {
        let (frames, track) = frames_and_patterns(10, 0.01, |_, _| true);
        let out = track_incomplete(&track, &frames, &board(), &TrackingConfig::default()).unwrap();
        assert_eq!(out, track);
        let out = track_incomplete(&track, &[], &board(), &TrackingConfig::default()).unwrap();
        assert_eq!(out, track);
    }

    #[test]
    fn recovers_survivors_in_dropout_frame() {
        // Frame 5 loses circles 0..6 (30% of the board).
        let (frames, track) = frames_and_patterns(12, 0.01, |f, j| !(f == 5 && j < 7));
        assert_eq!(track.len(), 11);
        let out = track_incomplete(&track, &frames, &board(), &TrackingConfig::default()).unwrap();
        assert_eq!(out.len(), 12);
        let p = out.patterns().iter().find(|p| !p.complete).unwrap();
        assert!((p.timestamp - 0.05).abs() < 1e-15);
        let idx: Vec<usize> = p.points.iter().map(|q| q.index).collect();
        assert_eq!(idx, (7..21).collect::<Vec<_>>());
        for q in &p.points {
            assert_eq!(q.image, quadratic_center(q.index, p.timestamp));
        }
        // With a higher bar the same frame is rejected.
        let strict = TrackingConfig {
            min_points: Some(15),
            ..Default::default()
        };
        assert_eq!(track_incomplete(&track, &frames, &board(), &strict).unwrap().len(), 11);
    }

    #[test]
    fn chains_through_consecutive_gaps() {
        // Frames 6..=9 are all incomplete; forward and backward sweeps must
        // chain predictions through them.
        let (frames, track) = frames_and_patterns(16, 0.01, |f, j| !((6..=9).contains(&f) && j % 3 == 0));
        let out = track_incomplete_with_log(&track, &frames, &board(), &TrackingConfig::default()).unwrap();
        assert_eq!(out.track.len(), 16);
        assert!(out.associations.iter().all(|a| (a.predicted - a.center).norm() < 1e-9));
    }

    #[test]
    fn spurious_ellipses_are_not_consumed_twice() {
        let (mut frames, track) = frames_and_patterns(10, 0.01, |f, j| !(f == 4 && j < 5));
        // Decoy close to circle 10's true position.
        let decoy = quadratic_center(10, 0.04) + Vector2::new(0.5, 0.0);
        frames[4].centers.push(decoy);
        let out = track_incomplete_with_log(&track, &frames, &board(), &TrackingConfig::default()).unwrap();
        let p = out.track.patterns().iter().find(|p| !p.complete).unwrap();
        assert_eq!(p.image_point(10), Some(quadratic_center(10, 0.04)));
        let mut used: Vec<usize> = out.associations.iter().map(|a| a.ellipse).collect();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), out.associations.len());
    }

    #[test]
    fn idempotent_on_own_output() {
        let (frames, track) = frames_and_patterns(30, 0.01, |f, j| (f * 7 + j * 3) % 11 != 0);
        let cfg = TrackingConfig::default();
        let once = track_incomplete(&track, &frames, &board(), &cfg).unwrap();
        let twice = track_incomplete(&once, &frames, &board(), &cfg).unwrap();
        assert_eq!(once, twice);
        for p in track.patterns() {
            assert!(once.patterns().contains(p));
        }
    }

    #[test]
    fn reference_selection() {
        let (_, track) = frames_and_patterns(10, 0.01, |_, _| true);
        let (_, fewer) = frames_and_patterns(8, 0.01, |_, _| true);
        assert_eq!(select_reference(&track, &fewer).unwrap(), CameraId::A);
        assert_eq!(select_reference(&fewer, &track).unwrap(), CameraId::B);
        assert_eq!(select_reference(&track, &track).unwrap(), CameraId::A);
        assert!(select_reference(&track, &PatternTrack::default()).is_err());
    }

    #[test]
    fn rates() {
        let (frames, track) = frames_and_patterns(10, 0.01, |f, j| !(f == 3 && j == 0));
        let s = TrackingStats::new(&track, frames.len());
        assert_eq!(s.complete, 9);
        assert!((s.complete_rate - 0.9).abs() < 1e-15);
    }
}
