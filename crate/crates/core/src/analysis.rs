//! Trajectory shape analysis and dataset balancing.
//!
//! A trajectory's camera centers are split at sharp corners (keypoints) into
//! roughly straight segments. The longest segment gives the primary direction;
//! the turn into the following segment gives the main turn. Together they
//! place the trajectory in one of `6 × 5` categories, and over-represented
//! categories are pruned by an importance score.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotation_geodesic, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("line fit needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("all points coincide; line direction undefined")]
    DegeneratePoints,
    #[error("trajectory has {0} frames, need at least 2")]
    TrajectoryTooShort(usize),
    #[error("keypoints must be sorted and strictly inside (0, {last}), got {keypoints:?}")]
    InvalidKeypoints { keypoints: Vec<usize>, last: usize },
    #[error("invalid analysis parameters: {0}")]
    InvalidParams(String),
    #[error("balance cap must be at least 1")]
    ZeroCap,
    #[error("no profiles to balance")]
    NoProfiles,
}

/// Primary-direction sectors, by dominant axis in first-frame camera
/// coordinates (x right, y down, z forward).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionBin {
    Forward,
    Backward,
    Left,
    Right,
    Up,
    Down,
}

impl DirectionBin {
    pub const COUNT: usize = 6;
    pub const ALL: [DirectionBin; 6] = [Self::Forward, Self::Backward, Self::Left, Self::Right, Self::Up, Self::Down];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Forward => "forward",
            Self::Backward => "backward",
            Self::Left => "left",
            Self::Right => "right",
            Self::Up => "up",
            Self::Down => "down",
        }
    }

    pub fn classify(dir_cam: &Vector3<f64>) -> Self {
        let a = dir_cam.abs();
        if a.z >= a.x && a.z >= a.y {
            if dir_cam.z >= 0.0 { Self::Forward } else { Self::Backward }
        } else if a.x >= a.y {
            if dir_cam.x >= 0.0 { Self::Right } else { Self::Left }
        } else if dir_cam.y >= 0.0 {
            Self::Down
        } else {
            Self::Up
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnBin {
    None,
    Left,
    Right,
    Up,
    Down,
}

impl TurnBin {
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Left => "left",
            Self::Right => "right",
            Self::Up => "up",
            Self::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisParams {
    /// Points on each side of a candidate keypoint used for the line fits.
    pub n: usize,
    /// Keypoint angle threshold, degrees.
    pub gamma_deg: f64,
    /// Accumulated rotation per counted view change, degrees.
    pub view_change_threshold_deg: f64,
    /// Turns smaller than this fall in [`TurnBin::None`], degrees.
    pub min_turn_deg: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self { n: 6, gamma_deg: 15.0, view_change_threshold_deg: 20.0, min_turn_deg: 15.0 }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |m: &str| Err(AnalysisError::InvalidParams(m.into()));
        if self.n < 2 {
            return bad("n must be >= 2");
        }
        if !(self.gamma_deg > 0.0 && self.gamma_deg < 180.0) {
            return bad("gamma must lie in (0, 180)");
        }
        if !(self.view_change_threshold_deg > 0.0 && self.view_change_threshold_deg.is_finite()) {
            return bad("view_change_threshold must be positive");
        }
        if !(self.min_turn_deg >= 0.0 && self.min_turn_deg < 180.0) {
            return bad("min_turn must lie in [0, 180)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub start_idx: usize,
    pub end_idx: usize,
    pub direction: Vector3<f64>,
    pub arc_length: f64,
    pub view_change_count: usize,
    /// Zero-motion segment whose direction was inherited.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryProfile {
    pub keypoints: Vec<usize>,
    pub segments: Vec<TrajectorySegment>,
    pub primary_segment: usize,
    pub direction_bin: DirectionBin,
    pub turn_bin: TurnBin,
    /// Unsigned turn angle into the segment after the primary one, degrees.
    pub main_turn_deg: f64,
    pub importance: f64,
    pub category: usize,
}

/// Total-least-squares line through `points`. The direction is the principal
/// axis of the scatter, oriented so that it points from the first point
/// towards the last.
pub fn fit_line(points: &[Vector3<f64>]) -> Result<(Vector3<f64>, Vector3<f64>), AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::TooFewPoints(points.len()));
    }
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let spread = cov.trace();
    let scale = points.iter().map(|p| p.norm_squared()).fold(0.0, f64::max);
    if spread <= 1e-24 * (1.0 + scale) {
        return Err(AnalysisError::DegeneratePoints);
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imax();
    let mut dir: Vector3<f64> = eig.eigenvectors.column(k).into_owned().normalize();
    let travel = points[points.len() - 1] - points[0];
    let along = if travel.norm_squared() > 0.0 {
        dir.dot(&travel)
    } else {
        // Closed loop: orient by the first step that is not orthogonal.
        points.windows(2).map(|w| dir.dot(&(w[1] - w[0]))).find(|d| *d != 0.0).unwrap_or(0.0)
    };
    if along < 0.0 {
        dir = -dir;
    }
    Ok((centroid, dir))
}

fn angle_deg(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let cos = a.dot(b);
    let sin = a.cross(b).norm();
    sin.atan2(cos).to_degrees()
}

/// Per-position corner angles; `None` where the windows do not fit or a fit
/// is degenerate.
pub fn keypoint_angles(centers: &[Vector3<f64>], n: usize) -> Vec<Option<f64>> {
    let len = centers.len();
    (0..len)
        .map(|i| {
            if i < n || i + n >= len {
                return None;
            }
            let (_, before) = fit_line(&centers[i - n..=i]).ok()?;
            let (_, after) = fit_line(&centers[i..=i + n]).ok()?;
            Some(angle_deg(&before, &after))
        })
        .collect()
}

/// Positions where the lines fitted to the `n` preceding and `n` following
/// camera centers meet at more than `gamma`. Each contiguous run of
/// above-threshold positions yields its single sharpest position.
pub fn detect_keypoints(traj: &Trajectory, params: &AnalysisParams) -> Result<Vec<usize>, AnalysisError> {
    params.validate()?;
    let centers = traj.camera_centers();
    let angles = keypoint_angles(&centers, params.n);
    let mut keypoints = Vec::new();
    let mut run: Option<(usize, f64)> = None;
    for (i, a) in angles.iter().enumerate() {
        match a {
            Some(angle) if *angle > params.gamma_deg => {
                run = match run {
                    Some((_, best)) if best >= *angle => run,
                    _ => Some((i, *angle)),
                };
            }
            _ => {
                if let Some((pos, _)) = run.take() {
                    keypoints.push(pos);
                }
            }
        }
    }
    if let Some((pos, _)) = run {
        keypoints.push(pos);
    }
    Ok(keypoints)
}

/// Splits the trajectory at `keypoints`. Neighboring segments share their
/// boundary frame; every frame-to-frame step belongs to exactly one segment.
pub fn segment_trajectory(
    traj: &Trajectory,
    keypoints: &[usize],
    params: &AnalysisParams,
) -> Result<Vec<TrajectorySegment>, AnalysisError> {
    let len = traj.len();
    if len < 2 {
        return Err(AnalysisError::TrajectoryTooShort(len));
    }
    let last = len - 1;
    let sorted = keypoints.windows(2).all(|w| w[0] < w[1]);
    if !sorted || keypoints.iter().any(|&k| k == 0 || k >= last) {
        return Err(AnalysisError::InvalidKeypoints { keypoints: keypoints.to_vec(), last });
    }
    let centers = traj.camera_centers();
    let rotations = traj.rotations();
    // First frame's optical axis in world coordinates.
    let fallback = rotations[0].transpose() * Vector3::z();

    let mut bounds = Vec::with_capacity(keypoints.len() + 2);
    bounds.push(0);
    bounds.extend_from_slice(keypoints);
    bounds.push(last);

    let mut segments: Vec<TrajectorySegment> = Vec::with_capacity(bounds.len() - 1);
    for w in bounds.windows(2) {
        let (start, end) = (w[0], w[1]);
        let pts = &centers[start..=end];
        let arc_length: f64 = pts.windows(2).map(|p| (p[1] - p[0]).norm()).sum();
        let (direction, degenerate) = match fit_line(pts) {
            Ok((_, d)) => (d, false),
            Err(_) => (segments.last().map_or(fallback, |s| s.direction), true),
        };
        let turned: f64 = (start..end).map(|i| rotation_geodesic(&rotations[i], &rotations[i + 1])).sum();
        let view_change_count = (turned / params.view_change_threshold_deg + 1e-9).floor() as usize;
        segments.push(TrajectorySegment {
            start_idx: start,
            end_idx: end,
            direction,
            arc_length,
            view_change_count,
            degenerate,
        });
    }
    Ok(segments)
}

/// Bins the turn from `from` into `to` (both first-frame camera coordinates)
/// by where the new direction leans relative to the old one.
fn classify_turn(from: &Vector3<f64>, to: &Vector3<f64>, min_turn_deg: f64) -> (TurnBin, f64) {
    let angle = angle_deg(from, to);
    if angle < min_turn_deg {
        return (TurnBin::None, angle);
    }
    let up_cam = Vector3::new(0.0, -1.0, 0.0);
    let mut right = from.cross(&up_cam);
    if right.norm() < 1e-9 {
        // Vertical travel: use the camera x-axis as the lateral reference.
        right = Vector3::x() - from * from.x;
    }
    let right = right.normalize();
    let up = right.cross(from).normalize();
    let lateral = to.dot(&right);
    let vertical = to.dot(&up);
    let bin = if lateral.abs() >= vertical.abs() {
        if lateral >= 0.0 { TurnBin::Right } else { TurnBin::Left }
    } else if vertical >= 0.0 {
        TurnBin::Up
    } else {
        TurnBin::Down
    };
    (bin, angle)
}

pub fn classify_trajectory(traj: &Trajectory, params: &AnalysisParams) -> Result<TrajectoryProfile, AnalysisError> {
    params.validate()?;
    if traj.len() < 2 {
        return Err(AnalysisError::TrajectoryTooShort(traj.len()));
    }
    let keypoints = detect_keypoints(traj, params)?;
    let segments = segment_trajectory(traj, &keypoints, params)?;
    let r0 = traj.frames()[0].pose.rotation;
    let in_first_cam: Vec<Vector3<f64>> = segments.iter().map(|s| r0 * s.direction).collect();

    // Arc lengths equal up to rounding count as ties, which go to the earliest.
    let mut primary = 0;
    for (i, s) in segments.iter().enumerate() {
        let best = segments[primary].arc_length;
        if s.arc_length > best + 1e-9 * best.max(1.0) {
            primary = i;
        }
    }
    let direction_bin = DirectionBin::classify(&in_first_cam[primary]);
    let (turn_bin, main_turn_deg) = match in_first_cam.get(primary + 1) {
        Some(next) => classify_turn(&in_first_cam[primary], next, params.min_turn_deg),
        None => (TurnBin::None, 0.0),
    };
    let turn_total: f64 = in_first_cam.windows(2).map(|w| angle_deg(&w[0], &w[1])).sum();
    let view_changes: usize = segments.iter().map(|s| s.view_change_count).sum();
    let importance = turn_total + params.view_change_threshold_deg * view_changes as f64;

    Ok(TrajectoryProfile {
        keypoints,
        category: direction_bin.index() * TurnBin::COUNT + turn_bin.index(),
        segments,
        primary_segment: primary,
        direction_bin,
        turn_bin,
        main_turn_deg,
        importance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceCap {
    Fixed(usize),
    /// Median of the non-empty category counts (lower median), at least 1.
    Auto,
}

impl std::str::FromStr for BalanceCap {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Self::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) => Err(AnalysisError::ZeroCap),
            Ok(n) => Ok(Self::Fixed(n)),
            Err(_) => Err(AnalysisError::InvalidParams(format!("cap must be a positive integer or \"auto\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResult {
    pub cap: usize,
    pub keep: Vec<usize>,
    pub drop: Vec<usize>,
    /// Per-category counts before and after pruning.
    pub histogram_before: BTreeMap<usize, usize>,
    pub histogram_after: BTreeMap<usize, usize>,
}

/// Minimal view of a profile needed for balancing.
pub trait Balanceable {
    fn category(&self) -> usize;
    fn importance(&self) -> f64;
}

impl Balanceable for TrajectoryProfile {
    fn category(&self) -> usize {
        self.category
    }

    fn importance(&self) -> f64 {
        self.importance
    }
}

impl Balanceable for (usize, f64) {
    fn category(&self) -> usize {
        self.0
    }

    fn importance(&self) -> f64 {
        self.1
    }
}

/// Caps every category at `cap` members by dropping its least important
/// ones (lower index first on ties). `keep` and `drop` are sorted.
pub fn balance_dataset<P: Balanceable>(profiles: &[P], cap: BalanceCap) -> Result<BalanceResult, AnalysisError> {
    if profiles.is_empty() {
        return Err(AnalysisError::NoProfiles);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in profiles.iter().enumerate() {
        groups.entry(p.category()).or_default().push(i);
    }
    let cap = match cap {
        BalanceCap::Fixed(0) => return Err(AnalysisError::ZeroCap),
        BalanceCap::Fixed(n) => n,
        BalanceCap::Auto => {
            let mut counts: Vec<usize> = groups.values().map(Vec::len).collect();
            counts.sort_unstable();
            counts[(counts.len() - 1) / 2].max(1)
        }
    };
    let histogram_before = groups.iter().map(|(&c, m)| (c, m.len())).collect();
    let mut drop = Vec::new();
    for members in groups.values_mut() {
        if members.len() <= cap {
            continue;
        }
        members.sort_by(|&a, &b| profiles[a].importance().total_cmp(&profiles[b].importance()).then(a.cmp(&b)));
        let excess = members.len() - cap;
        drop.extend(members.drain(..excess));
    }
    drop.sort_unstable();
    let mut keep: Vec<usize> = groups.values().flatten().copied().collect();
    keep.sort_unstable();
    let histogram_after = groups.iter().map(|(&c, m)| (c, m.len())).collect();
    Ok(BalanceResult { cap, keep, drop, histogram_before, histogram_after })
}
