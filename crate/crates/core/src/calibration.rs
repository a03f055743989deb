//! Metric-scale calibration of SfM trajectories.
//!
//! Each keyframe contributes a scale `s_i` minimizing the Huber loss of
//! `s·S(p) − M(p)` between SfM depth `S` and metric depth `M`. The minimizer is
//! found robustly: 1-point RANSAC picks the hypothesis with the largest
//! consensus, then iteratively reweighted least squares refines it over the
//! inliers. The scene scale is the mean of the per-keyframe scales.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{apply_scale, GeometryError, Trajectory};

/// Frames with fewer valid pixels than this are rejected.
pub const MIN_VALID_PIXELS: usize = 32;
/// Valid pixels are uniformly subsampled down to this many before RANSAC.
pub const MAX_SAMPLED_PIXELS: usize = 20_000;

const IRLS_REL_TOL: f64 = 1e-8;
const IRLS_MAX_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("depth maps have mismatched shapes")]
    ShapeMismatch,
    #[error("valid pixel has non-positive or non-finite depth at index {0}")]
    InvalidDepth(usize),
    #[error("only {found} valid pixels, need at least {MIN_VALID_PIXELS}")]
    TooFewValidPixels { found: usize },
    #[error("best hypothesis has inlier ratio {ratio:.4}, below minimum {min:.4}")]
    InsufficientInliers { ratio: f64, min: f64 },
    #[error("invalid RANSAC parameters: {0}")]
    InvalidParams(String),
    #[error("no scales to average")]
    NoScales,
    #[error("non-positive scale {0} in list")]
    NonPositiveScale(f64),
    #[error("no keyframes supplied")]
    NoKeyframes,
    #[error("keyframe {0} not present in trajectory")]
    MissingKeyframe(u64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Co-registered SfM and metric depth for one keyframe, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPair {
    h: usize,
    w: usize,
    sfm: Vec<f64>,
    metric: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthPair {
    pub fn new(
        h: usize,
        w: usize,
        sfm: Vec<f64>,
        metric: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self, CalibrationError> {
        let n = h * w;
        if sfm.len() != n || metric.len() != n || valid.len() != n {
            return Err(CalibrationError::ShapeMismatch);
        }
        for i in (0..n).filter(|&i| valid[i]) {
            let ok = |d: f64| d.is_finite() && d > 0.0;
            if !ok(sfm[i]) || !ok(metric[i]) {
                return Err(CalibrationError::InvalidDepth(i));
            }
        }
        Ok(Self { h, w, sfm, metric, valid })
    }

    /// Builds a pair whose validity is "both depths finite and positive".
    pub fn from_depths(h: usize, w: usize, sfm: Vec<f64>, metric: Vec<f64>) -> Result<Self, CalibrationError> {
        if sfm.len() != h * w || metric.len() != h * w {
            return Err(CalibrationError::ShapeMismatch);
        }
        let valid = sfm
            .iter()
            .zip(&metric)
            .map(|(&s, &m)| s.is_finite() && s > 0.0 && m.is_finite() && m > 0.0)
            .collect();
        Self::new(h, w, sfm, metric, valid)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// `(sfm, metric)` samples at valid pixels, in raster order.
    pub fn valid_samples(&self) -> Vec<(f64, f64)> {
        (0..self.valid.len())
            .filter(|&i| self.valid[i])
            .map(|i| (self.sfm[i], self.metric[i]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier band as a fraction of the metric depth.
    pub inlier_threshold_rel: f64,
    /// Huber knot in meters.
    pub huber_delta: f64,
    pub min_inlier_ratio: f64,
    pub rng_seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 1024,
            inlier_threshold_rel: 0.05,
            huber_delta: 0.5,
            min_inlier_ratio: 0.3,
            rng_seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: &str| Err(CalibrationError::InvalidParams(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if !(self.inlier_threshold_rel > 0.0 && self.inlier_threshold_rel < 1.0) {
            return bad("inlier_threshold_rel must lie in (0, 1)");
        }
        if !(self.huber_delta > 0.0 && self.huber_delta.is_finite()) {
            return bad("huber_delta must be positive");
        }
        if !(0.0..=1.0).contains(&self.min_inlier_ratio) {
            return bad("min_inlier_ratio must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Huber loss: quadratic inside `|r| ≤ delta`, linear outside.
pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// `Σ ρ(|s·S − M|)` over the given samples.
pub fn huber_objective(samples: &[(f64, f64)], s: f64, delta: f64) -> f64 {
    samples.iter().map(|&(sfm, metric)| huber(s * sfm - metric, delta)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScale {
    pub scale: f64,
    pub inlier_count: usize,
    pub inlier_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyframeScale {
    pub frame_index: u64,
    pub scale: f64,
    pub inlier_count: usize,
    pub inlier_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub per_frame: Vec<KeyframeScale>,
    pub scene_scale: f64,
}

fn count_inliers(samples: &[(f64, f64)], s: f64, rel: f64) -> usize {
    samples
        .iter()
        .filter(|&&(sfm, metric)| (s * sfm - metric).abs() <= rel * metric)
        .count()
}

/// IRLS for the 1-D Huber problem: with weights `w = min(1, δ/|r|)` the
/// weighted least-squares update is `s = Σ w·S·M / Σ w·S²`.
fn refine_huber(samples: &[(f64, f64)], mut s: f64, delta: f64) -> f64 {
    for _ in 0..IRLS_MAX_ITERS {
        let (mut num, mut den) = (0.0, 0.0);
        for &(sfm, metric) in samples {
            let r = (s * sfm - metric).abs();
            let w = if r <= delta { 1.0 } else { delta / r };
            num += w * sfm * metric;
            den += w * sfm * sfm;
        }
        let next = num / den;
        let converged = (next - s).abs() <= IRLS_REL_TOL * next.abs();
        s = next;
        if converged {
            break;
        }
    }
    s
}

/// Robust per-keyframe scale. Deterministic for a fixed `params.rng_seed`.
pub fn frame_scale(pair: &DepthPair, params: &RansacParams) -> Result<FrameScale, CalibrationError> {
    params.validate()?;
    let mut samples = pair.valid_samples();
    if samples.len() < MIN_VALID_PIXELS {
        return Err(CalibrationError::TooFewValidPixels { found: samples.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    if samples.len() > MAX_SAMPLED_PIXELS {
        let mut picked = index::sample(&mut rng, samples.len(), MAX_SAMPLED_PIXELS).into_vec();
        picked.sort_unstable();
        samples = picked.into_iter().map(|i| samples[i]).collect();
    }

    let mut best: Option<(f64, usize, f64)> = None;
    for _ in 0..params.iterations {
        let (sfm, metric) = samples[rng.random_range(0..samples.len())];
        let s = metric / sfm;
        let count = count_inliers(&samples, s, params.inlier_threshold_rel);
        best = match best {
            None => Some((s, count, huber_objective(&samples, s, params.huber_delta))),
            Some((_, best_count, _)) if count > best_count => {
                Some((s, count, huber_objective(&samples, s, params.huber_delta)))
            }
            Some((_, best_count, best_obj)) if count == best_count => {
                let obj = huber_objective(&samples, s, params.huber_delta);
                if obj < best_obj {
                    Some((s, count, obj))
                } else {
                    best
                }
            }
            keep => keep,
        };
    }
    let (hypothesis, inlier_count, _) = best.expect("iterations >= 1");
    let inlier_ratio = inlier_count as f64 / samples.len() as f64;
    if inlier_ratio < params.min_inlier_ratio {
        return Err(CalibrationError::InsufficientInliers { ratio: inlier_ratio, min: params.min_inlier_ratio });
    }

    let inliers: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|&(sfm, metric)| (hypothesis * sfm - metric).abs() <= params.inlier_threshold_rel * metric)
        .collect();
    let scale = refine_huber(&inliers, hypothesis, params.huber_delta);
    Ok(FrameScale { scale, inlier_count, inlier_ratio })
}

/// Arithmetic mean of per-keyframe scales.
pub fn scene_scale(per_frame: &[f64]) -> Result<f64, CalibrationError> {
    if per_frame.is_empty() {
        return Err(CalibrationError::NoScales);
    }
    if let Some(&bad) = per_frame.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        return Err(CalibrationError::NonPositiveScale(bad));
    }
    Ok(per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

/// Estimates the scene scale from keyframe depth pairs and rescales the
/// trajectory. Keyframe `k` uses seed `params.rng_seed + frame_index`.
pub fn calibrate_trajectory(
    traj: &Trajectory,
    keyframe_pairs: &[(u64, DepthPair)],
    params: &RansacParams,
) -> Result<(Trajectory, ScaleEstimate), CalibrationError> {
    if keyframe_pairs.is_empty() {
        return Err(CalibrationError::NoKeyframes);
    }
    if let Some(&(missing, _)) = keyframe_pairs.iter().find(|(idx, _)| traj.position_of(*idx).is_none()) {
        return Err(CalibrationError::MissingKeyframe(missing));
    }
    let per_frame = keyframe_pairs
        .iter()
        .map(|(frame_index, pair)| {
            let p = RansacParams { rng_seed: params.rng_seed.wrapping_add(*frame_index), ..*params };
            frame_scale(pair, &p).map(|fs| KeyframeScale {
                frame_index: *frame_index,
                scale: fs.scale,
                inlier_count: fs.inlier_count,
                inlier_ratio: fs.inlier_ratio,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let scales: Vec<f64> = per_frame.iter().map(|k| k.scale).collect();
    let scene = scene_scale(&scales)?;
    let calibrated = apply_scale(traj, scene)?;
    Ok((calibrated, ScaleEstimate { per_frame, scene_scale: scene }))
}
