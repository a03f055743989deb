//! Evaluation metrics: aligned trajectory errors, flow-based motion scores,
//! geometric-consistency ratio and appearance consistency.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotation_geodesic, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("estimated positions have zero variance")]
    ZeroVariance,
    #[error("shape mismatch at frame {frame}: flow {flow:?} vs mask {mask:?}")]
    ShapeMismatch { frame: usize, flow: (usize, usize), mask: (usize, usize) },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("feature dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("clip {0} has a zero-norm video feature")]
    ZeroNormFeature(usize),
    #[error("empty input")]
    Empty,
}

/// Sum with Neumaier compensation; keeps reductions stable regardless of
/// how the input was chunked.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

/// Similarity transform `gt ≈ s·R·est + t` with per-point residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub residuals: Vec<f64>,
    /// Ground truth is (near) collinear, so rotation about that line is not
    /// determined by the data.
    pub degenerate: bool,
}

impl AlignmentResult {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

/// Closed-form least-squares similarity alignment of `est` onto `gt`
/// (centering, SVD of the cross-covariance, reflection guard, variance-ratio
/// scale).
pub fn align_similarity(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Result<AlignmentResult, MetricsError> {
    if est.len() != gt.len() {
        return Err(MetricsError::LengthMismatch(est.len(), gt.len()));
    }
    if est.len() < 3 {
        return Err(MetricsError::TooFew { need: 3, got: est.len() });
    }
    if est.iter().chain(gt).any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(MetricsError::NonFinite("positions"));
    }
    let n = est.len() as f64;
    let mu_est = est.iter().sum::<Vector3<f64>>() / n;
    let mu_gt = gt.iter().sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::zeros();
    let mut gt_scatter = Matrix3::zeros();
    let mut var_est = 0.0;
    for (e, g) in est.iter().zip(gt) {
        let de = e - mu_est;
        let dg = g - mu_gt;
        cov += dg * de.transpose();
        gt_scatter += dg * dg.transpose();
        var_est += de.norm_squared();
    }
    if var_est <= f64::EPSILON * (1.0 + mu_est.norm_squared()) * n {
        return Err(MetricsError::ZeroVariance);
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let d = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let sign = Vector3::new(1.0, 1.0, d);
    let rotation = u * Matrix3::from_diagonal(&sign) * v_t;
    let scale = svd.singular_values.dot(&sign) / var_est;
    let translation = mu_gt - scale * (rotation * mu_est);

    let gt_eig = gt_scatter.symmetric_eigenvalues();
    let mut ev: Vec<f64> = gt_eig.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let degenerate = ev[1] <= 1e-12 * ev[0].max(f64::MIN_POSITIVE);

    let residuals = est
        .iter()
        .zip(gt)
        .map(|(e, g)| (g - (scale * (rotation * e) + translation)).norm())
        .collect();
    Ok(AlignmentResult { scale, rotation, translation, residuals, degenerate })
}

/// Mean of aligned position residuals.
pub fn trans_err(residuals: &[f64]) -> Result<f64, MetricsError> {
    if residuals.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(residuals.iter().copied().collect::<CompensatedSum>().value() / residuals.len() as f64)
}

/// Mean geodesic angle, degrees, between ground-truth orientations and
/// estimated orientations carried into the ground-truth world frame by
/// `alignment` (world→camera `R_est·alignmentᵀ`). Pass the identity to compare
/// raw orientations.
pub fn rot_err(est: &[Matrix3<f64>], gt: &[Matrix3<f64>], alignment: &Matrix3<f64>) -> Result<f64, MetricsError> {
    if est.len() != gt.len() {
        return Err(MetricsError::LengthMismatch(est.len(), gt.len()));
    }
    if est.is_empty() {
        return Err(MetricsError::Empty);
    }
    let a_t = alignment.transpose();
    let sum: CompensatedSum = est.iter().zip(gt).map(|(e, g)| rotation_geodesic(g, &(e * a_t))).collect();
    Ok(sum.value() / est.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryErrors {
    pub trans_err: f64,
    pub rot_err_deg: f64,
    pub alignment: AlignmentResult,
}

/// TransErr/RotErr of `est` against `gt` after similarity alignment of the
/// camera centers. With `align_rotations = false` orientations are compared
/// without applying the alignment rotation.
pub fn evaluate_trajectory(
    est: &Trajectory,
    gt: &Trajectory,
    align_rotations: bool,
) -> Result<TrajectoryErrors, MetricsError> {
    let alignment = align_similarity(&est.camera_centers(), &gt.camera_centers())?;
    let correction = if align_rotations { alignment.rotation } else { Matrix3::identity() };
    Ok(TrajectoryErrors {
        trans_err: trans_err(&alignment.residuals)?,
        rot_err_deg: rot_err(&est.rotations(), &gt.rotations(), &correction)?,
        alignment,
    })
}

/// Dense optical flow, row-major, pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    h: usize,
    w: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(h: usize, w: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self, MetricsError> {
        if u.len() != h * w {
            return Err(MetricsError::LengthMismatch(u.len(), h * w));
        }
        if v.len() != h * w {
            return Err(MetricsError::LengthMismatch(v.len(), h * w));
        }
        if !u.iter().chain(&v).all(|x| x.is_finite()) {
            return Err(MetricsError::NonFinite("flow"));
        }
        Ok(Self { h, w, u, v })
    }

    pub fn uniform(h: usize, w: usize, u: f64, v: f64) -> Self {
        Self { h, w, u: vec![u; h * w], v: vec![v; h * w] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn magnitude(&self, i: usize) -> f64 {
        self.u[i].hypot(self.v[i])
    }
}

/// `true` marks dynamic foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct SegMask {
    h: usize,
    w: usize,
    fg: Vec<bool>,
}

impl SegMask {
    pub fn new(h: usize, w: usize, fg: Vec<bool>) -> Result<Self, MetricsError> {
        if fg.len() != h * w {
            return Err(MetricsError::LengthMismatch(fg.len(), h * w));
        }
        Ok(Self { h, w, fg })
    }

    pub fn filled(h: usize, w: usize, value: bool) -> Self {
        Self { h, w, fg: vec![value; h * w] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn is_foreground(&self, i: usize) -> bool {
        self.fg[i]
    }

    pub fn foreground_count(&self) -> usize {
        self.fg.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum FlowUnits {
    /// Raw magnitudes in pixels per frame.
    #[default]
    Pixels,
    /// Angular magnitude `atan(|flow| / f)` in degrees.
    Degrees { focal_px: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowStat {
    pub value: f64,
    pub pixel_count: usize,
    /// No pixel was selected; `value` is reported as 0.
    pub empty: bool,
}

fn masked_flow_mean(
    flows: &[FlowField],
    masks: &[SegMask],
    want_foreground: bool,
    units: FlowUnits,
) -> Result<FlowStat, MetricsError> {
    if flows.len() != masks.len() {
        return Err(MetricsError::LengthMismatch(flows.len(), masks.len()));
    }
    if let FlowUnits::Degrees { focal_px } = units {
        if !(focal_px > 0.0 && focal_px.is_finite()) {
            return Err(MetricsError::NonFinite("focal length"));
        }
    }
    let mut total = CompensatedSum::default();
    let mut count = 0usize;
    for (frame, (flow, mask)) in flows.iter().zip(masks).enumerate() {
        if flow.shape() != mask.shape() {
            return Err(MetricsError::ShapeMismatch { frame, flow: flow.shape(), mask: mask.shape() });
        }
        for i in (0..flow.h * flow.w).filter(|&i| mask.is_foreground(i) == want_foreground) {
            let mag = flow.magnitude(i);
            total.add(match units {
                FlowUnits::Pixels => mag,
                FlowUnits::Degrees { focal_px } => (mag / focal_px).atan().to_degrees(),
            });
            count += 1;
        }
    }
    if count == 0 {
        return Ok(FlowStat { value: 0.0, pixel_count: 0, empty: true });
    }
    Ok(FlowStat { value: total.value() / count as f64, pixel_count: count, empty: false })
}

/// Mean flow magnitude over all foreground pixels of all frames.
pub fn motion_strength(flows: &[FlowField], masks: &[SegMask]) -> Result<FlowStat, MetricsError> {
    masked_flow_mean(flows, masks, true, FlowUnits::Pixels)
}

pub fn motion_strength_in(flows: &[FlowField], masks: &[SegMask], units: FlowUnits) -> Result<FlowStat, MetricsError> {
    masked_flow_mean(flows, masks, true, units)
}

/// Mean flow magnitude over static background pixels; a proxy for how much
/// the camera moves.
pub fn camera_movement_score(flows: &[FlowField], masks: &[SegMask]) -> Result<FlowStat, MetricsError> {
    masked_flow_mean(flows, masks, false, FlowUnits::Pixels)
}

/// Percentage of successful reconstructions.
pub fn geometric_consistency(outcomes: &[bool]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let ok = outcomes.iter().filter(|&&b| b).count();
    Ok(100.0 * ok as f64 / outcomes.len() as f64)
}

/// Per-frame feature vectors of one clip, `frames × dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    dim: usize,
    data: Vec<f64>,
}

impl ClipFeatures {
    pub fn new(frames: usize, dim: usize, data: Vec<f64>) -> Result<Self, MetricsError> {
        if frames == 0 || dim == 0 {
            return Err(MetricsError::Empty);
        }
        if data.len() != frames * dim {
            return Err(MetricsError::LengthMismatch(data.len(), frames * dim));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(MetricsError::NonFinite("features"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MetricsError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(MetricsError::DimensionMismatch(dim, r.len()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Mean over frames.
    pub fn video_feature(&self) -> Vec<f64> {
        let mut acc = vec![CompensatedSum::default(); self.dim];
        for row in self.data.chunks(self.dim) {
            acc.iter_mut().zip(row).for_each(|(a, x)| a.add(*x));
        }
        let n = self.frames() as f64;
        acc.iter().map(|a| a.value() / n).collect()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Mean cosine similarity of consecutive clips' video features.
pub fn appearance_consistency(clips: &[ClipFeatures]) -> Result<f64, MetricsError> {
    if clips.len() < 2 {
        return Err(MetricsError::TooFew { need: 2, got: clips.len() });
    }
    let dim = clips[0].dim();
    if let Some(c) = clips.iter().find(|c| c.dim() != dim) {
        return Err(MetricsError::DimensionMismatch(dim, c.dim()));
    }
    let feats: Vec<Vec<f64>> = clips.iter().map(ClipFeatures::video_feature).collect();
    if let Some(i) = feats.iter().position(|f| f.iter().all(|&x| x == 0.0)) {
        return Err(MetricsError::ZeroNormFeature(i));
    }
    let total: f64 = feats.windows(2).map(|w| cosine(&w[0], &w[1])).sum();
    Ok(total / (feats.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::axis_angle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect()
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0));
        axis_angle(&axis, rng.random_range(0.0..std::f64::consts::PI))
    }

    #[test]
    fn self_alignment_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = random_points(&mut rng, 12);
        let a = align_similarity(&pts, &pts).unwrap();
        assert!((a.scale - 1.0).abs() < 1e-12);
        assert!((a.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(a.translation.norm() < 1e-12);
        assert!(a.residuals.iter().all(|r| *r < 1e-12));
        assert!(trans_err(&a.residuals).unwrap() < 1e-9);
    }

    #[test]
    fn similarity_recovered_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let gt = random_points(&mut rng, 20);
            let s: f64 = rng.random_range(0.1..10.0);
            let r = random_rotation(&mut rng);
            let t = Vector3::new(rng.random_range(-3.0..3.0), 1.0, -2.0);
            // est = (gt - t) mapped by inverse similarity.
            let est: Vec<_> = gt.iter().map(|g| r.transpose() * (g - t) / s).collect();
            let a = align_similarity(&est, &gt).unwrap();
            assert!(a.residuals.iter().all(|x| *x < 1e-9), "{:?}", a.residuals);
            assert!((a.scale - s).abs() < 1e-9 * s);
            assert!((a.rotation - r).abs().max() < 1e-9);
        }
    }

    #[test]
    fn mirrored_input_still_yields_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = random_points(&mut rng, 15);
        let mirror = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        let est: Vec<_> = gt.iter().map(|p| mirror * p).collect();
        let a = align_similarity(&est, &gt).unwrap();
        assert!((a.rotation.determinant() - 1.0).abs() < 1e-12);
        assert!(a.scale > 0.0);
    }

    #[test]
    fn alignment_errors_and_degeneracy() {
        let p = vec![Vector3::zeros(); 3];
        assert!(matches!(align_similarity(&p[..2], &p[..2]), Err(MetricsError::TooFew { .. })));
        assert!(matches!(align_similarity(&p, &p[..2]), Err(MetricsError::LengthMismatch(3, 2))));
        assert_eq!(align_similarity(&p, &p), Err(MetricsError::ZeroVariance));
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(align_similarity(&line, &line).unwrap().degenerate);
    }

    #[test]
    fn trans_err_examples() {
        assert_eq!(trans_err(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(trans_err(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(trans_err(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn rot_err_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt: Vec<_> = (0..6).map(|_| random_rotation(&mut rng)).collect();
        assert!(rot_err(&gt, &gt, &Matrix3::identity()).unwrap() < 1e-12);

        // Estimated world is the ground-truth world rotated by q: x_est = q·x_gt.
        let q = axis_angle(&Vector3::z(), 10f64.to_radians());
        let est: Vec<_> = gt.iter().map(|r| r * q.transpose()).collect();
        assert!(rot_err(&est, &gt, &q.transpose()).unwrap() < 1e-9);
        assert!((rot_err(&est, &gt, &Matrix3::identity()).unwrap() - 10.0).abs() < 1e-9);
        assert!(rot_err(&est, &gt[..3], &q).is_err());
    }

    #[test]
    fn motion_examples() {
        let full = SegMask::filled(4, 4, true);
        let ms = motion_strength(&[FlowField::uniform(4, 4, 3.0, 4.0)], std::slice::from_ref(&full)).unwrap();
        assert_eq!(ms.value, 5.0);
        assert_eq!(motion_strength(&[FlowField::uniform(4, 4, 0.0, 0.0)], &[full]).unwrap().value, 0.0);

        let u: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 5.0 } else { 100.0 }).collect();
        let flow = FlowField::new(4, 4, u, vec![0.0; 16]).unwrap();
        let mask = SegMask::new(4, 4, (0..16).map(|i| i % 2 == 0).collect()).unwrap();
        assert_eq!(motion_strength(&[flow], &[mask]).unwrap().value, 5.0);

        let none = motion_strength(&[FlowField::uniform(2, 2, 1.0, 1.0)], &[SegMask::filled(2, 2, false)]).unwrap();
        assert!(none.empty);
        assert_eq!(none.value, 0.0);

        let bad = motion_strength(&[FlowField::uniform(2, 3, 1.0, 1.0)], &[SegMask::filled(3, 2, true)]);
        assert!(matches!(bad, Err(MetricsError::ShapeMismatch { .. })));
        assert!(FlowField::new(1, 1, vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn degree_units() {
        let flow = FlowField::uniform(2, 2, 3.0, 4.0);
        let st = motion_strength_in(&[flow], &[SegMask::filled(2, 2, true)], FlowUnits::Degrees { focal_px: 5.0 }).unwrap();
        assert!((st.value - 45.0).abs() < 1e-12);
    }

    #[test]
    fn camera_movement_examples() {
        let bg = camera_movement_score(&[FlowField::uniform(3, 3, 0.0, 2.0)], &[SegMask::filled(3, 3, false)]).unwrap();
        assert_eq!(bg.value, 2.0);
        let all_fg = camera_movement_score(&[FlowField::uniform(3, 3, 0.0, 2.0)], &[SegMask::filled(3, 3, true)]).unwrap();
        assert!(all_fg.empty);
        let u: Vec<f64> = (0..9).map(|i| if i < 4 { 10.0 } else { 1.0 }).collect();
        let flow = FlowField::new(3, 3, u, vec![0.0; 9]).unwrap();
        let mask = SegMask::new(3, 3, (0..9).map(|i| i < 4).collect()).unwrap();
        assert_eq!(camera_movement_score(&[flow], &[mask]).unwrap().value, 1.0);
    }

    #[test]
    fn geometric_consistency_examples() {
        assert_eq!(geometric_consistency(&[true, true]).unwrap(), 100.0);
        assert_eq!(geometric_consistency(&[true, false]).unwrap(), 50.0);
        let mut v = vec![true; 7];
        v.push(false);
        assert_eq!(geometric_consistency(&v).unwrap(), 87.5);
        assert!(geometric_consistency(&[]).is_err());
    }

    #[test]
    fn appearance_examples() {
        let a = ClipFeatures::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.0]]).unwrap();
        assert!((appearance_consistency(&[a.clone(), a.clone()]).unwrap() - 1.0).abs() < 1e-15);
        let x = ClipFeatures::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let y = ClipFeatures::from_rows(&[vec![0.0, 2.0]]).unwrap();
        assert_eq!(appearance_consistency(&[x.clone(), y]).unwrap(), 0.0);

        // Pairwise cosines 0.8 then 0.6 by construction.
        let c0 = ClipFeatures::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let c1 = ClipFeatures::from_rows(&[vec![0.8, 0.6, 0.0]]).unwrap();
        // Unit vector w with w·c1 = 0.6: w = (0.48, 0.36, 0.8).
        let c2 = ClipFeatures::from_rows(&[vec![0.48, 0.36, 0.8]]).unwrap();
        assert!((appearance_consistency(&[c0, c1, c2]).unwrap() - 0.7).abs() < 1e-12);

        let z = ClipFeatures::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        assert_eq!(appearance_consistency(&[x.clone(), z]), Err(MetricsError::ZeroNormFeature(1)));
        let three = ClipFeatures::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(appearance_consistency(&[x.clone(), three]), Err(MetricsError::DimensionMismatch(2, 3))));
        assert!(appearance_consistency(&[x]).is_err());
    }

    fn random_flow_pair(rng: &mut ChaCha8Rng, frames: usize) -> (Vec<FlowField>, Vec<SegMask>) {
        (0..frames)
            .map(|_| {
                let (h, w) = (rng.random_range(1..12), rng.random_range(1..12));
                let u = (0..h * w).map(|_| rng.random_range(-20.0..20.0)).collect();
                let v = (0..h * w).map(|_| rng.random_range(-20.0..20.0)).collect();
                let m = (0..h * w).map(|_| rng.random::<bool>()).collect();
                (FlowField::new(h, w, u, v).unwrap(), SegMask::new(h, w, m).unwrap())
            })
            .unzip()
    }

    proptest! {
        #[test]
        fn fg_bg_partition(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (flows, masks) = random_flow_pair(&mut rng, 4);
            let fg = motion_strength(&flows, &masks).unwrap();
            let bg = camera_movement_score(&flows, &masks).unwrap();
            let all: Vec<SegMask> = masks.iter().map(|m| SegMask::filled(m.h, m.w, true)).collect();
            let global = motion_strength(&flows, &all).unwrap();
            let combined = (fg.value * fg.pixel_count as f64 + bg.value * bg.pixel_count as f64)
                / (fg.pixel_count + bg.pixel_count) as f64;
            prop_assert!((combined - global.value).abs() < 1e-9);
        }

        #[test]
        fn motion_order_invariant(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (flows, masks) = random_flow_pair(&mut rng, 5);
            let a = motion_strength(&flows, &masks).unwrap().value;
            let b = motion_strength(
                &flows.iter().rev().cloned().collect::<Vec<_>>(),
                &masks.iter().rev().cloned().collect::<Vec<_>>(),
            ).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn errors_invariant_under_shared_rigid_motion(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gt = random_points(&mut rng, 10);
            let est: Vec<_> = gt.iter().map(|p| p + Vector3::new(rng.random_range(-0.1..0.1), 0.0, rng.random_range(-0.1..0.1))).collect();
            let r = random_rotation(&mut rng);
            let t = Vector3::new(1.0, -2.0, 3.0);
            let base = trans_err(&align_similarity(&est, &gt).unwrap().residuals).unwrap();
            let moved_est: Vec<_> = est.iter().map(|p| r * p + t).collect();
            let moved_gt: Vec<_> = gt.iter().map(|p| r * p + t).collect();
            let moved = trans_err(&align_similarity(&moved_est, &moved_gt).unwrap().residuals).unwrap();
            prop_assert!((base - moved).abs() < 1e-9);
        }

        #[test]
        fn appearance_scale_invariant(seed in 0u64..10_000, k in 0.01..100.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = |rng: &mut ChaCha8Rng| (0..3).map(|_| (0..4).map(|_| rng.random_range(0.1..1.0)).collect()).collect::<Vec<Vec<f64>>>();
            let a = rows(&mut rng);
            let b = rows(&mut rng);
            let scaled: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|x| x * k).collect()).collect();
            let base = appearance_consistency(&[ClipFeatures::from_rows(&a).unwrap(), ClipFeatures::from_rows(&b).unwrap()]).unwrap();
            let sc = appearance_consistency(&[ClipFeatures::from_rows(&scaled).unwrap(), ClipFeatures::from_rows(&b).unwrap()]).unwrap();
            prop_assert!((base - sc).abs() < 1e-12);
        }
    }
}
