//! Camera poses, trajectories and per-pixel Plücker ray embeddings.
//!
//! Poses are stored world→camera (`x_cam = R·x_world + t`), which is what SfM
//! tools emit. Anything that needs camera→world quantities (camera centers,
//! ray directions) converts explicitly.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Orthonormality tolerance for a rotation to be accepted verbatim.
pub const ROTATION_TOLERANCE: f64 = 1e-6;
/// Rotations off by more than [`ROTATION_TOLERANCE`] but less than this are
/// projected onto SO(3); anything further out is rejected.
pub const ROTATION_REPAIR_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid rotation: orthonormality error {ortho_err:.3e}, det {det:.9}")]
    InvalidRotation { ortho_err: f64, det: f64 },
    #[error("non-finite translation")]
    NonFiniteTranslation,
    #[error("frame indices must be strictly increasing (position {position}: {prev} then {next})")]
    NonIncreasingFrameIndex { position: usize, prev: u64, next: u64 },
    #[error("grid size must be at least 1x1, got {h}x{w}")]
    EmptyGrid { h: usize, w: usize },
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error("scale factor must be positive and finite, got {0}")]
    InvalidScale(f64),
}

/// Pinhole intrinsics in pixels, relative to a `width × height` image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidIntrinsics(msg));
        if ![self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite()) {
            return bad("non-finite value".into());
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{}", self.width, self.height));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return bad(format!("focal lengths fx={} fy={}", self.fx, self.fy));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return bad(format!("cx={} outside (0, {})", self.cx, self.width));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return bad(format!("cy={} outside (0, {})", self.cy, self.height));
        }
        Ok(())
    }

    /// Intrinsics for the same camera sampled on a `w × h` grid.
    pub fn rescaled(&self, w: usize, h: usize) -> Self {
        let sx = w as f64 / self.width as f64;
        let sy = h as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width: w as u32,
            height: h as u32,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K⁻¹·[u, v, 1]ᵀ`, the camera-frame ray through pixel coordinate `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Rigid world→camera transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    /// Validates the rotation, projecting slightly noisy inputs onto SO(3).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFiniteTranslation);
        }
        let rotation = validate_rotation(rotation)?;
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn camera_center(&self) -> Vector3<f64> {
        camera_center(self)
    }
}

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Accepts `r` as-is within [`ROTATION_TOLERANCE`], repairs it via the nearest
/// rotation within [`ROTATION_REPAIR_TOLERANCE`], rejects otherwise.
pub fn validate_rotation(r: Matrix3<f64>) -> Result<Matrix3<f64>, GeometryError> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::InvalidRotation { ortho_err: f64::NAN, det: f64::NAN });
    }
    let err = orthonormality_error(&r);
    let det = r.determinant();
    if err <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE {
        return Ok(r);
    }
    if err <= ROTATION_REPAIR_TOLERANCE && (det - 1.0).abs() <= ROTATION_REPAIR_TOLERANCE {
        return Ok(nearest_rotation(&r));
    }
    Err(GeometryError::InvalidRotation { ortho_err: err, det })
}

/// Closest rotation in Frobenius norm (polar factor with det = +1).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

/// Camera center in world coordinates, `o = −Rᵀt`.
pub fn camera_center(pose: &Pose) -> Vector3<f64> {
    -(pose.rotation.transpose() * pose.translation)
}

/// Geodesic distance between two rotations, in degrees, in `[0, 180]`.
///
/// Same quantity as `acos((tr(R1·R2ᵀ) − 1)/2)`, evaluated through `atan2` so
/// that small angles keep full precision.
pub fn rotation_geodesic(r1: &Matrix3<f64>, r2: &Matrix3<f64>) -> f64 {
    let rel = r1 * r2.transpose();
    let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let axis = Vector3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]);
    let sin = (axis.norm() / 2.0).min(1.0);
    sin.atan2(cos).to_degrees()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_index: u64,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

/// Ordered per-frame camera records.
///
/// An empty trajectory is representable so that writers can emit a bare
/// header; every analysis that needs frames checks the length itself.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    frames: Vec<Frame>,
    pub scale_calibrated: bool,
}

impl Trajectory {
    pub fn new(frames: Vec<Frame>) -> Result<Self, GeometryError> {
        for (position, pair) in frames.windows(2).enumerate() {
            if pair[1].frame_index <= pair[0].frame_index {
                return Err(GeometryError::NonIncreasingFrameIndex {
                    position: position + 1,
                    prev: pair[0].frame_index,
                    next: pair[1].frame_index,
                });
            }
        }
        Ok(Self { frames, scale_calibrated: false })
    }

    pub fn with_calibrated(mut self, calibrated: bool) -> Self {
        self.scale_calibrated = calibrated;
        self
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn camera_centers(&self) -> Vec<Vector3<f64>> {
        self.frames.iter().map(|f| camera_center(&f.pose)).collect()
    }

    pub fn rotations(&self) -> Vec<Matrix3<f64>> {
        self.frames.iter().map(|f| f.pose.rotation).collect()
    }

    pub fn position_of(&self, frame_index: u64) -> Option<usize> {
        self.frames.binary_search_by_key(&frame_index, |f| f.frame_index).ok()
    }

    fn map_poses(&self, f: impl Fn(&Pose) -> Pose) -> Self {
        Self {
            frames: self.frames.iter().map(|fr| Frame { pose: f(&fr.pose), ..*fr }).collect(),
            scale_calibrated: self.scale_calibrated,
        }
    }
}

/// Expresses every pose relative to `reference`, so that `reference` itself
/// becomes the identity. Relative poses between frames are preserved.
pub fn rebase_trajectory(traj: &Trajectory, reference: &Pose) -> Trajectory {
    let ref_inv = reference.inverse();
    traj.map_poses(|p| p.compose(&ref_inv))
}

/// Keeps list positions `0, stride, 2·stride, …`; frame indices are untouched.
pub fn downsample_trajectory(traj: &Trajectory, stride: usize) -> Result<Trajectory, GeometryError> {
    if stride == 0 {
        return Err(GeometryError::ZeroStride);
    }
    Ok(Trajectory {
        frames: traj.frames.iter().step_by(stride).copied().collect(),
        scale_calibrated: traj.scale_calibrated,
    })
}

/// Multiplies every translation by `s` and marks the trajectory calibrated.
pub fn apply_scale(traj: &Trajectory, s: f64) -> Result<Trajectory, GeometryError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(GeometryError::InvalidScale(s));
    }
    let mut out = traj.map_poses(|p| Pose { rotation: p.rotation, translation: p.translation * s });
    out.scale_calibrated = true;
    Ok(out)
}

/// How the un-normalized ray vector is formed before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayMode {
    /// `d = R_c2w·K⁻¹·[u, v, 1]ᵀ`, a true direction.
    #[default]
    Geometric,
    /// `d = R_c2w·K⁻¹·[u, v, 1]ᵀ + o`, the point-offset form taken literally.
    Literal,
}

/// `h × w × 6` grid; channels 0..3 hold the moment `o × d′`, 3..6 the unit
/// direction `d′`. Row-major, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct PluckerMap {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl PluckerMap {
    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 6] {
        let base = (y * self.w + x) * 6;
        let mut out = [0.0; 6];
        out.copy_from_slice(&self.data[base..base + 6]);
        out
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Channel-first copy, `6 × h × w`.
    pub fn to_channel_first(&self) -> Vec<f64> {
        let n = self.h * self.w;
        let mut out = vec![0.0; 6 * n];
        for p in 0..n {
            for c in 0..6 {
                out[c * n + p] = self.data[p * 6 + c];
            }
        }
        out
    }
}

/// Plücker embedding of every pixel center of an `h × w` grid covering the
/// image; intrinsics are rescaled from `width × height` to the grid.
pub fn plucker_map(
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
    h: usize,
    w: usize,
) -> Result<PluckerMap, GeometryError> {
    plucker_map_with_mode(intrinsics, pose, h, w, RayMode::Geometric)
}

pub fn plucker_map_with_mode(
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
    h: usize,
    w: usize,
    mode: RayMode,
) -> Result<PluckerMap, GeometryError> {
    if h == 0 || w == 0 {
        return Err(GeometryError::EmptyGrid { h, w });
    }
    intrinsics.validate()?;
    let k = intrinsics.rescaled(w, h);
    let r_c2w = pose.rotation.transpose();
    let origin = camera_center(pose);
    let mut data = Vec::with_capacity(h * w * 6);
    for y in 0..h {
        for x in 0..w {
            let mut d = r_c2w * k.unproject(x as f64 + 0.5, y as f64 + 0.5);
            if mode == RayMode::Literal {
                d += origin;
            }
            let d = d.normalize();
            let m = origin.cross(&d);
            data.extend_from_slice(&[m.x, m.y, m.z, d.x, d.y, d.z]);
        }
    }
    Ok(PluckerMap { h, w, data })
}

/// Rotation about a unit axis by `angle` radians.
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let axis = nalgebra::Unit::new_normalize(*axis);
    *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix()
}
