//! Plain-text trajectory format.
//!
//! ```text
//! # camtraj trajectory v1
//! # calibrated
//! 640 360
//! 0 fx fy cx cy r11 r12 r13 t1 r21 r22 r23 t2 r31 r32 r33 t3
//! ```
//!
//! `#` lines are comments; the exact comment `# calibrated` sets the
//! calibration flag. The first non-comment line is `width height`, followed by
//! one 17-field line per frame with a world→camera pose.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use super::FormatError;
use crate::geometry::{CameraIntrinsics, Frame, Pose, Trajectory};

const BANNER: &str = "# camtraj trajectory v1";
const CALIBRATED: &str = "# calibrated";
const FRAME_FIELDS: usize = 17;

fn err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: msg.into() }
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory, FormatError> {
    let mut calibrated = false;
    let mut size: Option<(u32, u32)> = None;
    let mut frames: Vec<Frame> = Vec::new();
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if line == CALIBRATED {
                calibrated = true;
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let Some((width, height)) = size else {
            if fields.len() != 2 {
                return Err(err(line_no, format!("header must be `width height`, found {} fields", fields.len())));
            }
            let parse = |s: &str| s.parse::<u32>().map_err(|_| err(line_no, format!("invalid image size {s:?}")));
            size = Some((parse(fields[0])?, parse(fields[1])?));
            continue;
        };
        if fields.len() != FRAME_FIELDS {
            return Err(err(line_no, format!("expected {FRAME_FIELDS} fields, found {}", fields.len())));
        }
        let frame_index = fields[0]
            .parse::<u64>()
            .map_err(|_| err(line_no, format!("invalid frame index {:?}", fields[0])))?;
        let mut v = [0.0f64; FRAME_FIELDS - 1];
        for (slot, field) in v.iter_mut().zip(&fields[1..]) {
            *slot = field.parse::<f64>().map_err(|_| err(line_no, format!("invalid number {field:?}")))?;
            if !slot.is_finite() {
                return Err(err(line_no, format!("non-finite number {field:?}")));
            }
        }
        if let Some(prev) = frames.last() {
            if frame_index <= prev.frame_index {
                return Err(err(
                    line_no,
                    format!("frame index {frame_index} does not increase (previous {})", prev.frame_index),
                ));
            }
        }
        let intrinsics = CameraIntrinsics::new(v[0], v[1], v[2], v[3], width, height)
            .map_err(|e| err(line_no, e.to_string()))?;
        let rotation = Matrix3::new(v[4], v[5], v[6], v[8], v[9], v[10], v[12], v[13], v[14]);
        let translation = Vector3::new(v[7], v[11], v[15]);
        let pose = Pose::new(rotation, translation).map_err(|e| err(line_no, e.to_string()))?;
        frames.push(Frame { frame_index, intrinsics, pose });
    }
    if size.is_none() {
        return Err(err(last_line.max(1), "missing `width height` header"));
    }
    let traj = Trajectory::new(frames).map_err(|e| err(last_line, e.to_string()))?;
    Ok(traj.with_calibrated(calibrated))
}

/// Inverse of [`parse_trajectory`]. Reals are written with 17 significant
/// digits, so every value round-trips exactly. An empty trajectory is written
/// with a `0 0` image size.
pub fn write_trajectory(traj: &Trajectory) -> Result<String, FormatError> {
    let (width, height) = traj.frames().first().map_or((0, 0), |f| (f.intrinsics.width, f.intrinsics.height));
    if let Some(f) = traj.frames().iter().find(|f| (f.intrinsics.width, f.intrinsics.height) != (width, height)) {
        return Err(FormatError::MixedImageSize { frame_index: f.frame_index });
    }
    let mut out = String::new();
    out.push_str(BANNER);
    out.push('\n');
    if traj.scale_calibrated {
        out.push_str(CALIBRATED);
        out.push('\n');
    }
    let _ = writeln!(out, "{width} {height}");
    for f in traj.frames() {
        let k = &f.intrinsics;
        let r = &f.pose.rotation;
        let t = &f.pose.translation;
        let _ = write!(out, "{}", f.frame_index);
        for v in [
            k.fx, k.fy, k.cx, k.cy,
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ] {
            let _ = write!(out, " {v:.16e}");
        }
        out.push('\n');
    }
    Ok(out)
}
