//! Seeded synthetic dataset written in the on-disk layout the CLI expects.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use camtraj::geometry::axis_angle;
use camtraj::io::{encode_raster, write_trajectory, Raster};
use camtraj::{CameraIntrinsics, Frame, Matrix3, Pose, Trajectory, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FRAMES: usize = 60;
pub const DEPTH_H: u32 = 24;
pub const DEPTH_W: u32 = 32;
pub const FLOW_H: u32 = 12;
pub const FLOW_W: u32 = 16;

/// World→camera pose of a camera at `center` whose camera-to-world rotation
/// is `c2w`.
pub fn pose_at(center: Vector3<f64>, c2w: Matrix3<f64>) -> Pose {
    let r = c2w.transpose();
    Pose::new(r, -(r * center)).unwrap()
}

pub fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(500.0, 500.0, 320.0, 180.0, 640, 360).unwrap()
}

pub fn trajectory_from(centers: &[Vector3<f64>], rotations: &[Matrix3<f64>]) -> Trajectory {
    let k = intrinsics();
    let frames = centers
        .iter()
        .zip(rotations)
        .enumerate()
        .map(|(i, (c, r))| Frame { frame_index: i as u64, intrinsics: k, pose: pose_at(*c, *r) })
        .collect();
    Trajectory::new(frames).unwrap()
}

/// Five motion families: dolly, dolly then right, dolly then left, strafe,
/// dolly with a pan.
pub fn synthetic_trajectory(shape: usize, step: f64) -> Trajectory {
    let mut centers = Vec::with_capacity(FRAMES);
    let mut rotations = Vec::with_capacity(FRAMES);
    let mut c = Vector3::zeros();
    for i in 0..FRAMES {
        centers.push(c);
        let dir = match shape % 5 {
            1 if i >= 40 => Vector3::x(),
            2 if i >= 40 => -Vector3::x(),
            3 => Vector3::x(),
            _ => Vector3::z(),
        };
        c += dir * step;
        let yaw = if shape % 5 == 4 { (i as f64 * 0.8).to_radians() } else { 0.0 };
        rotations.push(axis_angle(&Vector3::y(), yaw));
    }
    trajectory_from(&centers, &rotations)
}

fn write(path: &Path, bytes: &[u8]) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, bytes).unwrap();
}

pub struct Dataset {
    pub manifest: PathBuf,
    pub scales: Vec<(String, f64)>,
}

/// `videos` seeded videos under `root`, each with a trajectory, depth pairs
/// every 10 frames, 3 flow/mask frames and a small feature raster.
pub fn write_dataset(root: &Path, videos: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let mut scales = Vec::new();
    for v in 0..videos {
        let id = format!("vid{v:02}");
        let dir = root.join(&id);
        let traj = synthetic_trajectory(v, rng.random_range(0.05..0.2));
        write(&dir.join("traj.txt"), write_trajectory(&traj).unwrap().as_bytes());

        let s_true: f64 = rng.random_range(0.5..4.0);
        scales.push((id.clone(), s_true));
        for k in (0..FRAMES as u64).step_by(10) {
            let n = (DEPTH_H * DEPTH_W) as usize;
            let mut sfm = Vec::with_capacity(n);
            let mut metric = Vec::with_capacity(n);
            for _ in 0..n {
                let m: f64 = rng.random_range(10.0..60.0);
                sfm.push((m / s_true) as f32);
                metric.push(if rng.random_bool(0.1) { (m * 5.0) as f32 } else { m as f32 });
            }
            let depth = dir.join("depth");
            write(&depth.join(format!("{k}.sfm.ctrw")), &encode_raster(&Raster::depth(DEPTH_H, DEPTH_W, sfm).unwrap()));
            write(&depth.join(format!("{k}.metric.ctrw")), &encode_raster(&Raster::depth(DEPTH_H, DEPTH_W, metric).unwrap()));
        }

        let bg = 0.5 + 0.3 * v as f64;
        for k in 0..3u64 {
            let n = (FLOW_H * FLOW_W) as usize;
            let mut flow = Vec::with_capacity(2 * n);
            let mut mask = Vec::with_capacity(n);
            for p in 0..n {
                let fg = (p / FLOW_W as usize) < 4 && (p % FLOW_W as usize) < 4;
                let mag = if fg { 3.0 * bg + 1.0 } else { bg } * rng.random_range(0.9..1.1);
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                flow.push((mag * a.cos()) as f32);
                flow.push((mag * a.sin()) as f32);
                mask.push(fg as u8);
            }
            write(&dir.join("flow").join(format!("{k}.flow.ctrw")), &encode_raster(&Raster::flow(FLOW_H, FLOW_W, flow).unwrap()));
            write(&dir.join("mask").join(format!("{k}.mask.ctrw")), &encode_raster(&Raster::mask(FLOW_H, FLOW_W, mask).unwrap()));
        }

        let feats: Vec<f32> = (0..4 * 8).map(|_| rng.random_range(0.1f32..1.0)).collect();
        write(&dir.join("clip.ctrw"), &encode_raster(&Raster::features(4, 8, feats).unwrap()));

        entries.push(serde_json::json!({
            "video_id": id,
            "trajectory": format!("{id}/traj.txt"),
            "depth_dir": format!("{id}/depth"),
            "flow_dir": format!("{id}/flow"),
            "mask_dir": format!("{id}/mask"),
            "features": format!("{id}/clip.ctrw"),
        }));
    }
    let manifest = root.join("manifest.json");
    write(&manifest, serde_json::json!({"version": 1, "entries": entries}).to_string().as_bytes());
    Dataset { manifest, scales }
}
