//! On-disk layout of per-video inputs and atomic output writes.
//!
//! Inside the directories named by a manifest entry, files are keyed by frame
//! index:
//!
//! * `depth_dir/<k>.sfm.ctrw` and `depth_dir/<k>.metric.ctrw`
//! * `flow_dir/<k>.flow.ctrw`
//! * `mask_dir/<k>.mask.ctrw` (same `k` set as the flow files)

use std::io::Write;
use std::path::{Path, PathBuf};

use camtraj::io::{self, read_raster, DatasetManifest, ManifestEntry, RasterKind};
use camtraj::{DepthPair, FlowField, SegMask, Trajectory};

use crate::error::CliError;

pub const SFM_SUFFIX: &str = ".sfm.ctrw";
pub const METRIC_SUFFIX: &str = ".metric.ctrw";
pub const FLOW_SUFFIX: &str = ".flow.ctrw";
pub const MASK_SUFFIX: &str = ".mask.ctrw";

/// Files `<u64><suffix>` in `dir`, sorted by index. Other files are ignored.
pub fn list_indexed(dir: &Path, suffix: &str) -> Result<Vec<(u64, PathBuf)>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for ent in rd {
        let ent = ent.map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
        let name = ent.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(stem) = name.strip_suffix(suffix) else { continue };
        let idx = stem
            .parse::<u64>()
            .map_err(|_| CliError::input(format!("{}: file name must be <frame_index>{suffix}", ent.path().display())))?;
        out.push((idx, ent.path()));
    }
    out.sort_by_key(|(k, _)| *k);
    Ok(out)
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    io::parse_trajectory(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn with_path<T>(r: Result<T, camtraj::FormatError>, path: &Path) -> Result<T, CliError> {
    r.map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Frame indices that have both depth files.
pub fn depth_frames(dir: &Path) -> Result<Vec<u64>, CliError> {
    let sfm = list_indexed(dir, SFM_SUFFIX)?;
    let metric = list_indexed(dir, METRIC_SUFFIX)?;
    let sfm_idx: Vec<u64> = sfm.iter().map(|(k, _)| *k).collect();
    let metric_idx: Vec<u64> = metric.iter().map(|(k, _)| *k).collect();
    if sfm_idx != metric_idx {
        return Err(CliError::input(format!("{}: SfM and metric depth files do not pair up", dir.display())));
    }
    Ok(sfm_idx)
}

pub fn load_depth_pair(dir: &Path, frame_index: u64) -> Result<DepthPair, CliError> {
    let sp = dir.join(format!("{frame_index}{SFM_SUFFIX}"));
    let mp = dir.join(format!("{frame_index}{METRIC_SUFFIX}"));
    let sfm = with_path(read_raster(&sp, RasterKind::Depth), &sp)?;
    let metric = with_path(read_raster(&mp, RasterKind::Depth), &mp)?;
    with_path(io::depth_pair(&sfm, &metric), &sp)
}

/// `count` frame indices spread evenly over `available` (all of them if
/// there are no more than `count`).
pub fn select_keyframes(available: &[u64], count: usize) -> Vec<u64> {
    let m = available.len();
    if m <= count {
        return available.to_vec();
    }
    if count == 1 {
        return vec![available[(m - 1) / 2]];
    }
    (0..count).map(|i| available[(i * (m - 1) + (count - 1) / 2) / (count - 1)]).collect()
}

/// Flow fields with their masks. Without a mask directory every pixel is
/// treated as background.
pub fn load_flows(flow_dir: &Path, mask_dir: Option<&Path>) -> Result<(Vec<FlowField>, Vec<SegMask>), CliError> {
    let flow_files = list_indexed(flow_dir, FLOW_SUFFIX)?;
    if flow_files.is_empty() {
        return Err(CliError::input(format!("{}: no *{FLOW_SUFFIX} files", flow_dir.display())));
    }
    let mut flows = Vec::with_capacity(flow_files.len());
    for (_, p) in &flow_files {
        flows.push(with_path(read_raster(p, RasterKind::Flow).and_then(|r| r.to_flow_field()), p)?);
    }
    let masks = match mask_dir {
        None => flows.iter().map(|f| SegMask::filled(f.shape().0, f.shape().1, false)).collect(),
        Some(dir) => {
            let mask_files = list_indexed(dir, MASK_SUFFIX)?;
            let fk: Vec<u64> = flow_files.iter().map(|(k, _)| *k).collect();
            let mk: Vec<u64> = mask_files.iter().map(|(k, _)| *k).collect();
            if fk != mk {
                return Err(CliError::input(format!(
                    "{}: mask frames {mk:?} do not match flow frames {fk:?}",
                    dir.display()
                )));
            }
            let mut masks = Vec::with_capacity(mask_files.len());
            for (_, p) in &mask_files {
                masks.push(with_path(read_raster(p, RasterKind::Mask).and_then(|r| r.to_seg_mask()), p)?);
            }
            masks
        }
    };
    Ok((flows, masks))
}

pub fn load_features(path: &Path) -> Result<camtraj::ClipFeatures, CliError> {
    with_path(read_raster(path, RasterKind::Features).and_then(|r| r.to_clip_features()), path)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    with_path(io::read_manifest(path), path)
}

pub fn entry_dir(m: &DatasetManifest, e: &ManifestEntry, field: &Option<String>, name: &str) -> Result<PathBuf, CliError> {
    field
        .as_deref()
        .map(|p| m.resolve(p))
        .ok_or_else(|| CliError::input(format!("manifest entry has no {name}")).for_video(&e.video_id))
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file and reruns replace outputs whole.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::input(format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(fail)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}
