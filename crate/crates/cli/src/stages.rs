use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use camtraj::io::{self, DatasetManifest, ManifestEntry, Raster, ReportBundle, ReportMeta};
use camtraj::{
    analysis, calibration, geometry, metrics, BalanceCap, FlowUnits, RansacParams, RayMode, TrajectoryProfile,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{check_min_flow, Config};
use crate::dataset::{self, write_atomic};
use crate::error::CliError;
use crate::{Command, ManifestArgs, RayModeArg};

/// Stage outputs merged by `report` when no inputs are named, in merge order.
pub const STAGE_OUTPUTS: [&str; 7] = [
    "filter.json",
    "calibrate.json",
    "analyze.json",
    "balance.json",
    "eval-traj.json",
    "eval-motion.json",
    "eval-appearance.json",
];

pub struct Context {
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    fn bundle(&self) -> ReportBundle {
        ReportBundle::with_seed(self.seed)
    }

    fn ransac(&self) -> RansacParams {
        RansacParams { rng_seed: self.seed, ..self.config.ransac }
    }

    fn write_bundle(&self, name: &str, bundle: &ReportBundle) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        write_atomic(&path, io::write_report(bundle).as_bytes())?;
        Ok(path)
    }
}

pub fn dispatch(ctx: &Context, cmd: &Command) -> Result<Vec<PathBuf>, CliError> {
    match cmd {
        Command::Ingest(input) => ingest(ctx, input),
        Command::Filter { input, min_flow } => filter(ctx, input, *min_flow),
        Command::Calibrate { input, keyframes } => calibrate(ctx, input, *keyframes),
        Command::Analyze { input, trajectories } => analyze(ctx, input, trajectories.as_deref()),
        Command::Balance { profiles, cap } => balance(ctx, profiles, cap.as_deref()),
        Command::Plucker { input, latent_h, latent_w, stride, ray_mode } => {
            plucker(ctx, input, (*latent_h as usize, *latent_w as usize), *stride, *ray_mode)
        }
        Command::EvalTraj { est, gt, no_rotation_alignment } => eval_traj(ctx, est, gt, !no_rotation_alignment),
        Command::EvalMotion { flow_dir, mask_dir, focal_px } => eval_motion(ctx, flow_dir, mask_dir, *focal_px),
        Command::EvalAppearance { clips } => eval_appearance(ctx, clips),
        Command::Report { inputs } => report(ctx, inputs),
    }
}

/// Manifest entries (sorted by id), optionally restricted to the keep list of
/// an earlier stage.
fn entries(input: &ManifestArgs) -> Result<(DatasetManifest, Vec<ManifestEntry>), CliError> {
    let manifest = dataset::load_manifest(&input.manifest)?;
    let mut list: Vec<ManifestEntry> = manifest.sorted_entries().into_iter().cloned().collect();
    if let Some(sel) = &input.select {
        let keep = keep_list(sel)?;
        let known: BTreeSet<&str> = list.iter().map(|e| e.video_id.as_str()).collect();
        if let Some(missing) = keep.iter().find(|id| !known.contains(id.as_str())) {
            return Err(CliError::input(format!("{}: video {missing:?} is not in the manifest", sel.display())));
        }
        list.retain(|e| keep.contains(&e.video_id));
    }
    Ok((manifest, list))
}

fn keep_list(path: &Path) -> Result<BTreeSet<String>, CliError> {
    let bundle = read_bundle(path)?;
    if let Some(b) = bundle.balance {
        return Ok(b.keep.into_iter().collect());
    }
    if let Some(f) = bundle.metrics.and_then(|m| m.filter) {
        return Ok(f.keep.into_iter().collect());
    }
    Err(CliError::input(format!("{}: no keep list (expected a filter or balance output)", path.display())))
}

fn read_bundle(path: &Path) -> Result<ReportBundle, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    io::parse_report(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Runs `f` over the entries on the worker pool. Results come back in entry
/// order; the first failure in that order is returned.
fn per_video<T, F>(list: &[ManifestEntry], f: F) -> Result<Vec<(String, T)>, CliError>
where
    T: Send,
    F: Fn(&ManifestEntry) -> Result<T, CliError> + Sync,
{
    list.par_iter()
        .map(|e| f(e).map(|v| (e.video_id.clone(), v)).map_err(|err| err.for_video(&e.video_id)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

#[derive(Serialize)]
struct VideoSummary {
    frames: usize,
    depth_frames: usize,
    flow_frames: usize,
    mask_frames: usize,
    feature_frames: usize,
}

#[derive(Serialize)]
struct IngestSummary {
    meta: ReportMeta,
    videos: BTreeMap<String, VideoSummary>,
}

fn ingest(ctx: &Context, input: &ManifestArgs) -> Result<Vec<PathBuf>, CliError> {
    let (m, list) = entries(input)?;
    let videos = per_video(&list, |e| {
        let traj = dataset::load_trajectory(&m.resolve(&e.trajectory))?;
        let mut s = VideoSummary { frames: traj.len(), depth_frames: 0, flow_frames: 0, mask_frames: 0, feature_frames: 0 };
        if let Some(d) = &e.depth_dir {
            let dir = m.resolve(d);
            let frames = dataset::depth_frames(&dir)?;
            for k in &frames {
                if traj.position_of(*k).is_none() {
                    return Err(CliError::input(format!("{}: depth frame {k} is not in the trajectory", dir.display())));
                }
                dataset::load_depth_pair(&dir, *k)?;
            }
            s.depth_frames = frames.len();
        }
        if let Some(f) = &e.flow_dir {
            let masks = e.mask_dir.as_ref().map(|p| m.resolve(p));
            let (flows, masks_loaded) = dataset::load_flows(&m.resolve(f), masks.as_deref())?;
            for (i, (fl, mk)) in flows.iter().zip(&masks_loaded).enumerate() {
                if fl.shape() != mk.shape() {
                    return Err(CliError::input(format!("flow/mask shape mismatch at frame {i}")));
                }
            }
            s.flow_frames = flows.len();
            s.mask_frames = if masks.is_some() { masks_loaded.len() } else { 0 };
        } else if e.mask_dir.is_some() {
            return Err(CliError::input("mask_dir given without flow_dir"));
        }
        if let Some(p) = &e.features {
            s.feature_frames = dataset::load_features(&m.resolve(p))?.frames();
        }
        Ok(s)
    })?;
    let summary = IngestSummary { meta: ctx.bundle().meta, videos: videos.into_iter().collect() };
    let path = ctx.out.join("ingest.json");
    let text = serde_json::to_value(&summary).expect("summary serializes").to_string();
    write_atomic(&path, text.as_bytes())?;
    Ok(vec![path])
}

fn filter(ctx: &Context, input: &ManifestArgs, min_flow: Option<f64>) -> Result<Vec<PathBuf>, CliError> {
    let min_flow = match min_flow.or(ctx.config.min_flow) {
        Some(f) => check_min_flow(f).map_err(|e| CliError::usage(e.message))?,
        None => return Err(CliError::usage("filter needs --min-flow (or min_flow in the config)")),
    };
    let (m, list) = entries(input)?;
    let scores = per_video(&list, |e| {
        let flow_dir = dataset::entry_dir(&m, e, &e.flow_dir, "flow_dir")?;
        let mask_dir = e.mask_dir.as_ref().map(|p| m.resolve(p));
        let (flows, masks) = dataset::load_flows(&flow_dir, mask_dir.as_deref())?;
        Ok(metrics::camera_movement_score(&flows, &masks)?)
    })?;
    let (keep, drop): (Vec<_>, Vec<_>) = scores.iter().partition(|(_, s)| !s.empty && s.value > min_flow);
    let section = io::FilterSection {
        min_flow,
        keep: keep.into_iter().map(|(id, _)| id.clone()).collect(),
        drop: drop.into_iter().map(|(id, _)| id.clone()).collect(),
        scores: scores.into_iter().collect(),
    };
    let mut bundle = ctx.bundle();
    bundle.metrics = Some(io::MetricsSection { filter: Some(section), ..Default::default() });
    Ok(vec![ctx.write_bundle("filter.json", &bundle)?])
}

fn calibrate(ctx: &Context, input: &ManifestArgs, keyframes: Option<usize>) -> Result<Vec<PathBuf>, CliError> {
    let count = keyframes.unwrap_or(ctx.config.keyframes);
    if count == 0 {
        return Err(CliError::usage("--keyframes must be at least 1"));
    }
    let params = ctx.ransac();
    let (m, list) = entries(input)?;
    let results = per_video(&list, |e| {
        let traj = dataset::load_trajectory(&m.resolve(&e.trajectory))?;
        let dir = dataset::entry_dir(&m, e, &e.depth_dir, "depth_dir")?;
        let chosen = dataset::select_keyframes(&dataset::depth_frames(&dir)?, count);
        let pairs = chosen
            .iter()
            .map(|&k| dataset::load_depth_pair(&dir, k).map(|p| (k, p)))
            .collect::<Result<Vec<_>, _>>()?;
        let (calibrated, estimate) = calibration::calibrate_trajectory(&traj, &pairs, &params)?;
        let text = io::write_trajectory(&calibrated)?;
        Ok((text, estimate))
    })?;
    let mut written = Vec::new();
    let mut estimates = BTreeMap::new();
    for (id, (text, estimate)) in results {
        let path = ctx.out.join("trajectories").join(format!("{id}.txt"));
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
        estimates.insert(id, estimate);
    }
    let mut bundle = ctx.bundle();
    bundle.calibration = Some(estimates);
    written.insert(0, ctx.write_bundle("calibrate.json", &bundle)?);
    Ok(written)
}

fn analyze(ctx: &Context, input: &ManifestArgs, traj_dir: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let params = ctx.config.analysis;
    params.validate()?;
    let (m, list) = entries(input)?;
    let profiles = per_video(&list, |e| {
        let path = match traj_dir {
            Some(d) => d.join(format!("{}.txt", e.video_id)),
            None => m.resolve(&e.trajectory),
        };
        let traj = dataset::load_trajectory(&path)?;
        Ok(analysis::classify_trajectory(&traj, &params)?)
    })?;
    let mut bundle = ctx.bundle();
    bundle.profile = Some(profiles.into_iter().collect());
    Ok(vec![ctx.write_bundle("analyze.json", &bundle)?])
}

fn balance(ctx: &Context, profiles_path: &Path, cap: Option<&str>) -> Result<Vec<PathBuf>, CliError> {
    let cap = match cap {
        Some(s) => s.parse::<BalanceCap>().map_err(|e| CliError::usage(format!("--cap: {e}")))?,
        None => ctx.config.cap()?,
    };
    let profiles: BTreeMap<String, TrajectoryProfile> = read_bundle(profiles_path)?
        .profile
        .ok_or_else(|| CliError::input(format!("{}: no profile section", profiles_path.display())))?;
    let ids: Vec<&String> = profiles.keys().collect();
    let list: Vec<&TrajectoryProfile> = profiles.values().collect();
    let result = analysis::balance_dataset(&list.iter().map(|p| (p.category, p.importance)).collect::<Vec<_>>(), cap)?;
    let name = |idx: &Vec<usize>| idx.iter().map(|&i| ids[i].clone()).collect::<Vec<_>>();
    let mut bundle = ctx.bundle();
    bundle.balance = Some(io::BalanceSection {
        cap: result.cap,
        keep: name(&result.keep),
        drop: name(&result.drop),
        histogram_before: result.histogram_before,
        histogram_after: result.histogram_after,
    });
    Ok(vec![ctx.write_bundle("balance.json", &bundle)?])
}

fn plucker(
    ctx: &Context,
    input: &ManifestArgs,
    (h, w): (usize, usize),
    stride: Option<usize>,
    ray_mode: Option<RayModeArg>,
) -> Result<Vec<PathBuf>, CliError> {
    let stride = stride.unwrap_or(ctx.config.stride);
    let mode = match ray_mode {
        Some(RayModeArg::Geometric) => RayMode::Geometric,
        Some(RayModeArg::Literal) => RayMode::Literal,
        None => ctx.config.ray_mode,
    };
    let (m, list) = entries(input)?;
    let maps = per_video(&list, |e| {
        let traj = dataset::load_trajectory(&m.resolve(&e.trajectory))?;
        let sampled = geometry::downsample_trajectory(&traj, stride)?;
        let Some(first) = sampled.frames().first() else { return Ok(Vec::new()) };
        let rebased = geometry::rebase_trajectory(&sampled, &first.pose);
        rebased
            .frames()
            .iter()
            .map(|f| {
                let map = geometry::plucker_map_with_mode(&f.intrinsics, &f.pose, h, w, mode)?;
                let data: Vec<f32> = map.as_slice().iter().map(|&x| x as f32).collect();
                let raster = Raster::features((h * w) as u32, 6, data)?;
                Ok((f.frame_index, io::encode_raster(&raster)))
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let mut written = Vec::new();
    for (id, frames) in maps {
        for (k, bytes) in frames {
            let path = ctx.out.join("plucker").join(&id).join(format!("{k}.plucker.ctrw"));
            write_atomic(&path, &bytes)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn eval_traj(ctx: &Context, est: &Path, gt: &Path, align_rotations: bool) -> Result<Vec<PathBuf>, CliError> {
    let e = dataset::load_trajectory(est)?;
    let g = dataset::load_trajectory(gt)?;
    let ei: Vec<u64> = e.frames().iter().map(|f| f.frame_index).collect();
    let gi: Vec<u64> = g.frames().iter().map(|f| f.frame_index).collect();
    if ei != gi {
        return Err(CliError::input("estimate and ground truth cover different frame indices"));
    }
    let errs = metrics::evaluate_trajectory(&e, &g, align_rotations)?;
    let key = est.file_name().map_or_else(|| "est".into(), |n| n.to_string_lossy().into_owned());
    let eval = io::TrajectoryEval {
        trans_err: errs.trans_err,
        rot_err_deg: errs.rot_err_deg,
        scale: errs.alignment.scale,
        degenerate: errs.alignment.degenerate,
    };
    let mut bundle = ctx.bundle();
    bundle.metrics = Some(io::MetricsSection {
        trans_err: Some(eval.trans_err),
        rot_err_deg: Some(eval.rot_err_deg),
        trajectory: Some([(key, eval)].into()),
        ..Default::default()
    });
    Ok(vec![ctx.write_bundle("eval-traj.json", &bundle)?])
}

fn eval_motion(ctx: &Context, flow_dir: &Path, mask_dir: &Path, focal_px: Option<f64>) -> Result<Vec<PathBuf>, CliError> {
    let (flows, masks) = dataset::load_flows(flow_dir, Some(mask_dir))?;
    let units = match focal_px {
        Some(f) => FlowUnits::Degrees { focal_px: f },
        None => FlowUnits::Pixels,
    };
    let stat = metrics::motion_strength_in(&flows, &masks, units)?;
    let mut bundle = ctx.bundle();
    bundle.metrics = Some(io::MetricsSection { motion_strength: Some(stat), ..Default::default() });
    Ok(vec![ctx.write_bundle("eval-motion.json", &bundle)?])
}

fn eval_appearance(ctx: &Context, clips: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let feats = clips.iter().map(|p| dataset::load_features(p)).collect::<Result<Vec<_>, _>>()?;
    let score = metrics::appearance_consistency(&feats)?;
    let mut bundle = ctx.bundle();
    bundle.metrics = Some(io::MetricsSection { appearance_consistency: Some(score), ..Default::default() });
    Ok(vec![ctx.write_bundle("eval-appearance.json", &bundle)?])
}

fn report(ctx: &Context, inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let inputs: Vec<PathBuf> = if inputs.is_empty() {
        STAGE_OUTPUTS.iter().map(|n| ctx.out.join(n)).filter(|p| p.is_file()).collect()
    } else {
        inputs.to_vec()
    };
    if inputs.is_empty() {
        return Err(CliError::input(format!("no stage outputs found in {}", ctx.out.display())));
    }
    let mut merged = ctx.bundle();
    for p in &inputs {
        let mut b = read_bundle(p)?;
        b.meta.seed = None;
        merged.merge(b);
    }
    Ok(vec![ctx.write_bundle("report.json", &merged)?])
}
