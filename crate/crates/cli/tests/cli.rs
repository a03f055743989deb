mod common;

use std::path::Path;
use std::process::{Command, Output};

use camtraj::io::{encode_raster, parse_report, write_trajectory, Raster};
use serde_json::Value;

fn camtraj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camtraj")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap_or_else(|_| panic!("stderr not JSON: {text}"))
}

fn read_report(path: &Path) -> camtraj::io::ReportBundle {
    parse_report(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn eval_traj_identical_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.txt");
    std::fs::write(&t, write_trajectory(&common::synthetic_trajectory(1, 0.1)).unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    let out = camtraj(&["--out", p(&out_dir), "eval-traj", "--est", p(&t), "--gt", p(&t)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_report(&out_dir.join("eval-traj.json")).metrics.unwrap();
    assert!(m.trans_err.unwrap().abs() < 1e-9);
    assert!(m.rot_err_deg.unwrap().abs() < 1e-9);
}

#[test]
fn calibrate_recovers_doubled_depth() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("t.txt"), write_trajectory(&common::synthetic_trajectory(0, 0.1)).unwrap()).unwrap();
    std::fs::create_dir(root.join("depth")).unwrap();
    for k in [0u64, 20, 40] {
        let sfm: Vec<f32> = (0..24 * 32).map(|i| 1.0 + (i % 17) as f32 * 0.25).collect();
        let metric: Vec<f32> = sfm.iter().map(|d| 2.0 * d).collect();
        std::fs::write(root.join(format!("depth/{k}.sfm.ctrw")), encode_raster(&Raster::depth(24, 32, sfm).unwrap())).unwrap();
        std::fs::write(root.join(format!("depth/{k}.metric.ctrw")), encode_raster(&Raster::depth(24, 32, metric).unwrap()))
            .unwrap();
    }
    std::fs::write(
        root.join("m.json"),
        r#"{"version":1,"entries":[{"video_id":"a","trajectory":"t.txt","depth_dir":"depth"}]}"#,
    )
    .unwrap();
    let out_dir = root.join("out");
    let out = camtraj(&["--out", p(&out_dir), "calibrate", "--manifest", p(&root.join("m.json"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cal = read_report(&out_dir.join("calibrate.json")).calibration.unwrap();
    assert!((cal["a"].scene_scale - 2.0).abs() < 0.02);
    assert_eq!(cal["a"].per_frame.len(), 3);
    let text = std::fs::read_to_string(out_dir.join("trajectories/a.txt")).unwrap();
    assert!(text.lines().any(|l| l == "# calibrated"));
}

#[test]
fn balance_caps_three_categories() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut entries = Vec::new();
    for (i, shape) in [0usize, 1, 3].iter().cycle().take(9).enumerate() {
        let id = format!("v{i}");
        let traj = common::synthetic_trajectory(*shape, 0.1 + 0.01 * i as f64);
        std::fs::write(root.join(format!("{id}.txt")), write_trajectory(&traj).unwrap()).unwrap();
        entries.push(serde_json::json!({"video_id": id, "trajectory": format!("{id}.txt")}));
    }
    let manifest = root.join("m.json");
    std::fs::write(&manifest, serde_json::json!({"version": 1, "entries": entries}).to_string()).unwrap();
    let out_dir = root.join("out");
    assert_eq!(camtraj(&["--out", p(&out_dir), "analyze", "--manifest", p(&manifest)]).status.code(), Some(0));
    let analyze = out_dir.join("analyze.json");
    let out = camtraj(&["--out", p(&out_dir), "balance", "--profiles", p(&analyze), "--cap", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let b = read_report(&out_dir.join("balance.json")).balance.unwrap();
    assert_eq!(b.histogram_before.len(), 3);
    assert!(b.histogram_before.values().all(|&c| c == 3));
    assert!(b.histogram_after.values().all(|&c| c == 2));
    assert_eq!((b.keep.len(), b.drop.len()), (6, 3));
}

#[test]
fn exit_codes_and_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let out_dir = root.join("out");

    let out = camtraj(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");

    let ds = common::write_dataset(root, 2, 1);
    let out = camtraj(&["--out", p(&out_dir), "filter", "--manifest", p(&ds.manifest)]);
    assert_eq!(out.status.code(), Some(1));

    let out = camtraj(&["--out", p(&out_dir), "balance", "--profiles", "x.json", "--cap", "0"]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(root.join("bad.json"), r#"{"version":1,"entries":[{"video_id":"a","trajectory":"missing.txt"}]}"#).unwrap();
    let out = camtraj(&["--out", p(&out_dir), "ingest", "--manifest", p(&root.join("bad.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["exit_code"], 2);
    assert_eq!(e["error"]["video_id"], "a");

    std::fs::write(root.join("vid00/traj.txt"), "640 360\n0 1 2 3\n").unwrap();
    let out = camtraj(&["--out", p(&out_dir), "ingest", "--manifest", p(&ds.manifest)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["error"]["message"].as_str().unwrap().contains("line 2"));

    // Depth pairs with no common scale.
    let depth = root.join("vid01/depth");
    for k in (0..60).step_by(10) {
        let sfm: Vec<f32> = (0..24 * 32).map(|i| 1.0 + (i as f32 * 0.618).fract() * 50.0).collect();
        let metric: Vec<f32> = (0..24 * 32).map(|i| 1.0 + (i as f32 * 0.377).fract() * 50.0).collect();
        std::fs::write(depth.join(format!("{k}.sfm.ctrw")), encode_raster(&Raster::depth(24, 32, sfm).unwrap())).unwrap();
        std::fs::write(depth.join(format!("{k}.metric.ctrw")), encode_raster(&Raster::depth(24, 32, metric).unwrap())).unwrap();
    }
    std::fs::write(
        root.join("one.json"),
        r#"{"version":1,"entries":[{"video_id":"vid01","trajectory":"vid01/traj.txt","depth_dir":"vid01/depth"}]}"#,
    )
    .unwrap();
    let out = camtraj(&["--out", p(&out_dir), "calibrate", "--manifest", p(&root.join("one.json"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_json(&out)["error"]["kind"], "numeric");
}

#[test]
fn pipeline_stages_and_selection() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let ds = common::write_dataset(root, 6, 7);
    let out_dir = root.join("out");
    let o = p(&out_dir);
    let m = p(&ds.manifest);
    let run = |args: &[&str]| {
        let out = camtraj(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&["--out", o, "ingest", "--manifest", m]);
    let ingest: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("ingest.json")).unwrap()).unwrap();
    assert_eq!(ingest["videos"]["vid03"]["depth_frames"], 6);
    assert_eq!(ingest["videos"]["vid03"]["mask_frames"], 3);

    run(&["--out", o, "filter", "--manifest", m, "--min-flow", "1.0"]);
    let filter = read_report(&out_dir.join("filter.json")).metrics.unwrap().filter.unwrap();
    assert_eq!(filter.keep, ["vid02", "vid03", "vid04", "vid05"]);
    assert_eq!(filter.drop, ["vid00", "vid01"]);

    let sel = out_dir.join("filter.json");
    run(&["--out", o, "--jobs", "2", "calibrate", "--manifest", m, "--select", p(&sel), "--keyframes", "3"]);
    let cal = read_report(&out_dir.join("calibrate.json")).calibration.unwrap();
    assert_eq!(cal.keys().collect::<Vec<_>>(), ["vid02", "vid03", "vid04", "vid05"]);
    for (id, s) in &ds.scales {
        if let Some(est) = cal.get(id) {
            assert!((est.scene_scale / s - 1.0).abs() < 0.01, "{id}: {} vs {s}", est.scene_scale);
            assert_eq!(est.per_frame.len(), 3);
        }
    }

    let trajs = out_dir.join("trajectories");
    run(&["--out", o, "analyze", "--manifest", m, "--select", p(&sel), "--trajectories", p(&trajs)]);
    let prof = read_report(&out_dir.join("analyze.json")).profile.unwrap();
    assert_eq!(prof["vid02"].turn_bin, camtraj::TurnBin::Left);
    assert_eq!(prof["vid03"].direction_bin, camtraj::DirectionBin::Right);

    run(&["--out", o, "balance", "--profiles", p(&out_dir.join("analyze.json")), "--cap", "auto"]);
    run(&["--out", o, "eval-motion", "--flow-dir", p(&root.join("vid02/flow")), "--mask-dir", p(&root.join("vid02/mask"))]);
    let clips = [root.join("vid00/clip.ctrw"), root.join("vid01/clip.ctrw"), root.join("vid02/clip.ctrw")];
    run(&["--out", o, "eval-appearance", "--clips", p(&clips[0]), p(&clips[1]), p(&clips[2])]);
    run(&["--out", o, "report"]);
    let report = read_report(&out_dir.join("report.json"));
    assert!(report.calibration.is_some() && report.profile.is_some() && report.balance.is_some());
    let metrics = report.metrics.unwrap();
    assert!(metrics.filter.is_some());
    let ms = metrics.motion_strength.unwrap();
    assert!((ms.value - 4.3).abs() < 0.3 && !ms.empty);
    assert!(metrics.appearance_consistency.unwrap() > 0.5);
}

#[test]
fn plucker_writes_one_raster_per_sampled_frame() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::write_dataset(dir.path(), 1, 3);
    let out_dir = dir.path().join("out");
    let out = camtraj(&[
        "--out", p(&out_dir), "plucker", "--manifest", p(&ds.manifest), "--latent-h", "4", "--latent-w", "6", "--stride", "4",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let files = std::fs::read_dir(out_dir.join("plucker/vid00")).unwrap().count();
    assert_eq!(files, common::FRAMES / 4);
    let r = camtraj::io::read_raster(&out_dir.join("plucker/vid00/0.plucker.ctrw"), camtraj::io::RasterKind::Features)
        .unwrap();
    assert_eq!(r.shape(), (24, 6));
    let camtraj::io::RasterData::F32(v) = r.data() else { panic!() };
    // First sampled frame sits at the origin after rebasing: zero moment.
    assert!(v.chunks(6).all(|px| px[..3].iter().all(|m| m.abs() < 1e-6)));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let ds = common::write_dataset(dir.path(), 3, 11);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "seed = 42\nmin_flow = 0.7\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = camtraj(&["--config", p(&cfg), "--out", p(&out_dir), "filter", "--manifest", p(&ds.manifest)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let b = read_report(&out_dir.join("filter.json"));
    assert_eq!(b.meta.seed, Some(42));
    assert_eq!(b.metrics.unwrap().filter.unwrap().min_flow, 0.7);

    let out = camtraj(&[
        "--config", p(&cfg), "--seed", "5", "--out", p(&out_dir), "filter", "--manifest", p(&ds.manifest), "--min-flow", "2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let b = read_report(&out_dir.join("filter.json"));
    assert_eq!(b.meta.seed, Some(5));
    assert_eq!(b.metrics.unwrap().filter.unwrap().min_flow, 2.0);

    std::fs::write(&cfg, "[ransac]\niterations = 0\n").unwrap();
    let out = camtraj(&["--config", p(&cfg), "--out", p(&out_dir), "report"]);
    assert_eq!(out.status.code(), Some(2));
}
