use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use groundmap::eval::MetricsReport;
use groundmap::io;
use groundmap::multi_session::Session;
use groundmap::pipeline::odometry_graph;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_groundmap"))
}

fn scene(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> MetricsReport {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    MetricsReport::parse(&String::from_utf8(out.stdout).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    for flag in ["--help", "--version"] {
        assert_eq!(run(&[flag]).status.code(), Some(0));
    }
    assert_eq!(run(&["pipeline", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["register", "--source", "a.bin"]).status.code(), Some(1));
    assert_eq!(run(&["eval"]).status.code(), Some(1));
    assert_eq!(run(&["pipeline", "--scene", "x", "--seed", "minus"]).status.code(), Some(1));
}

#[test]
fn stage_failures_exit_two_with_stage_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["ground-seg", "--scan", s(&dir.path().join("missing.bin"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: input: "), "{err}");
    assert!(err.contains("missing.bin"), "{err}");

    let odd = dir.path().join("odd.bin");
    fs::write(&odd, [0u8; 17]).unwrap();
    let out = run(&["ground-seg", "--scan", s(&odd)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("multiple of 16"));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "groundseg.dist_treshold = 0.1\n").unwrap();
    let out = run(&["pipeline", "--scene", s(&scene("flat.scene")), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: config: "), "{err}");

    let empty = dir.path().join("empty.bin");
    fs::write(&empty, []).unwrap();
    let out = run(&["ground-seg", "--scan", s(&empty)]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["register", "--source", s(&empty), "--target", s(&empty)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: register: empty input"), "{err}");
}

#[test]
fn pipeline_reports_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.txt");
    let flat = scene("flat.scene");
    let args = ["pipeline", "--scene", s(&flat), "--seed", "7"];
    let a = run(&args);
    let mut with_file = args.to_vec();
    with_file.extend(["--report", s(&report)]);
    let b = run(&with_file);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(fs::read(&report).unwrap(), a.stdout);
    let r = MetricsReport::parse(&String::from_utf8(a.stdout).unwrap()).unwrap();
    assert_eq!(r.stage, "pipeline");
    assert!(r.get("groundseg.recall").unwrap() > 0.9);
    assert!(r.metrics.keys().all(|k| !k.starts_with("time_ms.")));

    let timed = ok(&["pipeline", "--scene", s(&flat), "--seed", "7", "--with-timing"]);
    assert!(timed.get("time_ms.groundseg").is_some());
}

#[test]
fn synth_then_register_recovers_known_offset() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let r = ok(&["synth", "--scene", s(&scene("street.scene")), "--out", s(&seq), "--scans", "7", "--seed", "3"]);
    assert_eq!(r.get("scans"), Some(7.0));
    let poses = io::read_pose_file(&seq.join("poses.txt")).unwrap();
    let truth = poses[0].inverse().compose(&poses[6]);
    let truth_file = dir.path().join("truth.txt");
    io::write_pose_file(&truth_file, &[truth]).unwrap();
    let est = dir.path().join("est.txt");
    let r = ok(&[
        "register",
        "--source",
        s(&seq.join("scans/000006.bin")),
        "--target",
        s(&seq.join("scans/000000.bin")),
        "--truth",
        s(&truth_file),
        "--out",
        s(&est),
    ]);
    assert!(r.get("rotation_error_deg").unwrap() <= 5.0, "{}", r.to_text());
    assert!(r.get("translation_error_m").unwrap() <= 1.0, "{}", r.to_text());
    assert_eq!(io::read_pose_file(&est).unwrap().len(), 1);
}

#[test]
fn slam_erase_and_eval_chain() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    ok(&["synth", "--scene", s(&scene("flat.scene")), "--out", s(&seq), "--seed", "2"]);
    let sess = dir.path().join("sess");
    let r = ok(&[
        "slam",
        "--scans",
        s(&seq.join("scans")),
        "--poses",
        s(&seq.join("odometry.txt")),
        "--truth",
        s(&seq.join("poses.txt")),
        "--out",
        s(&sess),
    ]);
    assert_eq!(r.get("pgo.converged"), Some(1.0));
    assert!(sess.join("graph.g2o").exists());
    let poses = sess.join("poses.txt");

    let (st, dy, map) = (dir.path().join("s.ply"), dir.path().join("d.ply"), dir.path().join("m.ply"));
    let r = ok(&[
        "erase-dynamic",
        "--scans",
        s(&seq.join("scans")),
        "--poses",
        s(&poses),
        "--out-static",
        s(&st),
        "--out-dynamic",
        s(&dy),
        "--out-map",
        s(&map),
    ]);
    let (static_cloud, v) = io::read_ply(&st).unwrap();
    let (dynamic_cloud, w) = io::read_ply(&dy).unwrap();
    assert!(v.iter().all(|&x| x == 0) && w.iter().all(|&x| x == 1));
    assert_eq!(static_cloud.len() + dynamic_cloud.len(), r.get("map_points").unwrap() as usize);

    let e = ok(&["eval", "--map", s(&map), "--poses", s(&poses), "--truth", s(&seq.join("poses.txt"))]);
    assert_eq!(e.get("staticmap.dynamic_rejection_rate"), r.get("dynamic_rejection_rate"));
    assert_eq!(e.get("staticmap.static_preservation_rate"), r.get("static_preservation_rate"));
    assert!(e.get("trajectory.rms_m").unwrap() < 0.5);
}

#[test]
fn merge_writes_joint_session_and_transform() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    ok(&["synth", "--scene", s(&scene("street.scene")), "--out", s(&seq), "--scans", "8", "--seed", "5"]);
    let scans = io::read_scans_dir(&seq.join("scans")).unwrap();
    let poses = io::read_pose_file(&seq.join("poses.txt")).unwrap();
    let session = |range: std::ops::Range<usize>| {
        let g = odometry_graph(&poses[range.clone()], 0.002, 0.02).unwrap();
        Session::new(g, range.clone().map(|k| (k - range.start, scans[k].clone())).collect()).unwrap()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    io::write_session(&a, &session(0..5)).unwrap();
    io::write_session(&b, &session(3..8)).unwrap();
    let ident = dir.path().join("ident.txt");
    io::write_pose_file(&ident, &[groundmap::geom::RigidPose::identity()]).unwrap();
    let out = dir.path().join("joint");
    let r = ok(&[
        "merge",
        "--session-a",
        s(&a),
        "--session-b",
        s(&b),
        "--out",
        s(&out),
        "--transform",
        s(&ident),
    ]);
    assert_eq!(r.get("id_offset"), Some(5.0));
    assert!(r.get("inter_edges").unwrap() >= 1.0);
    let joint = io::read_session(&out).unwrap();
    assert_eq!(joint.graph.len(), 10);
    assert_eq!(joint.scans.len(), 10);
    assert_eq!(io::read_pose_file(&out.join("transform.txt")).unwrap().len(), 1);
    // Both sessions were expressed in the same world frame.
    for k in 3..5 {
        let pa = joint.graph.pose(k).unwrap();
        let pb = joint.graph.pose(k - 3 + 5).unwrap();
        assert!((pa.translation() - pb.translation()).norm() < 0.5);
    }
}
