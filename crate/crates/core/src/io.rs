//! KITTI binary scans and pose files, label sidecars, PLY export and
//! on-disk session and sequence directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geom::{Point, PointCloud, PointLabel, RigidPose};
use crate::multi_session::Session;
use crate::pose_graph::{read_graph, write_graph};

pub const KITTI_STRIDE: usize = 16;
/// Largest `‖RᵀR − I‖` accepted from a pose file; anything smaller is
/// projected back onto SO(3).
pub const POSE_ORTHOGONALITY_TOLERANCE: f64 = 1e-3;

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn decode_kitti(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    if bytes.len() % KITTI_STRIDE != 0 {
        return Err(malformed(path, format!("size {} is not a multiple of {KITTI_STRIDE}", bytes.len())));
    }
    let f = |c: &[u8]| f32::from_le_bytes(c.try_into().expect("4 bytes"));
    let mut cloud = PointCloud::new(path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    for (k, rec) in bytes.chunks_exact(KITTI_STRIDE).enumerate() {
        let (x, y, z, i) = (f(&rec[0..4]), f(&rec[4..8]), f(&rec[8..12]), f(&rec[12..16]));
        let p = Point::try_new(x as f64, y as f64, z as f64)
            .map_err(|_| malformed(path, format!("point {k} is not finite")))?;
        cloud.push(p.with_intensity(i));
    }
    Ok(cloud)
}

pub fn encode_kitti(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * KITTI_STRIDE);
    for p in &cloud.points {
        for v in [p.x() as f32, p.y() as f32, p.z() as f32, p.intensity.unwrap_or(0.0)] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_kitti_bin(path: &Path) -> Result<PointCloud> {
    decode_kitti(&fs::read(path)?, path)
}

pub fn write_kitti_bin(path: &Path, cloud: &PointCloud) -> Result<()> {
    Ok(fs::write(path, encode_kitti(cloud))?)
}

/// One label byte per point.
pub fn read_labels(path: &Path) -> Result<Vec<PointLabel>> {
    fs::read(path)?
        .into_iter()
        .enumerate()
        .map(|(k, b)| PointLabel::from_byte(b).ok_or_else(|| malformed(path, format!("label {b} at index {k}"))))
        .collect()
}

pub fn write_labels(path: &Path, cloud: &PointCloud) -> Result<()> {
    Ok(fs::write(path, cloud.points.iter().map(|p| p.label.as_byte()).collect::<Vec<_>>())?)
}

pub fn apply_labels(cloud: &mut PointCloud, labels: &[PointLabel], path: &Path) -> Result<()> {
    if labels.len() != cloud.len() {
        return Err(malformed(path, format!("{} labels for {} points", labels.len(), cloud.len())));
    }
    for (p, l) in cloud.points.iter_mut().zip(labels) {
        p.label = *l;
    }
    Ok(())
}

/// Scan plus its labels sidecar when one exists next to it.
pub fn read_labeled_scan(bin: &Path) -> Result<PointCloud> {
    let mut cloud = read_kitti_bin(bin)?;
    let lab = bin.with_extension("label");
    if lab.exists() {
        let labels = read_labels(&lab)?;
        apply_labels(&mut cloud, &labels, &lab)?;
    }
    Ok(cloud)
}

pub fn write_labeled_scan(bin: &Path, cloud: &PointCloud) -> Result<()> {
    write_kitti_bin(bin, cloud)?;
    write_labels(&bin.with_extension("label"), cloud)
}

/// Pose from 12 row-major `[R | t]` values. Slightly non-orthonormal
/// rotations are projected onto SO(3).
pub fn pose_from_row_major(v: &[f64; 12]) -> Result<RigidPose> {
    let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
    let t = Vector3::new(v[3], v[7], v[11]);
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if err > POSE_ORTHOGONALITY_TOLERANCE || r.determinant() <= 0.0 {
        return Err(Error::NonRigidRotation(err));
    }
    RigidPose::new(RigidPose::orthonormalize(&r), t)
}

pub fn parse_pose_line(line: &str, number: usize) -> Result<RigidPose> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::MalformedLine { line: number, reason: "not a number".into() })?;
    let arr: [f64; 12] = vals.try_into().map_err(|v: Vec<f64>| Error::MalformedLine {
        line: number,
        reason: format!("expected 12 values, got {}", v.len()),
    })?;
    pose_from_row_major(&arr)
}

pub fn parse_poses(text: &str) -> Result<Vec<RigidPose>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| parse_pose_line(l, n + 1))
        .collect()
}

pub fn format_pose_line(p: &RigidPose) -> String {
    let vals = p.to_row_major_3x4();
    let mut s = String::new();
    for (k, v) in vals.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v:.16e}");
    }
    s
}

pub fn format_poses(poses: &[RigidPose]) -> String {
    poses.iter().map(|p| format_pose_line(p) + "\n").collect()
}

pub fn read_pose_file(path: &Path) -> Result<Vec<RigidPose>> {
    parse_poses(&fs::read_to_string(path)?)
}

pub fn write_pose_file(path: &Path, poses: &[RigidPose]) -> Result<()> {
    Ok(fs::write(path, format_poses(poses))?)
}

/// Binary little-endian PLY with `x y z intensity` floats and `label` and
/// `verdict` bytes per vertex.
pub fn encode_ply(cloud: &PointCloud, verdict: Option<&[u8]>) -> Vec<u8> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property float intensity\nproperty uchar label\nproperty uchar verdict\nend_header\n",
        cloud.len()
    )
    .into_bytes();
    for (k, p) in cloud.points.iter().enumerate() {
        for v in [p.x() as f32, p.y() as f32, p.z() as f32, p.intensity.unwrap_or(0.0)] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(p.label.as_byte());
        out.push(verdict.and_then(|v| v.get(k).copied()).unwrap_or(0));
    }
    out
}

pub fn write_ply(path: &Path, cloud: &PointCloud, verdict: Option<&[u8]>) -> Result<()> {
    Ok(fs::write(path, encode_ply(cloud, verdict))?)
}

/// Reads files written by [`write_ply`]; returns the cloud and verdicts.
pub fn read_ply(path: &Path) -> Result<(PointCloud, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| malformed(path, "missing end_header"))?
        + marker.len();
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| malformed(path, "header is not text"))?;
    let n: usize = header
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| malformed(path, "missing vertex count"))?;
    const REC: usize = 18;
    let body = &bytes[end..];
    if body.len() != n * REC {
        return Err(malformed(path, format!("expected {} body bytes, got {}", n * REC, body.len())));
    }
    let f = |c: &[u8]| f32::from_le_bytes(c.try_into().expect("4 bytes"));
    let mut cloud = PointCloud::new(path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let mut verdicts = Vec::with_capacity(n);
    for rec in body.chunks_exact(REC) {
        let p = Point::try_new(f(&rec[0..4]) as f64, f(&rec[4..8]) as f64, f(&rec[8..12]) as f64)
            .map_err(|_| malformed(path, "non-finite vertex"))?
            .with_intensity(f(&rec[12..16]))
            .with_label(PointLabel::from_byte(rec[16]).ok_or_else(|| malformed(path, "bad label"))?);
        cloud.push(p);
        verdicts.push(rec[17]);
    }
    Ok((cloud, verdicts))
}

fn scan_name(k: usize) -> String {
    format!("{k:06}.bin")
}

/// `dir/scans/NNNNNN.bin` sorted by name.
pub fn list_scans(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "bin"))
        .collect();
    v.sort();
    Ok(v)
}

/// Writes `scans/` (with label sidecars) and `poses.txt`.
pub fn write_sequence_dir(dir: &Path, scans: &[PointCloud], poses: &[RigidPose]) -> Result<()> {
    let sd = dir.join("scans");
    fs::create_dir_all(&sd)?;
    for (k, s) in scans.iter().enumerate() {
        write_labeled_scan(&sd.join(scan_name(k)), s)?;
    }
    write_pose_file(&dir.join("poses.txt"), poses)
}

pub fn read_scans_dir(dir: &Path) -> Result<Vec<PointCloud>> {
    list_scans(dir)?.iter().map(|p| read_labeled_scan(p)).collect()
}

/// `graph.g2o` plus `scans/<node id>.bin`.
pub fn write_session(dir: &Path, session: &Session) -> Result<()> {
    let sd = dir.join("scans");
    fs::create_dir_all(&sd)?;
    fs::write(dir.join("graph.g2o"), write_graph(&session.graph))?;
    for (id, s) in &session.scans {
        write_labeled_scan(&sd.join(scan_name(*id)), s)?;
    }
    Ok(())
}

pub fn read_session(dir: &Path) -> Result<Session> {
    let gpath = dir.join("graph.g2o");
    let graph = read_graph(&fs::read_to_string(&gpath)?).map_err(|e| malformed(&gpath, e.to_string()))?;
    let mut scans = BTreeMap::new();
    let sd = dir.join("scans");
    if sd.is_dir() {
        for p in list_scans(&sd)? {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let id: usize = stem.parse().map_err(|_| malformed(&p, "scan name is not a node id"))?;
            scans.insert(id, read_labeled_scan(&p)?);
        }
    }
    Session::new(graph, scans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn manual_record(v: [f32; 4]) -> Vec<u8> {
        v.iter().flat_map(|x| x.to_le_bytes()).collect()
    }

    #[test]
    fn kitti_decoding() {
        let p = Path::new("x.bin");
        let c = decode_kitti(&manual_record([1.0, 2.0, 3.0, 0.5]), p).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(*c.points[0].xyz(), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(c.points[0].intensity, Some(0.5));
        assert!(decode_kitti(&[], p).unwrap().is_empty());
        assert!(matches!(decode_kitti(&[0u8; 17], p), Err(Error::MalformedFile { .. })));
        let nan = manual_record([f32::NAN, 0.0, 0.0, 0.0]);
        assert!(decode_kitti(&nan, p).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::from_points(vec![
            Point::new(0.1, -2.5, 3.75).with_label(PointLabel::Ground).with_intensity(0.5),
            Point::new(1e3, 4.0, -0.001).with_label(PointLabel::DynamicObject),
        ]);
        let bin = dir.path().join("a.bin");
        write_labeled_scan(&bin, &cloud).unwrap();
        let back = read_labeled_scan(&bin).unwrap();
        assert_eq!(back.points[1].label, PointLabel::DynamicObject);
        assert_eq!(back.points[0].x() as f32, 0.1f32);

        let ply = dir.path().join("a.ply");
        write_ply(&ply, &cloud, Some(&[0, 1])).unwrap();
        let (pc, verdict) = read_ply(&ply).unwrap();
        assert_eq!(verdict, vec![0, 1]);
        assert_eq!(pc.points[0].label, PointLabel::Ground);
    }

    #[test]
    fn pose_lines() {
        assert_eq!(parse_pose_line("1 0 0 0 0 1 0 0 0 0 1 0", 1).unwrap(), RigidPose::identity());
        assert!(matches!(parse_pose_line("1 0 0 0 0 1 0 0 0 0 1", 3), Err(Error::MalformedLine { line: 3, .. })));
        let p = parse_pose_line("0 -1 0 1 1 0 0 0 0 0 1 0", 1).unwrap();
        let x = p.transform_point(&Vector3::x());
        assert!((x - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
        let drift = parse_pose_line("1.0004 0 0 0 0 1 0 0 0 0 1 0", 1).unwrap();
        assert!((drift.rotation() - Matrix3::identity()).abs().max() < 1e-12);
        assert!(matches!(parse_pose_line("1.1 0 0 0 0 1 0 0 0 0 1 0", 1), Err(Error::NonRigidRotation(_))));
        assert!(parse_poses("\n1 0 0 0 0 1 0 0 0 0 1 0\n\n").unwrap().len() == 1);
    }

    #[test]
    fn session_directory_round_trip() {
        use crate::pose_graph::{diagonal_information, EdgeKind, PoseEdge, PoseGraph};
        let mut g = PoseGraph::new();
        g.add_node(0, RigidPose::identity()).unwrap();
        g.add_node(1, RigidPose::from_translation(Vector3::new(1.0, 0.0, 0.0))).unwrap();
        g.add_edge(
            PoseEdge::new(0, 1, *g.pose(1).unwrap(), diagonal_information(0.01, 0.1), EdgeKind::Odometry).unwrap(),
        )
        .unwrap();
        let scan = PointCloud::from_points(vec![Point::new(1.0, 2.0, 3.0)]);
        let s = Session::new(g, BTreeMap::from([(1, scan)])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_session(dir.path(), &s).unwrap();
        let back = read_session(dir.path()).unwrap();
        assert_eq!(back.graph.len(), 2);
        assert_eq!(back.scans.keys().copied().collect::<Vec<_>>(), vec![1]);
    }

    proptest! {
        #[test]
        fn kitti_round_trip_is_bit_exact(pts in proptest::collection::vec((-1e4f32..1e4, -1e4f32..1e4, -1e4f32..1e4, 0f32..1.0), 0..50)) {
            let cloud = PointCloud::from_points(pts.iter().map(|&(x, y, z, i)| Point::new(x as f64, y as f64, z as f64).with_intensity(i)).collect());
            let bytes = encode_kitti(&cloud);
            let back = decode_kitti(&bytes, Path::new("p.bin")).unwrap();
            prop_assert_eq!(encode_kitti(&back), bytes);
            for (p, q) in pts.iter().zip(&back.points) {
                prop_assert_eq!(q.x() as f32, p.0);
                prop_assert_eq!(q.intensity, Some(p.3));
            }
        }

        #[test]
        fn pose_text_keeps_fifteen_digits(yaw in -3.1f64..3.1, tx in -1e3f64..1e3, ty in -1e3f64..1e3) {
            let p = RigidPose::from_yaw(yaw, Vector3::new(tx, ty, 1.5));
            let back = parse_poses(&format_poses(&[p])).unwrap()[0];
            for (a, b) in p.to_row_major_3x4().iter().zip(back.to_row_major_3x4()) {
                prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
            }
        }
    }
}
