//! Two-session merging: map-to-map alignment, inter-session loops and a
//! joint robust optimisation anchored in session A.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geom::{voxel_downsample, PointCloud, RigidPose};
use crate::ground_seg::{segment_ground, CzmParams};
use crate::pose_graph::{optimize, verify_loop, EdgeKind, LoopParams, NodeId, PgoParams, PoseEdge, PoseGraph};
use crate::registration::{register, CorrespondenceMatcher, RegistrationOptions};

pub const MAP_VOXEL: f64 = 0.2;

/// An optimised single-session trajectory with its sensor-frame scans.
/// Nodes without an entry in `scans` are scan-less.
#[derive(Debug, Clone, Default)]
pub struct Session {
    pub graph: PoseGraph,
    pub scans: BTreeMap<NodeId, PointCloud>,
}

impl Session {
    pub fn new(graph: PoseGraph, scans: BTreeMap<NodeId, PointCloud>) -> Result<Self> {
        if let Some(id) = scans.keys().find(|id| graph.pose(**id).is_none()) {
            return Err(Error::InvalidGraph(format!("scan for unknown node {id}")));
        }
        Ok(Self { graph, scans })
    }

    pub fn assembled_map(&self) -> PointCloud {
        assemble_map(self, MAP_VOXEL)
    }
}

/// Union of every scan warped by its node pose, voxel-downsampled.
pub fn assemble_map(session: &Session, voxel: f64) -> PointCloud {
    let mut all = PointCloud::new("map");
    for (id, scan) in &session.scans {
        if let Some(pose) = session.graph.pose(*id) {
            all.points.extend(pose.apply(scan).points);
        }
    }
    voxel_downsample(&all, voxel).cloud
}

/// Like [`assemble_map`] but each scan is ground-segmented in its own
/// sensor frame first and only nonground, in-range points are kept.
pub fn assemble_nonground_map(session: &Session, voxel: f64, czm: &CzmParams) -> Result<PointCloud> {
    let mut all = PointCloud::new("map");
    for (id, scan) in &session.scans {
        let Some(pose) = session.graph.pose(*id) else { continue };
        let seg = segment_ground(scan, czm)?;
        all.points.extend(pose.apply(&scan.select(&seg.nonground_indices)).points);
    }
    Ok(voxel_downsample(&all, voxel).cloud)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignParams {
    pub registration: RegistrationOptions,
    pub map_voxel: f64,
    pub min_inliers: usize,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            registration: RegistrationOptions::default(),
            map_voxel: MAP_VOXEL,
            min_inliers: 10,
        }
    }
}

/// Pose taking session B's map frame into session A's.
pub fn align_sessions(
    a: &Session,
    b: &Session,
    params: &AlignParams,
    matcher: &dyn CorrespondenceMatcher,
) -> Result<RigidPose> {
    let opts = &params.registration;
    let (map_a, map_b) = if opts.prune_ground {
        (
            assemble_nonground_map(a, params.map_voxel, &opts.czm)?,
            assemble_nonground_map(b, params.map_voxel, &opts.czm)?,
        )
    } else {
        (assemble_map(a, params.map_voxel), assemble_map(b, params.map_voxel))
    };
    if map_a.is_empty() || map_b.is_empty() {
        return Err(Error::EmptyInput("assembled session map is empty"));
    }
    // The maps are already pruned in the sensor frames.
    let map_opts = RegistrationOptions {
        prune_ground: false,
        ..opts.clone()
    };
    let needed = params.min_inliers.max(opts.quorum);
    let res = match register(&map_b, &map_a, &map_opts, matcher) {
        Ok(r) => r,
        Err(Error::EmptyConsensus { best, .. }) => return Err(Error::LowConfidence { inliers: best, quorum: needed }),
        Err(e) => return Err(e),
    };
    if res.inlier_indices.len() < needed {
        return Err(Error::LowConfidence {
            inliers: res.inlier_indices.len(),
            quorum: needed,
        });
    }
    Ok(res.pose)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeParams {
    /// `radius`, `registration`, `min_inliers` and `information` are used;
    /// there is no index-gap requirement across sessions.
    pub loops: LoopParams,
    pub pgo: PgoParams,
    pub allow_bridge: bool,
    /// Scale applied to `loops.information` for the bridging edge.
    pub bridge_information_scale: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        Self {
            loops: LoopParams::default(),
            pgo: PgoParams::default(),
            allow_bridge: true,
            bridge_information_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeReport {
    /// Added to every session B node id.
    pub id_offset: NodeId,
    pub inter_edges: usize,
    /// Final weight of each inter edge, same order as `MergeResult::inter_edges`.
    pub inter_weights: Vec<f64>,
    /// Inter edges whose weight ended at or below 0.5.
    pub rejected: usize,
    pub bridged: bool,
    pub converged: bool,
    pub final_cost: f64,
}

#[derive(Debug, Clone)]
pub struct MergeResult {
    /// Optimised poses of both sessions; B ids shifted by `report.id_offset`.
    pub joint_graph: PoseGraph,
    pub session_transform: RigidPose,
    pub inter_edges: Vec<PoseEdge>,
    pub report: MergeReport,
}

pub fn id_offset(a: &Session) -> NodeId {
    a.graph.nodes().iter().map(|(id, _)| id + 1).max().unwrap_or(0)
}

/// Session B's graph with ids shifted by `offset` and poses expressed in
/// session A's frame. Carries no anchors of its own.
pub fn prewarp_session(b: &Session, transform: &RigidPose, offset: NodeId) -> Result<(PoseGraph, BTreeMap<NodeId, PointCloud>)> {
    let mut g = PoseGraph::new();
    for (id, pose) in b.graph.nodes() {
        g.add_node(id + offset, transform.compose(pose))?;
    }
    for e in &b.graph.edges {
        g.add_edge(PoseEdge { from: e.from + offset, to: e.to + offset, ..e.clone() })?;
    }
    let scans = b.scans.iter().map(|(id, s)| (id + offset, s.clone())).collect();
    Ok((g, scans))
}

/// For every B node, the nearest A node within `radius` (ties to the lower id).
pub fn inter_loop_candidates(a: &PoseGraph, b_warped: &PoseGraph, radius: f64) -> Vec<(NodeId, NodeId)> {
    b_warped
        .nodes()
        .iter()
        .filter_map(|(bid, pb)| {
            a.nodes()
                .iter()
                .map(|(aid, pa)| ((pa.translation() - pb.translation()).norm(), *aid))
                .filter(|(d, _)| *d < radius)
                .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
                .map(|(_, aid)| (aid, *bid))
        })
        .collect()
}

/// Verified inter-session loop edges, A node → shifted B node.
pub fn find_inter_loops(
    a: &Session,
    b: &Session,
    transform: &RigidPose,
    params: &MergeParams,
    matcher: &dyn CorrespondenceMatcher,
) -> Result<Vec<PoseEdge>> {
    let offset = id_offset(a);
    let (bg, bscans) = prewarp_session(b, transform, offset)?;
    Ok(inter_loop_candidates(&a.graph, &bg, params.loops.radius)
        .into_iter()
        .filter_map(|(ia, ib)| {
            let (sa, sb) = (a.scans.get(&ia)?, bscans.get(&ib)?);
            verify_loop(ia, sa, ib, sb, EdgeKind::InterLoop, &params.loops, matcher)
        })
        .collect())
}

/// Joint optimisation over both sessions and the given inter edges, whose
/// B endpoints must already carry the shifted ids.
pub fn merge_with_edges(
    a: &Session,
    b: &Session,
    transform: &RigidPose,
    inter_edges: Vec<PoseEdge>,
    params: &MergeParams,
) -> Result<MergeResult> {
    let offset = id_offset(a);
    let (bg, _) = prewarp_session(b, transform, offset)?;
    let mut joint = PoseGraph::new();
    for (id, p) in a.graph.nodes().iter().chain(bg.nodes()) {
        joint.add_node(*id, *p)?;
    }
    joint.set_anchors(a.graph.anchors().iter().copied())?;
    for e in a.graph.edges.iter().chain(&bg.edges) {
        joint.add_edge(e.clone())?;
    }

    let mut pgo = params.pgo.clone();
    let mut inter_edges = inter_edges;
    let mut bridged = false;
    if inter_edges.is_empty() {
        if !params.allow_bridge {
            return Err(Error::NoInterLoops);
        }
        let (&ia, pa) = a
            .graph
            .anchors()
            .iter()
            .next()
            .and_then(|id| a.graph.pose(*id).map(|p| (id, p)))
            .ok_or(Error::NoAnchor)?;
        let (ib, pb) = bg.nodes().first().ok_or(Error::EmptyInput("session B has no nodes"))?;
        let z = pa.inverse().compose(pb);
        let info = params.loops.information * params.bridge_information_scale;
        inter_edges.push(PoseEdge::new(ia, *ib, z, info, EdgeKind::InterLoop)?);
        // A lone bridge has nothing to be robust against.
        pgo.robustify.retain(|k| *k != EdgeKind::InterLoop);
        bridged = true;
    }
    let first_inter = joint.edges.len();
    for e in &inter_edges {
        joint.add_edge(e.clone())?;
    }

    let res = optimize(&joint, &pgo)?;
    let joint_graph = joint.with_poses(&res.poses)?;
    let inter_weights = res.weights[first_inter..].to_vec();
    let report = MergeReport {
        id_offset: offset,
        inter_edges: inter_edges.len(),
        rejected: inter_weights.iter().filter(|w| **w <= 0.5).count(),
        inter_weights,
        bridged,
        converged: res.converged,
        final_cost: res.final_cost,
    };
    Ok(MergeResult {
        joint_graph,
        session_transform: *transform,
        inter_edges,
        report,
    })
}

/// Inter-loop detection followed by [`merge_with_edges`].
pub fn merge_sessions(
    a: &Session,
    b: &Session,
    transform: &RigidPose,
    params: &MergeParams,
    matcher: &dyn CorrespondenceMatcher,
) -> Result<MergeResult> {
    let edges = find_inter_loops(a, b, transform, params, matcher)?;
    merge_with_edges(a, b, transform, edges, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::pose_graph::{diagonal_information, edge_residual};
    use nalgebra::Vector3;

    fn chain(n: usize, origin: RigidPose) -> PoseGraph {
        let mut g = PoseGraph::new();
        let step = RigidPose::from_yaw(0.1, Vector3::new(2.0, 0.0, 0.0));
        let mut p = origin;
        for k in 0..n {
            g.add_node(k, p).unwrap();
            p = p.compose(&step);
        }
        for k in 1..n {
            let z = g.pose(k - 1).unwrap().inverse().compose(g.pose(k).unwrap());
            g.add_edge(PoseEdge::new(k - 1, k, z, diagonal_information(0.01, 0.05), EdgeKind::Odometry).unwrap())
                .unwrap();
        }
        g
    }

    fn cube(c: Vector3<f64>) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    pts.push(Point::from_vector(c + Vector3::new(i as f64, j as f64, k as f64) * 0.3));
                }
            }
        }
        PointCloud::from_points(pts)
    }

    #[test]
    fn single_identity_node_map_is_downsampled_scan() {
        let mut g = PoseGraph::new();
        g.add_node(0, RigidPose::identity()).unwrap();
        let scan = cube(Vector3::new(1.0, 1.0, 1.0));
        let s = Session::new(g, BTreeMap::from([(0, scan.clone())])).unwrap();
        assert_eq!(s.assembled_map().points, voxel_downsample(&scan, MAP_VOXEL).cloud.points);
    }

    #[test]
    fn duplicate_scans_dedup_and_disjoint_scans_add() {
        let mut g = PoseGraph::new();
        g.add_node(0, RigidPose::identity()).unwrap();
        g.add_node(1, RigidPose::identity()).unwrap();
        let scan = cube(Vector3::new(0.05, 0.05, 0.05));
        let single = voxel_downsample(&scan, MAP_VOXEL).cloud.len();
        let dup = Session::new(g.clone(), BTreeMap::from([(0, scan.clone()), (1, scan.clone())])).unwrap();
        assert_eq!(dup.assembled_map().len(), single);
        g.set_pose(1, RigidPose::from_translation(Vector3::new(50.0, 0.0, 0.0))).unwrap();
        let apart = Session::new(g, BTreeMap::from([(0, scan.clone()), (1, scan)])).unwrap();
        assert_eq!(apart.assembled_map().len(), 2 * single);
    }

    #[test]
    fn scans_must_belong_to_nodes() {
        let g = chain(2, RigidPose::identity());
        assert!(Session::new(g, BTreeMap::from([(7, PointCloud::default())])).is_err());
    }

    fn identical_sessions() -> (Session, Vec<PoseEdge>) {
        let g = chain(6, RigidPose::identity());
        let s = Session::new(g.clone(), BTreeMap::new()).unwrap();
        let edges: Vec<_> = (0..6)
            .map(|k| PoseEdge::new(k, k + 6, RigidPose::identity(), diagonal_information(0.02, 0.1), EdgeKind::InterLoop).unwrap())
            .collect();
        (s, edges)
    }

    #[test]
    fn identical_sessions_merge_without_moving() {
        let (s, edges) = identical_sessions();
        let res = merge_with_edges(&s, &s, &RigidPose::identity(), edges, &MergeParams::default()).unwrap();
        assert_eq!(res.report.id_offset, 6);
        assert!(!res.report.bridged);
        for e in &res.inter_edges {
            let (pi, pj) = (res.joint_graph.pose(e.from).unwrap(), res.joint_graph.pose(e.to).unwrap());
            assert!(edge_residual(e, pi, pj).norm() < 1e-9);
        }
        for (id, p) in s.graph.nodes() {
            let q = res.joint_graph.pose(*id).unwrap();
            assert!((p.translation() - q.translation()).norm() < 1e-6);
            assert!((p.rotation() - q.rotation()).abs().max() < 1e-6);
        }
        assert_eq!(res.joint_graph.anchors().iter().copied().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn pinned_weights_equal_plain_joint_optimisation() {
        let (s, mut edges) = identical_sessions();
        edges[2].relative = RigidPose::from_translation(Vector3::new(0.3, -0.2, 0.0));
        let pinned = MergeParams {
            pgo: PgoParams { robustify: vec![], ..Default::default() },
            ..Default::default()
        };
        let merged = merge_with_edges(&s, &s, &RigidPose::identity(), edges.clone(), &pinned).unwrap();

        let (bg, _) = prewarp_session(&s, &RigidPose::identity(), 6).unwrap();
        let mut joint = s.graph.clone();
        for (id, p) in bg.nodes() {
            joint.add_node(*id, *p).unwrap();
        }
        for e in bg.edges.iter().chain(&edges) {
            joint.add_edge(e.clone()).unwrap();
        }
        let plain = optimize(&joint, &pinned.pgo).unwrap();
        for (id, p) in &plain.poses {
            let q = merged.joint_graph.pose(*id).unwrap();
            assert!((p.translation() - q.translation()).norm() < 1e-6);
        }
    }

    #[test]
    fn missing_inter_loops_are_bridged_or_rejected() {
        let a = Session::new(chain(4, RigidPose::identity()), BTreeMap::new()).unwrap();
        let b = Session::new(chain(4, RigidPose::identity()), BTreeMap::new()).unwrap();
        let t = RigidPose::from_yaw(0.4, Vector3::new(3.0, 1.0, 0.0));
        let res = merge_with_edges(&a, &b, &t, vec![], &MergeParams::default()).unwrap();
        assert!(res.report.bridged);
        assert_eq!(res.joint_graph.component_count(), 1);
        let pb = res.joint_graph.pose(4).unwrap();
        assert!((pb.translation() - t.translation()).norm() < 1e-6);
        let strict = MergeParams { allow_bridge: false, ..Default::default() };
        assert!(matches!(merge_with_edges(&a, &b, &t, vec![], &strict), Err(Error::NoInterLoops)));
    }

    #[test]
    fn nearest_a_node_per_b_node() {
        let a = chain(5, RigidPose::identity());
        let b = chain(2, RigidPose::from_translation(Vector3::new(4.1, 0.5, 0.0)));
        let (bg, _) = prewarp_session(&Session::new(b, BTreeMap::new()).unwrap(), &RigidPose::identity(), 5).unwrap();
        let c = inter_loop_candidates(&a, &bg, 3.0);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0], (2, 5));
        assert!(inter_loop_candidates(&a, &bg, 0.1).is_empty());
    }
}
