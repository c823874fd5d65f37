//! Radius-gated loop candidates verified by global registration.

use std::collections::BTreeMap;

use nalgebra::Matrix6;

use super::{diagonal_information, EdgeKind, NodeId, PoseEdge, PoseGraph};
use crate::geom::{PointCloud, RigidPose};
use crate::registration::{register, CorrespondenceMatcher, RegistrationOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct LoopParams {
    pub radius: f64,
    /// Minimum difference of node positions in the graph's node order.
    pub min_node_gap: usize,
    pub registration: RegistrationOptions,
    /// Registration must report at least this many correspondence inliers
    /// (and never fewer than the translation quorum).
    pub min_inliers: usize,
    pub information: Matrix6<f64>,
}

impl Default for LoopParams {
    fn default() -> Self {
        Self {
            radius: 10.0,
            min_node_gap: 10,
            registration: RegistrationOptions::default(),
            min_inliers: 10,
            information: diagonal_information(0.02, 0.1),
        }
    }
}

/// Pairs `(a, b)` with `a` before `b`, at least `min_gap` positions apart and
/// closer than `radius`.
pub fn loop_candidates(poses: &[(NodeId, RigidPose)], radius: f64, min_gap: usize) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for (i, (a, pa)) in poses.iter().enumerate() {
        for (b, pb) in poses.iter().skip(i + min_gap.max(1)) {
            if (pa.translation() - pb.translation()).norm() < radius {
                out.push((*a, *b));
            }
        }
    }
    out
}

/// Registers `scan_to` into the frame of `scan_from`; on success the edge
/// measurement is that pose.
pub fn verify_loop(
    from: NodeId,
    scan_from: &PointCloud,
    to: NodeId,
    scan_to: &PointCloud,
    kind: EdgeKind,
    params: &LoopParams,
    matcher: &dyn CorrespondenceMatcher,
) -> Option<PoseEdge> {
    let res = register(scan_to, scan_from, &params.registration, matcher).ok()?;
    let needed = params.min_inliers.max(params.registration.quorum);
    if !res.converged || res.inlier_indices.len() < needed {
        return None;
    }
    PoseEdge::new(from, to, res.pose, params.information, kind).ok()
}

pub fn detect_loops(
    graph: &PoseGraph,
    scans: &BTreeMap<NodeId, PointCloud>,
    params: &LoopParams,
    matcher: &dyn CorrespondenceMatcher,
) -> Vec<PoseEdge> {
    loop_candidates(graph.nodes(), params.radius, params.min_node_gap)
        .into_iter()
        .filter_map(|(a, b)| {
            let (sa, sb) = (scans.get(&a)?, scans.get(&b)?);
            verify_loop(a, sa, b, sb, EdgeKind::IntraLoop, params, matcher)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn straight_line_has_no_candidates() {
        let poses: Vec<_> = (0..30).map(|i| (i, RigidPose::from_translation(Vector3::new(i as f64 * 2.0, 0.0, 0.0)))).collect();
        assert!(loop_candidates(&poses, 5.0, 10).is_empty());
    }

    #[test]
    fn revisit_is_a_candidate() {
        let poses: Vec<_> = (0..40)
            .map(|i| {
                let a = i as f64 / 40.0 * std::f64::consts::TAU;
                (i, RigidPose::from_translation(Vector3::new(20.0 * a.cos(), 20.0 * a.sin(), 0.0)))
            })
            .collect();
        let c = loop_candidates(&poses, 5.0, 10);
        assert!(c.contains(&(0, 39)));
        assert!(c.iter().all(|(a, b)| b - a >= 10));
    }
}
