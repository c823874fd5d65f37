//! SE(3) pose graphs with GNC-weighted loop closures.

pub mod g2o;
pub mod linear;
pub mod loops;
pub mod optimize;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix6, Vector6};

pub use g2o::{read_graph, write_graph, G2oDocument};
pub use loops::{detect_loops, loop_candidates, verify_loop, LoopParams};
pub use optimize::{gauss_newton, optimize, GnOutcome, PgoParams, PgoResult, CHI2_6DOF_95};

use crate::error::{Error, Result};
use crate::geom::RigidPose;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Odometry,
    IntraLoop,
    InterLoop,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Odometry => "odometry",
            EdgeKind::IntraLoop => "intra",
            EdgeKind::InterLoop => "inter",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "odometry" => Some(EdgeKind::Odometry),
            "intra" => Some(EdgeKind::IntraLoop),
            "inter" => Some(EdgeKind::InterLoop),
            _ => None,
        }
    }
}

/// Relative-pose measurement `Z = Tᵢ⁻¹·Tⱼ`.
///
/// `information` is in the `[ω, ρ]` ordering of [`RigidPose::log`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub relative: RigidPose,
    pub information: Matrix6<f64>,
    pub kind: EdgeKind,
}

pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

impl PoseEdge {
    pub fn new(from: NodeId, to: NodeId, relative: RigidPose, information: Matrix6<f64>, kind: EdgeKind) -> Result<Self> {
        if (information - information.transpose()).abs().max() > SYMMETRY_TOLERANCE {
            return Err(Error::InvalidGraph(format!("edge {from}->{to}: information not symmetric")));
        }
        if information.cholesky().is_none() {
            return Err(Error::InvalidGraph(format!("edge {from}->{to}: information not positive-definite")));
        }
        Ok(Self {
            from,
            to,
            relative,
            information,
            kind,
        })
    }
}

/// Diagonal information from rotation and translation standard deviations.
pub fn diagonal_information(sigma_rot: f64, sigma_trans: f64) -> Matrix6<f64> {
    let r = 1.0 / (sigma_rot * sigma_rot);
    let t = 1.0 / (sigma_trans * sigma_trans);
    Matrix6::from_diagonal(&Vector6::new(r, r, r, t, t, t))
}

/// `log(Z⁻¹ · Tᵢ⁻¹ · Tⱼ)`.
pub fn edge_residual(edge: &PoseEdge, ti: &RigidPose, tj: &RigidPose) -> Vector6<f64> {
    edge.relative.inverse().compose(&ti.inverse()).compose(tj).log()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseGraph {
    nodes: Vec<(NodeId, RigidPose)>,
    index: BTreeMap<NodeId, usize>,
    pub edges: Vec<PoseEdge>,
    anchors: BTreeSet<NodeId>,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// The first node added becomes the anchor unless anchors are set.
    pub fn add_node(&mut self, id: NodeId, pose: RigidPose) -> Result<()> {
        if self.index.contains_key(&id) {
            return Err(Error::InvalidGraph(format!("duplicate node id {id}")));
        }
        if self.nodes.is_empty() && self.anchors.is_empty() {
            self.anchors.insert(id);
        }
        self.index.insert(id, self.nodes.len());
        self.nodes.push((id, pose));
        Ok(())
    }

    pub fn add_edge(&mut self, edge: PoseEdge) -> Result<()> {
        for id in [edge.from, edge.to] {
            if !self.index.contains_key(&id) {
                return Err(Error::InvalidGraph(format!("edge references unknown node {id}")));
            }
        }
        if edge.from == edge.to {
            return Err(Error::InvalidGraph(format!("self-loop on node {}", edge.from)));
        }
        self.edges.push(edge);
        Ok(())
    }

    pub fn nodes(&self) -> &[(NodeId, RigidPose)] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn pose(&self, id: NodeId) -> Option<&RigidPose> {
        self.position(id).map(|i| &self.nodes[i].1)
    }

    pub fn set_pose(&mut self, id: NodeId, pose: RigidPose) -> Result<()> {
        let i = self.position(id).ok_or_else(|| Error::InvalidGraph(format!("unknown node {id}")))?;
        self.nodes[i].1 = pose;
        Ok(())
    }

    pub fn anchors(&self) -> &BTreeSet<NodeId> {
        &self.anchors
    }

    pub fn set_anchors(&mut self, anchors: impl IntoIterator<Item = NodeId>) -> Result<()> {
        let anchors: BTreeSet<NodeId> = anchors.into_iter().collect();
        if let Some(bad) = anchors.iter().find(|id| !self.index.contains_key(id)) {
            return Err(Error::InvalidGraph(format!("anchor {bad} is not a node")));
        }
        self.anchors = anchors;
        Ok(())
    }

    pub fn is_anchor(&self, id: NodeId) -> bool {
        self.anchors.contains(&id)
    }

    /// Number of connected components (union-find over edges).
    pub fn component_count(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (self.index[&e.from], self.index[&e.to]);
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        (0..self.nodes.len()).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// New graph with the same structure and the given node poses.
    pub fn with_poses(&self, poses: &[(NodeId, RigidPose)]) -> Result<PoseGraph> {
        let mut g = self.clone();
        for (id, p) in poses {
            g.set_pose(*id, *p)?;
        }
        Ok(g)
    }

    /// Graph of every node plus the edges whose index is not in `drop`.
    pub fn without_edges(&self, drop: &[usize]) -> PoseGraph {
        let mut g = self.clone();
        g.edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, e)| e.clone())
            .collect();
        g
    }
}
