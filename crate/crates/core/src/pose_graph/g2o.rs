//! g2o-style plain-text pose graphs (`VERTEX_SE3:QUAT`, `EDGE_SE3:QUAT`).
//!
//! Values are written with 17 significant digits and kept verbatim in
//! [`G2oDocument`], so parse → write reproduces the emitted text exactly.
//! Information matrices are stored in g2o's `[t, q]` ordering on disk and in
//! the `[ω, ρ]` ordering in memory. Edge kinds and anchors travel in
//! `# EDGE_KIND <index> <kind>` comments and `FIX <id>...` lines.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix6, Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::{EdgeKind, NodeId, PoseEdge, PoseGraph};
use crate::error::{Error, Result};
use crate::geom::RigidPose;

#[derive(Debug, Clone, PartialEq)]
pub struct G2oVertex {
    pub id: NodeId,
    /// `x y z qx qy qz qw`
    pub values: [f64; 7],
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2oEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub values: [f64; 7],
    /// Upper triangle, row by row, in `[t, q]` ordering.
    pub information: [f64; 21],
    pub kind: Option<EdgeKind>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct G2oDocument {
    pub vertices: Vec<G2oVertex>,
    pub edges: Vec<G2oEdge>,
    pub fixed: Vec<NodeId>,
}

fn pose_values(p: &RigidPose) -> [f64; 7] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*p.rotation()));
    let t = p.translation();
    [t.x, t.y, t.z, q.i, q.j, q.k, q.w]
}

fn values_pose(v: &[f64; 7]) -> Result<RigidPose> {
    let q = Quaternion::new(v[6], v[3], v[4], v[5]);
    if q.norm() == 0.0 {
        return Err(Error::InvalidGraph("zero quaternion".into()));
    }
    let r: Matrix3<f64> = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
    RigidPose::new(r, Vector3::new(v[0], v[1], v[2]))
}

/// Maps an index of g2o's `[t, q]` ordering to `[ω, ρ]`.
fn to_internal(k: usize) -> usize {
    (k + 3) % 6
}

fn info_to_upper(info: &Matrix6<f64>) -> [f64; 21] {
    let mut out = [0.0; 21];
    let mut n = 0;
    for r in 0..6 {
        for c in r..6 {
            out[n] = info[(to_internal(r), to_internal(c))];
            n += 1;
        }
    }
    out
}

fn upper_to_info(upper: &[f64; 21]) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    let mut n = 0;
    for r in 0..6 {
        for c in r..6 {
            let (a, b) = (to_internal(r), to_internal(c));
            m[(a, b)] = upper[n];
            m[(b, a)] = upper[n];
            n += 1;
        }
    }
    m
}

fn infer_kind(from: NodeId, to: NodeId) -> EdgeKind {
    if to == from + 1 {
        EdgeKind::Odometry
    } else {
        EdgeKind::IntraLoop
    }
}

impl G2oDocument {
    pub fn from_graph(graph: &PoseGraph) -> Self {
        Self {
            vertices: graph
                .nodes()
                .iter()
                .map(|(id, p)| G2oVertex { id: *id, values: pose_values(p) })
                .collect(),
            edges: graph
                .edges
                .iter()
                .map(|e| G2oEdge {
                    from: e.from,
                    to: e.to,
                    values: pose_values(&e.relative),
                    information: info_to_upper(&e.information),
                    kind: Some(e.kind),
                })
                .collect(),
            fixed: graph.anchors().iter().copied().collect(),
        }
    }

    pub fn to_graph(&self) -> Result<PoseGraph> {
        let mut g = PoseGraph::new();
        for v in &self.vertices {
            g.add_node(v.id, values_pose(&v.values)?)?;
        }
        for e in &self.edges {
            let kind = e.kind.unwrap_or_else(|| infer_kind(e.from, e.to));
            g.add_edge(PoseEdge::new(e.from, e.to, values_pose(&e.values)?, upper_to_info(&e.information), kind)?)?;
        }
        if !self.fixed.is_empty() {
            g.set_anchors(self.fixed.iter().copied())?;
        }
        Ok(g)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = write!(s, "VERTEX_SE3:QUAT {}", v.id);
            for x in &v.values {
                let _ = write!(s, " {x:.16e}");
            }
            s.push('\n');
        }
        for e in &self.edges {
            let _ = write!(s, "EDGE_SE3:QUAT {} {}", e.from, e.to);
            for x in e.values.iter().chain(&e.information) {
                let _ = write!(s, " {x:.16e}");
            }
            s.push('\n');
        }
        for (k, e) in self.edges.iter().enumerate() {
            if let Some(kind) = e.kind {
                let _ = writeln!(s, "# EDGE_KIND {k} {}", kind.as_str());
            }
        }
        if !self.fixed.is_empty() {
            s.push_str("FIX");
            for id in &self.fixed {
                let _ = write!(s, " {id}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = G2oDocument::default();
        let mut kinds = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let bad = |reason: &str| Error::MalformedLine { line, reason: reason.to_string() };
            let mut tok = raw.split_whitespace();
            let Some(tag) = tok.next() else { continue };
            let rest: Vec<&str> = tok.collect();
            let id = |s: &str| s.parse::<NodeId>().map_err(|_| bad("bad node id"));
            let floats = |xs: &[&str]| -> Result<Vec<f64>> {
                xs.iter()
                    .map(|x| x.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad("bad number")))
                    .collect()
            };
            match tag {
                "VERTEX_SE3:QUAT" => {
                    if rest.len() != 8 {
                        return Err(bad("vertex needs id and 7 values"));
                    }
                    let v = floats(&rest[1..])?;
                    doc.vertices.push(G2oVertex { id: id(rest[0])?, values: v.try_into().expect("7 values") });
                }
                "EDGE_SE3:QUAT" => {
                    if rest.len() != 30 {
                        return Err(bad("edge needs 2 ids, 7 values and 21 information entries"));
                    }
                    let v = floats(&rest[2..])?;
                    doc.edges.push(G2oEdge {
                        from: id(rest[0])?,
                        to: id(rest[1])?,
                        values: v[..7].try_into().expect("7 values"),
                        information: v[7..].try_into().expect("21 values"),
                        kind: None,
                    });
                }
                "FIX" => {
                    for r in &rest {
                        doc.fixed.push(id(r)?);
                    }
                }
                t if t.starts_with('#') => {
                    if rest.first() == Some(&"EDGE_KIND") && rest.len() == 3 {
                        let k: usize = rest[1].parse().map_err(|_| bad("bad edge index"))?;
                        let kind = EdgeKind::parse(rest[2]).ok_or_else(|| bad("unknown edge kind"))?;
                        kinds.push((k, kind, line));
                    }
                }
                _ => return Err(bad("unknown record")),
            }
        }
        for (k, kind, line) in kinds {
            let e = doc.edges.get_mut(k).ok_or(Error::MalformedLine { line, reason: "edge index out of range".into() })?;
            e.kind = Some(kind);
        }
        Ok(doc)
    }
}

pub fn write_graph(graph: &PoseGraph) -> String {
    G2oDocument::from_graph(graph).to_text()
}

pub fn read_graph(text: &str) -> Result<PoseGraph> {
    G2oDocument::parse(text)?.to_graph()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose_graph::diagonal_information;
    use proptest::prelude::*;

    fn sample_graph() -> PoseGraph {
        let mut g = PoseGraph::new();
        let mut p = RigidPose::identity();
        for k in 0..5usize {
            g.add_node(k, p).unwrap();
            let step = RigidPose::from_axis_angle(Vector3::new(0.01, -0.02, 0.3), Vector3::new(1.0, 0.1 * k as f64, 0.0));
            if k + 1 < 5 {
                p = p.compose(&step);
            }
        }
        for k in 0..4 {
            let z = g.pose(k).unwrap().inverse().compose(g.pose(k + 1).unwrap());
            g.add_edge(PoseEdge::new(k, k + 1, z, diagonal_information(0.01, 0.1), EdgeKind::Odometry).unwrap()).unwrap();
        }
        let mut info = diagonal_information(0.02, 0.2);
        info[(0, 4)] = 0.5;
        info[(4, 0)] = 0.5;
        let z = g.pose(0).unwrap().inverse().compose(g.pose(4).unwrap());
        g.add_edge(PoseEdge::new(0, 4, z, info, EdgeKind::InterLoop).unwrap()).unwrap();
        g
    }

    #[test]
    fn text_round_trip_is_exact() {
        let text = write_graph(&sample_graph());
        let again = G2oDocument::parse(&text).unwrap().to_text();
        assert_eq!(text, again);
    }

    #[test]
    fn graph_round_trip_preserves_structure() {
        let g = sample_graph();
        let back = read_graph(&write_graph(&g)).unwrap();
        assert_eq!(back.edges.len(), 5);
        assert_eq!(back.edges[4].kind, EdgeKind::InterLoop);
        assert!((back.edges[4].information - g.edges[4].information).abs().max() < 1e-12);
        for ((_, a), (_, b)) in g.nodes().iter().zip(back.nodes()) {
            assert!((a.rotation() - b.rotation()).abs().max() < 1e-12);
            assert!((a.translation() - b.translation()).abs().max() < 1e-12);
        }
        assert_eq!(back.anchors(), g.anchors());
    }

    #[test]
    fn missing_kind_is_inferred() {
        let text = write_graph(&sample_graph());
        let stripped: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
        let g = read_graph(&stripped).unwrap();
        assert_eq!(g.edges[0].kind, EdgeKind::Odometry);
        assert_eq!(g.edges[4].kind, EdgeKind::IntraLoop);
    }

    #[test]
    fn malformed_lines_are_reported() {
        let err = G2oDocument::parse("VERTEX_SE3:QUAT 0 1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }));
        let err = G2oDocument::parse("\nFOO 1\n").unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 2, .. }));
    }

    proptest! {
        #[test]
        fn emitted_decimals_round_trip(vals in proptest::array::uniform7(-1e6f64..1e6)) {
            let doc = G2oDocument { vertices: vec![G2oVertex { id: 3, values: vals }], ..Default::default() };
            let text = doc.to_text();
            let back = G2oDocument::parse(&text).unwrap();
            prop_assert_eq!(back.vertices[0].values, vals);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
