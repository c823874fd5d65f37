use nalgebra::Vector3;

use super::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::spatial::PointIndex;

/// Which correspondence pairs become translation-invariant measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSet {
    /// `(i, i+1)` for consecutive correspondences.
    Chain,
    /// Every unordered pair.
    Complete,
    /// Each correspondence paired with its `k` nearest neighbours in the
    /// source cloud (symmetrised).
    KNearest(usize),
}

/// Above this many correspondences the default switches from the complete
/// graph to `KNearest(10)`.
pub const COMPLETE_GRAPH_LIMIT: usize = 200;

impl EdgeSet {
    pub fn default_for(n: usize) -> Self {
        if n <= COMPLETE_GRAPH_LIMIT {
            EdgeSet::Complete
        } else {
            EdgeSet::KNearest(10)
        }
    }
}

/// `a = pⱼ − pᵢ`, `b = qⱼ − qᵢ` for one edge `(i, j)`, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tim {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub edge: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimSet {
    pub measurements: Vec<Tim>,
    pub edge_set: EdgeSet,
}

impl TimSet {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }
}

/// Pairwise differences over the chosen edge set, lexicographic edge order.
pub fn build_tims(corrs: &CorrespondenceSet, edge_set: EdgeSet) -> Result<TimSet> {
    let n = corrs.len();
    if n < 2 {
        return Err(Error::TooFewCorrespondences(n));
    }
    let edges: Vec<(usize, usize)> = match edge_set {
        EdgeSet::Chain => (0..n - 1).map(|i| (i, i + 1)).collect(),
        EdgeSet::Complete => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect(),
        EdgeSet::KNearest(k) => {
            let src: Vec<Vector3<f64>> = corrs.pairs.iter().map(|(p, _)| *p).collect();
            let index = PointIndex::new(&src);
            let mut edges = Vec::with_capacity(n * k);
            for (i, p) in src.iter().enumerate() {
                for (j, _) in index.nearest(p, k + 1) {
                    if j != i {
                        edges.push((i.min(j), i.max(j)));
                    }
                }
            }
            edges.sort_unstable();
            edges.dedup();
            edges
        }
    };
    let measurements = edges
        .into_iter()
        .map(|(i, j)| {
            let (pi, qi) = &corrs.pairs[i];
            let (pj, qj) = &corrs.pairs[j];
            Tim {
                a: pj - pi,
                b: qj - qi,
                edge: (i, j),
            }
        })
        .collect();
    Ok(TimSet {
        measurements,
        edge_set,
    })
}
