//! Hand-crafted local descriptors and mutual nearest-neighbour matching.

use nalgebra::Vector3;

use super::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geom::{fit_plane_pca, voxel_downsample, PointCloud};
use crate::spatial::PointIndex;

pub const FPFH_BINS_PER_FEATURE: usize = 11;
pub const FPFH_DIM: usize = 3 * FPFH_BINS_PER_FEATURE;

pub type Descriptor = [f32; FPFH_DIM];

#[derive(Debug, Clone, PartialEq)]
pub struct MatcherParams {
    pub voxel_size: f64,
    pub normal_neighbors: usize,
    pub feature_radius: f64,
}

impl Default for MatcherParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.5,
            normal_neighbors: 20,
            feature_radius: 2.5,
        }
    }
}

/// Produces putative correspondences between two clouds.
pub trait CorrespondenceMatcher {
    fn match_clouds(&self, source: &PointCloud, target: &PointCloud) -> Result<CorrespondenceSet>;
}

/// Voxel downsampling, PCA normals, FPFH-style histograms and mutual
/// nearest neighbours in descriptor space.
#[derive(Debug, Clone, Default)]
pub struct FpfhMatcher {
    pub params: MatcherParams,
}

/// Unit normals from a PCA plane fit on the `k` nearest neighbours,
/// oriented towards the sensor origin. Degenerate neighbourhoods get `+z`.
pub fn estimate_normals(points: &[Vector3<f64>], k: usize) -> Vec<Vector3<f64>> {
    let index = PointIndex::new(points);
    points
        .iter()
        .map(|p| {
            let nbrs: Vec<Vector3<f64>> = index.nearest(p, k).into_iter().map(|(j, _)| points[j]).collect();
            let n = fit_plane_pca(&nbrs).map(|m| m.normal).unwrap_or_else(|_| Vector3::z());
            if n.dot(&-p) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect()
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let t = ((value - lo) / (hi - lo)).clamp(0.0, 1.0);
    ((t * FPFH_BINS_PER_FEATURE as f64) as usize).min(FPFH_BINS_PER_FEATURE - 1)
}

/// Angular pair features `(α, φ, θ)` in the Darboux frame of the pair.
fn pair_features(ps: &Vector3<f64>, ns: &Vector3<f64>, pt: &Vector3<f64>, nt: &Vector3<f64>) -> Option<(f64, f64, f64)> {
    let mut d = pt - ps;
    let dist = d.norm();
    if dist == 0.0 {
        return None;
    }
    d /= dist;
    let (mut u, mut nt, mut d) = (*ns, *nt, d);
    // Use the point whose normal makes the smaller angle with the line.
    if ns.dot(&d).abs() < nt.dot(&d).abs() {
        std::mem::swap(&mut u, &mut nt);
        d = -d;
    }
    let v = u.cross(&d);
    let vn = v.norm();
    if vn < 1e-12 {
        return None;
    }
    let v = v / vn;
    let w = u.cross(&v);
    let alpha = v.dot(&nt);
    let phi = u.dot(&d);
    let theta = w.dot(&nt).atan2(u.dot(&nt));
    Some((alpha, phi, theta))
}

fn normalize(h: &mut [f64; FPFH_DIM]) {
    for chunk in h.chunks_mut(FPFH_BINS_PER_FEATURE) {
        let s: f64 = chunk.iter().sum();
        if s > 0.0 {
            chunk.iter_mut().for_each(|x| *x *= 100.0 / s);
        }
    }
}

/// Fast point feature histograms: each point's simplified histogram plus the
/// distance-weighted mean of its neighbours' ones.
pub fn fpfh(points: &[Vector3<f64>], normals: &[Vector3<f64>], radius: f64) -> Vec<Descriptor> {
    let index = PointIndex::new(points);
    let neighbors: Vec<Vec<(usize, f64)>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| index.within(p, radius).into_iter().filter(|&(j, _)| j != i).collect())
        .collect();
    let spfh: Vec<[f64; FPFH_DIM]> = (0..points.len())
        .map(|i| {
            let mut h = [0.0; FPFH_DIM];
            for &(j, _) in &neighbors[i] {
                if let Some((a, f, t)) = pair_features(&points[i], &normals[i], &points[j], &normals[j]) {
                    h[bin(a, -1.0, 1.0)] += 1.0;
                    h[FPFH_BINS_PER_FEATURE + bin(f, -1.0, 1.0)] += 1.0;
                    h[2 * FPFH_BINS_PER_FEATURE + bin(t, -std::f64::consts::PI, std::f64::consts::PI)] += 1.0;
                }
            }
            normalize(&mut h);
            h
        })
        .collect();
    (0..points.len())
        .map(|i| {
            let mut h = spfh[i];
            let k = neighbors[i].len();
            if k > 0 {
                for &(j, d2) in &neighbors[i] {
                    let w = 1.0 / (k as f64 * d2.sqrt().max(1e-6));
                    for (x, y) in h.iter_mut().zip(&spfh[j]) {
                        *x += w * y;
                    }
                }
            }
            normalize(&mut h);
            let mut out = [0f32; FPFH_DIM];
            for (o, x) in out.iter_mut().zip(&h) {
                *o = *x as f32;
            }
            out
        })
        .collect()
}

fn sq_dist(a: &Descriptor, b: &Descriptor) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairs `(i, j)` where `j` is the nearest target descriptor of `i` and `i`
/// the nearest source descriptor of `j`. Ties go to the lower index.
pub fn mutual_matches(source: &[Descriptor], target: &[Descriptor]) -> Vec<(usize, usize)> {
    if source.is_empty() || target.is_empty() {
        return Vec::new();
    }
    let mut row = vec![(f32::INFINITY, 0usize); source.len()];
    let mut col = vec![(f32::INFINITY, 0usize); target.len()];
    for (i, a) in source.iter().enumerate() {
        for (j, b) in target.iter().enumerate() {
            let d = sq_dist(a, b);
            if d < row[i].0 {
                row[i] = (d, j);
            }
            if d < col[j].0 {
                col[j] = (d, i);
            }
        }
    }
    row.iter()
        .enumerate()
        .filter(|&(i, &(_, j))| col[j].1 == i)
        .map(|(i, &(_, j))| (i, j))
        .collect()
}

impl FpfhMatcher {
    fn describe(&self, cloud: &PointCloud) -> (Vec<Vector3<f64>>, Vec<Descriptor>) {
        let grid = voxel_downsample(cloud, self.params.voxel_size);
        let pts = grid.cloud.positions();
        let normals = estimate_normals(&pts, self.params.normal_neighbors);
        let desc = fpfh(&pts, &normals, self.params.feature_radius);
        (pts, desc)
    }
}

impl CorrespondenceMatcher for FpfhMatcher {
    fn match_clouds(&self, source: &PointCloud, target: &PointCloud) -> Result<CorrespondenceSet> {
        let (sp, sd) = self.describe(source);
        let (tp, td) = self.describe(target);
        let pairs: Vec<_> = mutual_matches(&sd, &td).into_iter().map(|(i, j)| (sp[i], tp[j])).collect();
        if pairs.len() < 2 {
            return Err(Error::MatchingFailed(pairs.len()));
        }
        Ok(CorrespondenceSet { pairs })
    }
}
