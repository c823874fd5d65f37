//! Global registration robust to gross correspondence outliers.
//!
//! Ground points are removed first, putative matches are turned into
//! translation-invariant measurements, rotation is solved by GNC-TLS and the
//! translation by per-axis consensus voting.

pub mod features;
pub mod gnc;
pub mod tims;
pub mod translation;

use nalgebra::{Matrix3, Vector3};

pub use features::{estimate_normals, fpfh, mutual_matches, CorrespondenceMatcher, FpfhMatcher, MatcherParams};
pub use gnc::{gnc_rotation, gnc_weight_update, surrogate_cost, GncParams, RotationEstimate, RotationMode};
pub use tims::{build_tims, EdgeSet, Tim, TimSet};
pub use translation::{estimate_translation, interval_consensus, TranslationEstimate, DEFAULT_QUORUM};

use crate::error::{Error, Result};
use crate::geom::{fit_plane_pca, PointCloud, RigidPose};
use crate::ground_seg::{segment_ground, CzmParams};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(Vector3<f64>, Vector3<f64>)>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Nonground, in-range subsets of both clouds.
pub fn prune_with_ground_segmentation(
    source: &PointCloud,
    target: &PointCloud,
    params: &CzmParams,
) -> Result<(PointCloud, PointCloud)> {
    Ok((nonground(source, params)?, nonground(target, params)?))
}

fn nonground(cloud: &PointCloud, params: &CzmParams) -> Result<PointCloud> {
    let seg = segment_ground(cloud, params)?;
    let mut keep = vec![true; cloud.len()];
    for &i in seg.ground_indices.iter().chain(&seg.out_of_range) {
        keep[i] = false;
    }
    let idx: Vec<usize> = (0..cloud.len()).filter(|&i| keep[i]).collect();
    Ok(cloud.select(&idx))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationOptions {
    /// `gnc.noise_bound` bounds one correspondence's residual; measurements
    /// built from two correspondences use twice that. The default is half
    /// the matcher voxel, the typical offset between matched centroids.
    pub gnc: GncParams,
    /// `None` picks [`EdgeSet::default_for`].
    pub edge_set: Option<EdgeSet>,
    pub quorum: usize,
    pub prune_ground: bool,
    pub czm: CzmParams,
    pub matcher: MatcherParams,
    /// After yaw estimation, tilt the rotation so the source ground normal
    /// lands on the target one.
    pub align_ground_normals: bool,
}

impl Default for RegistrationOptions {
    fn default() -> Self {
        Self {
            gnc: GncParams {
                noise_bound: 0.25,
                ..GncParams::default()
            },
            edge_set: None,
            quorum: DEFAULT_QUORUM,
            prune_ground: true,
            czm: CzmParams::default(),
            matcher: MatcherParams::default(),
            align_ground_normals: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub pose: RigidPose,
    /// Correspondences consistent with the final pose on every axis.
    pub inlier_indices: Vec<usize>,
    /// GNC weight of each translation-invariant measurement.
    pub final_weights: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub correspondences: CorrespondenceSet,
}

/// Pose from an already matched correspondence set.
pub fn register_correspondences(corrs: &CorrespondenceSet, opts: &RegistrationOptions) -> Result<RegistrationResult> {
    register_impl(corrs, opts, None)
}

fn register_impl(
    corrs: &CorrespondenceSet,
    opts: &RegistrationOptions,
    tilt: Option<Matrix3<f64>>,
) -> Result<RegistrationResult> {
    if corrs.len() < 2 {
        return Err(Error::TooFewCorrespondences(corrs.len()));
    }
    let edge_set = opts.edge_set.unwrap_or_else(|| EdgeSet::default_for(corrs.len()));
    let tims = build_tims(corrs, edge_set)?;
    let params = GncParams {
        noise_bound: 2.0 * opts.gnc.noise_bound,
        ..opts.gnc.clone()
    };
    let rot = gnc_rotation(&tims, &params)?;
    let rotation = match tilt {
        Some(t) => t * rot.rotation,
        None => rot.rotation,
    };
    let trans = estimate_translation(corrs, &rotation, opts.gnc.noise_bound, opts.quorum)?;
    Ok(RegistrationResult {
        pose: RigidPose::new(RigidPose::orthonormalize(&rotation), trans.translation)?,
        inlier_indices: trans.inliers,
        final_weights: rot.weights,
        converged: rot.converged,
        iterations: rot.iterations,
        correspondences: corrs.clone(),
    })
}

/// Matches and registers `source` into the frame of `target`.
pub fn register(
    source: &PointCloud,
    target: &PointCloud,
    opts: &RegistrationOptions,
    matcher: &dyn CorrespondenceMatcher,
) -> Result<RegistrationResult> {
    let (src, tgt) = if opts.prune_ground {
        prune_with_ground_segmentation(source, target, &opts.czm)?
    } else {
        (source.clone(), target.clone())
    };
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::EmptyInput("cloud is empty after ground pruning"));
    }
    let corrs = matcher.match_clouds(&src, &tgt)?;
    if corrs.len() < 2 {
        return Err(Error::MatchingFailed(corrs.len()));
    }
    if !opts.align_ground_normals {
        return register_impl(&corrs, opts, None);
    }
    let yaw_only = register_impl(&corrs, opts, None)?;
    let ns = ground_normal(source, &opts.czm)?;
    let nt = ground_normal(target, &opts.czm)?;
    let tilt = rotation_between(&(yaw_only.pose.rotation() * ns), &nt);
    register_impl(&corrs, opts, Some(tilt))
}

fn ground_normal(cloud: &PointCloud, params: &CzmParams) -> Result<Vector3<f64>> {
    let seg = segment_ground(cloud, params)?;
    let pts: Vec<Vector3<f64>> = seg.ground_indices.iter().map(|&i| *cloud.points[i].xyz()).collect();
    Ok(fit_plane_pca(&pts)?.normal)
}

/// Smallest rotation taking unit vector `a` onto unit vector `b`.
fn rotation_between(a: &Vector3<f64>, b: &Vector3<f64>) -> Matrix3<f64> {
    let axis = a.cross(b);
    let s = axis.norm();
    if s < 1e-12 {
        return Matrix3::identity();
    }
    crate::geom::so3_exp(&(axis / s * s.atan2(a.dot(b))))
}
