//! Static map building: per-scan min-max height discrepancy against the
//! accumulated map, instance-level rejection and ground restoration.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{fit_plane_pca, voxel_downsample, voxel_key, PointCloud, RigidPose};
use crate::ground_seg::{segment_ground, CzmParams};

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsParams {
    pub voi_radius: f64,
    /// Height window relative to the grid centre.
    pub voi_z: (f64, f64),
    pub rings: usize,
    pub sectors: usize,
    /// τ
    pub ratio_threshold: f64,
    /// h_min
    pub min_map_height: f64,
    pub min_bin_points: usize,
    /// ρ
    pub instance_reject_fraction: f64,
    pub cluster_distance: f64,
    pub min_cluster_size: usize,
    /// Scan comparisons that must flag a point before it counts as flagged.
    pub min_flag_votes: usize,
    /// Treat a scan bin as unobserved when its lowest return sits more than
    /// `min_map_height` above the map bin's floor, i.e. the scan did not see
    /// down to the ground there. The floor is the lowest ground point of the
    /// bin, or its lowest point when it has no ground.
    pub occlusion_guard: bool,
    pub map_voxel: f64,
    /// Per-scan ground segmentation; `seed_count`, `dist_threshold` and
    /// `uprightness_min` are reused for ground restoration.
    pub czm: CzmParams,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            voi_radius: 60.0,
            voi_z: (-2.5, 4.0),
            rings: 20,
            sectors: 60,
            ratio_threshold: 0.2,
            min_map_height: 0.4,
            min_bin_points: 5,
            instance_reject_fraction: 0.5,
            cluster_distance: 0.5,
            min_cluster_size: 10,
            min_flag_votes: 1,
            occlusion_guard: true,
            map_voxel: 0.2,
            czm: CzmParams::default(),
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.voi_radius > 0.0
            && self.voi_z.0 < self.voi_z.1
            && self.rings > 0
            && self.sectors > 0
            && self.ratio_threshold > 0.0
            && self.ratio_threshold < 1.0
            && self.min_map_height > 0.0
            && self.instance_reject_fraction > 0.0
            && self.instance_reject_fraction <= 1.0
            && self.cluster_distance > 0.0
            && self.min_flag_votes > 0
            && self.map_voxel > 0.0;
        if !ok {
            return Err(Error::Config("dynamics: parameters out of range".into()));
        }
        self.czm.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RBin {
    pub min_z: f64,
    pub max_z: f64,
    pub count: usize,
    pub point_indices: Vec<usize>,
    /// Lowest ground-flagged point, when a ground mask was supplied.
    pub ground_min_z: Option<f64>,
}

impl RBin {
    pub fn height(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.max_z - self.min_z
        }
    }
}

/// Polar grid around a centre pose, ring-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RGrid {
    pub rings: usize,
    pub sectors: usize,
    pub bins: Vec<RBin>,
}

impl RGrid {
    pub fn bin_id(&self, ring: usize, sector: usize) -> usize {
        ring * self.sectors + sector
    }

    pub fn nonempty(&self) -> impl Iterator<Item = (usize, &RBin)> {
        self.bins.iter().enumerate().filter(|(_, b)| b.count > 0)
    }
}

/// Bin of `p` (already in the centre frame), if it lies in the VOI.
fn locate(p: &Vector3<f64>, params: &DynamicsParams) -> Option<usize> {
    let r = p.x.hypot(p.y);
    if r >= params.voi_radius || p.z < params.voi_z.0 || p.z > params.voi_z.1 {
        return None;
    }
    let ring = ((r / params.voi_radius * params.rings as f64) as usize).min(params.rings - 1);
    let az = p.y.atan2(p.x) + PI;
    let sector = ((az / TAU * params.sectors as f64) as usize).min(params.sectors - 1);
    Some(ring * params.sectors + sector)
}

pub fn build_rgrid(cloud: &PointCloud, center: &RigidPose, params: &DynamicsParams) -> RGrid {
    build_rgrid_with_ground(cloud, None, center, params)
}

/// Like [`build_rgrid`], also tracking the lowest point with `ground[i]` set.
pub fn build_rgrid_with_ground(
    cloud: &PointCloud,
    ground: Option<&[bool]>,
    center: &RigidPose,
    params: &DynamicsParams,
) -> RGrid {
    let mut bins = vec![RBin::default(); params.rings * params.sectors];
    let inv = center.inverse();
    for (i, p) in cloud.points.iter().enumerate() {
        let q = inv.transform_point(p.xyz());
        let Some(b) = locate(&q, params) else { continue };
        let bin = &mut bins[b];
        if bin.count == 0 {
            bin.min_z = q.z;
            bin.max_z = q.z;
        } else {
            bin.min_z = bin.min_z.min(q.z);
            bin.max_z = bin.max_z.max(q.z);
        }
        bin.count += 1;
        bin.point_indices.push(i);
        if ground.is_some_and(|g| g[i]) {
            bin.ground_min_z = Some(bin.ground_min_z.map_or(q.z, |z| z.min(q.z)));
        }
    }
    RGrid {
        rings: params.rings,
        sectors: params.sectors,
        bins,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinFlag {
    Static,
    DynamicCandidate,
    Unobserved,
}

pub fn scan_ratio_test(map_bin: &RBin, scan_bin: &RBin, params: &DynamicsParams) -> BinFlag {
    if scan_bin.count < params.min_bin_points {
        return BinFlag::Unobserved;
    }
    let floor = map_bin.ground_min_z.unwrap_or(map_bin.min_z);
    if params.occlusion_guard && map_bin.count > 0 && scan_bin.min_z > floor + params.min_map_height {
        return BinFlag::Unobserved;
    }
    let dh_map = map_bin.height();
    if dh_map > params.min_map_height && scan_bin.height() / dh_map < params.ratio_threshold {
        BinFlag::DynamicCandidate
    } else {
        BinFlag::Static
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceSet {
    /// Indices into the clustered cloud. Points of undersized components
    /// appear as singleton instances.
    pub instances: Vec<Vec<usize>>,
    /// Number of leading entries of `instances` that are full clusters.
    pub clusters: usize,
}

impl InstanceSet {
    /// Bins of `grid`-compatible layout covered by instance `k`.
    pub fn footprint(&self, k: usize, cloud: &PointCloud, center: &RigidPose, params: &DynamicsParams) -> BTreeSet<usize> {
        let inv = center.inverse();
        self.instances[k]
            .iter()
            .filter_map(|&i| locate(&inv.transform_point(cloud.points[i].xyz()), params))
            .collect()
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Euclidean connected components with links shorter than
/// `cluster_distance`, found through a voxel hash of that cell size.
pub fn cluster_instances(cloud: &PointCloud, params: &DynamicsParams) -> InstanceSet {
    let d = params.cluster_distance;
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        cells.entry(voxel_key(p.xyz(), d)).or_default().push(i);
    }
    let mut parent: Vec<usize> = (0..cloud.len()).collect();
    for (i, p) in cloud.points.iter().enumerate() {
        let k = voxel_key(p.xyz(), d);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(nb) = cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else { continue };
                    for &j in nb {
                        if j <= i || (cloud.points[j].xyz() - p.xyz()).norm_squared() > d * d {
                            continue;
                        }
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); cloud.len()];
    for i in 0..cloud.len() {
        let r = find(&mut parent, i);
        groups[r].push(i);
    }
    let (big, small): (Vec<_>, Vec<_>) = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .partition(|g| g.len() >= params.min_cluster_size);
    let clusters = big.len();
    let mut instances = big;
    instances.extend(small.into_iter().flatten().map(|i| vec![i]));
    InstanceSet { instances, clusters }
}

/// Splits instance ids into (dynamic, static): dynamic iff the flagged share
/// of its points is at least `rho`.
pub fn reject_instances(instances: &InstanceSet, flagged: &[bool], rho: f64) -> (Vec<usize>, Vec<usize>) {
    (0..instances.instances.len()).partition(|&k| {
        let pts = &instances.instances[k];
        let n = pts.iter().filter(|&&i| flagged[i]).count();
        !pts.is_empty() && n as f64 >= rho * pts.len() as f64
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundRestoration {
    pub retained: BTreeSet<usize>,
    /// Flagged bins without ground returns or with a degenerate or tilted fit.
    pub skipped_bins: usize,
}

/// Refits the ground in every flagged bin from its lowest ground-segmented
/// points and retains all bin points within `dist_threshold` of that plane.
pub fn restore_ground(
    flagged_bins: &[Vec<usize>],
    map: &PointCloud,
    is_ground: &[bool],
    czm: &CzmParams,
) -> GroundRestoration {
    let mut out = GroundRestoration::default();
    for bin in flagged_bins {
        let mut seeds: Vec<usize> = bin.iter().copied().filter(|&i| is_ground[i]).collect();
        seeds.sort_by(|&a, &b| map.points[a].z().total_cmp(&map.points[b].z()).then(a.cmp(&b)));
        seeds.truncate(czm.seed_count);
        let pts: Vec<Vector3<f64>> = seeds.iter().map(|&i| *map.points[i].xyz()).collect();
        let plane = match fit_plane_pca(&pts) {
            Ok(p) if p.normal.z.abs() >= czm.uprightness_min => p,
            _ => {
                out.skipped_bins += 1;
                continue;
            }
        };
        out.retained.extend(
            bin.iter()
                .copied()
                .filter(|&i| plane.signed_distance(map.points[i].xyz()).abs() <= czm.dist_threshold),
        );
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StaticMapReport {
    pub map_points: usize,
    pub flagged_bins: usize,
    pub flagged_points: usize,
    pub instances: usize,
    pub dynamic_instances: usize,
    pub removed_points: usize,
    pub restored_ground: usize,
    pub skipped_restoration_bins: usize,
}

#[derive(Debug, Clone)]
pub struct StaticMap {
    /// Voxel-downsampled union of all warped scans, each point carrying the
    /// majority label of its voxel.
    pub map: PointCloud,
    pub is_ground: Vec<bool>,
    pub removed: Vec<bool>,
    /// Instances over `nonground`, which indexes `map`.
    pub nonground: Vec<usize>,
    pub instances: InstanceSet,
    pub dynamic_instances: Vec<usize>,
    pub report: StaticMapReport,
}

impl StaticMap {
    pub fn static_cloud(&self) -> PointCloud {
        let idx: Vec<usize> = (0..self.map.len()).filter(|&i| !self.removed[i]).collect();
        self.map.select(&idx)
    }

    pub fn removed_cloud(&self) -> PointCloud {
        let idx: Vec<usize> = (0..self.map.len()).filter(|&i| self.removed[i]).collect();
        self.map.select(&idx)
    }

    /// Instance `k` as indices into `map`.
    pub fn instance_points(&self, k: usize) -> Vec<usize> {
        self.instances.instances[k].iter().map(|&i| self.nonground[i]).collect()
    }
}

/// Sensor-frame scans and their map-frame poses → static map.
pub fn build_static_map(scans: &[PointCloud], poses: &[RigidPose], params: &DynamicsParams) -> Result<StaticMap> {
    params.validate()?;
    if scans.is_empty() || scans.len() != poses.len() {
        return Err(Error::EmptyInput("static map needs one pose per scan and at least one scan"));
    }
    let mut all = PointCloud::new("map");
    let mut ground_raw = Vec::new();
    let mut warped = Vec::with_capacity(scans.len());
    for (scan, pose) in scans.iter().zip(poses) {
        let seg = segment_ground(scan, &params.czm)?;
        ground_raw.extend(seg.ground_mask(scan.len()));
        let w = pose.apply(scan);
        all.points.extend(w.points.iter().cloned());
        warped.push(w);
    }
    if all.is_empty() {
        return Err(Error::EmptyInput("all scans are empty"));
    }
    let grid = voxel_downsample(&all, params.map_voxel);
    let map = grid.cloud;
    let mut is_ground: Vec<bool> = grid
        .members
        .iter()
        .map(|m| 2 * m.iter().filter(|&&i| ground_raw[i]).count() > m.len())
        .collect();

    let mut votes = vec![0usize; map.len()];
    let mut flagged_bins = Vec::new();
    for (scan, pose) in warped.iter().zip(poses) {
        let mg = build_rgrid_with_ground(&map, Some(&is_ground), pose, params);
        let sg = build_rgrid(scan, pose, params);
        for (b, (mb, sb)) in mg.bins.iter().zip(&sg.bins).enumerate() {
            if mb.count > 0 && scan_ratio_test(mb, sb, params) == BinFlag::DynamicCandidate {
                for &i in &mb.point_indices {
                    votes[i] += 1;
                }
                flagged_bins.push(mg.bins[b].point_indices.clone());
            }
        }
    }
    let flagged: Vec<bool> = votes.iter().map(|&v| v >= params.min_flag_votes).collect();
    let flagged_bins: Vec<Vec<usize>> = flagged_bins
        .into_iter()
        .map(|b| b.into_iter().filter(|&i| flagged[i]).collect::<Vec<_>>())
        .filter(|b| !b.is_empty())
        .collect();

    let restoration = restore_ground(&flagged_bins, &map, &is_ground, &params.czm);
    let mut restored = 0;
    for &i in &restoration.retained {
        if !is_ground[i] {
            is_ground[i] = true;
            restored += 1;
        }
    }

    let nonground: Vec<usize> = (0..map.len()).filter(|&i| !is_ground[i]).collect();
    let instances = cluster_instances(&map.select(&nonground), params);
    let local_flags: Vec<bool> = nonground.iter().map(|&i| flagged[i]).collect();
    let (dynamic_instances, _) = reject_instances(&instances, &local_flags, params.instance_reject_fraction);
    let mut removed = vec![false; map.len()];
    for &k in &dynamic_instances {
        for &i in &instances.instances[k] {
            removed[nonground[i]] = true;
        }
    }

    let report = StaticMapReport {
        map_points: map.len(),
        flagged_bins: flagged_bins.len(),
        flagged_points: flagged.iter().filter(|f| **f).count(),
        instances: instances.instances.len(),
        dynamic_instances: dynamic_instances.len(),
        removed_points: removed.iter().filter(|r| **r).count(),
        restored_ground: restored,
        skipped_restoration_bins: restoration.skipped_bins,
    };
    Ok(StaticMap {
        map,
        is_ground,
        removed,
        nonground,
        instances,
        dynamic_instances,
        report,
    })
}
