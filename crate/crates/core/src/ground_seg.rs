//! Region-wise ground segmentation over a concentric-zone polar grid.
//!
//! Bins are processed ring by ring from the sensor outwards. When estimating
//! a bin's plane, the already accepted planes of the adjacent inner ring are
//! extrapolated under the bin and any seed candidate lying far below them is
//! discarded as reflected noise before the PCA fit.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geom::{fit_plane_pca, PlaneModel, PointCloud};

#[derive(Debug, Clone, PartialEq)]
pub struct CzmParams {
    pub min_range: f64,
    pub max_range: f64,
    /// Ascending zone radii; first is `min_range`, last is `max_range`.
    pub zone_boundaries: Vec<f64>,
    pub rings_per_zone: Vec<usize>,
    pub sectors_per_zone: Vec<usize>,
    pub seed_count: usize,
    pub seed_margin: f64,
    pub dist_threshold: f64,
    pub uprightness_min: f64,
    pub noise_rejection_margin: f64,
    /// Reuse inner-ring planes to reject reflected noise.
    pub cascade: bool,
    /// Mounting height of the sensor above the ground. Used as the reference
    /// plane `z = -sensor_height` for bins that have no estimated inner
    /// neighbour yet (the start of the cascade).
    pub sensor_height: Option<f64>,
    /// Optional flatness gate on accepted planes; off by default.
    pub flatness_max: Option<f64>,
}

impl Default for CzmParams {
    fn default() -> Self {
        Self {
            min_range: 1.0,
            max_range: 80.0,
            zone_boundaries: vec![1.0, 10.0, 20.0, 40.0, 80.0],
            rings_per_zone: vec![4, 4, 4, 4],
            sectors_per_zone: vec![16, 32, 32, 16],
            seed_count: 20,
            seed_margin: 0.3,
            dist_threshold: 0.125,
            uprightness_min: 40f64.to_radians().cos(),
            noise_rejection_margin: 0.3,
            cascade: true,
            sensor_height: Some(1.73),
            flatness_max: None,
        }
    }
}

impl CzmParams {
    pub fn validate(&self) -> Result<()> {
        let b = &self.zone_boundaries;
        let zones = b.len().saturating_sub(1);
        let bad = |msg: &str| Err(Error::Config(format!("czm: {msg}")));
        if zones == 0 {
            return bad("need at least two zone boundaries");
        }
        if b.windows(2).any(|w| w[0] >= w[1]) {
            return bad("zone boundaries must be strictly ascending");
        }
        if b[0] != self.min_range || b[zones] != self.max_range {
            return bad("zone boundaries must start at min_range and end at max_range");
        }
        if self.rings_per_zone.len() != zones || self.sectors_per_zone.len() != zones {
            return bad("rings_per_zone and sectors_per_zone need one entry per zone");
        }
        if self.rings_per_zone.iter().chain(&self.sectors_per_zone).any(|&c| c == 0) {
            return bad("ring and sector counts must be at least 1");
        }
        if !(self.uprightness_min > 0.0 && self.uprightness_min <= 1.0) {
            return bad("uprightness_min must lie in (0, 1]");
        }
        if self.seed_count == 0 || self.seed_margin < 0.0 || self.dist_threshold <= 0.0 || self.noise_rejection_margin < 0.0 {
            return bad("seed and threshold parameters must be positive");
        }
        Ok(())
    }

    pub fn zone_count(&self) -> usize {
        self.zone_boundaries.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinId {
    pub zone: usize,
    pub ring: usize,
    pub sector: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinStatus {
    Accepted,
    RejectedTilted,
    RejectedFlatness,
    /// Too few usable seeds, all seeds rejected as noise, or degenerate fit.
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinPlane {
    pub plane: Option<PlaneModel>,
    pub status: BinStatus,
}

#[derive(Debug, Clone, Default)]
pub struct GroundSegmentation {
    pub ground_indices: Vec<usize>,
    /// All other indices, including out-of-range points.
    pub nonground_indices: Vec<usize>,
    pub out_of_range: Vec<usize>,
    pub bin_planes: BTreeMap<BinId, BinPlane>,
}

impl GroundSegmentation {
    pub fn ground_mask(&self, len: usize) -> Vec<bool> {
        let mut mask = vec![false; len];
        for &i in &self.ground_indices {
            mask[i] = true;
        }
        mask
    }
}

/// Polar binning of a cloud.
#[derive(Debug, Clone)]
pub struct CzmBins {
    pub bins: BTreeMap<BinId, Vec<usize>>,
    pub excluded: Vec<usize>,
}

/// Precomputed layout of the concentric zones.
struct Layout {
    boundaries: Vec<f64>,
    rings: Vec<usize>,
    sectors: Vec<usize>,
    /// Flat offset of the first bin of each zone.
    zone_offset: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(params: &CzmParams) -> Self {
        let mut zone_offset = Vec::with_capacity(params.zone_count());
        let mut total = 0;
        for z in 0..params.zone_count() {
            zone_offset.push(total);
            total += params.rings_per_zone[z] * params.sectors_per_zone[z];
        }
        Self {
            boundaries: params.zone_boundaries.clone(),
            rings: params.rings_per_zone.clone(),
            sectors: params.sectors_per_zone.clone(),
            zone_offset,
            total,
        }
    }

    fn locate(&self, x: f64, y: f64) -> Option<BinId> {
        let r = x.hypot(y);
        let last = *self.boundaries.last()?;
        if r < self.boundaries[0] || r > last {
            return None;
        }
        let zone = self.boundaries[1..].iter().position(|&b| r < b).unwrap_or(self.rings.len() - 1);
        let (lo, hi) = (self.boundaries[zone], self.boundaries[zone + 1]);
        let width = (hi - lo) / self.rings[zone] as f64;
        let ring = (((r - lo) / width).floor() as usize).min(self.rings[zone] - 1);
        let mut az = y.atan2(x);
        if az < 0.0 {
            az += TAU;
        }
        let n = self.sectors[zone];
        let sector = ((az / (TAU / n as f64)).floor() as usize).min(n - 1);
        Some(BinId { zone, ring, sector })
    }

    fn flat(&self, id: BinId) -> usize {
        self.zone_offset[id.zone] + id.ring * self.sectors[id.zone] + id.sector
    }

    /// Rings in cascade order: (zone, ring) from the innermost outwards.
    fn rings_in_order(&self) -> Vec<(usize, usize)> {
        (0..self.rings.len())
            .flat_map(|z| (0..self.rings[z]).map(move |r| (z, r)))
            .collect()
    }

    fn sector_center(&self, zone: usize, sector: usize) -> f64 {
        (sector as f64 + 0.5) * TAU / self.sectors[zone] as f64
    }

    /// Sectors `s-1, s, s+1` (wrapping) of ring `(zone, ring)` around azimuth `az`.
    fn neighbor_sectors(&self, zone: usize, az: f64) -> Vec<usize> {
        let n = self.sectors[zone];
        let s = ((az / (TAU / n as f64)).floor() as usize).min(n - 1);
        let mut out = vec![(s + n - 1) % n, s, (s + 1) % n];
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn flat_bins(cloud: &PointCloud, layout: &Layout) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut bins = vec![Vec::new(); layout.total];
    let mut excluded = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        match layout.locate(p.x(), p.y()) {
            Some(id) => bins[layout.flat(id)].push(i),
            None => excluded.push(i),
        }
    }
    (bins, excluded)
}

/// Assign every in-range point (horizontal range in `[min_range, max_range]`)
/// to exactly one bin; out-of-range points are reported in `excluded`.
pub fn build_czm(cloud: &PointCloud, params: &CzmParams) -> Result<CzmBins> {
    params.validate()?;
    let layout = Layout::new(params);
    let (flat, excluded) = flat_bins(cloud, &layout);
    let mut bins = BTreeMap::new();
    for zone in 0..layout.rings.len() {
        for ring in 0..layout.rings[zone] {
            for sector in 0..layout.sectors[zone] {
                let id = BinId { zone, ring, sector };
                let members = &flat[layout.flat(id)];
                if !members.is_empty() {
                    bins.insert(id, members.clone());
                }
            }
        }
    }
    Ok(CzmBins { bins, excluded })
}

#[derive(Debug, Clone)]
pub struct BinFit {
    pub plane: PlaneModel,
    pub ground: Vec<usize>,
    /// Candidates discarded for lying below the extrapolated neighbour planes.
    pub rejected_as_noise: Vec<usize>,
}

/// Fit one bin's ground plane.
///
/// Candidates more than `noise_rejection_margin` below the mean height of the
/// `neighbor_planes` at their `(x, y)` are excluded; seeds are then the
/// `seed_count` lowest remaining points within `seed_margin` of the lowest
/// one (ties by index), and the ground subset is every bin point within
/// `dist_threshold` of the fitted plane.
pub fn estimate_bin_plane(
    bin_points: &[usize],
    cloud: &PointCloud,
    neighbor_planes: &[PlaneModel],
    params: &CzmParams,
) -> Result<BinFit> {
    let pts = &cloud.points;
    let mut admissible = Vec::with_capacity(bin_points.len());
    let mut rejected = Vec::new();
    for &i in bin_points {
        let p = &pts[i];
        let below = mean_neighbor_height(neighbor_planes, p.x(), p.y())
            .is_some_and(|h| p.z() < h - params.noise_rejection_margin);
        if below {
            rejected.push(i);
        } else {
            admissible.push(i);
        }
    }
    if admissible.is_empty() {
        return Err(Error::NoValidSeeds);
    }
    admissible.sort_by(|&a, &b| pts[a].z().total_cmp(&pts[b].z()).then(a.cmp(&b)));
    let lowest = pts[admissible[0]].z();
    let seeds: Vec<Vector3<f64>> = admissible
        .iter()
        .take_while(|&&i| pts[i].z() <= lowest + params.seed_margin)
        .take(params.seed_count)
        .map(|&i| *pts[i].xyz())
        .collect();
    let plane = fit_plane_pca(&seeds)?;
    let ground = bin_points
        .iter()
        .copied()
        .filter(|&i| plane.signed_distance(pts[i].xyz()).abs() <= params.dist_threshold)
        .collect();
    Ok(BinFit {
        plane,
        ground,
        rejected_as_noise: rejected,
    })
}

fn mean_neighbor_height(planes: &[PlaneModel], x: f64, y: f64) -> Option<f64> {
    let (sum, n) = planes
        .iter()
        .filter_map(|p| p.height_at(x, y))
        .fold((0.0, 0usize), |(s, n), h| (s + h, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Cascaded ground segmentation of one scan in its sensor frame.
pub fn segment_ground(cloud: &PointCloud, params: &CzmParams) -> Result<GroundSegmentation> {
    params.validate()?;
    let layout = Layout::new(params);
    let (bins, excluded) = flat_bins(cloud, &layout);
    let mut accepted: Vec<Option<PlaneModel>> = vec![None; layout.total];
    let mut is_ground = vec![false; cloud.len()];
    let mut bin_planes = BTreeMap::new();
    let prior = params.sensor_height.map(|h| PlaneModel::horizontal(-h));
    let order = layout.rings_in_order();

    for (g, &(zone, ring)) in order.iter().enumerate() {
        for sector in 0..layout.sectors[zone] {
            let id = BinId { zone, ring, sector };
            let members = &bins[layout.flat(id)];
            if members.is_empty() {
                continue;
            }
            let neighbors = if params.cascade {
                let az = layout.sector_center(zone, sector);
                let mut found = Vec::new();
                // Nearest inner ring that has at least one accepted plane
                // around this azimuth.
                for &(iz, ir) in order[..g].iter().rev() {
                    for s in layout.neighbor_sectors(iz, az) {
                        let inner = BinId { zone: iz, ring: ir, sector: s };
                        if let Some(p) = accepted[layout.flat(inner)] {
                            found.push(p);
                        }
                    }
                    if !found.is_empty() {
                        break;
                    }
                }
                if found.is_empty() {
                    found.extend(prior);
                }
                found
            } else {
                Vec::new()
            };

            let entry = match estimate_bin_plane(members, cloud, &neighbors, params) {
                Ok(fit) => {
                    let status = if fit.plane.uprightness < params.uprightness_min {
                        BinStatus::RejectedTilted
                    } else if params.flatness_max.is_some_and(|f| fit.plane.flatness > f) {
                        BinStatus::RejectedFlatness
                    } else {
                        BinStatus::Accepted
                    };
                    if status == BinStatus::Accepted {
                        accepted[layout.flat(id)] = Some(fit.plane);
                        for i in fit.ground {
                            is_ground[i] = true;
                        }
                    }
                    BinPlane {
                        plane: Some(fit.plane),
                        status,
                    }
                }
                Err(_) => BinPlane {
                    plane: None,
                    status: BinStatus::Empty,
                },
            };
            bin_planes.insert(id, entry);
        }
    }

    let (mut ground_indices, mut nonground_indices) = (Vec::new(), Vec::new());
    for (i, g) in is_ground.into_iter().enumerate() {
        if g {
            ground_indices.push(i);
        } else {
            nonground_indices.push(i);
        }
    }
    Ok(GroundSegmentation {
        ground_indices,
        nonground_indices,
        out_of_range: excluded,
        bin_planes,
    })
}
