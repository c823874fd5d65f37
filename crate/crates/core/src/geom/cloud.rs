use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Ground-truth class attached to synthetic returns.
///
/// The discriminants are the on-disk byte values of the labels sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(u8)]
pub enum PointLabel {
    #[default]
    Unlabeled = 0,
    Ground = 1,
    StaticObject = 2,
    DynamicObject = 3,
    ReflectedNoise = 4,
}

impl PointLabel {
    pub fn from_byte(byte: u8) -> Option<Self> {
        Some(match byte {
            0 => Self::Unlabeled,
            1 => Self::Ground,
            2 => Self::StaticObject,
            3 => Self::DynamicObject,
            4 => Self::ReflectedNoise,
            _ => return None,
        })
    }

    pub fn as_byte(self) -> u8 {
        self as u8
    }
}

/// A single LiDAR return. Coordinates are always finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    xyz: Vector3<f64>,
    pub intensity: Option<f32>,
    pub label: PointLabel,
}

impl Point {
    /// Panics on non-finite input; use [`Point::try_new`] for untrusted data.
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self::try_new(x, y, z).expect("point coordinates must be finite")
    }

    pub fn try_new(x: f64, y: f64, z: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::NonFinite(x, y, z));
        }
        Ok(Self {
            xyz: Vector3::new(x, y, z),
            intensity: None,
            label: PointLabel::Unlabeled,
        })
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn with_label(mut self, label: PointLabel) -> Self {
        self.label = label;
        self
    }

    pub fn with_intensity(mut self, intensity: f32) -> Self {
        self.intensity = Some(intensity);
        self
    }

    /// Same attributes, new position.
    pub fn moved_to(self, xyz: Vector3<f64>) -> Self {
        let mut p = Self::from_vector(xyz);
        p.intensity = self.intensity;
        p.label = self.label;
        p
    }

    #[inline]
    pub fn xyz(&self) -> &Vector3<f64> {
        &self.xyz
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.xyz.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.xyz.y
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.xyz.z
    }

    /// Distance from the sensor origin in the xy-plane.
    #[inline]
    pub fn horizontal_range(&self) -> f64 {
        self.xyz.x.hypot(self.xyz.y)
    }
}

/// Ordered, index-addressable collection of returns in one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(frame_id: impl Into<String>) -> Self {
        Self {
            points: Vec::new(),
            frame_id: frame_id.into(),
        }
    }

    pub fn from_points(points: Vec<Point>) -> Self {
        Self {
            points,
            frame_id: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: Point) {
        self.points.push(p);
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| *p.xyz()).collect()
    }

    /// New cloud holding `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            frame_id: self.frame_id.clone(),
        }
    }

    pub fn indices_with_label(&self, label: PointLabel) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.label == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_label(&self, label: PointLabel) -> usize {
        self.points.iter().filter(|p| p.label == label).count()
    }
}

/// Result of [`voxel_downsample`]: one centroid per occupied voxel plus the
/// source indices that were merged into it.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub cloud: PointCloud,
    pub members: Vec<Vec<usize>>,
}

/// Centroid-per-voxel downsampling.
///
/// Output order is the lexicographic order of the integer voxel keys, so the
/// result does not depend on input order beyond floating-point summation.
/// Each output point carries the majority label of its members (ties go to
/// the smaller label value) and the mean intensity when any member has one.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> VoxelGrid {
    assert!(voxel > 0.0, "voxel size must be positive");
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        cells.entry(voxel_key(p.xyz(), voxel)).or_default().push(i);
    }
    let mut keys: Vec<[i64; 3]> = cells.keys().copied().collect();
    keys.sort_unstable();

    let mut points = Vec::with_capacity(keys.len());
    let mut members = Vec::with_capacity(keys.len());
    for key in keys {
        let idx = cells.remove(&key).unwrap_or_default();
        let mut sum = Vector3::zeros();
        let mut counts = [0usize; 5];
        let mut intensity = (0.0f64, 0usize);
        for &i in &idx {
            let p = &cloud.points[i];
            sum += p.xyz();
            counts[p.label.as_byte() as usize] += 1;
            if let Some(v) = p.intensity {
                intensity.0 += v as f64;
                intensity.1 += 1;
            }
        }
        let mut best = 0;
        for (l, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = l;
            }
        }
        let mut p = Point::from_vector(sum / idx.len() as f64)
            .with_label(PointLabel::from_byte(best as u8).unwrap_or_default());
        if intensity.1 > 0 {
            p.intensity = Some((intensity.0 / intensity.1 as f64) as f32);
        }
        points.push(p);
        members.push(idx);
    }
    VoxelGrid {
        cloud: PointCloud {
            points,
            frame_id: cloud.frame_id.clone(),
        },
        members,
    }
}

#[inline]
pub(crate) fn voxel_key(p: &Vector3<f64>, voxel: f64) -> [i64; 3] {
    [
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    ]
}
