//! Labelled ray-cast LiDAR simulator over planes and boxes.

pub mod presets;
pub mod trajectory;

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use trajectory::Trajectory;

use crate::error::{Error, Result};
use crate::geom::{yaw_matrix, Point, PointCloud, PointLabel, RigidPose};

/// Finite patch `min ≤ (x, y) ≤ max` of a ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

/// Plane `normal·p + offset = 0`, optionally limited to an `(x, y)` extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane {
    pub normal: [f64; 3],
    pub offset: f64,
    #[serde(default)]
    pub extent: Option<Extent>,
}

impl GroundPlane {
    pub fn horizontal(z: f64) -> Self {
        Self {
            normal: [0.0, 0.0, 1.0],
            offset: -z,
            extent: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    pub center: [f64; 3],
    pub size: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

/// Box whose centre and heading follow `trajectory`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObject {
    pub size: [f64; 3],
    pub trajectory: Trajectory,
}

impl DynamicObject {
    pub fn box_at(&self, t: f64) -> SceneBox {
        let p = self.trajectory.pose_at(t);
        let c = p.translation();
        SceneBox {
            center: [c.x, c.y, c.z],
            size: self.size,
            yaw: p.yaw(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub ground: Vec<GroundPlane>,
    #[serde(default)]
    pub static_objects: Vec<SceneBox>,
    #[serde(default)]
    pub dynamic_objects: Vec<DynamicObject>,
    pub bounds: Bounds,
}

fn box_corners(b: &SceneBox) -> impl Iterator<Item = Vector3<f64>> + '_ {
    let r = yaw_matrix(b.yaw);
    let h = Vector3::from(b.size) / 2.0;
    (0..8).map(move |k| {
        let s = Vector3::new(
            if k & 1 == 0 { -h.x } else { h.x },
            if k & 2 == 0 { -h.y } else { h.y },
            if k & 4 == 0 { -h.z } else { h.z },
        );
        Vector3::from(b.center) + r * s
    })
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scene: {m}")));
        for (i, g) in self.ground.iter().enumerate() {
            if Vector3::from(g.normal).norm() == 0.0 {
                return bad(format!("ground plane {i} has a zero normal"));
            }
        }
        let (lo, hi) = (Vector3::from(self.bounds.min), Vector3::from(self.bounds.max));
        if (0..3).any(|k| lo[k] >= hi[k]) {
            return bad("bounds must have min < max".into());
        }
        let sizes = self.static_objects.iter().map(|b| b.size).chain(self.dynamic_objects.iter().map(|d| d.size));
        for s in sizes {
            if s.iter().any(|&v| !(v > 0.0)) {
                return bad("box sizes must be positive".into());
            }
        }
        for (i, b) in self.static_objects.iter().enumerate() {
            if box_corners(b).any(|c| (0..3).any(|k| c[k] < lo[k] - 1e-9 || c[k] > hi[k] + 1e-9)) {
                return bad(format!("static object {i} leaves the scene bounds"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub channels: usize,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_steps: usize,
    pub max_range: f64,
    /// Returns closer than this (the vehicle itself) are dropped.
    pub min_range: f64,
    pub range_noise_sigma: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            elevation_min_deg: -24.8,
            elevation_max_deg: 2.0,
            azimuth_steps: 1024,
            max_range: 80.0,
            min_range: 0.5,
            range_noise_sigma: 0.01,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.azimuth_steps == 0 {
            return Err(Error::Config("beams: channels and azimuth_steps must be >= 1".into()));
        }
        if self.channels > 1 && !(self.elevation_min_deg < self.elevation_max_deg) {
            return Err(Error::Config("beams: elevation_min_deg must be below elevation_max_deg".into()));
        }
        if !(self.max_range > self.min_range) || self.range_noise_sigma < 0.0 {
            return Err(Error::Config("beams: need max_range > min_range and sigma >= 0".into()));
        }
        Ok(())
    }

    pub fn elevation(&self, channel: usize) -> f64 {
        if self.channels == 1 {
            return self.elevation_min_deg.to_radians();
        }
        let s = channel as f64 / (self.channels - 1) as f64;
        (self.elevation_min_deg + s * (self.elevation_max_deg - self.elevation_min_deg)).to_radians()
    }

    /// Unit ray direction in the sensor frame.
    pub fn direction(&self, channel: usize, step: usize) -> Vector3<f64> {
        let e = self.elevation(channel);
        let a = std::f64::consts::TAU * step as f64 / self.azimuth_steps as f64;
        Vector3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
    }
}

/// Entity struck by a ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitEntity {
    Ground(usize),
    Static(usize),
    Dynamic(usize),
}

impl HitEntity {
    pub fn label(self) -> PointLabel {
        match self {
            HitEntity::Ground(_) => PointLabel::Ground,
            HitEntity::Static(_) => PointLabel::StaticObject,
            HitEntity::Dynamic(_) => PointLabel::DynamicObject,
        }
    }
}

const RAY_EPS: f64 = 1e-9;

fn ray_plane(o: &Vector3<f64>, d: &Vector3<f64>, g: &GroundPlane) -> Option<f64> {
    let n = Vector3::from(g.normal);
    let len = n.norm();
    let (n, off) = (n / len, g.offset / len);
    let denom = n.dot(d);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = -(n.dot(o) + off) / denom;
    if t <= RAY_EPS {
        return None;
    }
    if let Some(e) = &g.extent {
        let p = o + d * t;
        if p.x < e.min[0] || p.x > e.max[0] || p.y < e.min[1] || p.y > e.max[1] {
            return None;
        }
    }
    Some(t)
}

fn ray_box(o: &Vector3<f64>, d: &Vector3<f64>, b: &SceneBox) -> Option<f64> {
    let rt = yaw_matrix(b.yaw).transpose();
    let lo = rt * (o - Vector3::from(b.center));
    let ld = rt * d;
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        let h = b.size[k] / 2.0;
        if ld[k].abs() < 1e-15 {
            if lo[k].abs() > h {
                return None;
            }
            continue;
        }
        let (a, c) = ((-h - lo[k]) / ld[k], (h - lo[k]) / ld[k]);
        t0 = t0.max(a.min(c));
        t1 = t1.min(a.max(c));
    }
    (t0 <= t1 && t0 > RAY_EPS).then_some(t0)
}

/// Nearest intersection of the world-frame ray `o + s·d` with the scene at
/// time `t`.
pub fn cast_ray(scene: &SceneSpec, t: f64, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, HitEntity)> {
    let boxes = scene_boxes(scene, t);
    nearest_hit(&scene.ground, boxes.iter(), o, d)
}

fn scene_boxes(scene: &SceneSpec, t: f64) -> Vec<(SceneBox, HitEntity)> {
    let statics = scene.static_objects.iter().enumerate().map(|(i, b)| (b.clone(), HitEntity::Static(i)));
    let dynamics = scene.dynamic_objects.iter().enumerate().map(|(i, o)| (o.box_at(t), HitEntity::Dynamic(i)));
    statics.chain(dynamics).collect()
}

fn nearest_hit<'a>(
    ground: &[GroundPlane],
    boxes: impl Iterator<Item = &'a (SceneBox, HitEntity)>,
    o: &Vector3<f64>,
    d: &Vector3<f64>,
) -> Option<(f64, HitEntity)> {
    let mut best: Option<(f64, HitEntity)> = None;
    let mut consider = |s: Option<f64>, e: HitEntity| {
        if let Some(s) = s {
            if best.is_none_or(|(b, _)| s < b) {
                best = Some((s, e));
            }
        }
    };
    for (i, g) in ground.iter().enumerate() {
        consider(ray_plane(o, d, g), HitEntity::Ground(i));
    }
    for (b, e) in boxes {
        consider(ray_box(o, d, b), *e);
    }
    best
}

/// For every azimuth step, the boxes whose projection onto the sensor's
/// horizontal plane covers that azimuth. Boxes close to the sensor are
/// listed everywhere.
fn azimuth_buckets(boxes: &[(SceneBox, HitEntity)], sensor: &RigidPose, steps: usize) -> Vec<Vec<usize>> {
    let tau = std::f64::consts::TAU;
    let inv = sensor.inverse();
    let mut buckets = vec![Vec::new(); steps];
    let per = tau / steps as f64;
    for (k, (b, _)) in boxes.iter().enumerate() {
        let c = inv.transform_point(&Vector3::from(b.center));
        let radius = 0.5 * Vector3::from(b.size).norm();
        if c.x.hypot(c.y) <= radius + 1e-6 {
            buckets.iter_mut().for_each(|v| v.push(k));
            continue;
        }
        let rot = yaw_matrix(b.yaw);
        let ca = c.y.atan2(c.x);
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for corner in 0..8 {
            let sign = |bit: usize| if corner >> bit & 1 == 1 { 0.5 } else { -0.5 };
            let off = Vector3::new(sign(0) * b.size[0], sign(1) * b.size[1], sign(2) * b.size[2]);
            let q = inv.transform_point(&(Vector3::from(b.center) + rot * off));
            let diff = (q.y.atan2(q.x) - ca + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
            lo = lo.min(diff);
            hi = hi.max(diff);
        }
        let first = ((ca + lo) / per).floor() as i64 - 1;
        let last = ((ca + hi) / per).ceil() as i64 + 1;
        for s in first..=last {
            buckets[s.rem_euclid(steps as i64) as usize].push(k);
        }
    }
    for v in &mut buckets {
        v.dedup();
    }
    buckets
}

/// SplitMix64 finaliser used to derive independent stream seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const SCAN_INTENSITY: f32 = 0.5;

/// One labelled scan in the sensor frame: channel-major, azimuth-minor.
pub fn simulate_scan(scene: &SceneSpec, sensor: &RigidPose, t: f64, beams: &BeamConfig, seed: u64) -> PointCloud {
    simulate_scan_with_hits(scene, sensor, t, beams, seed).0
}

/// As [`simulate_scan`], plus the entity behind every returned point.
pub fn simulate_scan_with_hits(
    scene: &SceneSpec,
    sensor: &RigidPose,
    t: f64,
    beams: &BeamConfig,
    seed: u64,
) -> (PointCloud, Vec<HitEntity>) {
    let o = *sensor.translation();
    let rot = sensor.rotation();
    let noise = (beams.range_noise_sigma > 0.0).then(|| Normal::new(0.0, beams.range_noise_sigma).expect("sigma >= 0"));
    let mut cloud = PointCloud::new(String::new());
    let mut hits = Vec::new();
    let boxes = scene_boxes(scene, t);
    let buckets = azimuth_buckets(&boxes, sensor, beams.azimuth_steps);
    for c in 0..beams.channels {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, c as u64));
        for step in 0..beams.azimuth_steps {
            let local = beams.direction(c, step);
            let candidates = buckets[step].iter().map(|&k| &boxes[k]);
            let Some((range, entity)) = nearest_hit(&scene.ground, candidates, &o, &(rot * local)) else {
                continue;
            };
            if range > beams.max_range || range < beams.min_range {
                continue;
            }
            let r = match &noise {
                Some(n) => range + n.sample(&mut rng),
                None => range,
            };
            cloud.push(Point::from_vector(local * r).with_label(entity.label()).with_intensity(SCAN_INTENSITY));
            hits.push(entity);
        }
    }
    (cloud, hits)
}

/// Appends `round(rate · n_ground)` copies of randomly chosen ground points,
/// each pushed straight down by a depth drawn uniformly from `depth_range`
/// and labelled [`PointLabel::ReflectedNoise`].
pub fn inject_reflected_noise(cloud: &PointCloud, rate: f64, depth_range: (f64, f64), seed: u64) -> PointCloud {
    let ground = cloud.indices_with_label(PointLabel::Ground);
    let k = ((rate.clamp(0.0, 1.0) * ground.len() as f64).round() as usize).min(ground.len());
    let mut out = cloud.clone();
    if k == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x6e6f_6973_65));
    let mut chosen: Vec<usize> = sample(&mut rng, ground.len(), k).into_iter().map(|i| ground[i]).collect();
    chosen.sort_unstable();
    let (lo, hi) = depth_range;
    for i in chosen {
        let depth = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let p = cloud.points[i];
        out.push(p.moved_to(p.xyz() - Vector3::new(0.0, 0.0, depth)).with_label(PointLabel::ReflectedNoise));
    }
    out
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub scans: Vec<PointCloud>,
    /// Exact sensor poses in the world frame.
    pub poses: Vec<RigidPose>,
    pub times: Vec<f64>,
}

/// `n_scans` scans at `t = k·dt`; scan `k` draws from its own random stream.
pub fn make_sequence(
    scene: &SceneSpec,
    trajectory: &Trajectory,
    beams: &BeamConfig,
    n_scans: usize,
    dt: f64,
    seed: u64,
) -> Sequence {
    let mut seq = Sequence {
        scans: Vec::with_capacity(n_scans),
        poses: Vec::with_capacity(n_scans),
        times: Vec::with_capacity(n_scans),
    };
    for k in 0..n_scans {
        let t = k as f64 * dt;
        let pose = trajectory.pose_at(t);
        let mut scan = simulate_scan(scene, &pose, t, beams, mix_seed(seed, k as u64 + 1));
        scan.frame_id = format!("{k:06}");
        seq.scans.push(scan);
        seq.poses.push(pose);
        seq.times.push(t);
    }
    seq
}

/// Optional `[sequence]` table of a scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub trajectory: Trajectory,
    #[serde(default = "default_scans")]
    pub n_scans: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub beams: BeamConfig,
    #[serde(default)]
    pub reflected_noise_rate: f64,
    #[serde(default = "default_depth")]
    pub reflected_noise_depth: [f64; 2],
}

fn default_scans() -> usize {
    20
}

fn default_dt() -> f64 {
    0.5
}

fn default_depth() -> [f64; 2] {
    [0.3, 1.0]
}

/// Scene file: a [`SceneSpec`] plus an optional sequence description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    #[serde(flatten)]
    pub scene: SceneSpec,
    #[serde(default)]
    pub sequence: Option<SequenceSpec>,
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self> {
        let f: SceneFile = toml::from_str(text).map_err(|e| Error::Config(format!("scene file: {e}")))?;
        f.scene.validate()?;
        if let Some(s) = &f.sequence {
            s.beams.validate()?;
        }
        Ok(f)
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("scene file: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat() -> SceneSpec {
        SceneSpec {
            ground: vec![GroundPlane::horizontal(0.0)],
            static_objects: vec![],
            dynamic_objects: vec![],
            bounds: Bounds { min: [-100.0, -100.0, -5.0], max: [100.0, 100.0, 20.0] },
        }
    }

    fn sensor() -> RigidPose {
        RigidPose::from_translation(Vector3::new(0.0, 0.0, 1.7))
    }

    #[test]
    fn lowest_beam_hits_ground_at_closed_form_distance() {
        let beams = BeamConfig { range_noise_sigma: 0.0, ..Default::default() };
        let (cloud, hits) = simulate_scan_with_hits(&flat(), &sensor(), 0.0, &beams, 1);
        let p = cloud.points[0];
        assert_eq!(hits[0], HitEntity::Ground(0));
        assert!((p.x() - 1.7 / 24.8f64.to_radians().tan()).abs() < 1e-9, "{}", p.x());
        assert!(p.y().abs() < 1e-12);
        assert!((p.z() + 1.7).abs() < 1e-9);
    }

    #[test]
    fn culled_scan_matches_brute_force() {
        let scene = presets::dynamic_street().0;
        let beams = BeamConfig { channels: 16, azimuth_steps: 360, ..Default::default() };
        let sensor = RigidPose::from_yaw(0.7, Vector3::new(1.0, -0.5, 1.73));
        let (cloud, hits) = simulate_scan_with_hits(&scene, &sensor, 1.3, &beams, 5);
        let mut k = 0;
        for c in 0..beams.channels {
            for step in 0..beams.azimuth_steps {
                let d = sensor.rotation() * beams.direction(c, step);
                let Some((range, e)) = cast_ray(&scene, 1.3, sensor.translation(), &d) else {
                    continue;
                };
                if range > beams.max_range || range < beams.min_range {
                    continue;
                }
                assert_eq!(hits[k], e, "channel {c} step {step}");
                k += 1;
            }
        }
        assert_eq!(k, cloud.len());
    }

    #[test]
    fn upward_rays_miss_without_ceiling() {
        let d = Vector3::new(0.0, 0.3, 1.0).normalize();
        assert!(cast_ray(&flat(), 0.0, &Vector3::new(0.0, 0.0, 1.7), &d).is_none());
    }

    #[test]
    fn box_occludes_ground() {
        let mut scene = flat();
        scene.static_objects.push(SceneBox { center: [3.0, 0.0, 1.0], size: [1.0, 4.0, 2.0], yaw: 0.0 });
        let d = Vector3::new(1.0, 0.0, -0.3).normalize();
        let (s, e) = cast_ray(&scene, 0.0, &Vector3::new(0.0, 0.0, 1.7), &d).unwrap();
        assert_eq!(e, HitEntity::Static(0));
        assert!(((d * s).x - 2.5).abs() < 1e-9);
    }

    #[test]
    fn noise_free_ground_points_lie_on_plane_and_labels_reintersect() {
        let mut scene = flat();
        scene.ground.push(GroundPlane {
            normal: [0.05, 0.0, 1.0],
            offset: -0.2,
            extent: Some(Extent { min: [20.0, -50.0], max: [60.0, 50.0] }),
        });
        scene.static_objects.push(SceneBox { center: [-8.0, 4.0, 1.5], size: [3.0, 6.0, 3.0], yaw: 0.4 });
        scene.dynamic_objects.push(DynamicObject {
            size: [4.0, 2.0, 1.5],
            trajectory: Trajectory::Linear { start: [5.0, -6.0, 0.75], velocity: [1.0, 0.0, 0.0], yaw: 0.0 },
        });
        let beams = BeamConfig { range_noise_sigma: 0.0, channels: 16, azimuth_steps: 360, ..Default::default() };
        let pose = RigidPose::from_yaw(0.3, Vector3::new(1.0, 2.0, 1.7));
        let (cloud, hits) = simulate_scan_with_hits(&scene, &pose, 2.0, &beams, 5);
        assert!(hits.iter().any(|h| matches!(h, HitEntity::Dynamic(_))));
        for (p, h) in cloud.points.iter().zip(&hits) {
            let w = pose.transform_point(p.xyz());
            if let HitEntity::Ground(i) = h {
                let g = &scene.ground[*i];
                let n = Vector3::from(g.normal);
                assert!(((n.dot(&w) + g.offset) / n.norm()).abs() < 1e-9);
            }
            let dir = (w - pose.translation()).normalize();
            let (_, again) = cast_ray(&scene, 2.0, pose.translation(), &dir).unwrap();
            assert_eq!(again.label(), p.label);
        }
    }

    #[test]
    fn scans_are_deterministic() {
        let beams = BeamConfig { channels: 8, azimuth_steps: 128, ..Default::default() };
        let a = simulate_scan(&flat(), &sensor(), 0.0, &beams, 42);
        let b = simulate_scan(&flat(), &sensor(), 0.0, &beams, 42);
        let c = simulate_scan(&flat(), &sensor(), 0.0, &beams, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn reflected_noise_counts_and_sign() {
        let beams = BeamConfig { channels: 32, azimuth_steps: 512, ..Default::default() };
        let cloud = simulate_scan(&flat(), &sensor(), 0.0, &beams, 3);
        assert_eq!(inject_reflected_noise(&cloud, 0.0, (0.3, 1.0), 1), cloud);
        let noisy = inject_reflected_noise(&cloud, 0.01, (0.3, 1.0), 1);
        let n_ground = cloud.count_label(PointLabel::Ground);
        let added = noisy.len() - cloud.len();
        assert_eq!(added, (0.01 * n_ground as f64).round() as usize);
        assert_eq!(&noisy.points[..cloud.len()], &cloud.points[..]);
        for p in &noisy.points[cloud.len()..] {
            assert_eq!(p.label, PointLabel::ReflectedNoise);
            assert!(p.z() < -1.7 - 0.25);
        }
        let empty = PointCloud::from_points(vec![Point::new(1.0, 1.0, 1.0).with_label(PointLabel::StaticObject)]);
        assert_eq!(inject_reflected_noise(&empty, 0.5, (0.3, 1.0), 1), empty);
    }

    #[test]
    fn sequence_single_scan_and_dynamic_motion() {
        let mut scene = flat();
        scene.dynamic_objects.push(DynamicObject {
            size: [4.0, 2.0, 1.5],
            trajectory: Trajectory::Linear { start: [-15.0, 6.0, 0.75], velocity: [3.0, 0.0, 0.0], yaw: 0.0 },
        });
        let tr = Trajectory::Static { position: [0.0, 0.0, 1.7], yaw: 0.0 };
        let beams = BeamConfig { channels: 16, azimuth_steps: 360, ..Default::default() };
        let one = make_sequence(&scene, &tr, &beams, 1, 1.0, 9);
        assert_eq!(one.scans.len(), 1);
        assert_eq!(one.poses[0], tr.pose_at(0.0));
        let seq = make_sequence(&scene, &tr, &beams, 3, 4.0, 9);
        let xs: Vec<(f64, f64)> = seq
            .scans
            .iter()
            .map(|s| {
                let dyn_x: Vec<f64> = s.points.iter().filter(|p| p.label == PointLabel::DynamicObject).map(|p| p.x()).collect();
                (dyn_x.iter().copied().fold(f64::INFINITY, f64::min), dyn_x.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            })
            .collect();
        assert!(xs[0].1 < xs[1].0 && xs[1].1 < xs[2].0, "{xs:?}");
    }

    #[test]
    fn scene_file_round_trip() {
        let text = r#"
            [bounds]
            min = [-50.0, -50.0, -5.0]
            max = [50.0, 50.0, 10.0]

            [[ground]]
            normal = [0.0, 0.0, 1.0]
            offset = 0.0

            [[static_objects]]
            center = [10.0, 0.0, 1.0]
            size = [2.0, 2.0, 2.0]

            [[dynamic_objects]]
            size = [1.0, 1.0, 1.8]
            trajectory = { kind = "linear", start = [0.0, 5.0, 0.9], velocity = [1.0, 0.0, 0.0] }

            [sequence]
            n_scans = 4
            trajectory = { kind = "static", position = [0.0, 0.0, 1.73] }
            beams = { channels = 16 }
        "#;
        let f = SceneFile::parse(text).unwrap();
        assert_eq!(f.scene.static_objects.len(), 1);
        assert_eq!(f.sequence.as_ref().unwrap().beams.channels, 16);
        assert_eq!(f.sequence.as_ref().unwrap().beams.azimuth_steps, 1024);
        let again = SceneFile::parse(&f.to_text().unwrap()).unwrap();
        assert_eq!(again, f);
        assert!(SceneFile::parse("[bounds]\nmin=[0,0,0]\nmax=[1,1,1]\n[[static_objects]]\ncenter=[5,5,5]\nsize=[1,1,1]\n").is_err());
    }
}
