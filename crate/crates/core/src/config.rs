//! Flat `module.key = value` configuration with `#` comments.
//!
//! Every key maps onto one field of the stage parameter structs; unknown
//! keys and unparsable values are errors. Ground segmentation and
//! registration settings are shared by every stage that uses them.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ground_seg::CzmParams;
use crate::multi_session::{AlignParams, MergeParams};
use crate::pose_graph::{diagonal_information, EdgeKind, LoopParams, PgoParams};
use crate::registration::{EdgeSet, RegistrationOptions, RotationMode};
use crate::static_map::DynamicsParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    /// Per-step odometry noise, radians per axis.
    pub odometry_sigma_rot: f64,
    /// Per-step odometry noise, meters per axis.
    pub odometry_sigma_trans: f64,
    pub detect_loops: bool,
    /// Overrides the scene file's sequence length.
    pub n_scans: Option<usize>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            odometry_sigma_rot: 0.002,
            odometry_sigma_trans: 0.02,
            detect_loops: true,
            n_scans: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub czm: CzmParams,
    /// Its `czm` field is replaced by [`Config::czm`] on use.
    pub registration: RegistrationOptions,
    pub pgo: PgoParams,
    pub loop_radius: f64,
    pub loop_min_node_gap: usize,
    pub loop_min_inliers: usize,
    pub loop_sigma_rot: f64,
    pub loop_sigma_trans: f64,
    /// Its `czm` field is replaced by [`Config::czm`] on use.
    pub dynamics: DynamicsParams,
    pub allow_bridge: bool,
    pub bridge_information_scale: f64,
    pub align_min_inliers: usize,
    pub align_map_voxel: f64,
    pub pipeline: PipelineParams,
}

impl Default for Config {
    fn default() -> Self {
        let loops = LoopParams::default();
        let merge = MergeParams::default();
        let align = AlignParams::default();
        Self {
            czm: CzmParams::default(),
            registration: RegistrationOptions::default(),
            pgo: PgoParams::default(),
            loop_radius: loops.radius,
            loop_min_node_gap: loops.min_node_gap,
            loop_min_inliers: loops.min_inliers,
            loop_sigma_rot: 0.02,
            loop_sigma_trans: 0.1,
            dynamics: DynamicsParams::default(),
            allow_bridge: merge.allow_bridge,
            bridge_information_scale: merge.bridge_information_scale,
            align_min_inliers: align.min_inliers,
            align_map_voxel: align.map_voxel,
            pipeline: PipelineParams::default(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn optional(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "none" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

impl Config {
    pub fn registration(&self) -> RegistrationOptions {
        RegistrationOptions {
            czm: self.czm.clone(),
            ..self.registration.clone()
        }
    }

    pub fn loops(&self) -> LoopParams {
        LoopParams {
            radius: self.loop_radius,
            min_node_gap: self.loop_min_node_gap,
            registration: self.registration(),
            min_inliers: self.loop_min_inliers,
            information: diagonal_information(self.loop_sigma_rot, self.loop_sigma_trans),
        }
    }

    pub fn dynamics(&self) -> DynamicsParams {
        DynamicsParams {
            czm: self.czm.clone(),
            ..self.dynamics.clone()
        }
    }

    pub fn align(&self) -> AlignParams {
        AlignParams {
            registration: self.registration(),
            map_voxel: self.align_map_voxel,
            min_inliers: self.align_min_inliers,
        }
    }

    pub fn merge(&self) -> MergeParams {
        MergeParams {
            loops: self.loops(),
            pgo: self.pgo.clone(),
            allow_bridge: self.allow_bridge,
            bridge_information_scale: self.bridge_information_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.czm.validate()?;
        self.registration.gnc.validate()?;
        self.pgo.validate()?;
        self.dynamics().validate()?;
        if !(self.loop_radius > 0.0 && self.loop_sigma_rot > 0.0 && self.loop_sigma_trans > 0.0) {
            return Err(Error::Config("loops: radius and sigmas must be > 0".into()));
        }
        if !(self.bridge_information_scale > 0.0 && self.align_map_voxel > 0.0) {
            return Err(Error::Config("merge: bridge scale and map voxel must be > 0".into()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let k = key;
        let c = &mut self.czm;
        let r = &mut self.registration;
        let p = &mut self.pgo;
        let d = &mut self.dynamics;
        match key {
            "groundseg.min_range" => c.min_range = num(k, v)?,
            "groundseg.max_range" => c.max_range = num(k, v)?,
            "groundseg.zone_boundaries" => c.zone_boundaries = list(k, v)?,
            "groundseg.rings_per_zone" => c.rings_per_zone = list(k, v)?,
            "groundseg.sectors_per_zone" => c.sectors_per_zone = list(k, v)?,
            "groundseg.seed_count" => c.seed_count = num(k, v)?,
            "groundseg.seed_margin" => c.seed_margin = num(k, v)?,
            "groundseg.dist_threshold" => c.dist_threshold = num(k, v)?,
            "groundseg.uprightness_min" => c.uprightness_min = num(k, v)?,
            "groundseg.noise_rejection_margin" => c.noise_rejection_margin = num(k, v)?,
            "groundseg.cascade" => c.cascade = flag(k, v)?,
            "groundseg.sensor_height" => c.sensor_height = optional(k, v)?,
            "groundseg.flatness_max" => c.flatness_max = optional(k, v)?,

            "registration.noise_bound" => r.gnc.noise_bound = num(k, v)?,
            "registration.mu_update_factor" => r.gnc.mu_update_factor = num(k, v)?,
            "registration.max_iterations" => r.gnc.max_iterations = num(k, v)?,
            "registration.cost_tolerance" => r.gnc.cost_tolerance = num(k, v)?,
            "registration.rotation_mode" => {
                r.gnc.rotation_mode = match v {
                    "quasi" | "quasi_so3" => RotationMode::QuasiSO3,
                    "full" | "full_so3" => RotationMode::FullSO3,
                    _ => return Err(Error::Config(format!("{k}: expected quasi or full, got {v:?}"))),
                }
            }
            "registration.edge_set" => {
                r.edge_set = match v {
                    "auto" => None,
                    "chain" => Some(EdgeSet::Chain),
                    "complete" => Some(EdgeSet::Complete),
                    _ => match v.strip_prefix("knn:") {
                        Some(n) => Some(EdgeSet::KNearest(num(k, n)?)),
                        None => return Err(Error::Config(format!("{k}: expected auto, chain, complete or knn:<k>"))),
                    },
                }
            }
            "registration.quorum" => r.quorum = num(k, v)?,
            "registration.prune_ground" => r.prune_ground = flag(k, v)?,
            "registration.align_ground_normals" => r.align_ground_normals = flag(k, v)?,
            "registration.voxel_size" => r.matcher.voxel_size = num(k, v)?,
            "registration.normal_neighbors" => r.matcher.normal_neighbors = num(k, v)?,
            "registration.feature_radius" => r.matcher.feature_radius = num(k, v)?,

            "pgo.max_gn_iterations" => p.max_gn_iterations = num(k, v)?,
            "pgo.step_tolerance" => p.step_tolerance = num(k, v)?,
            "pgo.gnc_noise_bound" => p.gnc_noise_bound = num(k, v)?,
            "pgo.mu_update_factor" => p.mu_update_factor = num(k, v)?,
            "pgo.max_gnc_iterations" => p.max_gnc_iterations = num(k, v)?,
            "pgo.gnc_cost_tolerance" => p.gnc_cost_tolerance = num(k, v)?,
            "pgo.damping_retries" => p.damping_retries = num(k, v)?,
            "pgo.dense_max_nodes" => p.dense_max_nodes = num(k, v)?,
            "pgo.robustify" => {
                p.robustify = if v == "none" {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|s| EdgeKind::parse(s.trim()).ok_or_else(|| Error::Config(format!("{k}: unknown edge kind {s:?}"))))
                        .collect::<Result<_>>()?
                }
            }

            "loops.radius" => self.loop_radius = num(k, v)?,
            "loops.min_node_gap" => self.loop_min_node_gap = num(k, v)?,
            "loops.min_inliers" => self.loop_min_inliers = num(k, v)?,
            "loops.sigma_rot" => self.loop_sigma_rot = num(k, v)?,
            "loops.sigma_trans" => self.loop_sigma_trans = num(k, v)?,

            "dynamics.voi_radius" => d.voi_radius = num(k, v)?,
            "dynamics.voi_z_min" => d.voi_z.0 = num(k, v)?,
            "dynamics.voi_z_max" => d.voi_z.1 = num(k, v)?,
            "dynamics.rings" => d.rings = num(k, v)?,
            "dynamics.sectors" => d.sectors = num(k, v)?,
            "dynamics.ratio_threshold" => d.ratio_threshold = num(k, v)?,
            "dynamics.min_map_height" => d.min_map_height = num(k, v)?,
            "dynamics.min_bin_points" => d.min_bin_points = num(k, v)?,
            "dynamics.instance_reject_fraction" => d.instance_reject_fraction = num(k, v)?,
            "dynamics.cluster_distance" => d.cluster_distance = num(k, v)?,
            "dynamics.min_cluster_size" => d.min_cluster_size = num(k, v)?,
            "dynamics.min_flag_votes" => d.min_flag_votes = num(k, v)?,
            "dynamics.occlusion_guard" => d.occlusion_guard = flag(k, v)?,
            "dynamics.map_voxel" => d.map_voxel = num(k, v)?,

            "merge.allow_bridge" => self.allow_bridge = flag(k, v)?,
            "merge.bridge_information_scale" => self.bridge_information_scale = num(k, v)?,
            "merge.align_min_inliers" => self.align_min_inliers = num(k, v)?,
            "merge.map_voxel" => self.align_map_voxel = num(k, v)?,

            "pipeline.odometry_sigma_rot" => self.pipeline.odometry_sigma_rot = num(k, v)?,
            "pipeline.odometry_sigma_trans" => self.pipeline.odometry_sigma_trans = num(k, v)?,
            "pipeline.detect_loops" => self.pipeline.detect_loops = flag(k, v)?,
            "pipeline.n_scans" => self.pipeline.n_scans = Some(num(k, v)?),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Defaults overridden by the lines of `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_and_propagate() {
        let cfg = Config::parse(
            "# tuned\ngroundseg.dist_threshold = 0.2\nregistration.edge_set = knn:8  # sparse\n\
             pgo.robustify = intra\ndynamics.voi_z_max = 3.5\ngroundseg.sensor_height = none\n",
        )
        .unwrap();
        assert_eq!(cfg.czm.dist_threshold, 0.2);
        assert_eq!(cfg.registration().czm.dist_threshold, 0.2);
        assert_eq!(cfg.dynamics().czm.dist_threshold, 0.2);
        assert_eq!(cfg.loops().registration.edge_set, Some(EdgeSet::KNearest(8)));
        assert_eq!(cfg.pgo.robustify, vec![EdgeKind::IntraLoop]);
        assert_eq!(cfg.dynamics.voi_z.1, 3.5);
        assert_eq!(cfg.czm.sensor_height, None);
    }

    #[test]
    fn empty_text_is_the_default() {
        assert_eq!(Config::parse("\n# nothing\n").unwrap(), Config::default());
    }

    #[test]
    fn bad_lines_are_errors() {
        let e = Config::parse("groundseg.dist_treshold = 0.1\n").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("dist_treshold"), "{e}");
        assert!(Config::parse("groundseg.cascade = maybe\n").is_err());
        assert!(Config::parse("just words\n").is_err());
        assert!(Config::parse("dynamics.ratio_threshold = 1.5\n").is_err());
    }
}
