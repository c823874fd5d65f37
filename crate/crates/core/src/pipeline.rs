//! End-to-end driver: synthetic sequence → ground segmentation → noisy
//! odometry → loop detection → robust PGO → static map → metrics.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::Vector6;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::Config;
use crate::error::{Error, Result, StageContext};
use crate::eval::{label_rate, precision_recall, trajectory_rms, MetricsReport};
use crate::geom::{PointCloud, PointLabel, RigidPose};
use crate::ground_seg::{segment_ground, GroundSegmentation};
use crate::pose_graph::{detect_loops, diagonal_information, optimize, EdgeKind, PgoResult, PoseEdge, PoseGraph};
use crate::registration::FpfhMatcher;
use crate::static_map::{build_static_map, StaticMap};
use crate::synth::{inject_reflected_noise, make_sequence, mix_seed, SceneFile, Sequence};

const NOISE_STREAM: u64 = 0x4e4f_4953_4500_0000;
const ODOMETRY_STREAM: u64 = 0x4f44_4f4d_0000_0000;

/// The scene file's sequence, with reflected noise when requested.
pub fn synthesize(scene: &SceneFile, n_scans: Option<usize>, seed: u64) -> Result<Sequence> {
    let spec = scene
        .sequence
        .as_ref()
        .ok_or_else(|| Error::Config("scene file has no [sequence] table".into()))?;
    let n = n_scans.unwrap_or(spec.n_scans);
    let mut seq = make_sequence(&scene.scene, &spec.trajectory, &spec.beams, n, spec.dt, seed);
    if spec.reflected_noise_rate > 0.0 {
        let depth = (spec.reflected_noise_depth[0], spec.reflected_noise_depth[1]);
        for (k, scan) in seq.scans.iter_mut().enumerate() {
            *scan = inject_reflected_noise(scan, spec.reflected_noise_rate, depth, mix_seed(seed ^ NOISE_STREAM, k as u64));
        }
    }
    Ok(seq)
}

/// Integrates ground-truth steps perturbed by Gaussian twists; starts at
/// `truth[0]`.
pub fn noisy_odometry(truth: &[RigidPose], sigma_rot: f64, sigma_trans: f64, seed: u64) -> Vec<RigidPose> {
    let Some(first) = truth.first() else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, ODOMETRY_STREAM));
    let rot = Normal::new(0.0, sigma_rot.max(0.0)).expect("finite sigma");
    let trans = Normal::new(0.0, sigma_trans.max(0.0)).expect("finite sigma");
    let mut out = vec![*first];
    for w in truth.windows(2) {
        let step = w[0].inverse().compose(&w[1]);
        let mut xi = Vector6::zeros();
        for k in 0..3 {
            xi[k] = rot.sample(&mut rng);
        }
        for k in 3..6 {
            xi[k] = trans.sample(&mut rng);
        }
        let next = out.last().expect("nonempty").compose(&step.compose(&RigidPose::exp(&xi)));
        out.push(next);
    }
    out
}

/// Chain graph whose odometry edges agree exactly with `poses`.
pub fn odometry_graph(poses: &[RigidPose], sigma_rot: f64, sigma_trans: f64) -> Result<PoseGraph> {
    let info = diagonal_information(sigma_rot.max(1e-6), sigma_trans.max(1e-6));
    let mut g = PoseGraph::new();
    for (k, p) in poses.iter().enumerate() {
        g.add_node(k, *p)?;
    }
    for k in 1..poses.len() {
        let z = poses[k - 1].inverse().compose(&poses[k]);
        g.add_edge(PoseEdge::new(k - 1, k, z, info, EdgeKind::Odometry)?)?;
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct SlamOutput {
    /// Odometry and loop edges with optimised poses.
    pub graph: PoseGraph,
    pub pgo: PgoResult,
    pub loop_edges: usize,
}

impl SlamOutput {
    pub fn poses(&self) -> Vec<RigidPose> {
        self.graph.nodes().iter().map(|(_, p)| *p).collect()
    }

    /// Loop edges whose final weight is at most 0.5.
    pub fn rejected_loops(&self) -> usize {
        self.graph
            .edges
            .iter()
            .zip(&self.pgo.weights)
            .filter(|(e, w)| e.kind != EdgeKind::Odometry && **w <= 0.5)
            .count()
    }
}

/// Loop detection on an odometry chain followed by robust optimisation.
pub fn run_slam(scans: &[PointCloud], initial: &[RigidPose], cfg: &Config) -> Result<SlamOutput> {
    if scans.len() != initial.len() || scans.is_empty() {
        return Err(Error::EmptyInput("slam needs one pose per scan and at least one scan"));
    }
    let mut graph = odometry_graph(initial, cfg.pipeline.odometry_sigma_rot, cfg.pipeline.odometry_sigma_trans)?;
    let mut loop_edges = 0;
    if cfg.pipeline.detect_loops {
        let by_id: BTreeMap<usize, PointCloud> = scans.iter().cloned().enumerate().collect();
        let matcher = FpfhMatcher { params: cfg.registration.matcher.clone() };
        for e in detect_loops(&graph, &by_id, &cfg.loops(), &matcher) {
            graph.add_edge(e)?;
            loop_edges += 1;
        }
    }
    let pgo = optimize(&graph, &cfg.pgo)?;
    let graph = graph.with_poses(&pgo.poses)?;
    Ok(SlamOutput { graph, pgo, loop_edges })
}

/// Aggregate ground precision/recall over several labelled scans, plus the
/// share of reflected-noise points kept out of the ground.
pub fn ground_metrics(scans: &[PointCloud], segs: &[GroundSegmentation], report: &mut MetricsReport) {
    let (mut predicted, mut truth) = (Vec::new(), Vec::new());
    let (mut noise, mut noise_rejected) = (0usize, 0usize);
    let mut offset = 0;
    for (scan, seg) in scans.iter().zip(segs) {
        let mask = seg.ground_mask(scan.len());
        predicted.extend(seg.ground_indices.iter().map(|i| i + offset));
        for (i, p) in scan.points.iter().enumerate() {
            match p.label {
                PointLabel::Ground => truth.push(i + offset),
                PointLabel::ReflectedNoise => {
                    noise += 1;
                    if !mask[i] {
                        noise_rejected += 1;
                    }
                }
                _ => {}
            }
        }
        offset += scan.len();
    }
    let pr = precision_recall(&predicted, &truth, offset);
    report.set("groundseg.precision", pr.precision);
    report.set("groundseg.recall", pr.recall);
    report.set("groundseg.f1", pr.f1);
    report.set("groundseg.ground_points", predicted.len() as f64);
    if noise > 0 {
        report.set("groundseg.noise_rejection_rate", noise_rejected as f64 / noise as f64);
    }
}

pub fn static_map_metrics(sm: &StaticMap, report: &mut MetricsReport) {
    report.set("staticmap.map_points", sm.report.map_points as f64);
    report.set("staticmap.removed_points", sm.report.removed_points as f64);
    report.set("staticmap.instances", sm.report.instances as f64);
    report.set("staticmap.dynamic_instances", sm.report.dynamic_instances as f64);
    report.set("staticmap.flagged_bins", sm.report.flagged_bins as f64);
    report.set("staticmap.restored_ground", sm.report.restored_ground as f64);
    if let Some(r) = label_rate(&sm.map, &sm.removed, &[PointLabel::DynamicObject], true) {
        report.set("staticmap.dynamic_rejection_rate", r);
    }
    if let Some(r) = label_rate(&sm.map, &sm.removed, &[PointLabel::Ground, PointLabel::StaticObject], false) {
        report.set("staticmap.static_preservation_rate", r);
    }
    let split = (0..sm.instances.instances.len())
        .filter(|&k| {
            let pts = sm.instance_points(k);
            let r = pts.iter().filter(|&&i| sm.removed[i]).count();
            r != 0 && r != pts.len()
        })
        .count();
    report.set("staticmap.split_instances", split as f64);
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: MetricsReport,
    pub sequence: Sequence,
    pub odometry: Vec<RigidPose>,
    pub slam: SlamOutput,
    pub static_map: StaticMap,
}

/// Runs every stage. Wall-clock timings are added to the report only when
/// `with_timing` is set, so that reports stay comparable across runs.
pub fn run_pipeline(scene: &SceneFile, cfg: &Config, seed: u64, with_timing: bool) -> Result<PipelineOutput> {
    cfg.validate().stage("config")?;
    let mut report = MetricsReport::new("pipeline");
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, f64)>| {
        timings.push((name, clock.elapsed().as_secs_f64() * 1e3));
        clock = Instant::now();
    };

    let sequence = synthesize(scene, cfg.pipeline.n_scans, seed).stage("synth")?;
    report.set("synth.scans", sequence.scans.len() as f64);
    report.set("synth.points", sequence.scans.iter().map(|s| s.len()).sum::<usize>() as f64);
    lap("synth", &mut timings);

    let segs = sequence
        .scans
        .iter()
        .map(|s| segment_ground(s, &cfg.czm))
        .collect::<Result<Vec<_>>>()
        .stage("ground-seg")?;
    ground_metrics(&sequence.scans, &segs, &mut report);
    lap("groundseg", &mut timings);

    let odometry = noisy_odometry(
        &sequence.poses,
        cfg.pipeline.odometry_sigma_rot,
        cfg.pipeline.odometry_sigma_trans,
        seed,
    );
    report.set("odometry.rms_m", trajectory_rms(&odometry, &sequence.poses));

    let slam = run_slam(&sequence.scans, &odometry, cfg).stage("slam")?;
    report.set("loops.accepted", slam.loop_edges as f64);
    report.set("loops.rejected", slam.rejected_loops() as f64);
    report.set("pgo.rms_m", trajectory_rms(&slam.poses(), &sequence.poses));
    report.set("pgo.converged", if slam.pgo.converged { 1.0 } else { 0.0 });
    report.set("pgo.gnc_iterations", slam.pgo.gnc_iterations as f64);
    report.set("pgo.final_cost", slam.pgo.final_cost);
    lap("slam", &mut timings);

    let static_map = build_static_map(&sequence.scans, &slam.poses(), &cfg.dynamics()).stage("static-map")?;
    static_map_metrics(&static_map, &mut report);
    lap("staticmap", &mut timings);

    if with_timing {
        for (name, ms) in timings {
            report.set(&format!("time_ms.{name}"), ms);
        }
    }
    Ok(PipelineOutput {
        report,
        sequence,
        odometry,
        slam,
        static_map,
    })
}
