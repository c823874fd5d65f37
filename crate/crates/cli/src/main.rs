//! `groundmap` command-line front end.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand};

use groundmap::config::Config;
use groundmap::eval::{label_rate, rotation_error_deg, trajectory_rms, translation_error, MetricsReport};
use groundmap::geom::{PointCloud, PointLabel};
use groundmap::ground_seg::segment_ground;
use groundmap::io;
use groundmap::multi_session::{align_sessions, merge_sessions, Session};
use groundmap::pipeline::{ground_metrics, noisy_odometry, run_pipeline, run_slam, static_map_metrics, synthesize};
use groundmap::registration::{register, FpfhMatcher, RegistrationOptions};
use groundmap::static_map::build_static_map;
use groundmap::synth::SceneFile;
use groundmap::Error;

#[derive(Parser, Debug)]
#[command(name = "groundmap", version, about = "Outlier-robust LiDAR mapping toolkit")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Also write the metrics report to this file.
    #[arg(long, global = true, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Add wall-clock stage timings (`time_ms.*`) to the report.
    #[arg(long, global = true)]
    with_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment the ground of one KITTI scan.
    GroundSeg(GroundSegArgs),
    /// Register a source scan into the frame of a target scan.
    Register(RegisterArgs),
    /// Loop detection and robust pose-graph optimisation over a sequence.
    Slam(SlamArgs),
    /// Align and jointly optimise two sessions.
    Merge(MergeArgs),
    /// Build a static map and separate dynamic points.
    EraseDynamic(EraseArgs),
    /// Render a scene file into a labelled KITTI-format sequence.
    Synth(SynthArgs),
    /// Score trajectories and static-map verdicts against ground truth.
    Eval(EvalArgs),
    /// Synthesise a sequence and run every stage on it.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct GroundSegArgs {
    #[arg(long)]
    scan: PathBuf,
    /// PLY output with verdict 1 for ground points.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RegisterArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Pose file whose first line is the true source-to-target pose.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Pose file receiving the estimate.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Match on the full clouds instead of their nonground parts.
    #[arg(long)]
    no_prune: bool,
}

#[derive(Args, Debug)]
struct SlamArgs {
    /// Directory of `NNNNNN.bin` scans.
    #[arg(long)]
    scans: PathBuf,
    /// Initial poses, one line per scan.
    #[arg(long)]
    poses: PathBuf,
    /// Session directory: `graph.g2o`, `poses.txt` and `scans/`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MergeArgs {
    #[arg(long)]
    session_a: PathBuf,
    #[arg(long)]
    session_b: PathBuf,
    /// Joint session directory; also receives `transform.txt`.
    #[arg(long)]
    out: PathBuf,
    /// Use this B-to-A pose instead of estimating it.
    #[arg(long)]
    transform: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EraseArgs {
    #[arg(long)]
    scans: PathBuf,
    #[arg(long)]
    poses: PathBuf,
    #[arg(long)]
    out_static: PathBuf,
    #[arg(long)]
    out_dynamic: PathBuf,
    /// Whole map with verdict 1 on removed points.
    #[arg(long)]
    out_map: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Receives `scans/`, `poses.txt` (truth) and `odometry.txt`.
    #[arg(long)]
    out: PathBuf,
    /// Override the scene file's scan count.
    #[arg(long)]
    scans: Option<usize>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("input").required(true).multiple(true).args(["poses", "map"])))]
struct EvalArgs {
    #[arg(long, requires = "truth")]
    poses: Option<PathBuf>,
    #[arg(long, requires = "poses")]
    truth: Option<PathBuf>,
    /// PLY written by `erase-dynamic --out-map`.
    #[arg(long)]
    map: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    scans: Option<usize>,
}

/// A failed stage and its cause.
#[derive(Debug)]
struct Failure {
    stage: &'static str,
    cause: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.cause)
    }
}

fn fail(stage: &'static str) -> impl Fn(Error) -> Failure {
    move |e| match e {
        Error::Stage { stage, source } => Failure { stage, cause: source.to_string() },
        e => Failure { stage, cause: e.to_string() },
    }
}

/// Loads a file-backed input, naming the path on failure.
fn input<T>(path: &Path, read: impl FnOnce(&Path) -> groundmap::Result<T>) -> Result<T, Failure> {
    read(path).map_err(|e| Failure {
        stage: "input",
        cause: match e {
            Error::Io(io) => format!("{}: {io}", path.display()),
            e => e.to_string(),
        },
    })
}

fn output(path: &Path, res: groundmap::Result<()>) -> Result<(), Failure> {
    res.map_err(|e| Failure {
        stage: "output",
        cause: format!("{}: {e}", path.display()),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    output(path, fs::write(path, text).map_err(Error::from))
}

fn load_scene(path: &Path) -> Result<SceneFile, Failure> {
    input(path, |p| SceneFile::parse(&fs::read_to_string(p)?))
}

struct Timer {
    enabled: bool,
    start: Instant,
    laps: BTreeMap<&'static str, f64>,
}

impl Timer {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            start: Instant::now(),
            laps: BTreeMap::new(),
        }
    }

    fn lap(&mut self, name: &'static str) {
        self.laps.insert(name, self.start.elapsed().as_secs_f64() * 1e3);
        self.start = Instant::now();
    }

    fn finish(self, report: &mut MetricsReport) {
        if self.enabled {
            for (k, v) in self.laps {
                report.set(&format!("time_ms.{k}"), v);
            }
        }
    }
}

fn has_labels(cloud: &PointCloud) -> bool {
    cloud.points.iter().any(|p| p.label != PointLabel::Unlabeled)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn ground_seg(args: &GroundSegArgs, cfg: &Config, timer: &mut Timer) -> Result<MetricsReport, Failure> {
    let scan = input(&args.scan, io::read_labeled_scan)?;
    timer.lap("read");
    let seg = segment_ground(&scan, &cfg.czm).map_err(fail("ground-seg"))?;
    timer.lap("groundseg");
    let mut r = MetricsReport::new("ground-seg");
    r.set("points", scan.len() as f64);
    r.set("ground_points", seg.ground_indices.len() as f64);
    r.set("nonground_points", seg.nonground_indices.len() as f64);
    r.set("out_of_range_points", seg.out_of_range.len() as f64);
    if has_labels(&scan) {
        let mut scored = MetricsReport::default();
        ground_metrics(std::slice::from_ref(&scan), std::slice::from_ref(&seg), &mut scored);
        for (k, v) in scored.metrics {
            r.set(k.trim_start_matches("groundseg."), v);
        }
    }
    if let Some(out) = &args.out {
        let verdict: Vec<u8> = seg.ground_mask(scan.len()).into_iter().map(u8::from).collect();
        output(out, io::write_ply(out, &scan, Some(&verdict)))?;
    }
    Ok(r)
}

fn registration(args: &RegisterArgs, cfg: &Config, timer: &mut Timer) -> Result<MetricsReport, Failure> {
    let source = input(&args.source, io::read_labeled_scan)?;
    let target = input(&args.target, io::read_labeled_scan)?;
    let truth = match &args.truth {
        Some(p) => {
            let poses = input(p, io::read_pose_file)?;
            Some(*poses.first().ok_or_else(|| Failure {
                stage: "input",
                cause: format!("{}: no pose", p.display()),
            })?)
        }
        None => None,
    };
    timer.lap("read");
    let opts = RegistrationOptions {
        prune_ground: !args.no_prune && cfg.registration.prune_ground,
        ..cfg.registration()
    };
    let matcher = FpfhMatcher { params: opts.matcher.clone() };
    let res = register(&source, &target, &opts, &matcher).map_err(fail("register"))?;
    timer.lap("register");
    let mut r = MetricsReport::new("register");
    r.set("correspondences", res.correspondences.len() as f64);
    r.set("inliers", res.inlier_indices.len() as f64);
    r.set("converged", flag(res.converged));
    r.set("gnc_iterations", res.iterations as f64);
    let t = res.pose.translation();
    r.set("estimate.x_m", t.x);
    r.set("estimate.y_m", t.y);
    r.set("estimate.z_m", t.z);
    r.set("estimate.yaw_deg", res.pose.yaw().to_degrees());
    if let Some(truth) = truth {
        r.set("rotation_error_deg", rotation_error_deg(&res.pose, &truth));
        r.set("translation_error_m", translation_error(&res.pose, &truth));
    }
    if let Some(out) = &args.out {
        output(out, io::write_pose_file(out, &[res.pose]))?;
    }
    Ok(r)
}

fn slam(args: &SlamArgs, cfg: &Config, timer: &mut Timer) -> Result<MetricsReport, Failure> {
    let scans = input(&args.scans, io::read_scans_dir)?;
    let initial = input(&args.poses, io::read_pose_file)?;
    if scans.len() != initial.len() {
        return Err(Failure {
            stage: "input",
            cause: format!("{} scans but {} poses", scans.len(), initial.len()),
        });
    }
    timer.lap("read");
    let out = run_slam(&scans, &initial, cfg).map_err(fail("slam"))?;
    timer.lap("slam");
    let mut r = MetricsReport::new("slam");
    r.set("loops.accepted", out.loop_edges as f64);
    r.set("loops.rejected", out.rejected_loops() as f64);
    r.set("pgo.converged", flag(out.pgo.converged));
    r.set("pgo.gnc_iterations", out.pgo.gnc_iterations as f64);
    r.set("pgo.final_cost", out.pgo.final_cost);
    if let Some(p) = &args.truth {
        let truth = input(p, io::read_pose_file)?;
        if truth.len() == initial.len() {
            r.set("initial.rms_m", trajectory_rms(&initial, &truth));
            r.set("pgo.rms_m", trajectory_rms(&out.poses(), &truth));
        }
    }
    let session = Session::new(out.graph.clone(), scans.into_iter().enumerate().collect()).map_err(fail("slam"))?;
    output(&args.out, io::write_session(&args.out, &session))?;
    let poses = args.out.join("poses.txt");
    output(&poses, io::write_pose_file(&poses, &out.poses()))?;
    Ok(r)
}

fn merge(args: &MergeArgs, cfg: &Config, timer: &mut Timer) -> Result<MetricsReport, Failure> {
    let a = input(&args.session_a, io::read_session)?;
    let b = input(&args.session_b, io::read_session)?;
    timer.lap("read");
    let matcher = FpfhMatcher { params: cfg.registration.matcher.clone() };
    let transform = match &args.transform {
        Some(p) => *input(p, io::read_pose_file)?.first().ok_or_else(|| Failure {
            stage: "input",
            cause: format!("{}: no pose", p.display()),
        })?,
        None => align_sessions(&a, &b, &cfg.align(), &matcher).map_err(fail("align"))?,
    };
    timer.lap("align");
    let res = merge_sessions(&a, &b, &transform, &cfg.merge(), &matcher).map_err(fail("merge"))?;
    timer.lap("merge");

    let mut scans = a.scans.clone();
    scans.extend(b.scans.iter().map(|(id, s)| (id + res.report.id_offset, s.clone())));
    let joint = Session::new(res.joint_graph.clone(), scans).map_err(fail("merge"))?;
    output(&args.out, io::write_session(&args.out, &joint))?;
    let tf = args.out.join("transform.txt");
    output(&tf, io::write_pose_file(&tf, &[res.session_transform]))?;

    let mut r = MetricsReport::new("merge");
    r.set("id_offset", res.report.id_offset as f64);
    r.set("inter_edges", res.report.inter_edges as f64);
    r.set("rejected_edges", res.report.rejected as f64);
    r.set("bridged", flag(res.report.bridged));
    r.set("converged", flag(res.report.converged));
    r.set("final_cost", res.report.final_cost);
    r.set("transform.yaw_deg", transform.yaw().to_degrees());
    let t = transform.translation();
    r.set("transform.x_m", t.x);
    r.set("transform.y_m", t.y);
    r.set("transform.z_m", t.z);
    Ok(r)
}

fn erase_dynamic(args: &EraseArgs, cfg: &Config, timer: &mut Timer) -> Result<MetricsReport, Failure> {
    let scans = input(&args.scans, io::read_scans_dir)?;
    let poses = input(&args.poses, io::read_pose_file)?;
    timer.lap("read");
    let sm = build_static_map(&scans, &poses, &cfg.dynamics()).map_err(fail("static-map"))?;
    timer.lap("staticmap");
    let mut report = MetricsReport::default();
    static_map_metrics(&sm, &mut report);
    let mut r = MetricsReport::new("erase-dynamic");
    for (k, v) in report.metrics {
        r.set(k.trim_start_matches("staticmap."), v);
    }
    let st = sm.static_cloud();
    output(&args.out_static, io::write_ply(&args.out_static, &st, Some(&vec![0; st.len()])))?;
    let dy = sm.removed_cloud();
    output(&args.out_dynamic, io::write_ply(&args.out_dynamic, &dy, Some(&vec![1; dy.len()])))?;
    if let Some(p) = &args.out_map {
        let verdict: Vec<u8> = sm.removed.iter().map(|&b| u8::from(b)).collect();
        output(p, io::write_ply(p, &sm.map, Some(&verdict)))?;
    }
    Ok(r)
}

fn synth(args: &SynthArgs, cfg: &Config, seed: u64, timer: &mut Timer) -> Result<MetricsReport, Failure> {
    let scene = load_scene(&args.scene)?;
    let seq = synthesize(&scene, args.scans.or(cfg.pipeline.n_scans), seed).map_err(fail("synth"))?;
    timer.lap("synth");
    let odometry = noisy_odometry(&seq.poses, cfg.pipeline.odometry_sigma_rot, cfg.pipeline.odometry_sigma_trans, seed);
    output(&args.out, io::write_sequence_dir(&args.out, &seq.scans, &seq.poses))?;
    let odo = args.out.join("odometry.txt");
    output(&odo, io::write_pose_file(&odo, &odometry))?;
    let mut r = MetricsReport::new("synth");
    r.set("scans", seq.scans.len() as f64);
    r.set("points", seq.scans.iter().map(|s| s.len()).sum::<usize>() as f64);
    r.set("odometry.rms_m", trajectory_rms(&odometry, &seq.poses));
    Ok(r)
}

fn eval(args: &EvalArgs) -> Result<MetricsReport, Failure> {
    let mut r = MetricsReport::new("eval");
    if let (Some(pe), Some(pt)) = (&args.poses, &args.truth) {
        let est = input(pe, io::read_pose_file)?;
        let truth = input(pt, io::read_pose_file)?;
        if est.len() != truth.len() || est.is_empty() {
            return Err(Failure {
                stage: "eval",
                cause: format!("{} estimated poses but {} true poses", est.len(), truth.len()),
            });
        }
        let n = est.len() as f64;
        r.set("trajectory.rms_m", trajectory_rms(&est, &truth));
        let max_t = est.iter().zip(&truth).map(|(a, b)| translation_error(a, b)).fold(0.0, f64::max);
        r.set("trajectory.max_translation_error_m", max_t);
        let rot: f64 = est.iter().zip(&truth).map(|(a, b)| rotation_error_deg(a, b)).sum();
        r.set("trajectory.mean_rotation_error_deg", rot / n);
    }
    if let Some(p) = &args.map {
        let (cloud, verdict) = input(p, io::read_ply)?;
        let removed: Vec<bool> = verdict.iter().map(|&v| v != 0).collect();
        r.set("staticmap.points", cloud.len() as f64);
        r.set("staticmap.removed_points", removed.iter().filter(|&&b| b).count() as f64);
        if let Some(v) = label_rate(&cloud, &removed, &[PointLabel::DynamicObject], true) {
            r.set("staticmap.dynamic_rejection_rate", v);
        }
        if let Some(v) = label_rate(&cloud, &removed, &[PointLabel::Ground, PointLabel::StaticObject], false) {
            r.set("staticmap.static_preservation_rate", v);
        }
    }
    Ok(r)
}

fn pipeline(args: &PipelineArgs, cfg: &Config, seed: u64, with_timing: bool) -> Result<MetricsReport, Failure> {
    let scene = load_scene(&args.scene)?;
    let mut cfg = cfg.clone();
    if args.scans.is_some() {
        cfg.pipeline.n_scans = args.scans;
    }
    let out = run_pipeline(&scene, &cfg, seed, with_timing).map_err(fail("pipeline"))?;
    Ok(out.report)
}

fn run(cli: &Cli) -> Result<MetricsReport, Failure> {
    let cfg = match &cli.config {
        Some(p) => input(p, Config::load).map_err(|f| Failure { stage: "config", ..f })?,
        None => Config::default(),
    };
    cfg.validate().map_err(fail("config"))?;
    let mut timer = Timer::new(cli.with_timing);
    let mut report = match &cli.command {
        Command::GroundSeg(a) => ground_seg(a, &cfg, &mut timer)?,
        Command::Register(a) => registration(a, &cfg, &mut timer)?,
        Command::Slam(a) => slam(a, &cfg, &mut timer)?,
        Command::Merge(a) => merge(a, &cfg, &mut timer)?,
        Command::EraseDynamic(a) => erase_dynamic(a, &cfg, &mut timer)?,
        Command::Synth(a) => synth(a, &cfg, cli.seed, &mut timer)?,
        Command::Eval(a) => eval(a)?,
        Command::Pipeline(a) => return pipeline(a, &cfg, cli.seed, cli.with_timing),
    };
    timer.finish(&mut report);
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(report) => {
            let text = report.to_text();
            print!("{text}");
            if let Some(p) = &cli.report {
                if let Err(f) = write_text(p, &text) {
                    eprintln!("error: {f}");
                    return ExitCode::from(2);
                }
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(2)
        }
    }
}
