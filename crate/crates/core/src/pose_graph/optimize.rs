//! Weighted Gauss–Newton on SE(3) with a GNC-TLS outer loop over loop edges.

use nalgebra::{Matrix6, Vector6};

use super::linear::BlockSystem;
use super::{edge_residual, EdgeKind, NodeId, PoseEdge, PoseGraph};
use crate::error::{Error, Result};
use crate::geom::RigidPose;
use crate::registration::gnc_weight_update;

/// 0.95 quantile of the χ² distribution with 6 degrees of freedom.
pub const CHI2_6DOF_95: f64 = 12.591_587_243_743_977;

#[derive(Debug, Clone, PartialEq)]
pub struct PgoParams {
    pub max_gn_iterations: usize,
    /// Stop Gauss–Newton once the largest update component is below this.
    pub step_tolerance: f64,
    /// TLS bound on `√(rᵀΩr)`.
    pub gnc_noise_bound: f64,
    pub mu_update_factor: f64,
    pub max_gnc_iterations: usize,
    pub gnc_cost_tolerance: f64,
    /// Edge kinds that receive GNC weights; the rest keep weight 1.
    pub robustify: Vec<EdgeKind>,
    /// Diagonal is multiplied by 10 per retry after a cost increase.
    pub damping_retries: usize,
    pub dense_max_nodes: usize,
}

impl Default for PgoParams {
    fn default() -> Self {
        Self {
            max_gn_iterations: 30,
            step_tolerance: 1e-9,
            gnc_noise_bound: CHI2_6DOF_95.sqrt(),
            mu_update_factor: 1.4,
            max_gnc_iterations: 100,
            gnc_cost_tolerance: 1e-6,
            robustify: vec![EdgeKind::IntraLoop, EdgeKind::InterLoop],
            damping_retries: 5,
            dense_max_nodes: 1000,
        }
    }
}

impl PgoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gnc_noise_bound > 0.0 && self.mu_update_factor > 1.0 && self.step_tolerance > 0.0) {
            return Err(Error::Config("pgo: noise bound, step tolerance must be > 0; mu factor > 1".into()));
        }
        Ok(())
    }

    pub fn robust_mask(&self, graph: &PoseGraph) -> Vec<bool> {
        graph.edges.iter().map(|e| self.robustify.contains(&e.kind)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GnOutcome {
    /// In graph node order.
    pub poses: Vec<RigidPose>,
    /// Weighted cost before the first and after every accepted step.
    pub cost_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct PgoResult {
    pub poses: Vec<(NodeId, RigidPose)>,
    /// Final weight of every edge, in graph edge order.
    pub weights: Vec<f64>,
    pub converged: bool,
    pub gnc_iterations: usize,
    /// One Gauss–Newton cost trace per solve, each at a fixed weight set.
    pub gn_traces: Vec<Vec<f64>>,
    pub final_cost: f64,
}

impl PgoResult {
    pub fn pose(&self, id: NodeId) -> Option<&RigidPose> {
        self.poses.iter().find(|(n, _)| *n == id).map(|(_, p)| p)
    }
}

/// Fails on graphs the solver cannot handle.
pub fn check_solvable(graph: &PoseGraph) -> Result<()> {
    if graph.anchors().is_empty() {
        return Err(Error::NoAnchor);
    }
    let c = graph.component_count();
    if c > 1 {
        return Err(Error::DisconnectedGraph(c));
    }
    Ok(())
}

/// `rᵀΩr` of every edge.
pub fn mahalanobis_sq(graph: &PoseGraph, poses: &[RigidPose]) -> Vec<f64> {
    graph
        .edges
        .iter()
        .map(|e| {
            let r = residual_at(graph, e, poses);
            (r.transpose() * e.information * r)[(0, 0)]
        })
        .collect()
}

fn residual_at(graph: &PoseGraph, e: &PoseEdge, poses: &[RigidPose]) -> Vector6<f64> {
    let i = graph.position(e.from).expect("validated edge");
    let j = graph.position(e.to).expect("validated edge");
    edge_residual(e, &poses[i], &poses[j])
}

fn weighted_cost(graph: &PoseGraph, poses: &[RigidPose], weights: &[f64]) -> f64 {
    mahalanobis_sq(graph, poses).iter().zip(weights).map(|(c, w)| c * w).sum()
}

const JACOBIAN_STEP: f64 = 1e-6;

fn unit(d: usize, h: f64) -> Vector6<f64> {
    let mut v = Vector6::zeros();
    v[d] = h;
    v
}

/// Central-difference Jacobians of the residual w.r.t. right perturbations
/// `T·exp(δ)` of both endpoints.
fn edge_jacobians(e: &PoseEdge, ti: &RigidPose, tj: &RigidPose) -> (Matrix6<f64>, Matrix6<f64>) {
    let mut ji = Matrix6::zeros();
    let mut jj = Matrix6::zeros();
    for d in 0..6 {
        let plus = RigidPose::exp(&unit(d, JACOBIAN_STEP));
        let minus = RigidPose::exp(&unit(d, -JACOBIAN_STEP));
        let ci = (edge_residual(e, &ti.compose(&plus), tj) - edge_residual(e, &ti.compose(&minus), tj)) / (2.0 * JACOBIAN_STEP);
        let cj = (edge_residual(e, ti, &tj.compose(&plus)) - edge_residual(e, ti, &tj.compose(&minus))) / (2.0 * JACOBIAN_STEP);
        ji.set_column(d, &ci);
        jj.set_column(d, &cj);
    }
    (ji, jj)
}

/// Minimises `Σ wₑ·rₑᵀΩₑrₑ` from `initial` with anchored nodes held fixed.
///
/// Every accepted step lowers the cost; on an increase the diagonal of the
/// normal matrix is scaled by 10 and the step retried.
pub fn gauss_newton(graph: &PoseGraph, initial: &[RigidPose], weights: &[f64], params: &PgoParams) -> Result<GnOutcome> {
    check_solvable(graph)?;
    let n = graph.len();
    let mut var = vec![None; n];
    let mut n_free = 0;
    for (k, (id, _)) in graph.nodes().iter().enumerate() {
        if !graph.is_anchor(*id) {
            var[k] = Some(n_free);
            n_free += 1;
        }
    }
    let mut poses = initial.to_vec();
    let mut cost = weighted_cost(graph, &poses, weights);
    let mut trace = vec![cost];
    let mut converged = n_free == 0;
    let mut iterations = 0;

    while !converged && iterations < params.max_gn_iterations {
        iterations += 1;
        let mut sys = BlockSystem::new(n_free);
        for (e, &w) in graph.edges.iter().zip(weights) {
            if w <= 0.0 {
                continue;
            }
            let i = graph.position(e.from).expect("validated edge");
            let j = graph.position(e.to).expect("validated edge");
            let r = edge_residual(e, &poses[i], &poses[j]);
            let (ji, jj) = edge_jacobians(e, &poses[i], &poses[j]);
            let om = e.information * w;
            let blocks = [(var[i], ji), (var[j], jj)];
            for (va, ja) in &blocks {
                let Some(a) = *va else { continue };
                sys.add_rhs(a, &(-(ja.transpose() * om * r)));
                for (vb, jb) in &blocks {
                    let Some(b) = *vb else { continue };
                    if a <= b {
                        sys.add(a, b, &(ja.transpose() * om * jb));
                    }
                }
            }
        }

        let mut accepted = None;
        for k in 0..=params.damping_retries {
            let Some(dx) = sys.solve(10f64.powi(k as i32), params.dense_max_nodes) else {
                continue;
            };
            let candidate: Vec<RigidPose> = poses
                .iter()
                .zip(&var)
                .map(|(p, v)| match v {
                    Some(a) => p.compose(&RigidPose::exp(&dx.fixed_rows::<6>(6 * a).into_owned())),
                    None => *p,
                })
                .collect();
            let c = weighted_cost(graph, &candidate, weights);
            if c <= cost {
                accepted = Some((candidate, c, dx.amax()));
                break;
            }
        }
        match accepted {
            Some((p, c, step)) => {
                poses = p;
                cost = c;
                trace.push(c);
                converged = step < params.step_tolerance;
            }
            // No damping level lowers the cost: stationary to working precision.
            None => converged = true,
        }
    }
    Ok(GnOutcome {
        poses,
        cost_trace: trace,
        converged,
        iterations,
    })
}

/// Robust pose-graph optimisation with a single μ schedule shared by all
/// robustified edges.
pub fn optimize(graph: &PoseGraph, params: &PgoParams) -> Result<PgoResult> {
    params.validate()?;
    check_solvable(graph)?;
    let robust = params.robust_mask(graph);
    let mut weights = vec![1.0; graph.edges.len()];
    let initial: Vec<RigidPose> = graph.nodes().iter().map(|(_, p)| *p).collect();
    let gn = gauss_newton(graph, &initial, &weights, params)?;
    let mut poses = gn.poses;
    let mut gn_converged = gn.converged;
    let mut traces = vec![gn.cost_trace];

    let finish = |poses: Vec<RigidPose>, weights: Vec<f64>, converged, gnc_iterations, traces| {
        let final_cost = weighted_cost(graph, &poses, &weights);
        PgoResult {
            poses: graph.nodes().iter().map(|(id, _)| *id).zip(poses).collect(),
            weights,
            converged,
            gnc_iterations,
            gn_traces: traces,
            final_cost,
        }
    };

    let bound = params.gnc_noise_bound;
    let robust_r2 = |poses: &[RigidPose]| -> Vec<f64> {
        mahalanobis_sq(graph, poses)
            .into_iter()
            .zip(&robust)
            .filter(|(_, &r)| r)
            .map(|(c, _)| c)
            .collect()
    };
    let mut r2 = robust_r2(&poses);
    let r2_max = r2.iter().copied().fold(0.0, f64::max);
    if r2.is_empty() || r2_max <= bound * bound {
        return Ok(finish(poses, weights, gn_converged, 0, traces));
    }

    let mut mu = (bound * bound / (2.0 * r2_max - bound * bound)).max(crate::registration::gnc::MU_MIN);
    let mut prev = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..params.max_gnc_iterations {
        iterations += 1;
        let w = gnc_weight_update(&r2, bound, mu);
        let mut it = w.iter();
        for (wk, &r) in weights.iter_mut().zip(&robust) {
            if r {
                *wk = *it.next().expect("one weight per robust edge");
            }
        }
        let gn = gauss_newton(graph, &poses, &weights, params)?;
        poses = gn.poses;
        gn_converged = gn.converged;
        traces.push(gn.cost_trace);
        r2 = robust_r2(&poses);
        let cost = weighted_cost(graph, &poses, &weights);
        if prev.is_finite() && (cost - prev).abs() <= params.gnc_cost_tolerance * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        prev = cost;
        mu *= params.mu_update_factor;
    }
    Ok(finish(poses, weights, converged && gn_converged, iterations, traces))
}
