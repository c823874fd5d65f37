//! Graduated non-convexity with a truncated-least-squares cost.
//!
//! Each outer iteration alternates a closed-form weighted rotation solve with
//! the closed-form TLS weight update, then raises `μ` so the surrogate moves
//! from (nearly) convex towards the truncated quadratic.

use nalgebra::Matrix3;

use super::tims::TimSet;
use crate::error::{Error, Result};
use crate::geom::yaw_matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationMode {
    FullSO3,
    /// Yaw only; valid for gravity-aligned scans.
    QuasiSO3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GncParams {
    /// Inlier noise bound ε̄ on the residual norm, meters.
    pub noise_bound: f64,
    pub mu_update_factor: f64,
    pub max_iterations: usize,
    /// Relative change of the weighted cost that ends the schedule.
    pub cost_tolerance: f64,
    pub rotation_mode: RotationMode,
}

impl Default for GncParams {
    fn default() -> Self {
        Self {
            noise_bound: 0.1,
            mu_update_factor: 1.4,
            max_iterations: 100,
            cost_tolerance: 1e-6,
            rotation_mode: RotationMode::QuasiSO3,
        }
    }
}

impl GncParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_bound > 0.0) || !(self.mu_update_factor > 1.0) {
            return Err(Error::Config("gnc: noise_bound must be > 0 and mu_update_factor > 1".into()));
        }
        Ok(())
    }
}

/// Lower clamp on the initial `μ`.
pub const MU_MIN: f64 = 1e-4;

/// Closed-form GNC-TLS weights.
///
/// `wᵢ = 1` when `r²ᵢ ≤ μ/(μ+1)·ε̄²`, `0` when `r²ᵢ ≥ (μ+1)/μ·ε̄²`, and
/// `ε̄·√(μ(μ+1))/rᵢ − μ` in between.
pub fn gnc_weight_update(residual_sq: &[f64], noise_bound: f64, mu: f64) -> Vec<f64> {
    let bound_sq = noise_bound * noise_bound;
    let lower = mu / (mu + 1.0) * bound_sq;
    let upper = (mu + 1.0) / mu * bound_sq;
    let slope = noise_bound * (mu * (mu + 1.0)).sqrt();
    residual_sq
        .iter()
        .map(|&r2| {
            if r2 <= lower {
                1.0
            } else if r2 >= upper {
                0.0
            } else {
                slope / r2.sqrt() - mu
            }
        })
        .collect()
}

/// Black–Rangarajan outlier process of the TLS surrogate.
fn outlier_penalty(w: f64, noise_bound: f64, mu: f64) -> f64 {
    mu * (1.0 - w) / (mu + w) * noise_bound * noise_bound
}

/// `Σ wᵢ r²ᵢ + Φ_μ(wᵢ)`: the joint objective that the alternation minimises.
pub fn surrogate_cost(residual_sq: &[f64], weights: &[f64], noise_bound: f64, mu: f64) -> f64 {
    residual_sq
        .iter()
        .zip(weights)
        .map(|(&r2, &w)| w * r2 + outlier_penalty(w, noise_bound, mu))
        .sum()
}

/// One outer iteration: the surrogate before the rotation solve, after it,
/// and after the weight update, all at the same `μ`.
#[derive(Debug, Clone, Copy)]
pub struct GncStep {
    pub mu: f64,
    pub before: f64,
    pub after_rotation: f64,
    pub after_weights: f64,
}

#[derive(Debug, Clone)]
pub struct RotationEstimate {
    pub rotation: Matrix3<f64>,
    pub weights: Vec<f64>,
    /// False when the schedule hit `max_iterations`, or when fewer than
    /// `min(3, n)` measurements survived with weight above one half.
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<GncStep>,
}

impl RotationEstimate {
    pub fn inliers(&self) -> Vec<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.5)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Weighted rotation aligning `aᵢ` onto `bᵢ`.
pub fn weighted_rotation(tims: &TimSet, weights: &[f64], mode: RotationMode) -> Matrix3<f64> {
    match mode {
        RotationMode::FullSO3 => {
            let mut h = Matrix3::zeros();
            for (m, &w) in tims.measurements.iter().zip(weights) {
                if w > 0.0 {
                    h += w * m.b * m.a.transpose();
                }
            }
            procrustes(&h)
        }
        RotationMode::QuasiSO3 => {
            let (mut s, mut c) = (0.0, 0.0);
            for (m, &w) in tims.measurements.iter().zip(weights) {
                s += w * (m.a.x * m.b.y - m.a.y * m.b.x);
                c += w * (m.a.x * m.b.x + m.a.y * m.b.y);
            }
            yaw_matrix(s.atan2(c))
        }
    }
}

/// Rotation maximising `tr(Rᵀ H)` for `H = Σ b aᵀ`.
pub fn procrustes(h: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = h.svd(true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
        return Matrix3::identity();
    };
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

fn residuals_sq(tims: &TimSet, rotation: &Matrix3<f64>) -> Vec<f64> {
    tims.measurements
        .iter()
        .map(|m| (m.b - rotation * m.a).norm_squared())
        .collect()
}

/// GNC-TLS rotation search over translation-invariant measurements.
pub fn gnc_rotation(tims: &TimSet, params: &GncParams) -> Result<RotationEstimate> {
    params.validate()?;
    let n = tims.len();
    if n == 0 {
        return Err(Error::TooFewCorrespondences(0));
    }
    let bound = params.noise_bound;
    let bound_sq = bound * bound;
    let quorum = n.min(3);

    let mut weights = vec![1.0; n];
    let mut rotation = weighted_rotation(tims, &weights, params.rotation_mode);
    let mut r2 = residuals_sq(tims, &rotation);
    let r2_max = r2.iter().copied().fold(0.0, f64::max);
    if r2_max <= bound_sq {
        return Ok(RotationEstimate {
            rotation,
            weights,
            converged: true,
            iterations: 0,
            trace: Vec::new(),
        });
    }

    let mut mu = (bound_sq / (2.0 * r2_max - bound_sq)).max(MU_MIN);
    let mut prev_cost = f64::INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..params.max_iterations {
        iterations += 1;
        let before = surrogate_cost(&r2, &weights, bound, mu);
        let next_rotation = weighted_rotation(tims, &weights, params.rotation_mode);
        let next_r2 = residuals_sq(tims, &next_rotation);
        let after_rotation = surrogate_cost(&next_r2, &weights, bound, mu);
        r2 = next_r2;

        weights = gnc_weight_update(&r2, bound, mu);
        let after_weights = surrogate_cost(&r2, &weights, bound, mu);
        trace.push(GncStep {
            mu,
            before,
            after_rotation,
            after_weights,
        });
        if weights.iter().sum::<f64>() == 0.0 {
            return Err(Error::AllMeasurementsRejected);
        }

        let cost: f64 = r2.iter().zip(&weights).map(|(r, w)| r * w).sum();
        if prev_cost.is_finite()
            && (cost - prev_cost).abs() <= params.cost_tolerance * prev_cost.abs().max(f64::MIN_POSITIVE)
        {
            converged = true;
            break;
        }
        prev_cost = cost;
        mu *= params.mu_update_factor;
    }
    // Final solve with the converged weights.
    rotation = weighted_rotation(tims, &weights, params.rotation_mode);
    let support = weights.iter().filter(|&&w| w > 0.5).count();
    Ok(RotationEstimate {
        rotation,
        weights,
        converged: converged && support >= quorum,
        iterations,
        trace,
    })
}

/// Rotation residual `‖b − R·a‖` of every measurement.
pub fn rotation_residuals(tims: &TimSet, rotation: &Matrix3<f64>) -> Vec<f64> {
    residuals_sq(tims, rotation).into_iter().map(f64::sqrt).collect()
}
