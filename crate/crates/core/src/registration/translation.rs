use nalgebra::{Matrix3, Vector3};

use super::CorrespondenceSet;
use crate::error::{Error, Result};

pub const DEFAULT_QUORUM: usize = 3;

/// Best window of fixed width over a set of scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalVote {
    pub count: usize,
    /// Smallest and largest value inside the winning window.
    pub min: f64,
    pub max: f64,
}

impl IntervalVote {
    pub fn center(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

/// Interval `[v, v + width]` containing the most values; ties go to the
/// lowest start `v`. `values` need not be sorted.
pub fn interval_consensus(values: &[f64], width: f64) -> Option<IntervalVote> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = IntervalVote {
        count: 0,
        min: sorted[0],
        max: sorted[0],
    };
    let mut hi = 0;
    for lo in 0..sorted.len() {
        if hi < lo {
            hi = lo;
        }
        while hi + 1 < sorted.len() && sorted[hi + 1] <= sorted[lo] + width {
            hi += 1;
        }
        let count = hi - lo + 1;
        if count > best.count {
            best = IntervalVote {
                count,
                min: sorted[lo],
                max: sorted[hi],
            };
        }
    }
    Some(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationEstimate {
    pub translation: Vector3<f64>,
    /// Correspondences within `noise_bound` of the estimate on all axes.
    pub inliers: Vec<usize>,
    pub axis_support: [usize; 3],
}

/// Component-wise consensus voting on `sᵢ = qᵢ − R·pᵢ`.
pub fn estimate_translation(
    corrs: &CorrespondenceSet,
    rotation: &Matrix3<f64>,
    noise_bound: f64,
    quorum: usize,
) -> Result<TranslationEstimate> {
    let residuals: Vec<Vector3<f64>> = corrs.pairs.iter().map(|(p, q)| q - rotation * p).collect();
    let mut translation = Vector3::zeros();
    let mut axis_support = [0; 3];
    for axis in 0..3 {
        let values: Vec<f64> = residuals.iter().map(|s| s[axis]).collect();
        let vote = interval_consensus(&values, 2.0 * noise_bound).unwrap_or(IntervalVote {
            count: 0,
            min: 0.0,
            max: 0.0,
        });
        if vote.count < quorum {
            return Err(Error::EmptyConsensus {
                best: vote.count,
                quorum,
            });
        }
        translation[axis] = vote.center();
        axis_support[axis] = vote.count;
    }
    let inliers = residuals
        .iter()
        .enumerate()
        .filter(|(_, s)| (*s - translation).abs().max() <= noise_bound)
        .map(|(i, _)| i)
        .collect();
    Ok(TranslationEstimate {
        translation,
        inliers,
        axis_support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Exhaustive O(n²) sweep: try every value as a window start.
    fn sweep_oracle(values: &[f64], width: f64) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for &start in values {
            let count = values.iter().filter(|&&v| v >= start && v <= start + width).count();
            if count > best.0 || (count == best.0 && start < best.1) {
                best = (count, start);
            }
        }
        best
    }

    #[test]
    fn exact_translation_without_noise() {
        let t = Vector3::new(1.0, 2.0, 3.0);
        let corrs = CorrespondenceSet {
            pairs: (0..10).map(|i| {
                let p = Vector3::new(i as f64, -(i as f64), 0.5 * i as f64);
                (p, p + t)
            }).collect(),
        };
        let est = estimate_translation(&corrs, &Matrix3::identity(), 0.05, 3).unwrap();
        assert_eq!(est.translation, t);
        assert_eq!(est.inliers.len(), 10);
    }

    #[test]
    fn two_correspondences_below_quorum() {
        let corrs = CorrespondenceSet {
            pairs: vec![(Vector3::zeros(), Vector3::x()), (Vector3::y(), Vector3::x() + Vector3::y())],
        };
        assert!(matches!(
            estimate_translation(&corrs, &Matrix3::identity(), 0.05, 3),
            Err(Error::EmptyConsensus { best: 2, quorum: 3 })
        ));
    }

    #[test]
    fn seventy_percent_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let t = Vector3::new(-4.0, 2.5, 0.7);
        for _ in 0..20 {
            let pairs: Vec<_> = (0..200).map(|i| {
                let p = Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-3.0..3.0));
                let q = if i % 10 < 7 {
                    Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0))
                } else {
                    p + t + Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
                };
                (p, q)
            }).collect();
            let est = estimate_translation(&CorrespondenceSet { pairs }, &Matrix3::identity(), 0.05, 3).unwrap();
            assert!((est.translation - t).abs().max() < 0.05, "{:?}", est.translation);
        }
    }

    #[test]
    fn interval_vote_matches_sweep_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..500 {
            let n = rng.random_range(1..60);
            let values: Vec<f64> = (0..n)
                .map(|_| if trial % 2 == 0 { rng.random_range(-5.0..5.0) } else { (rng.random_range(-20..20) as f64) * 0.05 })
                .collect();
            let width = rng.random_range(0.01..1.0);
            let vote = interval_consensus(&values, width).unwrap();
            let (count, start) = sweep_oracle(&values, width);
            assert_eq!(vote.count, count);
            assert_eq!(vote.min, start);
        }
    }
}
