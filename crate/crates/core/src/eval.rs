//! Scoring against synthetic ground truth and the plain-text metrics report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geom::{rotation_geodesic_error, PointCloud, PointLabel, RigidPose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Indices outside `0..universe` are ignored. An empty prediction has
/// precision 1 when the truth is empty too and 0 otherwise; recall of an
/// empty truth is 1.
pub fn precision_recall(predicted: &[usize], truth: &[usize], universe: usize) -> PrecisionRecall {
    let p: BTreeSet<usize> = predicted.iter().copied().filter(|&i| i < universe).collect();
    let t: BTreeSet<usize> = truth.iter().copied().filter(|&i| i < universe).collect();
    let tp = p.intersection(&t).count() as f64;
    let precision = if p.is_empty() {
        if t.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        tp / p.len() as f64
    };
    let recall = if t.is_empty() { 1.0 } else { tp / t.len() as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    PrecisionRecall { precision, recall, f1 }
}

pub fn rotation_error_deg(estimate: &RigidPose, truth: &RigidPose) -> f64 {
    rotation_geodesic_error(estimate.rotation(), truth.rotation())
}

pub fn translation_error(estimate: &RigidPose, truth: &RigidPose) -> f64 {
    (estimate.translation() - truth.translation()).norm()
}

/// Root-mean-square position error, no alignment applied.
pub fn trajectory_rms(estimate: &[RigidPose], truth: &[RigidPose]) -> f64 {
    assert_eq!(estimate.len(), truth.len(), "trajectories must have equal length");
    if estimate.is_empty() {
        return 0.0;
    }
    let s: f64 = estimate.iter().zip(truth).map(|(a, b)| translation_error(a, b).powi(2)).sum();
    (s / estimate.len() as f64).sqrt()
}

/// Share of `label`-labeled points whose flag is `want`.
pub fn label_rate(cloud: &PointCloud, flags: &[bool], labels: &[PointLabel], want: bool) -> Option<f64> {
    let (mut n, mut hit) = (0usize, 0usize);
    for (p, &f) in cloud.points.iter().zip(flags) {
        if labels.contains(&p.label) {
            n += 1;
            if f == want {
                hit += 1;
            }
        }
    }
    (n > 0).then(|| hit as f64 / n as f64)
}

/// Named numeric metrics for one stage, printed as `key = value` lines in
/// key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub stage: String,
    pub metrics: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn new(stage: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            metrics: BTreeMap::new(),
        }
    }

    /// Rejects non-finite values, and values outside `[0, 1]` for keys
    /// ending in a rate-like suffix.
    pub fn insert(&mut self, key: impl Into<String>, value: f64) -> Result<()> {
        let key = key.into();
        if !value.is_finite() {
            return Err(Error::Config(format!("metric {key} is not finite")));
        }
        let is_rate = ["precision", "recall", "f1", "rate"].iter().any(|s| key.ends_with(s));
        if is_rate && !(0.0..=1.0).contains(&value) {
            return Err(Error::Config(format!("metric {key} = {value} is not a rate")));
        }
        self.metrics.insert(key, value);
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.insert(key, value).unwrap_or_else(|e| panic!("{e}"));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    pub fn merge(&mut self, prefix: &str, other: &MetricsReport) {
        for (k, v) in &other.metrics {
            self.metrics.insert(format!("{prefix}.{k}"), *v);
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("stage = {}\n", self.stage);
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = MetricsReport::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| Error::MalformedLine { line: n + 1, reason: reason.into() };
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "stage" {
                r.stage = v.to_string();
            } else {
                r.metrics.insert(k.to_string(), v.parse().map_err(|_| bad("value is not a number"))?);
            }
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn precision_recall_cases() {
        let full = precision_recall(&[1, 2, 3], &[1, 2, 3], 10);
        assert_eq!((full.precision, full.recall, full.f1), (1.0, 1.0, 1.0));
        let half = precision_recall(&[1, 2], &[1, 2, 3, 4], 10);
        assert_eq!((half.precision, half.recall), (1.0, 0.5));
        let empty = precision_recall(&[], &[], 10);
        assert_eq!((empty.precision, empty.recall, empty.f1), (1.0, 1.0, 1.0));
        let miss = precision_recall(&[], &[4], 10);
        assert_eq!((miss.precision, miss.recall, miss.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn pose_errors() {
        let a = RigidPose::from_yaw(0.1, Vector3::new(1.0, 0.0, 0.0));
        let b = RigidPose::from_yaw(0.0, Vector3::new(1.0, 2.0, 0.0));
        assert!((rotation_error_deg(&a, &b) - 0.1f64.to_degrees()).abs() < 1e-9);
        assert!((translation_error(&a, &b) - 2.0).abs() < 1e-12);
        assert!((trajectory_rms(&[a, a], &[b, a]) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn report_text_round_trip() {
        let mut r = MetricsReport::new("pipeline");
        r.set("groundseg.recall", 0.987654321);
        r.set("pgo.rms_m", 0.0123);
        let text = r.to_text();
        assert_eq!(text, "stage = pipeline\ngroundseg.recall = 0.987654321\npgo.rms_m = 0.0123\n");
        assert_eq!(MetricsReport::parse(&text).unwrap(), r);
        assert!(r.insert("x.rate", 1.5).is_err());
        assert!(r.insert("x", f64::NAN).is_err());
    }
}
