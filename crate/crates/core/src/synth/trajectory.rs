use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geom::RigidPose;

/// Time-parameterised yaw-only poses (ground vehicles and moving objects).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Static {
        position: [f64; 3],
        #[serde(default)]
        yaw: f64,
    },
    /// Constant velocity; heading fixed at `yaw`.
    Linear {
        start: [f64; 3],
        velocity: [f64; 3],
        #[serde(default)]
        yaw: f64,
    },
    /// Piecewise-linear through `(t, x, y, z, yaw)` knots, clamped outside
    /// the knot range. Yaw is interpolated along the shorter arc.
    Waypoints { knots: Vec<[f64; 5]> },
    /// Counter-clockwise circle with heading along the tangent.
    Circular {
        center: [f64; 3],
        radius: f64,
        angular_speed: f64,
        #[serde(default)]
        phase: f64,
    },
}

fn wrap(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    (a + std::f64::consts::PI).rem_euclid(t) - std::f64::consts::PI
}

impl Trajectory {
    pub fn pose_at(&self, t: f64) -> RigidPose {
        match self {
            Trajectory::Static { position, yaw } => RigidPose::from_yaw(*yaw, Vector3::from(*position)),
            Trajectory::Linear { start, velocity, yaw } => {
                RigidPose::from_yaw(*yaw, Vector3::from(*start) + Vector3::from(*velocity) * t)
            }
            Trajectory::Waypoints { knots } => {
                let Some(first) = knots.first() else {
                    return RigidPose::identity();
                };
                let last = knots.last().expect("nonempty");
                let at = |k: &[f64; 5]| RigidPose::from_yaw(k[4], Vector3::new(k[1], k[2], k[3]));
                if t <= first[0] {
                    return at(first);
                }
                if t >= last[0] {
                    return at(last);
                }
                let i = knots.partition_point(|k| k[0] <= t) - 1;
                let (a, b) = (&knots[i], &knots[i + 1]);
                let s = if b[0] > a[0] { (t - a[0]) / (b[0] - a[0]) } else { 0.0 };
                let lerp = |j: usize| a[j] + s * (b[j] - a[j]);
                let yaw = a[4] + s * wrap(b[4] - a[4]);
                RigidPose::from_yaw(yaw, Vector3::new(lerp(1), lerp(2), lerp(3)))
            }
            Trajectory::Circular {
                center,
                radius,
                angular_speed,
                phase,
            } => {
                let a = phase + angular_speed * t;
                let c = Vector3::from(*center);
                let yaw = a + std::f64::consts::FRAC_PI_2 * angular_speed.signum();
                RigidPose::from_yaw(yaw, c + Vector3::new(radius * a.cos(), radius * a.sin(), 0.0))
            }
        }
    }

    /// Closed axis-aligned square loop of side `side` starting at `origin`
    /// heading +x, traversed at `speed`. Each leg ends slightly early and
    /// the vehicle turns in place at the corner.
    pub fn square(origin: [f64; 3], side: f64, speed: f64) -> Self {
        let leg = side / speed;
        let corners = [(0.0, 0.0), (side, 0.0), (side, side), (0.0, side), (0.0, 0.0)];
        let mut knots = Vec::new();
        let turn = 0.1 * leg;
        for (k, w) in corners.windows(2).enumerate() {
            let yaw = k as f64 * std::f64::consts::FRAC_PI_2;
            let t0 = k as f64 * leg;
            knots.push([t0, origin[0] + w[0].0, origin[1] + w[0].1, origin[2], yaw]);
            knots.push([t0 + leg - turn, origin[0] + w[1].0, origin[1] + w[1].1, origin[2], yaw]);
        }
        knots.push([4.0 * leg, origin[0], origin[1], origin[2], 2.0 * std::f64::consts::PI]);
        Trajectory::Waypoints { knots }
    }

    pub fn duration_hint(&self) -> Option<f64> {
        match self {
            Trajectory::Waypoints { knots } => knots.last().map(|k| k[0]),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waypoints_interpolate_and_clamp() {
        let tr = Trajectory::Waypoints {
            knots: vec![[0.0, 0.0, 0.0, 0.0, 0.0], [2.0, 4.0, 2.0, 0.0, 1.0]],
        };
        assert_eq!(*tr.pose_at(1.0).translation(), Vector3::new(2.0, 1.0, 0.0));
        assert!((tr.pose_at(1.0).yaw() - 0.5).abs() < 1e-12);
        assert_eq!(*tr.pose_at(5.0).translation(), Vector3::new(4.0, 2.0, 0.0));
        assert_eq!(*tr.pose_at(-1.0).translation(), Vector3::zeros());
    }

    #[test]
    fn yaw_interpolates_across_pi() {
        let tr = Trajectory::Waypoints {
            knots: vec![[0.0, 0.0, 0.0, 0.0, 3.0], [1.0, 0.0, 0.0, 0.0, -3.0]],
        };
        let mid = tr.pose_at(0.5).yaw();
        assert!(mid.abs() > 3.1, "{mid}");
    }

    #[test]
    fn square_loop_closes() {
        let tr = Trajectory::square([0.0, 0.0, 1.73], 40.0, 4.0);
        let end = tr.duration_hint().unwrap();
        let (a, b) = (tr.pose_at(0.0), tr.pose_at(end));
        assert!((a.translation() - b.translation()).norm() < 1e-12);
        assert!((tr.pose_at(2.0).translation() - Vector3::new(80.0 / 9.0, 0.0, 1.73)).norm() < 1e-9);
    }

    #[test]
    fn circle_heading_is_tangent() {
        let tr = Trajectory::Circular { center: [0.0; 3], radius: 5.0, angular_speed: 0.5, phase: 0.0 };
        let p = tr.pose_at(0.0);
        assert!((p.translation() - Vector3::new(5.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((p.yaw() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
