//! Ready-made scenes used by tests, the acceptance suite and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bounds, DynamicObject, Extent, GroundPlane, SceneBox, SceneSpec, Trajectory};

/// Sensor mounting height used by every preset trajectory.
pub const SENSOR_HEIGHT: f64 = 1.73;

fn bounds(half: f64) -> Bounds {
    Bounds {
        min: [-half, -half, -5.0],
        max: [half, half, 30.0],
    }
}

/// Flat ground enclosed by four walls 30 m from the origin with a few
/// boxes in between.
pub fn flat_with_walls() -> SceneSpec {
    let wall = |cx: f64, cy: f64, sx: f64, sy: f64| SceneBox {
        center: [cx, cy, 2.0],
        size: [sx, sy, 4.0],
        yaw: 0.0,
    };
    SceneSpec {
        ground: vec![GroundPlane::horizontal(0.0)],
        static_objects: vec![
            wall(30.0, 0.0, 0.5, 60.0),
            wall(-30.0, 0.0, 0.5, 60.0),
            wall(0.0, 30.0, 60.0, 0.5),
            wall(0.0, -30.0, 60.0, 0.5),
            SceneBox { center: [8.0, 5.0, 0.75], size: [4.0, 2.0, 1.5], yaw: 0.3 },
            SceneBox { center: [-6.0, -9.0, 1.0], size: [2.0, 2.0, 2.0], yaw: 0.0 },
        ],
        dynamic_objects: vec![],
        bounds: bounds(40.0),
    }
}

fn overlaps(b: &SceneBox, keep_out: &[Extent]) -> bool {
    let r = 0.5 * b.size[0].hypot(b.size[1]);
    keep_out.iter().any(|e| {
        b.center[0] + r > e.min[0] && b.center[0] - r < e.max[0] && b.center[1] + r > e.min[1] && b.center[1] - r < e.max[1]
    })
}

/// Randomised block of buildings, parked cars and poles on flat ground.
/// Nothing is placed inside the `keep_out` rectangles (the drivable area).
pub fn urban(seed: u64, half_extent: f64, keep_out: &[Extent]) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objects = Vec::new();
    let lim = half_extent - 10.0;
    let place = |rng: &mut ChaCha8Rng, size: [f64; 3], count: usize, objects: &mut Vec<SceneBox>| {
        let mut placed = 0;
        let mut attempts = 0;
        while placed < count && attempts < 50 * count {
            attempts += 1;
            let b = SceneBox {
                center: [rng.random_range(-lim..lim), rng.random_range(-lim..lim), size[2] / 2.0],
                size,
                yaw: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            };
            if !overlaps(&b, keep_out) {
                objects.push(b);
                placed += 1;
            }
        }
    };
    let area = (2.0 * half_extent / 100.0).powi(2);
    for _ in 0..(30.0 * area) as usize {
        let size = [rng.random_range(4.0..14.0), rng.random_range(4.0..14.0), rng.random_range(3.0..12.0)];
        place(&mut rng, size, 1, &mut objects);
    }
    for _ in 0..(40.0 * area) as usize {
        let size = [rng.random_range(3.8..4.8), rng.random_range(1.7..2.0), rng.random_range(1.4..1.8)];
        place(&mut rng, size, 1, &mut objects);
    }
    for _ in 0..(40.0 * area) as usize {
        let size = [0.3, 0.3, rng.random_range(3.0..6.0)];
        place(&mut rng, size, 1, &mut objects);
    }
    SceneSpec {
        ground: vec![GroundPlane::horizontal(0.0)],
        static_objects: objects,
        dynamic_objects: vec![],
        bounds: bounds(half_extent),
    }
}

/// Urban block around a closed square loop with the given side; the road
/// is a corridor of `road_half_width` around the loop.
pub fn urban_loop(seed: u64, side: f64, road_half_width: f64) -> (SceneSpec, Trajectory) {
    // Objects are generated around the origin and shifted onto the loop
    // centre afterwards, so the corridors are expressed relative to it.
    let w = road_half_width;
    let h = side / 2.0;
    let keep_out = [
        Extent { min: [-h - w, -h - w], max: [h + w, -h + w] },
        Extent { min: [h - w, -h - w], max: [h + w, h + w] },
        Extent { min: [-h - w, h - w], max: [h + w, h + w] },
        Extent { min: [-h - w, -h - w], max: [-h + w, h + w] },
    ];
    let half = side / 2.0 + 60.0;
    let mut scene = urban(seed, half, &keep_out);
    for b in &mut scene.static_objects {
        b.center[0] += side / 2.0;
        b.center[1] += side / 2.0;
    }
    scene.bounds = Bounds {
        min: [side / 2.0 - half, side / 2.0 - half, -5.0],
        max: [side / 2.0 + half, side / 2.0 + half, 30.0],
    };
    (scene, Trajectory::square([0.0, 0.0, SENSOR_HEIGHT], side, 4.0))
}

/// Straight street lined with buildings, two cars driving through and one
/// pedestrian crossing, observed by a sensor creeping along the street.
pub fn dynamic_street() -> (SceneSpec, Trajectory) {
    let mut objects = Vec::new();
    for k in 0..8 {
        let x = -35.0 + 10.0 * k as f64;
        objects.push(SceneBox { center: [x, 14.0, 4.0], size: [8.0, 6.0, 8.0], yaw: 0.0 });
        objects.push(SceneBox { center: [x + 4.0, -14.0, 3.0], size: [7.0, 6.0, 6.0], yaw: 0.0 });
    }
    objects.push(SceneBox { center: [6.0, 8.0, 0.75], size: [4.4, 1.8, 1.5], yaw: 0.0 });
    objects.push(SceneBox { center: [-9.0, -8.0, 2.5], size: [0.3, 0.3, 5.0], yaw: 0.0 });
    objects.push(SceneBox { center: [15.0, -8.0, 2.5], size: [0.3, 0.3, 5.0], yaw: 0.0 });
    let dynamic_objects = vec![
        DynamicObject {
            size: [4.5, 1.9, 1.6],
            trajectory: Trajectory::Linear { start: [-25.0, 3.0, 0.8], velocity: [5.0, 0.0, 0.0], yaw: 0.0 },
        },
        DynamicObject {
            size: [4.2, 1.8, 1.5],
            trajectory: Trajectory::Linear {
                start: [25.0, -3.0, 0.75],
                velocity: [-4.0, 0.0, 0.0],
                yaw: std::f64::consts::PI,
            },
        },
        DynamicObject {
            size: [0.6, 0.6, 1.8],
            trajectory: Trajectory::Linear {
                start: [4.0, -6.0, 0.9],
                velocity: [0.0, 1.0, 0.0],
                yaw: std::f64::consts::FRAC_PI_2,
            },
        },
    ];
    let scene = SceneSpec {
        ground: vec![GroundPlane::horizontal(0.0)],
        static_objects: objects,
        dynamic_objects,
        bounds: bounds(60.0),
    };
    let tr = Trajectory::Linear {
        start: [-6.0, 0.0, SENSOR_HEIGHT],
        velocity: [1.0, 0.0, 0.0],
        yaw: 0.0,
    };
    (scene, tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        flat_with_walls().validate().unwrap();
        urban(1, 80.0, &[]).validate().unwrap();
        let (s, _) = urban_loop(2, 40.0, 5.0);
        s.validate().unwrap();
        dynamic_street().0.validate().unwrap();
    }

    #[test]
    fn loop_road_is_clear() {
        let (s, tr) = urban_loop(3, 40.0, 5.0);
        for k in 0..100 {
            let p = tr.pose_at(k as f64 * 0.4);
            let hit = s.static_objects.iter().any(|b| {
                (b.center[0] - p.translation().x).hypot(b.center[1] - p.translation().y) < 0.5 * b.size[0].min(b.size[1])
            });
            assert!(!hit);
        }
    }
}
