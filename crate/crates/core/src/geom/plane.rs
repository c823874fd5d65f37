use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Relative tolerance used to decide that two eigenvalues coincide.
pub const EIGEN_TOLERANCE: f64 = 1e-12;

/// Plane `normal·p + offset = 0` with the normal in the +z hemisphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// `normal·ẑ`, always in `[0, 1]`.
    pub uprightness: f64,
    /// Smallest covariance eigenvalue over the eigenvalue sum.
    pub flatness: f64,
}

impl PlaneModel {
    /// Horizontal plane `z = height`.
    pub fn horizontal(height: f64) -> Self {
        Self {
            normal: Vector3::z(),
            offset: -height,
            uprightness: 1.0,
            flatness: 0.0,
        }
    }

    #[inline]
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }

    /// Height of the plane above `(x, y)`; `None` for vertical planes.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        if self.normal.z.abs() < 1e-9 {
            return None;
        }
        Some(-(self.normal.x * x + self.normal.y * y + self.offset) / self.normal.z)
    }
}

/// Eigen-decomposition of a symmetric 3×3 matrix, ascending eigenvalues.
#[derive(Debug, Clone, Copy)]
pub struct SymmetricEigen3 {
    pub values: [f64; 3],
    /// Unit eigenvector of the smallest eigenvalue.
    pub min_vector: Vector3<f64>,
}

/// Closed-form eigenvalues from the characteristic polynomial (trigonometric
/// solution), eigenvector of the smallest one from cross products of the
/// rows of `A − λI`.
pub fn symmetric_eigen3(a: &Matrix3<f64>) -> SymmetricEigen3 {
    let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
    let scale = a.abs().max();
    let values = if p1 <= (EIGEN_TOLERANCE * scale).powi(2) {
        let mut d = [a[(0, 0)], a[(1, 1)], a[(2, 2)]];
        d.sort_by(f64::total_cmp);
        d
    } else {
        let q = a.trace() / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (a - Matrix3::identity() * q) / p;
        let r = (b.determinant() * 0.5).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let largest = q + 2.0 * p * phi.cos();
        let smallest = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
        let middle = 3.0 * q - largest - smallest;
        let mut v = [smallest, middle, largest];
        v.sort_by(f64::total_cmp);
        v
    };
    SymmetricEigen3 {
        values,
        min_vector: eigenvector_for(a, values, scale),
    }
}

fn eigenvector_for(a: &Matrix3<f64>, values: [f64; 3], scale: f64) -> Vector3<f64> {
    let spread = values[2] - values[0];
    if spread <= EIGEN_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
        // Isotropic: every direction is an eigenvector.
        return Vector3::z();
    }
    if values[1] - values[0] <= EIGEN_TOLERANCE * spread {
        // Smallest eigenvalue is repeated: any unit vector orthogonal to the
        // (distinct) largest eigenvector works.
        let top = null_vector(&(a - Matrix3::identity() * values[2]));
        let helper = if top.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
        return top.cross(&helper).normalize();
    }
    null_vector(&(a - Matrix3::identity() * values[0]))
}

/// Unit vector spanning the (numerical) null space of a rank-2 matrix.
fn null_vector(m: &Matrix3<f64>) -> Vector3<f64> {
    let r0 = m.row(0).transpose();
    let r1 = m.row(1).transpose();
    let r2 = m.row(2).transpose();
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .max_by(|x, y| x.norm_squared().total_cmp(&y.norm_squared()))
        .copied()
        .unwrap_or_else(Vector3::z);
    let n = best.norm();
    if n == 0.0 {
        Vector3::z()
    } else {
        best / n
    }
}

/// Total-least-squares plane through `points` (principal component analysis).
pub fn fit_plane_pca(points: &[Vector3<f64>]) -> Result<PlaneModel> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = symmetric_eigen3(&cov);
    let [l0, l1, l2] = eig.values;
    if l2 <= f64::MIN_POSITIVE || l1 <= EIGEN_TOLERANCE * l2 {
        return Err(Error::DegenerateGeometry("points are collinear or coincident"));
    }
    let mut normal = eig.min_vector;
    if normal.z < 0.0 {
        normal = -normal;
    }
    let sum = l0.max(0.0) + l1 + l2;
    Ok(PlaneModel {
        normal,
        offset: -normal.dot(&centroid),
        uprightness: normal.z,
        flatness: l0.max(0.0) / sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sse(points: &[Vector3<f64>], normal: &Vector3<f64>) -> f64 {
        let c = points.iter().fold(Vector3::zeros(), |a, p| a + p) / points.len() as f64;
        points.iter().map(|p| normal.dot(&(p - c)).powi(2)).sum()
    }

    /// Exhaustive search over unit normals on the upper hemisphere with
    /// repeated local grid refinement; independent of the eigen path.
    fn brute_force_normal(points: &[Vector3<f64>]) -> Vector3<f64> {
        let dir = |theta: f64, phi: f64| {
            Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=90 {
            for j in 0..360 {
                let (t, p) = ((i as f64).to_radians(), (j as f64).to_radians());
                let e = sse(points, &dir(t, p));
                if e < best.0 {
                    best = (e, t, p);
                }
            }
        }
        let mut step = 1f64.to_radians();
        for _ in 0..60 {
            let (_, t0, p0) = best;
            for di in -4..=4 {
                for dj in -4..=4 {
                    let t = t0 + di as f64 * step * 0.5;
                    let p = p0 + dj as f64 * step * 0.5;
                    let e = sse(points, &dir(t, p));
                    if e < best.0 {
                        best = (e, t, p);
                    }
                }
            }
            step *= 0.5;
        }
        dir(best.1, best.2)
    }

    #[test]
    fn coplanar_square_at_height_two() {
        let pts = [
            Vector3::new(1.0, 0.0, 2.0),
            Vector3::new(0.0, 1.0, 2.0),
            Vector3::new(-1.0, 0.0, 2.0),
            Vector3::new(0.0, -1.0, 2.0),
        ];
        let plane = fit_plane_pca(&pts).unwrap();
        assert_relative_eq!(plane.normal, Vector3::z(), epsilon = 1e-12);
        assert_relative_eq!(plane.offset, -2.0, epsilon = 1e-12);
        assert_relative_eq!(plane.uprightness, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn too_few_and_collinear() {
        let two = [Vector3::zeros(), Vector3::x()];
        assert!(matches!(fit_plane_pca(&two), Err(Error::TooFewPoints { .. })));
        let line: Vec<_> = (0..10).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(fit_plane_pca(&line), Err(Error::DegenerateGeometry(_))));
        let same = vec![Vector3::new(1.0, 1.0, 1.0); 5];
        assert!(matches!(fit_plane_pca(&same), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn tilted_plane_matches_constrained_least_squares_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 1e-6).unwrap();
        let pts: Vec<_> = (0..200)
            .map(|_| {
                let x: f64 = rng.random_range(-5.0..5.0);
                let y: f64 = rng.random_range(-5.0..5.0);
                Vector3::new(x, y, 3.0 - x - y + noise.sample(&mut rng))
            })
            .collect();
        let plane = fit_plane_pca(&pts).unwrap();
        let expected = Vector3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        assert!((plane.normal - expected).norm() < 1e-6);
        assert_relative_eq!(plane.offset, -3f64.sqrt(), epsilon = 1e-5);
        let oracle = brute_force_normal(&pts);
        assert!((sse(&pts, &plane.normal) - sse(&pts, &oracle)).abs() < 1e-6);
        assert!(sse(&pts, &plane.normal) <= sse(&pts, &oracle) + 1e-12);
    }

    #[test]
    fn vertical_wall_has_horizontal_normal() {
        let pts: Vec<_> = (0..50)
            .map(|i| Vector3::new(4.0, (i % 10) as f64 * 0.2, (i / 10) as f64 * 0.4))
            .collect();
        let plane = fit_plane_pca(&pts).unwrap();
        assert!(plane.uprightness < 1e-9);
        assert_relative_eq!(plane.normal.x.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_match_nalgebra() {
        let m = Matrix3::new(4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0);
        let ours = symmetric_eigen3(&m);
        let mut reference: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for k in 0..3 {
            assert_relative_eq!(ours.values[k], reference[k], epsilon = 1e-12);
        }
        let v = ours.min_vector;
        assert!((m * v - v * ours.values[0]).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn order_invariant(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts: Vec<_> = (0..30)
                .map(|_| Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-0.3..0.3)))
                .collect();
            let a = fit_plane_pca(&pts).unwrap();
            pts.reverse();
            pts.swap(3, 17);
            let b = fit_plane_pca(&pts).unwrap();
            prop_assert!((a.normal - b.normal).abs().max() < 1e-12);
            prop_assert!((a.offset - b.offset).abs() < 1e-12);
        }

        #[test]
        fn beats_axis_aligned_candidates(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..25)
                .map(|_| Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)))
                .collect();
            let plane = fit_plane_pca(&pts).unwrap();
            let ours = sse(&pts, &plane.normal);
            for n in [Vector3::x(), Vector3::y(), Vector3::z()] {
                prop_assert!(ours <= sse(&pts, &n) + 1e-6);
            }
        }
    }
}
