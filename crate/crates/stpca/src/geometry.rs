//! Geodesic distances, wrapping, rotations, and random sampling on the
//! d-torus and on d-spheres of arbitrary radius.
//!
//! The torus is represented as `[-pi, pi)^d` with opposite faces identified;
//! sphere points are Cartesian vectors in `R^{d+1}` of fixed norm.

use crate::error::{Result, StpcaError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

/// A point on the d-torus, every coordinate in `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    angles: Vec<f64>,
}

impl TorusPoint {
    /// Builds a torus point, wrapping every coordinate into `[-pi, pi)`.
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(StpcaError::invalid("torus point needs d >= 1"));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(StpcaError::invalid("non-finite angle"));
        }
        Ok(TorusPoint {
            angles: angles.into_iter().map(wrap_angle).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.angles.len()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

/// A point in `R^{d+1}` constrained to norm `radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    coords: DVector<f64>,
    radius: f64,
}

impl SpherePoint {
    pub fn new(coords: DVector<f64>, radius: f64) -> Result<Self> {
        if radius <= 0.0 || !radius.is_finite() {
            return Err(StpcaError::invalid("sphere radius must be positive"));
        }
        let norm = coords.norm();
        if (norm - radius).abs() > 1e-9 * radius {
            return Err(StpcaError::invalid(format!(
                "point norm {norm} differs from radius {radius}"
            )));
        }
        Ok(SpherePoint { coords, radius })
    }

    /// Scales an arbitrary nonzero vector onto the sphere of radius `radius`.
    pub fn project(coords: DVector<f64>, radius: f64) -> Result<Self> {
        let norm = coords.norm();
        if norm < 1e-12 {
            return Err(StpcaError::invalid("cannot project the origin to a sphere"));
        }
        Ok(SpherePoint {
            coords: coords * (radius / norm),
            radius,
        })
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Ambient dimension minus one: the point lives on S^d with d = len - 1.
    pub fn sphere_dim(&self) -> usize {
        self.coords.len() - 1
    }

    /// The same direction rescaled to the unit sphere.
    pub fn to_unit(&self) -> SpherePoint {
        SpherePoint {
            coords: &self.coords / self.radius,
            radius: 1.0,
        }
    }
}

/// Orthogonal matrix taking a given unit vector to the north pole
/// `(0, ..., 0, 1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotationToPole {
    matrix: DMatrix<f64>,
}

impl RotationToPole {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    pub fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        self.matrix.transpose() * v
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = a - TWO_PI * ((a + PI) / TWO_PI).floor();
    // Guard against boundary roundoff.
    if w >= PI {
        w -= TWO_PI;
    }
    if w < -PI {
        w += TWO_PI;
    }
    w
}

/// Wraps raw angles coordinatewise into `[-pi, pi)`.
pub fn wrap(angles: &[f64]) -> Result<TorusPoint> {
    TorusPoint::new(angles.to_vec())
}

/// Signed wrapped difference `a - b` in `(-pi, pi]`, with the cut-locus
/// convention that a difference of exactly `pi` keeps the `+` sign.
pub fn signed_circle_diff(a: f64, b: f64) -> f64 {
    let w = wrap_angle(a - b);
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Arc-length distance on the circle: `min(|a-b|, 2pi - |a-b|)`.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % TWO_PI;
    d.min(TWO_PI - d)
}

/// Geodesic distance on the d-torus under the product metric.
pub fn torus_distance(x: &TorusPoint, y: &TorusPoint) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(StpcaError::invalid(format!(
            "torus dimension mismatch: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    let s: f64 = x
        .angles
        .iter()
        .zip(&y.angles)
        .map(|(&a, &b)| {
            let d = circle_distance(a, b);
            d * d
        })
        .sum();
    Ok(s.sqrt())
}

/// Geodesic distance on the sphere of radius r: `r * arccos(x'y / r^2)`,
/// computed in the atan2 form, which is accurate near both coincident and
/// antipodal points where the arccos form loses half the precision.
pub fn sphere_distance(x: &SpherePoint, y: &SpherePoint) -> Result<f64> {
    if x.coords.len() != y.coords.len() {
        return Err(StpcaError::invalid("sphere dimension mismatch"));
    }
    let r = x.radius;
    if (r - y.radius).abs() > 1e-9 * r.max(y.radius) {
        return Err(StpcaError::invalid(format!(
            "sphere radius mismatch: {} vs {}",
            x.radius, y.radius
        )));
    }
    let u = &x.coords / r;
    let v = &y.coords / r;
    Ok(r * 2.0 * (&u - &v).norm().atan2((&u + &v).norm()))
}

/// Geodesic distance between unit vectors.
pub fn unit_sphere_distance(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    // 2 atan2(|x - y|, |x + y|) = arccos(x'y) without the precision cliff
    // at the ends of the arccos range.
    2.0 * (x - y).norm().atan2((x + y).norm())
}

/// Builds a proper rotation taking the unit vector `v` to the north pole.
///
/// Near the south pole the rotation plane is ill-conditioned, so a fixed
/// fallback is used: the Householder reflection through the last axis
/// composed with a sign flip of the first coordinate, which is orthogonal
/// with determinant +1 by construction.
pub fn rotation_to_north_pole(v: &DVector<f64>) -> Result<RotationToPole> {
    let n = v.len();
    if n < 2 {
        return Err(StpcaError::invalid("rotation needs ambient dimension >= 2"));
    }
    if (v.norm() - 1.0).abs() > 1e-9 {
        return Err(StpcaError::invalid("rotation source must be a unit vector"));
    }
    let mut pole = DVector::zeros(n);
    pole[n - 1] = 1.0;

    let c = v[n - 1]; // cos of the angle between v and the pole
    if (v - &pole).norm() < 1e-12 {
        return Ok(RotationToPole {
            matrix: DMatrix::identity(n, n),
        });
    }
    if (v + &pole).norm() < 1e-12 {
        // South-pole fallback: flip the last and first axes.
        let mut m = DMatrix::identity(n, n);
        m[(0, 0)] = -1.0;
        m[(n - 1, n - 1)] = -1.0;
        return Ok(RotationToPole { matrix: m });
    }

    // Rotation in the 2-plane spanned by v and the pole: with
    // u the unit component of the pole orthogonal to v, and angle t,
    // R = I + sin t (u v' - v u') + (cos t - 1)(v v' + u u').
    let u_raw = &pole - v * c;
    let s = u_raw.norm(); // sin of the angle
    let u = u_raw / s;
    let mut m = DMatrix::identity(n, n);
    m += (&u * v.transpose() - v * u.transpose()) * s;
    m += (v * v.transpose() + &u * u.transpose()) * (c - 1.0);
    Ok(RotationToPole { matrix: m })
}

/// i.i.d. uniform sample on `[-pi, pi)^d`.
pub fn sample_uniform_torus<R: Rng>(n: usize, d: usize, rng: &mut R) -> Result<Vec<TorusPoint>> {
    if n < 1 || d < 1 {
        return Err(StpcaError::invalid("need n >= 1 and d >= 1"));
    }
    Ok((0..n)
        .map(|_| TorusPoint {
            angles: (0..d).map(|_| rng.gen_range(-PI..PI)).collect(),
        })
        .collect())
}

/// i.i.d. uniform sample on the d-sphere of radius `r` via normalized
/// isotropic Gaussians.
pub fn sample_uniform_sphere<R: Rng>(
    n: usize,
    d: usize,
    r: f64,
    rng: &mut R,
) -> Result<Vec<SpherePoint>> {
    if n < 1 || d < 1 || r <= 0.0 {
        return Err(StpcaError::invalid("need n >= 1, d >= 1, r > 0"));
    }
    Ok((0..n)
        .map(|_| loop {
            let g: DVector<f64> =
                DVector::from_iterator(d + 1, (0..d + 1).map(|_| rng.sample(StandardNormal)));
            let norm = g.norm();
            if norm > 1e-12 {
                return SpherePoint {
                    coords: g * (r / norm),
                    radius: r,
                };
            }
        })
        .collect())
}

/// Draws from a wrapped normal on the torus: a multivariate normal draw in
/// `R^d` wrapped coordinatewise into `[-pi, pi)`.
///
/// The covariance is factored by symmetric eigendecomposition with tiny
/// negative eigenvalues clamped to zero, so degenerate (including zero)
/// covariances sample exactly.
pub fn sample_wrapped_normal<R: Rng>(
    n: usize,
    mean: &TorusPoint,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<TorusPoint>> {
    let d = mean.dim();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(StpcaError::invalid("covariance shape mismatch"));
    }
    if (cov - cov.transpose()).amax() > 1e-10 * (1.0 + cov.amax()) {
        return Err(StpcaError::invalid("covariance must be symmetric"));
    }
    let eig = cov.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.amax().max(1.0);
    let mut sqrt_eig = eig.eigenvalues.clone();
    for v in sqrt_eig.iter_mut() {
        if *v < -1e-10 * max_eig {
            return Err(StpcaError::invalid(
                "covariance is not positive semidefinite",
            ));
        }
        *v = v.max(0.0).sqrt();
    }
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_eig);
    Ok((0..n)
        .map(|_| {
            let g = DVector::from_iterator(d, (0..d).map(|_| rng.sample(StandardNormal)));
            let x = &factor * g;
            TorusPoint {
                angles: (0..d).map(|j| wrap_angle(mean.angles[j] + x[j])).collect(),
            }
        })
        .collect())
}

/// Fréchet mean on the circle by exhaustive cut-point enumeration.
///
/// The objective `sum w_i * dist(theta, theta_i)^2` is piecewise quadratic
/// with at most n candidate minima (one per cyclic gap); each candidate is
/// the Euclidean mean of the sample unwrapped across that gap. Ties are
/// broken by the smallest angle value.
pub fn frechet_mean_circle(angles: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    let n = angles.len();
    if n == 0 {
        return Err(StpcaError::invalid("empty sample"));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(StpcaError::invalid("weights length mismatch"));
        }
        if w.iter().any(|&wi| wi < 0.0 || !wi.is_finite()) {
            return Err(StpcaError::invalid("weights must be nonnegative"));
        }
    }
    let uniform = vec![1.0; n];
    let w = weights.unwrap_or(&uniform);
    let total_w: f64 = w.iter().sum();
    if total_w <= 0.0 {
        return Err(StpcaError::invalid("weights sum to zero"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| angles[i].partial_cmp(&angles[j]).unwrap());
    let sorted: Vec<(f64, f64)> = order
        .iter()
        .map(|&i| (wrap_angle(angles[i]), w[i]))
        .collect();

    let weighted_sum: f64 = sorted.iter().map(|&(a, wi)| a * wi).sum();

    let objective = |theta: f64| -> f64 {
        sorted
            .iter()
            .map(|&(a, wi)| {
                let d = circle_distance(theta, a);
                wi * d * d
            })
            .sum()
    };

    // Candidate k: the k smallest sorted angles unwrapped by +2pi, i.e. the
    // cut placed in the gap after the k-th order statistic.
    let mut best_theta = f64::NAN;
    let mut best_obj = f64::INFINITY;
    let mut prefix_w = 0.0;
    for k in 0..n {
        let cand = wrap_angle((weighted_sum + TWO_PI * prefix_w) / total_w);
        let obj = objective(cand);
        if obj < best_obj || (obj == best_obj && cand < best_theta) {
            best_obj = obj;
            best_theta = cand;
        }
        prefix_w += sorted[k].1;
    }
    Ok(best_theta)
}
