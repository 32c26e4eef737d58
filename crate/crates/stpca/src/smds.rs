//! Spherical multidimensional scaling: gauge-fixed unconstrained
//! minimization of the geodesic stress between torus distances and sphere
//! distances, optionally jointly over the sphere radius.
//!
//! The configuration is parametrized by free vectors `z_i` in `R^{d+1}`;
//! the stress only depends on their directions, so the optimum is projected
//! exactly onto the sphere afterwards. Rotational non-uniqueness is removed
//! by pinning the first point to the positive last axis, with its scale kept
//! positive through `s = exp(u)`.

use crate::embedding::DistanceMatrix;
use crate::error::{Result, StpcaError};
use crate::exec::{map_indexed, tree_sum};
use crate::geometry::{rotation_to_north_pole, SpherePoint};
use crate::optim::{self, BfgsConfig};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

const COS_CLAMP: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RadiusMode {
    /// Keep the sphere radius fixed at the given value.
    Fixed(f64),
    /// Optimize the radius jointly with the configuration, starting here.
    Joint(f64),
}

impl RadiusMode {
    pub fn initial_radius(&self) -> f64 {
        match *self {
            RadiusMode::Fixed(r) | RadiusMode::Joint(r) => r,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StressProblem {
    pub torus_distances: DistanceMatrix,
    pub dim: usize,
    pub radius_mode: RadiusMode,
}

impl StressProblem {
    pub fn new(torus_distances: DistanceMatrix, dim: usize, radius_mode: RadiusMode) -> Result<Self> {
        let n = torus_distances.n();
        if n < dim + 2 {
            return Err(StpcaError::invalid(format!(
                "need n >= d + 2 (n = {n}, d = {dim})"
            )));
        }
        if radius_mode.initial_radius() <= 0.0 {
            return Err(StpcaError::invalid("initial radius must be positive"));
        }
        Ok(StressProblem {
            torus_distances,
            dim,
            radius_mode,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SmdsConfig {
    /// Relative stress-improvement stopping tolerance.
    pub tolerance: f64,
    /// Cap on objective evaluations; `None` uses `500 * n * (d + 1)`.
    pub max_evals: Option<usize>,
}

impl Default for SmdsConfig {
    fn default() -> Self {
        SmdsConfig {
            tolerance: 5e-2,
            max_evals: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmdsSolution {
    pub configuration: Vec<SpherePoint>,
    pub fitted_radius: f64,
    pub stress: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub initial_radius: f64,
    pub initial_stress: f64,
}

/// Normalized geodesic stress of a free configuration at radius `r`:
/// `(1/(n(n-1))) sum_{i != j} (d_T(i,j) - r arccos(z_i'z_j / |z_i||z_j|))^2`.
pub fn stress(z: &[DVector<f64>], r: f64, d: &DistanceMatrix) -> Result<f64> {
    let n = z.len();
    if n != d.n() {
        return Err(StpcaError::invalid("configuration size mismatch"));
    }
    if z.iter().any(|zi| zi.norm() < 1e-12) {
        return Err(StpcaError::invalid("configuration point at the origin"));
    }
    let norms: Vec<f64> = z.iter().map(|zi| zi.norm()).collect();
    let row_sums = map_indexed(n, |i| {
        let mut s = 0.0;
        for j in (i + 1)..n {
            let c = (z[i].dot(&z[j]) / (norms[i] * norms[j])).clamp(-COS_CLAMP, COS_CLAMP);
            let e = d.get(i, j) - r * c.acos();
            s += e * e;
        }
        s
    });
    Ok(2.0 * tree_sum(&row_sums) / (n * (n - 1)) as f64)
}

/// Analytic gradient of the clamped stress with respect to every `z_i`
/// (flattened, `n * (d+1)` entries) and, when requested, the radius.
///
/// Pairs whose cosine hits the clamp contribute zero to the configuration
/// gradient: the arccos derivative diverges there and the clamped objective
/// is locally constant in those pairs.
pub fn stress_gradient(
    z: &[DVector<f64>],
    r: f64,
    d: &DistanceMatrix,
    with_radius: bool,
) -> Result<(Vec<DVector<f64>>, Option<f64>)> {
    let n = z.len();
    if n != d.n() {
        return Err(StpcaError::invalid("configuration size mismatch"));
    }
    if z.iter().any(|zi| zi.norm() < 1e-12) {
        return Err(StpcaError::invalid("configuration point at the origin"));
    }
    let norms: Vec<f64> = z.iter().map(|zi| zi.norm()).collect();
    let ambient = z[0].len();
    let scale = 4.0 / (n * (n - 1)) as f64;

    let grads = map_indexed(n, |i| {
        let mut g = DVector::zeros(ambient);
        for j in 0..n {
            if j == i {
                continue;
            }
            let raw_c = z[i].dot(&z[j]) / (norms[i] * norms[j]);
            if raw_c.abs() >= COS_CLAMP {
                continue; // clamped pair: treated as locally constant
            }
            let a = raw_c.acos();
            let e = d.get(i, j) - r * a;
            let dacos = -1.0 / (1.0 - raw_c * raw_c).sqrt();
            // d c / d z_i = z_j/(|z_i||z_j|) - c z_i / |z_i|^2
            let coeff = scale * e * (-r) * dacos;
            g += (&z[j] / (norms[i] * norms[j]) - &z[i] * (raw_c / (norms[i] * norms[i])))
                * coeff;
        }
        g
    });

    let grad_r = if with_radius {
        let row_sums = map_indexed(n, |i| {
            let mut s = 0.0;
            for j in (i + 1)..n {
                let c = (z[i].dot(&z[j]) / (norms[i] * norms[j])).clamp(-COS_CLAMP, COS_CLAMP);
                let a = c.acos();
                s += (d.get(i, j) - r * a) * a;
            }
            s
        });
        Some(-4.0 * tree_sum(&row_sums) / (n * (n - 1)) as f64)
    } else {
        None
    };

    Ok((grads, grad_r))
}

/// Rotates a configuration so its first point lies exactly on the positive
/// last axis. All pairwise sphere distances are preserved.
pub fn gauge_fix(configuration: &[SpherePoint]) -> Result<Vec<SpherePoint>> {
    if configuration.is_empty() {
        return Err(StpcaError::invalid("empty configuration"));
    }
    let r = configuration[0].radius();
    let unit = configuration[0].coords() / r;
    let rot = rotation_to_north_pole(&unit)?;
    configuration
        .iter()
        .map(|p| SpherePoint::project(rot.apply(p.coords()), r))
        .collect()
}

/// Solves the SMDS problem by BFGS over the gauge-fixed free configuration,
/// jointly over `log r` in joint-radius mode. The returned configuration is
/// projected exactly onto the fitted sphere, and the reported stress is
/// recomputed on the projected points.
pub fn solve_smds(
    problem: &StressProblem,
    init: &[SpherePoint],
    cfg: &SmdsConfig,
) -> Result<SmdsSolution> {
    let n = problem.torus_distances.n();
    let d = problem.dim;
    let ambient = d + 1;
    if init.len() != n {
        return Err(StpcaError::invalid("init size mismatch"));
    }
    if init.iter().any(|p| p.coords().len() != ambient) {
        return Err(StpcaError::invalid("init ambient dimension mismatch"));
    }

    let r0 = problem.radius_mode.initial_radius();
    let joint = matches!(problem.radius_mode, RadiusMode::Joint(_));
    let gauged = gauge_fix(init)?;

    let initial_stress = {
        let z: Vec<DVector<f64>> = gauged.iter().map(|p| p.coords().clone()).collect();
        stress(&z, r0, &problem.torus_distances)?
    };

    // Variable layout: [u] ++ z_2 .. z_n ++ [t if joint], with
    // z_1 = (0,...,0,exp(u)) and r = exp(t).
    let nvars = 1 + (n - 1) * ambient + usize::from(joint);
    let mut x0 = DVector::zeros(nvars);
    x0[0] = gauged[0].radius().ln();
    for i in 1..n {
        for k in 0..ambient {
            x0[1 + (i - 1) * ambient + k] = gauged[i].coords()[k];
        }
    }
    if joint {
        x0[nvars - 1] = r0.ln();
    }

    let dmat = &problem.torus_distances;
    let unpack = |x: &DVector<f64>| -> (Vec<DVector<f64>>, f64) {
        let mut z = Vec::with_capacity(n);
        let mut z1 = DVector::zeros(ambient);
        z1[ambient - 1] = x[0].exp();
        z.push(z1);
        for i in 1..n {
            z.push(DVector::from_iterator(
                ambient,
                (0..ambient).map(|k| x[1 + (i - 1) * ambient + k]),
            ));
        }
        let r = if joint { x[nvars - 1].exp() } else { r0 };
        (z, r)
    };

    let objective = |x: &DVector<f64>, g: &mut DVector<f64>| -> f64 {
        let (z, r) = unpack(x);
        if z.iter().any(|zi| zi.norm() < 1e-12) {
            g.fill(0.0);
            return f64::INFINITY; // line search will backtrack
        }
        let value = stress(&z, r, dmat).expect("validated shapes");
        let (grads, grad_r) = stress_gradient(&z, r, dmat, joint).expect("validated shapes");
        g[0] = grads[0][ambient - 1] * z[0][ambient - 1]; // chain rule through exp(u)
        for i in 1..n {
            for k in 0..ambient {
                g[1 + (i - 1) * ambient + k] = grads[i][k];
            }
        }
        if joint {
            g[nvars - 1] = grad_r.unwrap() * r;
        }
        value
    };

    let bfgs_cfg = BfgsConfig {
        rel_tol: cfg.tolerance,
        max_evals: cfg.max_evals.unwrap_or(500 * n * ambient),
        grad_tol: 1e-10,
    };
    let result = optim::minimize(objective, x0, &bfgs_cfg).map_err(|e| {
        StpcaError::numerical("smds", format!("optimizer failed: {e}"))
    })?;

    let (z, r_hat) = unpack(&result.x);
    let configuration: Vec<SpherePoint> = z
        .iter()
        .map(|zi| SpherePoint::project(zi.clone(), r_hat))
        .collect::<Result<_>>()?;
    // Stress is invariant to per-point rescaling, so recomputing it on the
    // projected points reports the honest value for what is returned.
    let zp: Vec<DVector<f64>> = configuration.iter().map(|p| p.coords().clone()).collect();
    let final_stress = stress(&zp, r_hat, dmat)?;

    Ok(SmdsSolution {
        configuration,
        fitted_radius: r_hat,
        stress: final_stress,
        iterations: result.iterations,
        evaluations: result.evaluations,
        converged: result.converged,
        initial_radius: r0,
        initial_stress,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{pairwise_sphere_distances, pairwise_torus_distances, SourceSpace};
    use crate::geometry::{sample_uniform_sphere, sample_uniform_torus, wrap};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_config(seed: u64, n: usize, d: usize) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_uniform_sphere(n, d, 1.0, &mut rng)
            .unwrap()
            .iter()
            .map(|p| p.coords().clone())
            .collect()
    }

    #[test]
    fn stress_zero_on_exact_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let r = 1.4;
        let pts = sample_uniform_sphere(8, 2, r, &mut rng).unwrap();
        let d = pairwise_sphere_distances(&pts).unwrap();
        let z: Vec<DVector<f64>> = pts.iter().map(|p| p.coords().clone()).collect();
        assert!(stress(&z, r, &d).unwrap() < 1e-20);
    }

    #[test]
    fn stress_two_point_closed_form() {
        let mut entries = DMatrix::zeros(2, 2);
        entries[(0, 1)] = 1.0;
        entries[(1, 0)] = 1.0;
        let d = DistanceMatrix::new(entries, SourceSpace::Generic).unwrap();
        let at_angle = |a: f64| {
            vec![
                DVector::from_vec(vec![0.0, 1.0]),
                DVector::from_vec(vec![a.sin(), a.cos()]),
            ]
        };
        assert_abs_diff_eq!(stress(&at_angle(1.0), 1.0, &d).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            stress(&at_angle(0.5), 1.0, &d).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn stress_matches_naive_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let pts = sample_uniform_torus(20, 2, &mut rng).unwrap();
        let d = pairwise_torus_distances(&pts).unwrap();
        let z = unit_config(104, 20, 2);
        let r = 1.3;

        let mut naive = 0.0;
        for i in 0..20 {
            for j in 0..20 {
                if i != j {
                    let c = (z[i].dot(&z[j]) / (z[i].norm() * z[j].norm()))
                        .clamp(-COS_CLAMP, COS_CLAMP);
                    let e = d.get(i, j) - r * c.acos();
                    naive += e * e;
                }
            }
        }
        naive /= (20 * 19) as f64;
        assert_abs_diff_eq!(stress(&z, r, &d).unwrap(), naive, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(105);
        let pts = sample_uniform_torus(10, 2, &mut rng).unwrap();
        let d = pairwise_torus_distances(&pts).unwrap();
        let z = unit_config(106, 10, 2);
        let r = 1.2;
        let (grads, grad_r) = stress_gradient(&z, r, &d, true).unwrap();

        let h = 1e-6;
        for i in 0..10 {
            for k in 0..3 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i][k] += h;
                zm[i][k] -= h;
                let fd = (stress(&zp, r, &d).unwrap() - stress(&zm, r, &d).unwrap()) / (2.0 * h);
                let g = grads[i][k];
                let denom = fd.abs().max(g.abs()).max(1e-8);
                assert!(
                    (fd - g).abs() / denom < 1e-5,
                    "i={i} k={k}: fd={fd} analytic={g}"
                );
            }
        }
        let fd_r =
            (stress(&z, r + h, &d).unwrap() - stress(&z, r - h, &d).unwrap()) / (2.0 * h);
        let gr = grad_r.unwrap();
        assert!((fd_r - gr).abs() / fd_r.abs().max(gr.abs()).max(1e-8) < 1e-5);
    }

    #[test]
    fn gradient_vanishes_at_zero_stress_and_radially() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let r = 1.1;
        let pts = sample_uniform_sphere(8, 2, r, &mut rng).unwrap();
        let d = pairwise_sphere_distances(&pts).unwrap();
        let z: Vec<DVector<f64>> = pts.iter().map(|p| p.coords().clone()).collect();
        let (grads, _) = stress_gradient(&z, r, &d, false).unwrap();
        let total: f64 = grads.iter().map(|g| g.norm_squared()).sum();
        assert!(total.sqrt() <= 1e-8);

        // Radial directional derivative is zero: stress depends on directions only.
        let pts = sample_uniform_torus(8, 2, &mut rng).unwrap();
        let d = pairwise_torus_distances(&pts).unwrap();
        let z = unit_config(108, 8, 2);
        let (grads, _) = stress_gradient(&z, 1.0, &d, false).unwrap();
        for i in 0..8 {
            assert!(grads[i].dot(&z[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn stress_rotation_and_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(109);
        let pts = sample_uniform_torus(12, 2, &mut rng).unwrap();
        let d = pairwise_torus_distances(&pts).unwrap();
        let z = unit_config(110, 12, 2);
        let base = stress(&z, 1.3, &d).unwrap();

        // Rotation invariance.
        let v = sample_uniform_sphere(1, 2, 1.0, &mut rng).unwrap()[0]
            .coords()
            .clone();
        let rot = rotation_to_north_pole(&v).unwrap();
        let zr: Vec<DVector<f64>> = z.iter().map(|zi| rot.apply(zi)).collect();
        assert_abs_diff_eq!(stress(&zr, 1.3, &d).unwrap(), base, epsilon = 1e-12);

        // Per-point scale invariance.
        let zs: Vec<DVector<f64>> = z
            .iter()
            .enumerate()
            .map(|(i, zi)| zi * (0.5 + i as f64 * 0.3))
            .collect();
        assert_abs_diff_eq!(stress(&zs, 1.3, &d).unwrap(), base, epsilon = 1e-12);
    }

    #[test]
    fn gauge_fix_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(111);
        let r = 2.0;
        let pts = sample_uniform_sphere(10, 2, r, &mut rng).unwrap();
        let gauged = gauge_fix(&pts).unwrap();
        let mut pole = DVector::zeros(3);
        pole[2] = r;
        assert!((gauged[0].coords() - pole).norm() < 1e-9);
        for i in 0..10 {
            for j in 0..10 {
                let before = crate::geometry::sphere_distance(&pts[i], &pts[j]).unwrap();
                let after = crate::geometry::sphere_distance(&gauged[i], &gauged[j]).unwrap();
                assert_abs_diff_eq!(before, after, epsilon = 1e-10);
            }
        }
        // Already at the pole: unchanged.
        let again = gauge_fix(&gauged).unwrap();
        for (a, b) in again.iter().zip(&gauged) {
            assert!((a.coords() - b.coords()).norm() < 1e-9);
        }
    }

    #[test]
    fn solve_smds_circle_data_is_exact() {
        // T^1 is isometric to S^1 at radius 1, so 5 points embed exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        let pts = sample_uniform_torus(5, 1, &mut rng).unwrap();
        let d = pairwise_torus_distances(&pts).unwrap();
        let problem = StressProblem::new(d.clone(), 1, RadiusMode::Fixed(1.0)).unwrap();
        let init = crate::embedding::mds_sphere_init(&d, 2, 1.0).unwrap();
        let sol = solve_smds(
            &problem,
            &init,
            &SmdsConfig {
                tolerance: 1e-10,
                max_evals: Some(100_000),
            },
        )
        .unwrap();
        assert!(sol.stress <= 1e-6, "stress = {}", sol.stress);
    }

    #[test]
    fn solve_smds_monotone_and_gauged() {
        let mut rng = ChaCha8Rng::seed_from_u64(115);
        let pts = sample_uniform_torus(25, 2, &mut rng).unwrap();
        let d = pairwise_torus_distances(&pts).unwrap();
        let problem = StressProblem::new(d.clone(), 2, RadiusMode::Joint(2.0_f64.sqrt())).unwrap();
        let init = crate::embedding::mds_sphere_init(&d, 3, 2.0_f64.sqrt()).unwrap();
        let sol = solve_smds(&problem, &init, &SmdsConfig::default()).unwrap();
        assert!(sol.stress <= sol.initial_stress + 1e-12);
        // Gauge: first point exactly on the positive last axis.
        let c = sol.configuration[0].coords();
        assert_eq!(c[0], 0.0);
        assert_eq!(c[1], 0.0);
        assert!((c[2] - sol.fitted_radius).abs() < 1e-12);
        // Reported stress matches recomputation from the configuration.
        let z: Vec<DVector<f64>> = sol
            .configuration
            .iter()
            .map(|p| p.coords().clone())
            .collect();
        let recomputed = stress(&z, sol.fitted_radius, &d).unwrap();
        assert!((recomputed - sol.stress).abs() <= 1e-10 * recomputed.max(1e-30));
    }

    #[test]
    fn joint_mode_recovers_embeddable_radius() {
        // Distances generated on a sphere of radius rho; joint SMDS should
        // come back close to rho.
        let rho = 1.6;
        let mut rng = ChaCha8Rng::seed_from_u64(117);
        let pts = sample_uniform_sphere(30, 2, rho, &mut rng).unwrap();
        let d = pairwise_sphere_distances(&pts).unwrap();
        let problem = StressProblem::new(d.clone(), 2, RadiusMode::Joint(1.0)).unwrap();
        let init = crate::embedding::mds_sphere_init(&d, 3, 1.0).unwrap();
        let sol = solve_smds(
            &problem,
            &init,
            &SmdsConfig {
                tolerance: 1e-9,
                max_evals: Some(200_000),
            },
        )
        .unwrap();
        assert!(
            (sol.fitted_radius - rho).abs() < 0.05,
            "r_hat = {}",
            sol.fitted_radius
        );
    }

    #[test]
    fn rotation_equivariant_solutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(119);
        let pts = sample_uniform_torus(15, 2, &mut rng).unwrap();
        let d = pairwise_torus_distances(&pts).unwrap();
        let problem = StressProblem::new(d.clone(), 2, RadiusMode::Fixed(1.4)).unwrap();
        let init = crate::embedding::mds_sphere_init(&d, 3, 1.4).unwrap();

        let v = sample_uniform_sphere(1, 2, 1.0, &mut rng).unwrap()[0]
            .coords()
            .clone();
        let rot = rotation_to_north_pole(&v).unwrap();
        let rotated_init: Vec<SpherePoint> = init
            .iter()
            .map(|p| SpherePoint::project(rot.apply(p.coords()), 1.4).unwrap())
            .collect();

        let cfg = SmdsConfig {
            tolerance: 1e-10,
            max_evals: Some(200_000),
        };
        let a = solve_smds(&problem, &init, &cfg).unwrap();
        let b = solve_smds(&problem, &rotated_init, &cfg).unwrap();
        // Gauged solutions from rotated inits agree within optimizer tolerance.
        assert!((a.stress - b.stress).abs() < 1e-6);
    }

    #[test]
    fn stress_rejects_origin_point() {
        let mut entries = DMatrix::zeros(2, 2);
        entries[(0, 1)] = 1.0;
        entries[(1, 0)] = 1.0;
        let d = DistanceMatrix::new(entries, SourceSpace::Generic).unwrap();
        let z = vec![DVector::zeros(2), DVector::from_vec(vec![0.0, 1.0])];
        assert!(stress(&z, 1.0, &d).is_err());
    }

    #[test]
    fn smds_requires_enough_points() {
        let pts = vec![
            wrap(&[0.0, 0.0]).unwrap(),
            wrap(&[1.0, 0.0]).unwrap(),
            wrap(&[0.0, 1.0]).unwrap(),
        ];
        let d = pairwise_torus_distances(&pts).unwrap();
        assert!(StressProblem::new(d, 2, RadiusMode::Fixed(1.0)).is_err());
    }

    #[test]
    fn proptest_like_metric_and_invariance_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(121);
        for _ in 0..50 {
            let pts = sample_uniform_torus(6, 2, &mut rng).unwrap();
            let d = pairwise_torus_distances(&pts).unwrap();
            let z = unit_config(rng.gen(), 6, 2);
            let r = rng.gen_range(0.5..2.0);
            let s1 = stress(&z, r, &d).unwrap();
            let c = rng.gen_range(0.1..10.0);
            let zs: Vec<DVector<f64>> = z.iter().map(|zi| zi * c).collect();
            let s2 = stress(&zs, r, &d).unwrap();
            assert!((s1 - s2).abs() <= 1e-12 * s1.max(1.0));
        }
    }
}
