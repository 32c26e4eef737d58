//! Principal nested spheres on the unit sphere: fit the nested sequence
//! `S^{d-1} ⊃ ... ⊃ S^1 ⊃ {mean}` of best-fitting (possibly small)
//! subspheres, compute signed scores, and expose the forward/inverse maps
//! between the sphere and the score space `E = [-pi, pi) x [-pi/2, pi/2]^{d-1}`.

use crate::error::{Result, StpcaError};
use crate::exec::map_indexed;
use crate::geometry::{
    frechet_mean_circle, rotation_to_north_pole, signed_circle_diff, unit_sphere_distance,
    RotationToPole,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// A (possibly small) subsphere of `S^k`: the locus at geodesic distance
/// `geodesic_radius` from the unit center. Normalized so the radius is at
/// most pi/2 (the antipodal representation is flipped away).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Subsphere {
    pub center: DVector<f64>,
    pub geodesic_radius: f64,
    /// Dimension of the ambient nested sphere at this step.
    pub level: usize,
}

/// One step of the nested fit, with the rotation taking the center to the
/// pole kept so the inverse map can be reconstructed exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PnsLevel {
    pub subsphere: Subsphere,
    pub rotation: RotationToPole,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceTable {
    pub variances: Vec<f64>,
    pub proportions: Vec<f64>,
    pub degenerate: bool,
}

/// Fitted PNS model on the unit d-sphere.
///
/// Scores are stored with column 0 the angle deviation from the backwards
/// mean on the final circle, and later columns the signed subsphere residuals
/// ordered from the innermost fit outward (column d-1 is the residual of the
/// first, outermost fit). Residuals are unscaled angular deviations; the
/// cumulative `sin(r_k)` factors are available from the levels for users who
/// want ambient arc lengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PnsModel {
    pub dim: usize,
    /// Fits from the ambient `S^d` down to `S^2` (length `d - 1`).
    pub levels: Vec<PnsLevel>,
    /// Backwards mean as an angle on the final circle.
    pub mean_angle: f64,
    /// Backwards mean lifted to the unit d-sphere.
    pub backwards_mean: DVector<f64>,
    /// n x d score matrix.
    pub scores: DMatrix<f64>,
    pub sphere_variances: VarianceTable,
}

const DEGENERATE_SIN: f64 = 1e-6;

fn colatitude(center: &DVector<f64>, y: &DVector<f64>) -> f64 {
    center.dot(y).clamp(-1.0, 1.0).acos()
}

/// Least-squares subsphere fit: minimizes `sum_i (arccos(v'y_i) - rho)^2`
/// by alternating a closed-form rho step with a backtracking projected
/// gradient step in v. Initialized from the smallest-eigenvalue direction of
/// the second-moment matrix (both signs tried).
pub fn fit_subsphere(points: &[DVector<f64>]) -> Result<Subsphere> {
    let n = points.len();
    if n == 0 {
        return Err(StpcaError::invalid("no points"));
    }
    let ambient = points[0].len();
    let k = ambient - 1; // ambient sphere dimension
    if n < k + 2 {
        return Err(StpcaError::invalid(format!(
            "need n >= k + 2 to fit a subsphere of S^{k} (n = {n})"
        )));
    }

    let objective = |v: &DVector<f64>| -> (f64, f64) {
        let mean_a = points.iter().map(|y| colatitude(v, y)).sum::<f64>() / n as f64;
        let obj = points
            .iter()
            .map(|y| {
                let e = colatitude(v, y) - mean_a;
                e * e
            })
            .sum();
        (obj, mean_a)
    };

    let gradient = |v: &DVector<f64>, mean_a: f64| -> DVector<f64> {
        let mut g = DVector::zeros(ambient);
        for y in points {
            let c = v.dot(y).clamp(-1.0, 1.0);
            let s = (1.0 - c * c).sqrt();
            if s < 1e-12 {
                continue;
            }
            let a = c.acos();
            g += y * (2.0 * (a - mean_a) * (-1.0 / s));
        }
        g
    };

    // Init: direction of least second moment, both signs.
    let mut moment = DMatrix::zeros(ambient, ambient);
    for y in points {
        moment += y * y.transpose();
    }
    let eig = moment.symmetric_eigen();
    let min_idx = (0..ambient)
        .min_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap())
        .unwrap();
    let v_plus: DVector<f64> = eig.eigenvectors.column(min_idx).into();
    let v_minus = -&v_plus;
    let mut v = if objective(&v_plus).0 <= objective(&v_minus).0 {
        v_plus
    } else {
        v_minus
    };

    let (mut obj, mut mean_a) = objective(&v);
    for _round in 0..200 {
        let g = gradient(&v, mean_a);
        // Project onto the tangent space at v, retract by normalization.
        let g_tan = &g - &v * v.dot(&g);
        let gnorm = g_tan.norm();
        if gnorm < 1e-14 {
            break;
        }
        let mut step = 1.0 / gnorm.max(1.0);
        let mut improved = false;
        for _ in 0..60 {
            let cand_raw = &v - &g_tan * step;
            let cand = &cand_raw / cand_raw.norm();
            let (cand_obj, cand_mean) = objective(&cand);
            if cand_obj < obj {
                let rel = (obj - cand_obj) / obj.max(1e-300);
                v = cand;
                obj = cand_obj;
                mean_a = cand_mean;
                improved = true;
                if rel < 1e-10 {
                    return Ok(normalize_subsphere(v, mean_a, k));
                }
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(normalize_subsphere(v, mean_a, k))
}

/// Flips the antipodal representation `(-v, pi - rho)` onto `rho <= pi/2`.
fn normalize_subsphere(v: DVector<f64>, rho: f64, level: usize) -> Subsphere {
    if rho > FRAC_PI_2 {
        Subsphere {
            center: -v,
            geodesic_radius: PI - rho,
            level,
        }
    } else {
        Subsphere {
            center: v,
            geodesic_radius: rho,
            level,
        }
    }
}

/// Projects a unit point onto the subsphere along the great circle through
/// the center, returning the projection and the signed geodesic residual
/// (positive when farther from the center than the subsphere).
pub fn project_to_subsphere(y: &DVector<f64>, s: &Subsphere) -> (DVector<f64>, f64) {
    let v = &s.center;
    let c = v.dot(y).clamp(-1.0, 1.0);
    let a = c.acos();
    // Norm of the orthogonal component rather than sqrt(1 - c^2): stable
    // when y is close to +/- v.
    let ortho = y - v * c;
    let sin_a = ortho.norm();
    if sin_a < 1e-12 {
        // y at +/- v: no unique meridian. Project to a fixed meridian point
        // and report the (positive) distance to the subsphere.
        let u = fixed_orthogonal_direction(v);
        let proj = v * s.geodesic_radius.cos() + u * s.geodesic_radius.sin();
        let residual = (a - s.geodesic_radius).abs();
        return (proj, residual);
    }
    let u = ortho / sin_a;
    let proj = v * s.geodesic_radius.cos() + u * s.geodesic_radius.sin();
    (proj, a - s.geodesic_radius)
}

/// A deterministic unit direction orthogonal to `v`.
fn fixed_orthogonal_direction(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let idx = (0..n)
        .min_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap())
        .unwrap();
    let mut e = DVector::zeros(n);
    e[idx] = 1.0;
    let u = &e - v * v[idx];
    &u / u.norm()
}

/// Drops points on a fitted subsphere of `S^k` down to the unit `S^{k-1}`:
/// rotate the center to the pole, strip the last coordinate, and rescale by
/// `1/sin(r_k)`.
pub fn descend(points: &[DVector<f64>], level: &PnsLevel) -> Result<Vec<DVector<f64>>> {
    let r_k = level.subsphere.geodesic_radius;
    if r_k.sin() < DEGENERATE_SIN {
        return Err(StpcaError::numerical(
            "pns",
            "degenerate subsphere: data concentrated at a point",
        ));
    }
    let sin_rk = r_k.sin();
    points
        .iter()
        .map(|y| {
            let (proj, _) = project_to_subsphere(y, &level.subsphere);
            let rotated = level.rotation.apply(&proj);
            let k = rotated.len() - 1;
            let mut w = DVector::from_iterator(k, (0..k).map(|i| rotated[i] / sin_rk));
            let norm = w.norm();
            if norm < 1e-12 {
                return Err(StpcaError::numerical("pns", "descended point vanished"));
            }
            w /= norm;
            Ok(w)
        })
        .collect()
}

/// Fits the full nested sequence to unit-sphere data and assembles the model.
pub fn fit_pns(points: &[DVector<f64>]) -> Result<PnsModel> {
    let n = points.len();
    if n == 0 {
        return Err(StpcaError::invalid("no points"));
    }
    let ambient = points[0].len();
    let d = ambient - 1;
    if d < 1 {
        return Err(StpcaError::invalid("need points on at least S^1"));
    }
    if n < d + 2 {
        return Err(StpcaError::invalid(format!(
            "need n >= d + 2 (n = {n}, d = {d})"
        )));
    }
    if points
        .iter()
        .any(|p| p.len() != ambient || (p.norm() - 1.0).abs() > 1e-6)
    {
        return Err(StpcaError::invalid("points must be unit vectors"));
    }
    let mut current: Vec<DVector<f64>> = points
        .iter()
        .map(|p| p / p.norm())
        .collect();

    let mut scores = DMatrix::zeros(n, d);
    let mut levels: Vec<PnsLevel> = Vec::with_capacity(d.saturating_sub(1));

    // Levels from the ambient S^d down to S^2; each fit writes the residual
    // column d-1, d-2, ..., 1.
    for step in 0..d.saturating_sub(1) {
        let sub = fit_subsphere(&current)?;
        let rotation = rotation_to_north_pole(&sub.center)?;
        let level = PnsLevel {
            subsphere: sub,
            rotation,
        };
        let col = d - 1 - step;
        for (i, y) in current.iter().enumerate() {
            let (_, residual) = project_to_subsphere(y, &level.subsphere);
            scores[(i, col)] = residual.clamp(-FRAC_PI_2, FRAC_PI_2);
        }
        current = descend(&current, &level)?;
        levels.push(level);
    }

    // Final circle: angles, backwards mean, first score column.
    let angles: Vec<f64> = current.iter().map(|w| w[1].atan2(w[0])).collect();
    let mean_angle = frechet_mean_circle(&angles, None)?;
    for (i, &a) in angles.iter().enumerate() {
        scores[(i, 0)] = signed_circle_diff(a, mean_angle);
    }

    let mut model = PnsModel {
        dim: d,
        levels,
        mean_angle,
        backwards_mean: DVector::zeros(ambient),
        scores,
        sphere_variances: VarianceTable {
            variances: vec![],
            proportions: vec![],
            degenerate: true,
        },
    };
    model.backwards_mean = pns_inverse(&vec![0.0; d], &model)?;
    model.sphere_variances = sphere_variance_decomposition(&model)?;
    Ok(model)
}

fn check_score_ranges(xi: &[f64], d: usize) -> Result<()> {
    if xi.len() != d {
        return Err(StpcaError::invalid("score dimension mismatch"));
    }
    if !(-PI..PI).contains(&xi[0]) {
        return Err(StpcaError::invalid("first score outside [-pi, pi)"));
    }
    let tol = 1e-12;
    if xi[1..]
        .iter()
        .any(|&x| x < -FRAC_PI_2 - tol || x > FRAC_PI_2 + tol)
    {
        return Err(StpcaError::invalid("score outside [-pi/2, pi/2]"));
    }
    Ok(())
}

/// Inverse score map: composes the per-level reconstructions from the final
/// circle outward. `xi = 0` returns the backwards mean.
pub fn pns_inverse(xi: &[f64], model: &PnsModel) -> Result<DVector<f64>> {
    check_score_ranges(xi, model.dim)?;
    let angle = model.mean_angle + xi[0];
    let mut w = DVector::from_vec(vec![angle.cos(), angle.sin()]);
    // levels[step] wrote score column d-1-step; invert innermost first.
    for step in (0..model.levels.len()).rev() {
        let level = &model.levels[step];
        let xi_k = xi[model.dim - 1 - step];
        let r_k = level.subsphere.geodesic_radius;
        let colat = r_k + xi_k;
        let k = w.len();
        let mut lifted = DVector::zeros(k + 1);
        for i in 0..k {
            lifted[i] = colat.sin() * w[i];
        }
        lifted[k] = colat.cos();
        w = level.rotation.apply_inverse(&lifted);
        let norm = w.norm();
        w /= norm;
    }
    Ok(w)
}

/// Forward score map for an arbitrary unit point on the ambient sphere.
pub fn pns_scores(y: &DVector<f64>, model: &PnsModel) -> Result<Vec<f64>> {
    if y.len() != model.dim + 1 {
        return Err(StpcaError::invalid("point dimension mismatch"));
    }
    let mut cur = y / y.norm();
    let mut xi = vec![0.0; model.dim];
    for (step, level) in model.levels.iter().enumerate() {
        let (_, residual) = project_to_subsphere(&cur, &level.subsphere);
        xi[model.dim - 1 - step] = residual.clamp(-FRAC_PI_2, FRAC_PI_2);
        cur = descend(std::slice::from_ref(&cur), level)?.pop().unwrap();
    }
    let angle = cur[1].atan2(cur[0]);
    xi[0] = signed_circle_diff(angle, model.mean_angle);
    Ok(xi)
}

/// Per-level variance decomposition: `var_k = sum_i dist(yhat_i^{(k-1)},
/// yhat_i^{(k)})^2` with the level-k projection reconstructed from the first
/// k scores.
pub fn sphere_variance_decomposition(model: &PnsModel) -> Result<VarianceTable> {
    let n = model.scores.nrows();
    let d = model.dim;
    let projections: Vec<Vec<DVector<f64>>> = map_indexed(n, |i| {
        let mut per_level = Vec::with_capacity(d + 1);
        for k in 0..=d {
            let mut xi: Vec<f64> = (0..d).map(|c| model.scores[(i, c)]).collect();
            for c in k..d {
                xi[c] = 0.0;
            }
            per_level.push(pns_inverse(&xi, model).expect("scores in range"));
        }
        per_level
    });
    let mut variances = vec![0.0; d];
    for per_level in &projections {
        for k in 1..=d {
            let dist = unit_sphere_distance(&per_level[k - 1], &per_level[k]);
            variances[k - 1] += dist * dist;
        }
    }
    let total: f64 = variances.iter().sum();
    let degenerate = total <= 0.0;
    let proportions = if degenerate {
        vec![0.0; d]
    } else {
        variances.iter().map(|v| v / total).collect()
    };
    Ok(VarianceTable {
        variances,
        proportions,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_uniform_sphere;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circle_points(v: &DVector<f64>, rho: f64, n: usize, seed: u64) -> Vec<DVector<f64>> {
        // Points exactly on the small circle at colatitude rho around v.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rot = rotation_to_north_pole(v).unwrap();
        (0..n)
            .map(|_| {
                let t: f64 = rng.gen_range(-PI..PI);
                let p = DVector::from_vec(vec![
                    rho.sin() * t.cos(),
                    rho.sin() * t.sin(),
                    rho.cos(),
                ]);
                rot.apply_inverse(&p)
            })
            .collect()
    }

    #[test]
    fn fit_subsphere_exact_circle() {
        let v = DVector::from_vec(vec![0.3, -0.5, 0.81]).normalize();
        let pts = circle_points(&v, 0.7, 25, 301);
        let sub = fit_subsphere(&pts).unwrap();
        assert!(unit_sphere_distance(&sub.center, &v) < 1e-4);
        assert!((sub.geodesic_radius - 0.7).abs() < 1e-4);
    }

    #[test]
    fn fit_subsphere_great_circle() {
        let v = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let pts = circle_points(&v, FRAC_PI_2, 25, 303);
        let sub = fit_subsphere(&pts).unwrap();
        assert!((sub.geodesic_radius - FRAC_PI_2).abs() < 1e-4);
    }

    #[test]
    fn fit_subsphere_beats_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(305);
        let v = DVector::from_vec(vec![0.1, 0.7, 0.8]).normalize();
        let mut pts = circle_points(&v, 0.9, 40, 307);
        // Perturb the points slightly off the circle.
        for p in pts.iter_mut() {
            let noise = DVector::from_fn(3, |_, _| rng.gen_range(-0.05..0.05));
            *p = (&*p + noise).normalize();
        }
        let sub = fit_subsphere(&pts).unwrap();
        let objective = |v: &DVector<f64>, rho: f64| -> f64 {
            pts.iter()
                .map(|y| {
                    let e = colatitude(v, y) - rho;
                    e * e
                })
                .sum()
        };
        let base = objective(&sub.center, sub.geodesic_radius);
        for _ in 0..1000 {
            let probe_v = sample_uniform_sphere(1, 2, 1.0, &mut rng).unwrap()[0]
                .coords()
                .clone();
            let probe_rho = rng.gen_range(0.01..PI - 0.01);
            assert!(base <= objective(&probe_v, probe_rho) + 1e-9);
        }
    }

    #[test]
    fn projection_examples() {
        let v = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let sub = Subsphere {
            center: v.clone(),
            geodesic_radius: FRAC_PI_2,
            level: 2,
        };
        // Point at colatitude pi/3 on a meridian.
        let y = DVector::from_vec(vec![(PI / 3.0).sin(), 0.0, (PI / 3.0).cos()]);
        let (proj, res) = project_to_subsphere(&y, &sub);
        assert_abs_diff_eq!(res, PI / 3.0 - FRAC_PI_2, epsilon = 1e-12);
        assert!((proj - DVector::from_vec(vec![1.0, 0.0, 0.0])).norm() < 1e-12);

        // Point on the subsphere projects to itself.
        let on = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let (proj, res) = project_to_subsphere(&on, &sub);
        assert!((proj - on).norm() < 1e-12);
        assert_abs_diff_eq!(res, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_is_nearest_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(311);
        let v = DVector::from_vec(vec![0.2, 0.4, 0.89]).normalize();
        let sub = Subsphere {
            center: v.clone(),
            geodesic_radius: 0.8,
            level: 2,
        };
        let y = sample_uniform_sphere(1, 2, 1.0, &mut rng).unwrap()[0]
            .coords()
            .clone();
        let (proj, _) = project_to_subsphere(&y, &sub);
        let base = unit_sphere_distance(&y, &proj);
        let rot = rotation_to_north_pole(&v).unwrap();
        for _ in 0..1000 {
            let t: f64 = rng.gen_range(-PI..PI);
            let p = DVector::from_vec(vec![
                0.8_f64.sin() * t.cos(),
                0.8_f64.sin() * t.sin(),
                0.8_f64.cos(),
            ]);
            let q = rot.apply_inverse(&p);
            assert!(base <= unit_sphere_distance(&y, &q) + 1e-9);
        }
    }

    #[test]
    fn descend_scaled_isometry_on_subsphere() {
        let v = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let sub = fit_subsphere(&circle_points(&v, 0.6, 20, 313)).unwrap();
        let rotation = rotation_to_north_pole(&sub.center).unwrap();
        let level = PnsLevel {
            subsphere: sub,
            rotation,
        };
        let pts = circle_points(&v, 0.6, 10, 317);
        let down = descend(&pts, &level).unwrap();
        let sin_rk = level.subsphere.geodesic_radius.sin();
        for i in 0..10 {
            assert!((down[i].norm() - 1.0).abs() < 1e-9);
            for j in 0..10 {
                // Chordal distances scale exactly by sin(r_k) on the subsphere.
                let before = {
                    let (pi_, _) = project_to_subsphere(&pts[i], &level.subsphere);
                    let (pj_, _) = project_to_subsphere(&pts[j], &level.subsphere);
                    (pi_ - pj_).norm()
                };
                let after = (&down[i] - &down[j]).norm();
                assert_abs_diff_eq!(before, after * sin_rk, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn fit_pns_circle_data_full_first_component() {
        let v = DVector::from_vec(vec![0.4, -0.2, 0.89]).normalize();
        let pts = circle_points(&v, 0.7, 30, 319);
        let model = fit_pns(&pts).unwrap();
        assert!(
            model.sphere_variances.proportions[0] > 1.0 - 1e-6,
            "proportions = {:?}",
            model.sphere_variances.proportions
        );
        assert!(model.sphere_variances.variances[1] < 1e-6);
    }

    #[test]
    fn scores_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(321);
        let pts: Vec<DVector<f64>> = sample_uniform_sphere(25, 3, 1.0, &mut rng)
            .unwrap()
            .iter()
            .map(|p| p.coords().clone())
            .collect();
        let model = fit_pns(&pts).unwrap();
        for (i, y) in pts.iter().enumerate() {
            let xi: Vec<f64> = (0..model.dim).map(|c| model.scores[(i, c)]).collect();
            let back = pns_inverse(&xi, &model).unwrap();
            assert!(
                unit_sphere_distance(&back, y) < 1e-8,
                "round trip failed for point {i}: dist = {}",
                unit_sphere_distance(&back, y)
            );
            // Forward map of the data point reproduces the stored scores.
            let fwd = pns_scores(y, &model).unwrap();
            for c in 0..model.dim {
                assert_abs_diff_eq!(fwd[c], xi[c], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn inverse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(323);
        let pts: Vec<DVector<f64>> = sample_uniform_sphere(20, 2, 1.0, &mut rng)
            .unwrap()
            .iter()
            .map(|p| p.coords().clone())
            .collect();
        let model = fit_pns(&pts).unwrap();

        // Zero scores give the backwards mean.
        let mu = pns_inverse(&vec![0.0, 0.0], &model).unwrap();
        assert!((mu - &model.backwards_mean).norm() < 1e-12);

        // A sweep over the first score traces the fitted level-1 circle.
        let level = &model.levels[0];
        for j in 0..50 {
            let xi1 = -PI + (2.0 * PI) * j as f64 / 50.0;
            let p = pns_inverse(&[xi1, 0.0], &model).unwrap();
            let colat = colatitude(&level.subsphere.center, &p);
            assert!((colat - level.subsphere.geodesic_radius).abs() < 1e-8);
            assert!((p.norm() - 1.0).abs() < 1e-9);
        }

        // Out-of-range scores are rejected.
        assert!(pns_inverse(&[0.0, 2.0], &model).is_err());
        assert!(pns_inverse(&[4.0, 0.0], &model).is_err());
    }

    #[test]
    fn nesting_property() {
        // Images with trailing zero scores lie on the corresponding level.
        let mut rng = ChaCha8Rng::seed_from_u64(325);
        let pts: Vec<DVector<f64>> = sample_uniform_sphere(30, 3, 1.0, &mut rng)
            .unwrap()
            .iter()
            .map(|p| p.coords().clone())
            .collect();
        let model = fit_pns(&pts).unwrap();
        let outer = &model.levels[0];
        for _ in 0..100 {
            let xi = [
                rng.gen_range(-PI..PI),
                rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
                0.0,
            ];
            let p = pns_inverse(&xi, &model).unwrap();
            let colat = colatitude(&outer.subsphere.center, &p);
            assert!((colat - outer.subsphere.geodesic_radius).abs() < 1e-8);
        }
    }

    #[test]
    fn variance_proportions_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(327);
        let pts: Vec<DVector<f64>> = sample_uniform_sphere(20, 2, 1.0, &mut rng)
            .unwrap()
            .iter()
            .map(|p| p.coords().clone())
            .collect();
        let model = fit_pns(&pts).unwrap();
        let sum: f64 = model.sphere_variances.proportions.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(329);
        let v = DVector::from_vec(vec![0.3, 0.6, 0.74]).normalize();
        let mut pts = circle_points(&v, 0.8, 30, 331);
        for p in pts.iter_mut() {
            let noise = DVector::from_fn(3, |_, _| rng.gen_range(-0.08..0.08));
            *p = (&*p + noise).normalize();
        }
        let model_a = fit_pns(&pts).unwrap();

        let axis = sample_uniform_sphere(1, 2, 1.0, &mut rng).unwrap()[0]
            .coords()
            .clone();
        let rot = rotation_to_north_pole(&axis).unwrap();
        let rotated: Vec<DVector<f64>> = pts.iter().map(|p| rot.apply(p)).collect();
        let model_b = fit_pns(&rotated).unwrap();

        for k in 0..2 {
            let va = model_a.sphere_variances.variances[k];
            let vb = model_b.sphere_variances.variances[k];
            assert!(
                (va - vb).abs() <= 1e-6 * va.max(vb).max(1e-12),
                "variance {k}: {va} vs {vb}"
            );
        }
        // |scores| in column 1 agree up to a global sign.
        let n = pts.len();
        let mut same = 0;
        let mut flipped = 0;
        for i in 0..n {
            let a = model_a.scores[(i, 1)];
            let b = model_b.scores[(i, 1)];
            if (a - b).abs() < 1e-4 {
                same += 1;
            }
            if (a + b).abs() < 1e-4 {
                flipped += 1;
            }
        }
        assert!(same == n || flipped == n, "same = {same}, flipped = {flipped}");
    }

    #[test]
    fn score_ranges_respect_e() {
        let mut rng = ChaCha8Rng::seed_from_u64(333);
        let pts: Vec<DVector<f64>> = sample_uniform_sphere(40, 3, 1.0, &mut rng)
            .unwrap()
            .iter()
            .map(|p| p.coords().clone())
            .collect();
        let model = fit_pns(&pts).unwrap();
        for i in 0..40 {
            assert!((-PI..PI).contains(&model.scores[(i, 0)]));
            for c in 1..3 {
                let s = model.scores[(i, c)];
                assert!((-FRAC_PI_2..=FRAC_PI_2).contains(&s));
            }
        }
    }
}
