//! Prediction and interpolation maps between the fitted sphere configuration
//! and the torus, the principal curve they induce, and the torus variance
//! decomposition.
//!
//! Both maps minimize the same stress kernel as the embedding itself,
//! restricted to a single free point, so predictions are coherent with the
//! fit.

use crate::error::{Result, StpcaError};
use crate::exec::{map_indexed, tree_sum};
use crate::geometry::{
    signed_circle_diff, sphere_distance, torus_distance, SpherePoint, TorusPoint,
};
use crate::optim::{minimize, BfgsConfig};
use crate::pns::{pns_inverse, PnsModel};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const COS_CLAMP: f64 = 1.0 - 1e-12;

/// The fitted data: torus points and their embedded sphere images, index
/// aligned.
#[derive(Debug, Clone)]
pub struct PairedConfiguration {
    pub torus_points: Vec<TorusPoint>,
    pub sphere_points: Vec<SpherePoint>,
}

impl PairedConfiguration {
    pub fn new(torus_points: Vec<TorusPoint>, sphere_points: Vec<SpherePoint>) -> Result<Self> {
        if torus_points.is_empty() || torus_points.len() != sphere_points.len() {
            return Err(StpcaError::invalid(
                "paired configuration needs equal nonzero counts",
            ));
        }
        let d = torus_points[0].dim();
        if torus_points.iter().any(|p| p.dim() != d) {
            return Err(StpcaError::invalid("inconsistent torus dimensions"));
        }
        if sphere_points.iter().any(|p| p.coords().len() != d + 1) {
            return Err(StpcaError::invalid(
                "sphere points must live one dimension up from the torus",
            ));
        }
        let r = sphere_points[0].radius();
        if sphere_points
            .iter()
            .any(|p| (p.radius() - r).abs() > 1e-9 * r)
        {
            return Err(StpcaError::invalid("inconsistent sphere radii"));
        }
        Ok(PairedConfiguration {
            torus_points,
            sphere_points,
        })
    }

    pub fn n(&self) -> usize {
        self.torus_points.len()
    }

    pub fn dim(&self) -> usize {
        self.torus_points[0].dim()
    }

    pub fn radius(&self) -> f64 {
        self.sphere_points[0].radius()
    }
}

/// A prediction result: the torus point and the final kernel value there.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub point: TorusPoint,
    pub objective: f64,
    /// True when the supplied warm-start init produced the returned solution.
    pub warm_start_used: bool,
}

/// The principal curve: predictions of the level-1 sweep, with the grid,
/// per-sample objectives, and a closure flag. Consecutive samples are joined
/// by the per-coordinate shorter circular arc.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrincipalCurve {
    pub samples: Vec<TorusPoint>,
    pub grid: Vec<f64>,
    pub objectives: Vec<f64>,
    pub warm_start_used: Vec<bool>,
    pub closed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TorusVarianceTable {
    pub variances: Vec<f64>,
    pub proportions: Vec<f64>,
    pub degenerate: bool,
    /// Per-point predicted projections, outer index the point, inner the
    /// level k = 0..=d.
    pub projections: Vec<Vec<TorusPoint>>,
}

/// The shared kernel: mean squared mismatch between torus distances from `x`
/// to the fitted points and the given sphere distances. Writes the gradient
/// with respect to the d angles when a buffer is supplied. A wrapped
/// difference at the cut locus takes the + sign; a coincident pair
/// contributes zero gradient.
pub fn prediction_objective(
    angles: &DVector<f64>,
    paired: &PairedConfiguration,
    sphere_dists: &[f64],
    grad: Option<&mut DVector<f64>>,
) -> f64 {
    let n = paired.n();
    let d = paired.dim();
    let mut g = grad;
    if let Some(g) = g.as_deref_mut() {
        g.fill(0.0);
    }
    let mut terms = Vec::with_capacity(n);
    for (i, xi) in paired.torus_points.iter().enumerate() {
        let mut diffs = Vec::with_capacity(d);
        let mut sq = 0.0;
        for j in 0..d {
            let w = signed_circle_diff(angles[j], xi.angles()[j]);
            sq += w * w;
            diffs.push(w);
        }
        let dist = sq.sqrt();
        let e = dist - sphere_dists[i];
        terms.push(e * e);
        if let Some(g) = g.as_deref_mut() {
            if dist > 1e-12 {
                let scale = 2.0 * e / (dist * n as f64);
                for j in 0..d {
                    g[j] += scale * diffs[j];
                }
            }
        }
    }
    tree_sum(&terms) / n as f64
}

/// Solves the prediction problem: the torus point whose distances to the
/// fitted torus points best match the sphere distances from `y` to the
/// fitted embedding. Runs BFGS from the sample nearest to `y` on the sphere
/// plus three next-nearest restarts; a supplied init is tried first.
pub fn predict(
    y: &SpherePoint,
    paired: &PairedConfiguration,
    init: Option<&TorusPoint>,
) -> Result<Prediction> {
    let d = paired.dim();
    if y.coords().len() != d + 1 {
        return Err(StpcaError::invalid("prediction input dimension mismatch"));
    }
    let sphere_dists: Vec<f64> = paired
        .sphere_points
        .iter()
        .map(|p| sphere_distance(y, p))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..paired.n()).collect();
    order.sort_by(|&a, &b| sphere_dists[a].partial_cmp(&sphere_dists[b]).unwrap());
    let restarts = order.len().min(4);

    let mut inits: Vec<(DVector<f64>, bool)> = Vec::with_capacity(restarts + 1);
    if let Some(x0) = init {
        if x0.dim() != d {
            return Err(StpcaError::invalid("init dimension mismatch"));
        }
        inits.push((DVector::from_column_slice(x0.angles()), true));
    }
    for &idx in order.iter().take(restarts) {
        inits.push((
            DVector::from_column_slice(paired.torus_points[idx].angles()),
            false,
        ));
    }

    let cfg = BfgsConfig {
        rel_tol: 1e-12,
        max_evals: 500 * (d + 1),
        grad_tol: 1e-10,
    };
    let mut best: Option<Prediction> = None;
    for (x0, is_warm) in inits {
        let res = minimize(
            |x, g| prediction_objective(x, paired, &sphere_dists, Some(g)),
            x0,
            &cfg,
        )?;
        let better = match &best {
            None => true,
            Some(b) => res.value < b.objective,
        };
        if better {
            best = Some(Prediction {
                point: TorusPoint::new(res.x.iter().copied().collect())?,
                objective: res.value,
                warm_start_used: is_warm,
            });
        }
    }
    best.ok_or_else(|| StpcaError::numerical("predict", "no candidate solve succeeded"))
}

/// Solves the interpolation problem: the sphere point whose distances to the
/// fitted embedding best match the torus distances from `x` to the fitted
/// torus points. The free point is an unnormalized vector in `R^{d+1}` (the
/// kernel is scale invariant), initialized at the image of the nearest torus
/// sample.
pub fn interpolate(x: &TorusPoint, paired: &PairedConfiguration) -> Result<SpherePoint> {
    let d = paired.dim();
    if x.dim() != d {
        return Err(StpcaError::invalid("interpolation input dimension mismatch"));
    }
    let r = paired.radius();
    let torus_dists: Vec<f64> = paired
        .torus_points
        .iter()
        .map(|p| torus_distance(x, p))
        .collect::<Result<_>>()?;
    let n = paired.n();
    let units: Vec<DVector<f64>> = paired
        .sphere_points
        .iter()
        .map(|p| p.to_unit().coords().clone())
        .collect();

    let objective = |z: &DVector<f64>, g: &mut DVector<f64>| -> f64 {
        let znorm = z.norm();
        if znorm < 1e-12 {
            g.fill(0.0);
            return f64::INFINITY;
        }
        let u = z / znorm;
        g.fill(0.0);
        let mut terms = Vec::with_capacity(n);
        for (i, v) in units.iter().enumerate() {
            let c_raw = u.dot(v);
            let clamped = c_raw.abs() > COS_CLAMP;
            let c = c_raw.clamp(-COS_CLAMP, COS_CLAMP);
            let e = torus_dists[i] - r * c.acos();
            terms.push(e * e);
            if !clamped {
                let s = (1.0 - c * c).sqrt();
                let coeff = 2.0 * e / n as f64 * (-r) * (-1.0 / s);
                // d c / d z = (v - c u) / |z|
                g.axpy(coeff / znorm, &(v - &u * c), 1.0);
            }
        }
        tree_sum(&terms) / n as f64
    };

    let nearest = (0..n)
        .min_by(|&a, &b| torus_dists[a].partial_cmp(&torus_dists[b]).unwrap())
        .unwrap();
    let z0 = units[nearest].clone();
    let cfg = BfgsConfig {
        rel_tol: 1e-12,
        max_evals: 500 * (d + 2),
        grad_tol: 1e-10,
    };
    let res = minimize(objective, z0, &cfg)?;
    SpherePoint::project(res.x, r)
}

/// Lifts a unit sphere point to the fitted radius.
fn lift(unit: &DVector<f64>, r: f64) -> Result<SpherePoint> {
    SpherePoint::project(unit.clone(), r)
}

/// Builds the principal curve: sweeps the first score over an equispaced
/// grid in `[-pi, pi)`, maps each grid point through the nested-sphere
/// inverse and the prediction map, warm starting each solve at the previous
/// sample. Logs a warning when consecutive samples jump farther than
/// `sqrt(d) * pi / 4`.
pub fn principal_curve(
    model: &PnsModel,
    paired: &PairedConfiguration,
    m: usize,
) -> Result<PrincipalCurve> {
    if m < 2 {
        return Err(StpcaError::invalid("curve grid needs m >= 2"));
    }
    let d = paired.dim();
    if model.dim != d {
        return Err(StpcaError::invalid("model/configuration dimension mismatch"));
    }
    let r = paired.radius();
    let grid: Vec<f64> = (0..m).map(|j| -PI + 2.0 * PI * j as f64 / m as f64).collect();

    let mut samples = Vec::with_capacity(m);
    let mut objectives = Vec::with_capacity(m);
    let mut warm_start_used = Vec::with_capacity(m);
    let mut previous: Option<TorusPoint> = None;
    for &xi in &grid {
        let mut scores = vec![0.0; d];
        scores[0] = xi;
        let psi = lift(&pns_inverse(&scores, model)?, r)?;
        let pred = predict(&psi, paired, previous.as_ref())?;
        previous = Some(pred.point.clone());
        samples.push(pred.point);
        objectives.push(pred.objective);
        warm_start_used.push(pred.warm_start_used);
    }

    let mut gaps = Vec::with_capacity(m - 1);
    let jump_threshold = (d as f64).sqrt() * PI / 4.0;
    for j in 1..m {
        let gap = torus_distance(&samples[j - 1], &samples[j])?;
        if gap > jump_threshold {
            log::warn!(
                "principal curve jump of {gap:.3} rad between grid points {} and {j} \
                 (threshold {jump_threshold:.3}); the curve may be discontinuous here",
                j - 1
            );
        }
        gaps.push(gap);
    }
    let closing_gap = torus_distance(&samples[m - 1], &samples[0])?;
    let mut sorted_gaps = gaps.clone();
    sorted_gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((0.95 * sorted_gaps.len() as f64).ceil() as usize).clamp(1, sorted_gaps.len()) - 1;
    let closed = closing_gap <= sorted_gaps[idx];

    Ok(PrincipalCurve {
        samples,
        grid,
        objectives,
        warm_start_used,
        closed,
    })
}

/// Torus variance decomposition: per-point projections at every score
/// truncation level are mapped back to the torus by prediction, and the
/// level-k variance is the summed squared torus distance between
/// consecutive levels. The level-0 projection (the image of the backwards
/// mean) is computed once and shared.
pub fn torus_variance(model: &PnsModel, paired: &PairedConfiguration) -> Result<TorusVarianceTable> {
    let d = paired.dim();
    if model.dim != d {
        return Err(StpcaError::invalid("model/configuration dimension mismatch"));
    }
    let n = paired.n();
    if model.scores.nrows() != n {
        return Err(StpcaError::invalid("model/configuration size mismatch"));
    }
    let r = paired.radius();

    let mean_lifted = lift(&model.backwards_mean, r)?;
    let x0 = predict(&mean_lifted, paired, None)?.point;

    // Independent prediction problems; each point needs d solves.
    let per_point: Vec<Result<Vec<TorusPoint>>> = map_indexed(n, |i| {
        let mut projections = Vec::with_capacity(d + 1);
        projections.push(x0.clone());
        let mut prev: Option<TorusPoint> = Some(x0.clone());
        for k in 1..=d {
            let mut xi: Vec<f64> = (0..d).map(|c| model.scores[(i, c)]).collect();
            for c in k..d {
                xi[c] = 0.0;
            }
            let y_k = lift(&pns_inverse(&xi, model)?, r)?;
            let pred = predict(&y_k, paired, prev.as_ref())?;
            prev = Some(pred.point.clone());
            projections.push(pred.point);
        }
        Ok(projections)
    });
    let projections: Vec<Vec<TorusPoint>> =
        per_point.into_iter().collect::<Result<Vec<_>>>()?;

    let mut variances = vec![0.0; d];
    for k in 1..=d {
        let terms: Vec<f64> = projections
            .iter()
            .map(|p| {
                let dist = torus_distance(&p[k - 1], &p[k]).expect("aligned dims");
                dist * dist
            })
            .collect();
        variances[k - 1] = tree_sum(&terms);
    }
    let total: f64 = variances.iter().sum();
    let degenerate = total <= 0.0;
    let proportions = if degenerate {
        vec![0.0; d]
    } else {
        variances.iter().map(|v| v / total).collect()
    };
    Ok(TorusVarianceTable {
        variances,
        proportions,
        degenerate,
        projections,
    })
}
