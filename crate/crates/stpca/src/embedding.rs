//! Pairwise-distance matrices, classical MDS initialization, spherical
//! embeddability diagnostics, and projection of Euclidean configurations
//! onto spheres.

use crate::error::{Result, StpcaError};
use crate::exec::map_indexed;
use crate::geometry::{torus_distance, SpherePoint, TorusPoint};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceSpace {
    Torus,
    Sphere,
    Generic,
}

/// Symmetric nonnegative distance matrix with zero diagonal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceMatrix {
    entries: DMatrix<f64>,
    source_space: SourceSpace,
}

impl DistanceMatrix {
    pub fn new(entries: DMatrix<f64>, source_space: SourceSpace) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n || n < 1 {
            return Err(StpcaError::invalid("distance matrix must be square"));
        }
        for i in 0..n {
            if entries[(i, i)] != 0.0 {
                return Err(StpcaError::invalid("distance matrix diagonal must be zero"));
            }
            for j in 0..n {
                let v = entries[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(StpcaError::invalid("distances must be finite and >= 0"));
                }
                if (v - entries[(j, i)]).abs() > 1e-12 * (1.0 + v.abs()) {
                    return Err(StpcaError::invalid("distance matrix must be symmetric"));
                }
            }
        }
        Ok(DistanceMatrix {
            entries,
            source_space,
        })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn source_space(&self) -> SourceSpace {
        self.source_space
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.amax()
    }
}

/// Diagnostics for isometric spherical embeddability of a distance matrix:
/// the bound check `d_ij <= pi r` and positive semidefiniteness of
/// `G = (cos(d_ij / r))`, with the intrinsic dimension `rank(G) - 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddabilityReport {
    pub feasible_bound: bool,
    pub gram_min_eigenvalue: f64,
    pub psd: bool,
    /// `rank(G) - 1`; `None` when rank(G) = 1, where the embedding is undefined.
    pub intrinsic_dim: Option<usize>,
    pub radius_tested: f64,
}

/// All pairwise torus geodesic distances, computed once for the pipeline.
pub fn pairwise_torus_distances(points: &[TorusPoint]) -> Result<DistanceMatrix> {
    let n = points.len();
    if n < 2 {
        return Err(StpcaError::invalid("need at least two points"));
    }
    let d = points[0].dim();
    if points.iter().any(|p| p.dim() != d) {
        return Err(StpcaError::invalid("points have mixed dimensions"));
    }
    let rows = map_indexed(n, |i| {
        let mut row = vec![0.0; n];
        for j in 0..n {
            if j != i {
                row[j] = torus_distance(&points[i], &points[j]).expect("dims checked");
            }
        }
        row
    });
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    DistanceMatrix::new(m, SourceSpace::Torus)
}

/// Pairwise geodesic distances for a spherical configuration.
pub fn pairwise_sphere_distances(points: &[SpherePoint]) -> Result<DistanceMatrix> {
    let n = points.len();
    if n < 2 {
        return Err(StpcaError::invalid("need at least two points"));
    }
    let rows = map_indexed(n, |i| {
        let mut row = vec![0.0; n];
        for j in 0..n {
            if j != i {
                row[j] = crate::geometry::sphere_distance(&points[i], &points[j])
                    .expect("radii checked by caller");
            }
        }
        row
    });
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    DistanceMatrix::new(m, SourceSpace::Sphere)
}

/// Checks the two embeddability conditions at radius `r`. Diagnostic only;
/// the pipeline proceeds with SMDS regardless of the verdict.
pub fn check_spherical_embeddability(d: &DistanceMatrix, r: f64) -> Result<EmbeddabilityReport> {
    if r <= 0.0 {
        return Err(StpcaError::invalid("radius must be positive"));
    }
    let n = d.n();
    let feasible_bound = d.entries.iter().all(|&v| v <= PI * r);
    let gram = DMatrix::from_fn(n, n, |i, j| (d.get(i, j) / r).cos());
    let gram_max = gram.amax();
    let eig = gram.symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    let max_eig_abs = eig.eigenvalues.amax();
    let psd = min_eig >= -1e-8 * gram_max;
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1e-8 * max_eig_abs)
        .count();
    let intrinsic_dim = if rank <= 1 { None } else { Some(rank - 1) };
    Ok(EmbeddabilityReport {
        feasible_bound,
        gram_min_eigenvalue: min_eig,
        psd,
        intrinsic_dim,
        radius_tested: r,
    })
}

/// Classical (Torgerson) MDS: double-center the squared distances,
/// eigendecompose, and read coordinates off the top-p eigenpairs. Negative
/// eigenvalues are clamped to zero; each eigenvector is oriented so its
/// largest-magnitude entry is positive.
pub fn classical_mds(d: &DistanceMatrix, p: usize) -> Result<DMatrix<f64>> {
    let n = d.n();
    if p == 0 || p > n - 1 {
        return Err(StpcaError::invalid(format!(
            "target dimension {p} out of range for n = {n}"
        )));
    }
    let d2 = DMatrix::from_fn(n, n, |i, j| {
        let v = d.get(i, j);
        v * v
    });
    // B = -1/2 J D2 J with J = I - 11'/n.
    let ones = DMatrix::from_element(n, n, 1.0 / n as f64);
    let j = DMatrix::identity(n, n) - ones;
    let b = -0.5 * &j * d2 * &j;
    let b = (&b + b.transpose()) * 0.5; // symmetrize roundoff
    let eig = b.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| {
        eig.eigenvalues[c]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
    });

    let mut out = DMatrix::zeros(n, p);
    for (col, &k) in order.iter().take(p).enumerate() {
        let lam = eig.eigenvalues[k].max(0.0);
        let scale = lam.sqrt();
        let v = eig.eigenvectors.column(k);
        // Sign convention: largest-magnitude entry positive.
        let mut max_abs = 0.0;
        let mut sign = 1.0;
        for &x in v.iter() {
            if x.abs() > max_abs {
                max_abs = x.abs();
                sign = if x >= 0.0 { 1.0 } else { -1.0 };
            }
        }
        for i in 0..n {
            out[(i, col)] = sign * scale * v[i];
        }
    }
    Ok(out)
}

/// Radially projects each row of `points` onto the sphere of radius `r`.
/// Rows within 1e-12 of the origin are replaced by a seeded random unit
/// direction and logged.
pub fn project_to_sphere(points: &DMatrix<f64>, r: f64) -> Result<Vec<SpherePoint>> {
    if r <= 0.0 {
        return Err(StpcaError::invalid("radius must be positive"));
    }
    let ambient = points.ncols();
    let mut out = Vec::with_capacity(points.nrows());
    for i in 0..points.nrows() {
        let row = points.row(i).transpose();
        if row.norm() < 1e-12 {
            log::warn!("point {i} is at the origin; replacing by a seeded random direction");
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + i as u64);
            let dir =
                crate::geometry::sample_uniform_sphere(1, ambient - 1, 1.0, &mut rng)?;
            out.push(SpherePoint::project(dir[0].coords().clone(), r)?);
        } else {
            out.push(SpherePoint::project(row, r)?);
        }
    }
    Ok(out)
}

/// Convenience: classical MDS to `R^{d+1}` followed by radial projection, the
/// standard SMDS initializer.
pub fn mds_sphere_init(d: &DistanceMatrix, ambient_dim: usize, r: f64) -> Result<Vec<SpherePoint>> {
    let coords = classical_mds(d, ambient_dim)?;
    project_to_sphere(&coords, r)
}
