//! Data-independent selection of the initial sphere radius: minimize the
//! expected 1-Wasserstein distance between the pairwise-distance ecdfs of
//! uniform samples on the torus and on the sphere of radius r.
//!
//! Common random numbers are used across radii: replicate m always draws the
//! same torus sample and the same unit-sphere sample, and sphere distances
//! at radius r are the unit-sphere distances scaled by r. This makes the
//! Monte Carlo objective a deterministic, continuous function of r, so a
//! one-dimensional golden-section search is valid.

use crate::error::{Result, StpcaError};
use crate::exec::{map_indexed, tree_sum};
use crate::geometry::{
    sample_uniform_sphere, sample_uniform_torus, torus_distance, unit_sphere_distance,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusSelectionConfig {
    pub dim: usize,
    /// Points per Monte Carlo replicate.
    pub n: usize,
    /// Number of Monte Carlo replicates.
    pub replicates: usize,
    pub seed: u64,
    /// Search bracket for r; defaults to `[0.5 sqrt(d), 2 sqrt(d)]`.
    pub search_interval: (f64, f64),
    /// Golden-section tolerance on r.
    pub tolerance: f64,
}

impl RadiusSelectionConfig {
    pub fn with_defaults(dim: usize, seed: u64) -> Self {
        let sqrt_d = (dim as f64).sqrt();
        RadiusSelectionConfig {
            dim,
            n: 100,
            replicates: 100,
            seed,
            search_interval: (0.5 * sqrt_d, 2.0 * sqrt_d),
            tolerance: 1e-3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 1 || self.n < 2 || self.replicates < 1 {
            return Err(StpcaError::invalid("need d >= 1, n >= 2, M >= 1"));
        }
        let (lo, hi) = self.search_interval;
        if !(0.0 < lo && lo < hi) {
            return Err(StpcaError::invalid("need 0 < r_lo < r_hi"));
        }
        Ok(())
    }

    /// Per-replicate generator seeds; the objective is a mean over
    /// replicates, so any permutation of these gives the same value.
    pub fn replicate_seeds(&self) -> Vec<u64> {
        (0..self.replicates)
            .map(|m| self.seed.wrapping_add(m as u64))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub r_star: f64,
    pub objective_value: f64,
    /// Evaluation trace: (r, estimated expected W1) in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
}

/// 1-Wasserstein distance between two equal-size empirical samples:
/// the mean absolute difference of matched order statistics.
pub fn wasserstein_1_sorted(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(StpcaError::invalid("sample length mismatch"));
    }
    if a.is_empty() {
        return Err(StpcaError::invalid("empty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
    Ok(tree_sum(&diffs) / a.len() as f64)
}

/// Per-replicate sorted pairwise distances, precomputed once so that the
/// objective can be swept over r cheaply (sphere distances scale linearly
/// with the radius).
struct ReplicateDistances {
    torus_sorted: Vec<f64>,
    sphere_unit_sorted: Vec<f64>,
}

fn build_replicates(cfg: &RadiusSelectionConfig, seeds: &[u64]) -> Result<Vec<ReplicateDistances>> {
    cfg.validate()?;
    let n = cfg.n;
    let d = cfg.dim;
    let reps = map_indexed(seeds.len(), |m| -> Result<ReplicateDistances> {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds[m]);
        let torus = sample_uniform_torus(n, d, &mut rng)?;
        let sphere = sample_uniform_sphere(n, d, 1.0, &mut rng)?;
        let mut tdist = Vec::with_capacity(n * (n - 1) / 2);
        let mut sdist = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                tdist.push(torus_distance(&torus[i], &torus[j])?);
                sdist.push(unit_sphere_distance(
                    sphere[i].coords(),
                    sphere[j].coords(),
                ));
            }
        }
        tdist.sort_by(|x, y| x.partial_cmp(y).unwrap());
        sdist.sort_by(|x, y| x.partial_cmp(y).unwrap());
        Ok(ReplicateDistances {
            torus_sorted: tdist,
            sphere_unit_sorted: sdist,
        })
    });
    reps.into_iter().collect()
}

fn objective_at(reps: &[ReplicateDistances], r: f64) -> f64 {
    let per_rep = map_indexed(reps.len(), |m| {
        let rep = &reps[m];
        let diffs: Vec<f64> = rep
            .torus_sorted
            .iter()
            .zip(&rep.sphere_unit_sorted)
            .map(|(&t, &s)| (t - r * s).abs())
            .collect();
        tree_sum(&diffs) / diffs.len() as f64
    });
    tree_sum(&per_rep) / reps.len() as f64
}

/// Monte Carlo estimate of the expected W1 between the torus and sphere
/// pairwise-distance ecdfs at radius `r`.
pub fn expected_wasserstein(r: f64, cfg: &RadiusSelectionConfig) -> Result<f64> {
    if r <= 0.0 {
        return Err(StpcaError::invalid("radius must be positive"));
    }
    let reps = build_replicates(cfg, &cfg.replicate_seeds())?;
    Ok(objective_at(&reps, r))
}

/// Golden-section search for the radius minimizing the expected W1, with the
/// full evaluation trace.
pub fn select_radius(cfg: &RadiusSelectionConfig) -> Result<RadiusEstimate> {
    select_radius_with_seeds(cfg, &cfg.replicate_seeds())
}

pub fn select_radius_with_seeds(
    cfg: &RadiusSelectionConfig,
    seeds: &[u64],
) -> Result<RadiusEstimate> {
    let reps = build_replicates(cfg, seeds)?;
    let mut trace = Vec::new();
    let mut eval = |r: f64| -> Result<f64> {
        let v = objective_at(&reps, r);
        if !v.is_finite() {
            return Err(StpcaError::numerical(
                "radius_select",
                format!("objective non-finite at r = {r}"),
            ));
        }
        trace.push((r, v));
        Ok(v)
    };

    let (mut a, mut b) = cfg.search_interval;
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while (b - a) > cfg.tolerance {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d)?;
        }
    }
    let r_star = 0.5 * (a + b);
    let objective_value = eval(r_star)?;
    Ok(RadiusEstimate {
        r_star,
        objective_value,
        evaluations: trace,
    })
}
