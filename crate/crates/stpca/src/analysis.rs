//! Downstream analysis of the first scores: circular kernel density
//! estimation, mode clustering on the circle, and the Watson U-squared
//! uniformity test.

use crate::error::{Result, StpcaError};
use crate::exec::map_indexed;
use crate::geometry::{wrap, TWO_PI};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wrapped-Gaussian kernel density estimate on the circle. The kernel sum is
/// truncated at three winding numbers on each side, which bounds the
/// truncation error well below 1e-9 for bandwidths under about 1 rad.
#[derive(Debug, Clone)]
pub struct CircularKde {
    sample: Vec<f64>,
    bandwidth: f64,
}

const WINDINGS: i32 = 3;

impl CircularKde {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample(&self) -> &[f64] {
        &self.sample
    }

    pub fn density(&self, theta: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / ((TWO_PI).sqrt() * h * self.sample.len() as f64);
        let mut acc = 0.0;
        for &a in &self.sample {
            let base = theta - a;
            for k in -WINDINGS..=WINDINGS {
                let u = (base + TWO_PI * k as f64) / h;
                acc += (-0.5 * u * u).exp();
            }
        }
        acc * norm
    }
}

/// Builds the KDE. The default bandwidth is `sigma_c * n^(-1/7)` with
/// `sigma_c` the circular standard deviation: the derivative-estimation rate
/// exponent, since the clustering downstream needs density derivatives, not
/// the density itself.
pub fn circular_kde(angles: &[f64], bandwidth: Option<f64>) -> Result<CircularKde> {
    let n = angles.len();
    if n < 2 {
        return Err(StpcaError::invalid("kde needs at least 2 angles"));
    }
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(StpcaError::invalid("non-finite angle"));
    }
    let sample: Vec<f64> = angles
        .iter()
        .map(|&a| wrap(&[a]).map(|p| p.angles()[0]))
        .collect::<Result<_>>()?;
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(_) => return Err(StpcaError::invalid("bandwidth must be positive")),
        None => {
            let c: f64 = sample.iter().map(|a| a.cos()).sum::<f64>() / n as f64;
            let s: f64 = sample.iter().map(|a| a.sin()).sum::<f64>() / n as f64;
            let rbar = (c * c + s * s).sqrt().min(1.0);
            let sigma_c = (-2.0 * rbar.max(1e-300).ln()).sqrt();
            let h = sigma_c * (n as f64).powf(-1.0 / 7.0);
            if h <= 1e-12 {
                return Err(StpcaError::invalid(
                    "sample has zero circular dispersion; supply a bandwidth",
                ));
            }
            h
        }
    };
    Ok(CircularKde { sample, bandwidth: h })
}

/// Mode-clustering result: each sample is assigned to the density mode whose
/// basin of attraction (the arc between the two neighboring antimodes)
/// contains it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub modes: Vec<f64>,
    pub basin_boundaries: Vec<f64>,
    /// True when the density is numerically flat and everything is one
    /// cluster.
    pub degenerate: bool,
}

const MODE_GRID: usize = 2048;

/// Golden-section refinement of an extremum bracketed on `[lo, hi]`.
fn refine_extremum<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, maximize: bool) -> f64 {
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let better = |x: f64, y: f64| if maximize { x > y } else { x < y };
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..60 {
        if better(fc, fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-10 {
            break;
        }
    }
    0.5 * (a + b)
}

/// Finds density modes and antimodes on a 2048-point circular grid with
/// local refinement, and assigns every sample angle to the mode of the arc
/// it falls in. On the circle the basins of attraction are exactly the arcs
/// between consecutive antimodes.
pub fn mode_cluster(kde: &CircularKde) -> Result<ClusterAssignment> {
    let values = map_indexed(MODE_GRID, |j| {
        kde.density(-PI + TWO_PI * j as f64 / MODE_GRID as f64)
    });
    let vmax = values.iter().cloned().fold(f64::MIN, f64::max);
    let vmin = values.iter().cloned().fold(f64::MAX, f64::min);
    if vmax - vmin < 1e-12 {
        return Ok(ClusterAssignment {
            labels: vec![0; kde.sample.len()],
            modes: vec![],
            basin_boundaries: vec![],
            degenerate: true,
        });
    }

    let theta_at = |j: usize| -PI + TWO_PI * j as f64 / MODE_GRID as f64;
    let mut modes = Vec::new();
    let mut antimodes = Vec::new();
    for j in 0..MODE_GRID {
        let prev = values[(j + MODE_GRID - 1) % MODE_GRID];
        let here = values[j];
        let next = values[(j + 1) % MODE_GRID];
        // Strict on the left, weak on the right: breaks exact-plateau ties
        // to a single extremum per plateau.
        if here > prev && here >= next {
            let t = refine_extremum(
                |x| kde.density(x),
                theta_at(j) - TWO_PI / MODE_GRID as f64,
                theta_at(j) + TWO_PI / MODE_GRID as f64,
                true,
            );
            modes.push(wrap(&[t])?.angles()[0]);
        }
        if here < prev && here <= next {
            let t = refine_extremum(
                |x| kde.density(x),
                theta_at(j) - TWO_PI / MODE_GRID as f64,
                theta_at(j) + TWO_PI / MODE_GRID as f64,
                false,
            );
            antimodes.push(wrap(&[t])?.angles()[0]);
        }
    }
    if modes.is_empty() || modes.len() != antimodes.len() {
        return Err(StpcaError::numerical(
            "mode_cluster",
            format!(
                "inconsistent extrema: {} modes, {} antimodes",
                modes.len(),
                antimodes.len()
            ),
        ));
    }
    modes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    antimodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Arc t runs from antimodes[t] to the next antimode (wrapping); it
    // contains exactly one mode. Map each arc to that mode's index.
    let k = antimodes.len();
    let arc_of = |a: f64| -> usize {
        // Index of the last antimode <= a, wrapping below the first.
        match antimodes.iter().rposition(|&b| b <= a) {
            Some(t) => t,
            None => k - 1,
        }
    };
    let mode_label_of_arc: Vec<usize> = (0..k)
        .map(|t| {
            let lo = antimodes[t];
            let hi = if t + 1 < k { antimodes[t + 1] } else { antimodes[0] + TWO_PI };
            (0..modes.len())
                .find(|&m| {
                    let mut x = modes[m];
                    if x < lo {
                        x += TWO_PI;
                    }
                    x >= lo && x < hi
                })
                .expect("each basin contains one mode")
        })
        .collect();

    let labels = kde
        .sample
        .iter()
        .map(|&a| mode_label_of_arc[arc_of(a)])
        .collect();
    Ok(ClusterAssignment {
        labels,
        modes,
        basin_boundaries: antimodes,
        degenerate: false,
    })
}

/// Watson U-squared test of circular uniformity with its asymptotic null
/// p-value (alternating series, ten terms).
pub fn watson_uniformity_test(angles: &[f64]) -> Result<(f64, f64)> {
    let n = angles.len();
    if n < 10 {
        return Err(StpcaError::invalid("uniformity test needs n >= 10"));
    }
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(StpcaError::invalid("non-finite angle"));
    }
    let mut u: Vec<f64> = angles
        .iter()
        .map(|&a| {
            let w = wrap(&[a]).map(|p| p.angles()[0])?;
            Ok((w + PI) / TWO_PI)
        })
        .collect::<Result<_>>()?;
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let ubar = u.iter().sum::<f64>() / nf;
    let mut stat = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        let e = ui - (2.0 * (i as f64 + 1.0) - 1.0) / (2.0 * nf);
        stat += e * e;
    }
    stat += 1.0 / (12.0 * nf) - nf * (ubar - 0.5) * (ubar - 0.5);

    let mut p = 0.0;
    for m in 1..=10 {
        let mf = m as f64;
        let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
        p += sign * (-2.0 * mf * mf * PI * PI * stat).exp();
    }
    Ok((stat, (2.0 * p).clamp(0.0, 1.0)))
}
