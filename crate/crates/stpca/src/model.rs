//! Run configuration, the serialized model artifact, and the end-to-end
//! fitting pipeline tying the stages together: radius selection, classical
//! MDS initialization, spherical MDS, nested-sphere fitting, principal
//! curve, and the torus variance decomposition.

use crate::embedding::{mds_sphere_init, pairwise_torus_distances};
use crate::error::{Result, StpcaError};
use crate::geometry::{SpherePoint, TorusPoint};
use crate::pns::{fit_pns, PnsModel};
use crate::radius::{select_radius, RadiusSelectionConfig};
use crate::smds::{solve_smds, RadiusMode, SmdsConfig, StressProblem};
use crate::torus_map::{
    principal_curve, torus_variance, PairedConfiguration, PrincipalCurve, TorusVarianceTable,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MODEL_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    Radians,
    Degrees,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusModeConfig {
    /// Select the radius by minimizing the expected Wasserstein mismatch.
    Auto,
    /// Use the supplied fixed value.
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusBlock {
    pub mode: RadiusModeConfig,
    /// Required when mode is fixed; also usable as the auto-search override.
    pub value: Option<f64>,
    pub replicates: usize,
    pub n_mc: usize,
    /// Search bracket override; defaults to `[0.5 sqrt(d), 2 sqrt(d)]`.
    pub bracket: Option<(f64, f64)>,
}

impl Default for RadiusBlock {
    fn default() -> Self {
        RadiusBlock {
            mode: RadiusModeConfig::Auto,
            value: None,
            replicates: 100,
            n_mc: 100,
            bracket: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmdsBlock {
    pub tolerance: f64,
    pub max_evals: Option<usize>,
    /// Refit the radius jointly with the configuration (default true).
    pub joint_radius: bool,
}

impl Default for SmdsBlock {
    fn default() -> Self {
        SmdsBlock {
            tolerance: 5e-2,
            max_evals: None,
            joint_radius: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveBlock {
    /// Grid size of the principal-curve sweep.
    pub m: usize,
}

impl Default for CurveBlock {
    fn default() -> Self {
        CurveBlock { m: 100 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IoBlock {
    pub input: Option<String>,
    pub output_dir: Option<String>,
    pub delimiter: char,
    pub header: bool,
    pub angle_unit: AngleUnit,
    /// Lagged-series construction: each row i becomes
    /// (x_i, x_{i+1}, ..., x_{i+lag}) built from a single angle column.
    pub lag: Option<usize>,
}

impl Default for IoBlock {
    fn default() -> Self {
        IoBlock {
            input: None,
            output_dir: None,
            delimiter: ',',
            header: false,
            angle_unit: AngleUnit::Radians,
            lag: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub radius: RadiusBlock,
    pub smds: SmdsBlock,
    pub curve: CurveBlock,
    pub io: IoBlock,
}

impl RunConfig {
    pub fn new(seed: u64) -> Self {
        RunConfig {
            seed,
            radius: RadiusBlock::default(),
            smds: SmdsBlock::default(),
            curve: CurveBlock::default(),
            io: IoBlock::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.smds.tolerance <= 0.0 {
            return Err(StpcaError::invalid("smds tolerance must be positive"));
        }
        if self.curve.m < 2 {
            return Err(StpcaError::invalid("curve grid size must be at least 2"));
        }
        if self.radius.mode == RadiusModeConfig::Fixed {
            match self.radius.value {
                Some(v) if v > 0.0 => {}
                _ => {
                    return Err(StpcaError::invalid(
                        "fixed radius mode requires a positive radius value",
                    ))
                }
            }
        }
        if let Some((lo, hi)) = self.radius.bracket {
            if !(lo > 0.0 && hi > lo) {
                return Err(StpcaError::invalid("radius bracket must satisfy 0 < lo < hi"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StressDiagnostics {
    pub initial_radius: f64,
    pub initial_stress: f64,
    pub final_stress: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// The complete fitted model, serializable to versioned JSON. Holds the data
/// and the embedded configuration so both the forward and inverse maps are
/// reconstructible bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TorusModel {
    pub schema: u32,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    /// Monte Carlo radius (absent in fixed-radius mode).
    pub r_star: Option<f64>,
    /// Final embedding radius (jointly fitted unless disabled).
    pub r_hat: f64,
    pub stress: StressDiagnostics,
    pub torus_points: Vec<TorusPoint>,
    pub sphere_points: Vec<SpherePoint>,
    pub pns: PnsModel,
    pub curve: PrincipalCurve,
    pub torus_variances: TorusVarianceTable,
    pub config: RunConfig,
}

impl TorusModel {
    pub fn paired(&self) -> Result<PairedConfiguration> {
        PairedConfiguration::new(self.torus_points.clone(), self.sphere_points.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<TorusModel> {
        let model: TorusModel = serde_json::from_str(s)?;
        if model.schema != MODEL_SCHEMA {
            return Err(StpcaError::invalid(format!(
                "unsupported model schema {} (expected {MODEL_SCHEMA})",
                model.schema
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TorusModel> {
        let s = std::fs::read_to_string(path)?;
        TorusModel::from_json(&s)
    }
}

fn radius_selection_config(d: usize, cfg: &RunConfig) -> RadiusSelectionConfig {
    let mut rcfg = RadiusSelectionConfig::with_defaults(d, cfg.seed);
    rcfg.replicates = cfg.radius.replicates;
    rcfg.n = cfg.radius.n_mc;
    if let Some(bracket) = cfg.radius.bracket {
        rcfg.search_interval = bracket;
    }
    rcfg
}

/// Runs the full pipeline on wrapped torus data.
pub fn fit_model(points: &[TorusPoint], cfg: &RunConfig) -> Result<TorusModel> {
    cfg.validate()?;
    let n = points.len();
    if n == 0 {
        return Err(StpcaError::invalid("empty sample"));
    }
    let d = points[0].dim();
    if points.iter().any(|p| p.dim() != d) {
        return Err(StpcaError::invalid("inconsistent torus dimensions"));
    }
    if n < d + 2 {
        return Err(StpcaError::invalid(format!(
            "need n >= d + 2 (n = {n}, d = {d})"
        )));
    }

    let (r_star, r_init) = match cfg.radius.mode {
        RadiusModeConfig::Auto => {
            log::info!("selecting sphere radius for d = {d}");
            let est = select_radius(&radius_selection_config(d, cfg))?;
            log::info!("selected r* = {:.4}", est.r_star);
            (Some(est.r_star), est.r_star)
        }
        RadiusModeConfig::Fixed => {
            let v = cfg.radius.value.expect("validated");
            (None, v)
        }
    };

    let distances = pairwise_torus_distances(points)?;
    let init = mds_sphere_init(&distances, d + 1, r_init)?;
    let radius_mode = if cfg.smds.joint_radius {
        RadiusMode::Joint(r_init)
    } else {
        RadiusMode::Fixed(r_init)
    };
    let problem = StressProblem::new(distances, d, radius_mode)?;
    let smds_cfg = SmdsConfig {
        tolerance: cfg.smds.tolerance,
        max_evals: cfg.smds.max_evals,
    };
    log::info!("solving spherical MDS (n = {n}, d = {d}, r0 = {r_init:.4})");
    let solution = solve_smds(&problem, &init, &smds_cfg)?;
    log::info!(
        "stress {:.4} -> {:.4}, r = {:.4}",
        solution.initial_stress,
        solution.stress,
        solution.fitted_radius
    );

    let units: Vec<DVector<f64>> = solution
        .configuration
        .iter()
        .map(|p| p.to_unit().coords().clone())
        .collect();
    let pns = fit_pns(&units)?;

    let paired = PairedConfiguration::new(points.to_vec(), solution.configuration.clone())?;
    let curve = principal_curve(&pns, &paired, cfg.curve.m)?;
    let torus_variances = torus_variance(&pns, &paired)?;

    Ok(TorusModel {
        schema: MODEL_SCHEMA,
        d,
        n,
        seed: cfg.seed,
        r_star,
        r_hat: solution.fitted_radius,
        stress: StressDiagnostics {
            initial_radius: solution.initial_radius,
            initial_stress: solution.initial_stress,
            final_stress: solution.stress,
            iterations: solution.iterations,
            evaluations: solution.evaluations,
            converged: solution.converged,
        },
        torus_points: points.to_vec(),
        sphere_points: solution.configuration,
        pns,
        curve,
        torus_variances,
        config: cfg.clone(),
    })
}
