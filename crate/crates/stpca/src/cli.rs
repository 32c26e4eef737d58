//! Command-line surface: argument parsing, CSV and JSON I/O, and the
//! subcommand implementations.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value read back is bit-identical to the value written and repeated runs
//! with the same seed produce byte-identical artifacts.

use crate::analysis::{circular_kde, mode_cluster, watson_uniformity_test};
use crate::embedding::{check_spherical_embeddability, pairwise_torus_distances};
use crate::error::{Result, StpcaError};
use crate::geometry::{sample_wrapped_normal, SpherePoint, TorusPoint};
use crate::model::{
    fit_model, AngleUnit, RadiusModeConfig, RunConfig, TorusModel,
};
use crate::pns::pns_inverse;
use crate::radius::{select_radius, RadiusSelectionConfig};
use crate::torus_map::predict;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "stpca",
    version,
    about = "Scaled torus PCA: principal component analysis for angular data on the d-torus"
)]
pub struct Cli {
    /// Cap the worker thread pool (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the full pipeline to a CSV of angles and write model artifacts.
    Fit(FitArgs),
    /// Generate a synthetic dataset CSV.
    Simulate(SimulateArgs),
    /// Map score vectors or sphere points back to the torus with a fitted model.
    Predict(PredictArgs),
    /// Select the optimal sphere radius for a torus dimension.
    Radius(RadiusArgs),
    /// Check spherical embeddability of a dataset's distance matrix.
    EmbedCheck(EmbedCheckArgs),
    /// Mode-cluster the first score column of a scores CSV.
    Cluster(ClusterArgs),
    /// Watson uniformity test on a CSV of angles.
    Uniformity(UniformityArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AngleUnitArg {
    Radians,
    Degrees,
}

impl From<AngleUnitArg> for AngleUnit {
    fn from(a: AngleUnitArg) -> AngleUnit {
        match a {
            AngleUnitArg::Radians => AngleUnit::Radians,
            AngleUnitArg::Degrees => AngleUnit::Degrees,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RadiusModeArg {
    Auto,
    Fixed,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Input CSV path.
    #[arg(long)]
    pub input: PathBuf,

    /// Field delimiter.
    #[arg(long, default_value = ",")]
    pub delimiter: char,

    /// Treat the first row as a header.
    #[arg(long)]
    pub header: bool,

    /// Unit of the input angles; degrees are converted once at ingestion.
    #[arg(long, value_enum, default_value = "radians")]
    pub angle_unit: AngleUnitArg,

    /// Build lagged rows (x_i, ..., x_{i+k}) from a single angle column.
    #[arg(long)]
    pub lag: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,

    /// Directory for model.json, scores.csv, curve.csv, variance.csv.
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,

    #[arg(long, default_value = "1")]
    pub seed: u64,

    /// How the initial sphere radius is chosen.
    #[arg(long, value_enum, default_value = "auto")]
    pub radius_mode: RadiusModeArg,

    /// Radius value for fixed mode.
    #[arg(long)]
    pub radius: Option<f64>,

    /// Relative stress-improvement stopping tolerance of the embedding.
    #[arg(long, default_value = "0.05")]
    pub tolerance: f64,

    /// Principal-curve grid size.
    #[arg(long, default_value = "100")]
    pub grid_m: usize,

    /// Keep the radius fixed during the embedding instead of refitting it.
    #[arg(long)]
    pub no_joint_radius: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Three isotropic wrapped-normal clusters on the 2-torus, n = 300.
    T2Clusters,
    /// Three isotropic wrapped-normal clusters on the 3-torus, n = 300.
    T3Clusters,
    /// One anisotropic wrapped normal on the 2-torus, n = 500.
    T2Wrapped,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,

    #[arg(long, default_value = "1")]
    pub seed: u64,

    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// Per-coordinate standard deviation of the cluster scenarios.
    #[arg(long, default_value = "0.4")]
    pub sd: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fitted model JSON.
    #[arg(long)]
    pub model: PathBuf,

    /// CSV of score vectors (d columns) or sphere points (d+1 columns).
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long, default_value = ",")]
    pub delimiter: char,

    #[arg(long)]
    pub header: bool,

    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RadiusArgs {
    /// Torus dimension.
    #[arg(long)]
    pub dim: usize,

    #[arg(long, default_value = "1")]
    pub seed: u64,

    /// Monte Carlo replicates.
    #[arg(long, default_value = "100")]
    pub replicates: usize,

    /// Sample size per replicate.
    #[arg(long, default_value = "100")]
    pub n_mc: usize,

    /// Golden-section tolerance.
    #[arg(long, default_value = "0.001")]
    pub tolerance: f64,

    /// Optional path for the search-trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedCheckArgs {
    #[command(flatten)]
    pub ingest: IngestArgs,

    /// Sphere radius to test.
    #[arg(long)]
    pub radius: f64,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Scores CSV; the first column is clustered.
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long, default_value = ",")]
    pub delimiter: char,

    #[arg(long)]
    pub header: bool,

    /// Kernel bandwidth in radians (default: circular rule of thumb).
    #[arg(long)]
    pub bandwidth: Option<f64>,

    /// Directory for labels.csv and modes.json.
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct UniformityArgs {
    /// CSV with one angle column.
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long, default_value = ",")]
    pub delimiter: char,

    #[arg(long)]
    pub header: bool,
}

/// Reads a CSV of floats, reporting 1-based row/column positions on failure.
/// The row index counts data rows (the header, when present, is skipped).
pub fn read_float_csv(
    path: &Path,
    delimiter: char,
    header: bool,
) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .has_headers(header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| StpcaError::Parse {
                row: r + 1,
                column: c + 1,
                detail: format!("expected a number, found {field:?}"),
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(StpcaError::Parse {
            row: 1,
            column: 1,
            detail: "no data rows".into(),
        });
    }
    Ok(rows)
}

/// Ingests torus data: unit conversion, optional lagged-series construction,
/// and wrapping into `[-pi, pi)`.
pub fn read_torus_csv(args: &IngestArgs) -> Result<Vec<TorusPoint>> {
    let mut rows = read_float_csv(&args.input, args.delimiter, args.header)?;
    if args.angle_unit == AngleUnitArg::Degrees {
        for row in rows.iter_mut() {
            for v in row.iter_mut() {
                *v = v.to_radians();
            }
        }
    }
    if let Some(k) = args.lag {
        if k == 0 {
            return Err(StpcaError::invalid("--lag must be at least 1"));
        }
        if rows.iter().any(|r| r.len() != 1) {
            return Err(StpcaError::invalid(
                "--lag needs a single angle column",
            ));
        }
        let series: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        if series.len() <= k {
            return Err(StpcaError::invalid(format!(
                "series of length {} too short for lag {k}",
                series.len()
            )));
        }
        rows = (0..series.len() - k)
            .map(|i| series[i..=i + k].to_vec())
            .collect();
    }
    let d = rows[0].len();
    rows.into_iter()
        .enumerate()
        .map(|(r, row)| {
            if row.len() != d {
                return Err(StpcaError::Parse {
                    row: r + 1,
                    column: row.len(),
                    detail: format!("expected {d} columns, found {}", row.len()),
                });
            }
            TorusPoint::new(row)
        })
        .collect()
}

fn format_row(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v}");
    }
    s
}

fn write_text(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn write_scores_csv(model: &TorusModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..model.n {
        let row: Vec<f64> = (0..model.d).map(|c| model.pns.scores[(i, c)]).collect();
        out.push_str(&format_row(&row));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_curve_csv(model: &TorusModel, path: &Path) -> Result<()> {
    let mut out = String::from("j,xi");
    for c in 0..model.d {
        let _ = write!(out, ",theta{}", c + 1);
    }
    out.push_str(",objective,warm_start_used\n");
    for (j, sample) in model.curve.samples.iter().enumerate() {
        let _ = write!(out, "{j},{}", model.curve.grid[j]);
        for &a in sample.angles() {
            let _ = write!(out, ",{a}");
        }
        let _ = writeln!(
            out,
            ",{},{}",
            model.curve.objectives[j], model.curve.warm_start_used[j]
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_variance_csv(model: &TorusModel, path: &Path) -> Result<()> {
    let mut out =
        String::from("component,sphere_variance,sphere_proportion,torus_variance,torus_proportion\n");
    for k in 0..model.d {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            k + 1,
            model.pns.sphere_variances.variances[k],
            model.pns.sphere_variances.proportions[k],
            model.torus_variances.variances[k],
            model.torus_variances.proportions[k],
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn cmd_fit(args: &FitArgs) -> Result<TorusModel> {
    let points = read_torus_csv(&args.ingest)?;
    let mut cfg = RunConfig::new(args.seed);
    cfg.radius.mode = match args.radius_mode {
        RadiusModeArg::Auto => RadiusModeConfig::Auto,
        RadiusModeArg::Fixed => RadiusModeConfig::Fixed,
    };
    cfg.radius.value = args.radius;
    cfg.smds.tolerance = args.tolerance;
    cfg.smds.joint_radius = !args.no_joint_radius;
    cfg.curve.m = args.grid_m;
    cfg.io.input = Some(args.ingest.input.display().to_string());
    cfg.io.output_dir = Some(args.output_dir.display().to_string());
    cfg.io.delimiter = args.ingest.delimiter;
    cfg.io.header = args.ingest.header;
    cfg.io.angle_unit = args.ingest.angle_unit.into();
    cfg.io.lag = args.ingest.lag;

    let model = fit_model(&points, &cfg)?;

    std::fs::create_dir_all(&args.output_dir)?;
    model.save(&args.output_dir.join("model.json"))?;
    write_scores_csv(&model, &args.output_dir.join("scores.csv"))?;
    write_curve_csv(&model, &args.output_dir.join("curve.csv"))?;
    write_variance_csv(&model, &args.output_dir.join("variance.csv"))?;

    println!(
        "fitted: n = {}, d = {}, r_star = {}, r_hat = {}, stress = {}",
        model.n,
        model.d,
        model
            .r_star
            .map_or_else(|| "-".into(), |r| format!("{r:.4}")),
        model.r_hat,
        model.stress.final_stress
    );
    println!(
        "first-component variance: sphere {:.1}%, torus {:.1}%",
        100.0 * model.pns.sphere_variances.proportions[0],
        100.0 * model.torus_variances.proportions[0]
    );
    Ok(model)
}

/// Generates the synthetic scenarios as wrapped-normal draws.
pub fn simulate_scenario(scenario: Scenario, seed: u64, sd: f64) -> Result<Vec<TorusPoint>> {
    if sd <= 0.0 {
        return Err(StpcaError::invalid("--sd must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cluster_mix = |centers: &[Vec<f64>], per: usize, rng: &mut ChaCha8Rng| -> Result<Vec<TorusPoint>> {
        let d = centers[0].len();
        let cov = DMatrix::identity(d, d) * (sd * sd);
        let mut out = Vec::with_capacity(per * centers.len());
        for c in centers {
            let mean = TorusPoint::new(c.clone())?;
            out.extend(sample_wrapped_normal(per, &mean, &cov, rng)?);
        }
        Ok(out)
    };
    match scenario {
        Scenario::T2Clusters => cluster_mix(
            &[
                vec![-1.0, -2.0],
                vec![3.0, 0.5],
                vec![-0.8, 2.5],
            ],
            100,
            &mut rng,
        ),
        Scenario::T3Clusters => cluster_mix(
            &[
                vec![-1.0, -2.0, 0.0],
                vec![1.0, 1.0, -1.0],
                vec![0.0, -1.0, 3.0],
            ],
            100,
            &mut rng,
        ),
        Scenario::T2Wrapped => {
            let mean = TorusPoint::new(vec![-1.0, 0.0])?;
            let cov = DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 2.0, 3.0]);
            sample_wrapped_normal(500, &mean, &cov, &mut rng)
        }
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let points = simulate_scenario(args.scenario, args.seed, args.sd)?;
    let mut out = String::new();
    for p in &points {
        out.push_str(&format_row(p.angles()));
        out.push('\n');
    }
    write_text(args.output.as_deref(), &out)
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model = TorusModel::load(&args.model)?;
    let rows = read_float_csv(&args.input, args.delimiter, args.header)?;
    let paired = model.paired()?;
    let d = model.d;

    let mut out = String::new();
    for (r, row) in rows.iter().enumerate() {
        let y = if row.len() == d {
            // Score vector: through the nested-sphere inverse, then lifted.
            let unit = pns_inverse(row, &model.pns).map_err(|e| {
                StpcaError::invalid(format!("row {}: {e}", r + 1))
            })?;
            SpherePoint::project(unit * model.r_hat, model.r_hat)?
        } else if row.len() == d + 1 {
            SpherePoint::project(DVector::from_column_slice(row), model.r_hat)?
        } else {
            return Err(StpcaError::Parse {
                row: r + 1,
                column: row.len(),
                detail: format!(
                    "expected {d} (scores) or {} (sphere) columns, found {}",
                    d + 1,
                    row.len()
                ),
            });
        };
        let pred = predict(&y, &paired, None)?;
        let mut values: Vec<f64> = pred.point.angles().to_vec();
        values.push(pred.objective);
        out.push_str(&format_row(&values));
        out.push('\n');
    }
    write_text(args.output.as_deref(), &out)
}

pub fn cmd_radius(args: &RadiusArgs) -> Result<()> {
    if args.dim == 0 {
        return Err(StpcaError::invalid("--dim must be at least 1"));
    }
    let mut cfg = RadiusSelectionConfig::with_defaults(args.dim, args.seed);
    cfg.replicates = args.replicates;
    cfg.n = args.n_mc;
    cfg.tolerance = args.tolerance;
    let est = select_radius(&cfg)?;
    println!("r_star = {}", est.r_star);
    println!("objective = {}", est.objective_value);
    if let Some(path) = &args.trace {
        let mut out = String::from("r,objective\n");
        for (r, obj) in &est.evaluations {
            let _ = writeln!(out, "{r},{obj}");
        }
        std::fs::write(path, out)?;
    }
    Ok(())
}

pub fn cmd_embed_check(args: &EmbedCheckArgs) -> Result<()> {
    if args.radius <= 0.0 {
        return Err(StpcaError::invalid("--radius must be positive"));
    }
    let points = read_torus_csv(&args.ingest)?;
    let distances = pairwise_torus_distances(&points)?;
    let report = check_spherical_embeddability(&distances, args.radius)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

pub fn cmd_cluster(args: &ClusterArgs) -> Result<()> {
    let rows = read_float_csv(&args.input, args.delimiter, args.header)?;
    let angles: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let kde = circular_kde(&angles, args.bandwidth)?;
    let clusters = mode_cluster(&kde)?;

    std::fs::create_dir_all(&args.output_dir)?;
    let mut labels = String::from("index,angle,label\n");
    for (i, &a) in angles.iter().enumerate() {
        let _ = writeln!(labels, "{i},{a},{}", clusters.labels[i]);
    }
    std::fs::write(args.output_dir.join("labels.csv"), labels)?;
    std::fs::write(
        args.output_dir.join("modes.json"),
        serde_json::to_string_pretty(&clusters)?,
    )?;
    println!(
        "bandwidth = {}, modes = {}, degenerate = {}",
        kde.bandwidth(),
        clusters.modes.len(),
        clusters.degenerate
    );
    Ok(())
}

pub fn cmd_uniformity(args: &UniformityArgs) -> Result<()> {
    let rows = read_float_csv(&args.input, args.delimiter, args.header)?;
    let angles: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let (stat, p) = watson_uniformity_test(&angles)?;
    println!("watson_u2 = {stat}");
    println!("p_value = {p}");
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        #[cfg(feature = "parallel")]
        {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| StpcaError::invalid(format!("thread pool: {e}")))?;
        }
        #[cfg(not(feature = "parallel"))]
        {
            log::warn!("--threads {threads} ignored: built without the parallel feature");
        }
    }
    match &cli.command {
        Command::Fit(args) => cmd_fit(args).map(|_| ()),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Radius(args) => cmd_radius(args),
        Command::EmbedCheck(args) => cmd_embed_check(args),
        Command::Cluster(args) => cmd_cluster(args),
        Command::Uniformity(args) => cmd_uniformity(args),
    }
}
