//! Command-line front end.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::curve_models::{MeanFamily, MeanParams};
use crate::data_io::{
    aggregate_replicates, fmt_num, load_model, load_prior, model_metadata, read_extrapolation, read_measurements,
    save_extrapolation, save_model, save_prior, write_measurements, Aggregated, ExtrapolationTable, MeasurementTable,
    PriorFile, Split,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalConfig, EvalPoint, MetricReport, DEFAULT_BOOTSTRAP_ROUNDS};
use crate::fitting::{extrapolate, fit_map, FitConfig};
use crate::gp_core::{truncated_marginal, PredictiveDistribution};
use crate::priors::{build_prior_config, PercentileTargets, PriorConfig, PriorSettings, DEFAULT_MC_SAMPLES};
use crate::synthetic::{generate, run_study, StudyConfig, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(name = "curvecast", version, about = "Probabilistic learning-curve extrapolation")]
pub struct Cli {
    /// Worker threads (default: all available cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate the prior on the kernel output scale and write a prior file
    Calibrate(CalibrateArgs),
    /// Fit the model to pilot measurements and write a model file
    Fit(FitArgs),
    /// Predict accuracy at larger sizes from a model file
    Extrapolate(ExtrapolateArgs),
    /// Score an extrapolation table against heldout measurements
    Eval(EvalArgs),
    /// Generate synthetic curves, or run a fit-and-score study on them
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PriorArgs {
    /// Lower bound on the saturation gap (one minus the highest reachable accuracy)
    #[arg(long, default_value_t = 0.0)]
    pub epsilon_min: f64,

    /// Highest accuracy plausible for the task (default: 1 - epsilon-min)
    #[arg(long)]
    pub max_accuracy: Option<f64>,

    /// Percentile targets for the output-scale calibration
    #[arg(long, default_value = "figure", value_parser = parse_targets)]
    pub percentile_targets: PercentileTargets,

    /// Monte-Carlo samples per calibration candidate (at least 100000)
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    pub mc_samples: usize,
}

impl PriorArgs {
    fn settings(&self, seed: u64) -> PriorSettings {
        PriorSettings {
            epsilon_min: self.epsilon_min,
            max_accuracy: self.max_accuracy,
            percentile_targets: self.percentile_targets,
            mc_samples: self.mc_samples,
            seed,
            ..PriorSettings::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Measurements (size, seed, accuracy[, split]); the best mean accuracy sets y'
    #[arg(long, required_unless_present = "y_best")]
    pub input: Option<PathBuf>,

    /// Best observed pilot accuracy, instead of reading --input
    #[arg(long, conflicts_with = "input")]
    pub y_best: Option<f64>,

    /// Prior file to write (TOML)
    #[arg(long)]
    pub output: PathBuf,

    #[command(flatten)]
    pub prior: PriorArgs,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Measurements (size, seed, accuracy[, split]); only pilot rows are used when splits are present
    #[arg(long)]
    pub input: PathBuf,

    /// Model file to write (JSON)
    #[arg(long)]
    pub output: PathBuf,

    /// Mean function family
    #[arg(long, default_value = "pow", value_parser = parse_family)]
    pub mean: MeanFamily,

    /// Prior file from `calibrate`; calibrated on the fly when omitted
    #[arg(long)]
    pub prior: Option<PathBuf>,

    #[command(flatten)]
    pub prior_args: PriorArgs,

    /// Optimizer restarts
    #[arg(long, default_value_t = 16)]
    pub starts: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ExtrapolateArgs {
    /// Model file from `fit`
    #[arg(long)]
    pub input: PathBuf,

    /// Extrapolation table to write (CSV)
    #[arg(long)]
    pub output: PathBuf,

    /// Query sizes, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<f64>,

    /// Central interval levels, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.95])]
    pub levels: Vec<f64>,

    /// Also write mean and interval bands on a dense log grid to this file
    #[arg(long)]
    pub dense: Option<PathBuf>,

    /// Grid points for --dense
    #[arg(long, default_value_t = 200)]
    pub dense_points: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Heldout measurements (size, seed, accuracy[, split])
    #[arg(long)]
    pub input: PathBuf,

    /// Extrapolation table from `extrapolate`
    #[arg(long)]
    pub predictions: PathBuf,

    /// Metric report to write (JSON)
    #[arg(long)]
    pub output: PathBuf,

    /// Half-width of the quantized-likelihood window
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,

    /// Coverage levels, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.95])]
    pub levels: Vec<f64>,

    /// Top of the uniform baseline range (default: from the table metadata)
    #[arg(long)]
    pub max_accuracy: Option<f64>,

    /// Bottom of the uniform baseline range (default: from the table metadata)
    #[arg(long)]
    pub min_accuracy: Option<f64>,

    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_ROUNDS)]
    pub bootstrap_rounds: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output file: a study report (JSON) or, with --data-only, a measurement table (CSV)
    #[arg(long)]
    pub output: PathBuf,

    /// Write one synthetic measurement table instead of running a study
    #[arg(long)]
    pub data_only: bool,

    /// Family generating the curves; the study also fits this family
    #[arg(long, default_value = "pow", value_parser = parse_family)]
    pub mean: MeanFamily,

    #[arg(long, default_value_t = 0.9)]
    pub theta1: f64,

    #[arg(long, default_value_t = -0.3, allow_negative_numbers = true)]
    pub theta2: f64,

    /// Saturation gap of the generating curve
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,

    /// Measurement noise standard deviation
    #[arg(long, default_value_t = 0.01)]
    pub noise_tau: f64,

    #[arg(long, value_delimiter = ',', default_values_t = [60, 94, 147, 230, 360])]
    pub pilot_sizes: Vec<u64>,

    #[arg(long, value_delimiter = ',', default_values_t = [5000, 10000, 20000])]
    pub heldout_sizes: Vec<u64>,

    #[arg(long, default_value_t = 3)]
    pub seeds_per_size: usize,

    /// Independent synthetic worlds in a study
    #[arg(long, default_value_t = 100)]
    pub worlds: usize,

    #[command(flatten)]
    pub prior: PriorArgs,

    #[arg(long, default_value_t = 16)]
    pub starts: usize,

    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,

    #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.95])]
    pub levels: Vec<f64>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_family(s: &str) -> std::result::Result<MeanFamily, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_targets(s: &str) -> std::result::Result<PercentileTargets, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidParams("at least one level is required".into()));
    }
    match levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        Some(l) => Err(Error::InvalidParams(format!("levels must lie in (0, 1), got {l}"))),
        None => Ok(()),
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("delta must lie in (0, 0.5), got {delta}")))
    }
}

/// Pilot rows when the table is split, otherwise every row.
fn pilot_curve(table: &MeasurementTable) -> Result<Aggregated> {
    if table.has_splits() {
        aggregate_replicates(&table.filter_split(Split::Pilot))
    } else {
        aggregate_replicates(table)
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<PriorFile> {
    let y_best = match (args.y_best, &args.input) {
        (Some(y), _) => y,
        (None, Some(path)) => pilot_curve(&read_measurements(path)?)?
            .means
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        (None, None) => return Err(Error::InvalidParams("need --input or --y-best".into())),
    };
    let (prior, calibration) = build_prior_config(y_best, &args.prior.settings(args.seed))?;
    log::info!(
        "sigma prior loc={} scale={}; window percentiles {} / {}",
        prior.sigma_prior.loc,
        prior.sigma_prior.scale,
        calibration.achieved_p20,
        calibration.achieved_p80
    );
    let file = PriorFile::new(prior, Some(calibration));
    save_prior(&file, &args.output)?;
    Ok(file)
}

pub fn cmd_fit(args: &FitArgs) -> Result<crate::fitting::FittedModel> {
    let pilot = pilot_curve(&read_measurements(&args.input)?)?;
    let data = pilot.dataset()?;
    let y_best = data.best_accuracy();
    let prior: PriorConfig = match &args.prior {
        Some(path) => {
            let mut p = load_prior(path)?.prior;
            if p.y_best_observed != y_best {
                log::warn!(
                    "prior file was built for best accuracy {}, data has {y_best}; using the data",
                    p.y_best_observed
                );
                p.y_best_observed = y_best;
            }
            p
        }
        None => build_prior_config(y_best, &args.prior_args.settings(args.seed))?.0,
    };
    let cfg = FitConfig {
        n_starts: args.starts,
        seed: args.seed,
        ..FitConfig::default()
    };
    let model = fit_map(&data, args.mean, &prior, &cfg)?;
    save_model(&model, &args.output)?;
    Ok(model)
}

pub fn cmd_extrapolate(args: &ExtrapolateArgs) -> Result<ExtrapolationTable> {
    check_levels(&args.levels)?;
    let model = load_model(&args.input)?;
    let mut meta = model_metadata(&model);
    let y_min = model.data.accuracies().iter().copied().fold(f64::INFINITY, f64::min);
    meta.insert("y_min_train".into(), fmt_num(y_min));
    meta.insert("y_max_task".into(), fmt_num(1.0 - model.prior.epsilon_min));

    let ex = extrapolate(&model, &args.sizes, &args.levels)?;
    let table = ExtrapolationTable::from_extrapolation(&ex, meta.clone());
    save_extrapolation(&table, &args.output)?;

    if let Some(path) = &args.dense {
        if args.dense_points < 2 {
            return Err(Error::InvalidParams("--dense-points must be at least 2".into()));
        }
        let lo = model.data.sizes()[0].ln();
        let hi = args.sizes.iter().copied().fold(*model.data.sizes().last().unwrap(), f64::max).ln();
        let n = args.dense_points;
        let grid: Vec<f64> = (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect();
        let dense = extrapolate(&model, &grid, &args.levels)?;
        meta.insert("grid".into(), "dense".into());
        save_extrapolation(&ExtrapolationTable::from_extrapolation(&dense, meta), path)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub metadata: BTreeMap<String, String>,
    pub groups: BTreeMap<String, MetricReport>,
}

fn meta_f64(meta: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    meta.get(key)
        .map(|v| v.parse::<f64>().map_err(|_| Error::Format(format!("metadata {key}='{v}' is not a number"))))
        .transpose()
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalOutput> {
    check_delta(args.delta)?;
    check_levels(&args.levels)?;
    let table = read_extrapolation(&args.predictions)?;
    let heldout = read_measurements(&args.input)?;
    let lo = args.min_accuracy.map_or_else(|| meta_f64(&table.metadata, "y_min_train"), |v| Ok(Some(v)))?;
    let hi = args.max_accuracy.map_or_else(|| meta_f64(&table.metadata, "y_max_task"), |v| Ok(Some(v)))?;
    let cfg = EvalConfig {
        delta: args.delta,
        levels: args.levels.clone(),
        baseline_range: lo.zip(hi),
        bootstrap_rounds: args.bootstrap_rounds,
    };

    let groups: Vec<(String, MeasurementTable)> = if heldout.has_splits() {
        [Split::ShortRange, Split::LongRange, Split::Coverage]
            .into_iter()
            .map(|s| (s.to_string(), heldout.filter_split(s)))
            .filter(|(_, t)| !t.is_empty())
            .collect()
    } else {
        vec![("all".to_string(), heldout)]
    };
    if groups.is_empty() {
        return Err(Error::Empty("no heldout rows to score".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut reports = BTreeMap::new();
    for (name, rows) in groups {
        let agg = aggregate_replicates(&rows)?;
        let mut marginals = Vec::with_capacity(agg.sizes.len());
        let mut mu = Vec::with_capacity(agg.sizes.len());
        for &size in &agg.sizes {
            let row = table
                .rows
                .iter()
                .find(|r| r.size == size)
                .ok_or_else(|| Error::Format(format!("no prediction for heldout size {size}")))?;
            marginals.push(truncated_marginal(row.mu, row.sd * row.sd)?);
            mu.push(row.mu);
        }
        let variances: Vec<f64> = marginals.iter().map(|m| m.scale * m.scale).collect();
        let pred = PredictiveDistribution {
            query_sizes: agg.sizes.clone(),
            mean: mu,
            cov: nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(variances)),
            marginals,
        };
        let points = agg
            .sizes
            .iter()
            .zip(&agg.replicates)
            .map(|(&s, r)| EvalPoint::new(s, r.clone()))
            .collect::<Result<Vec<_>>>()?;
        reports.insert(name, evaluate(&pred, &points, &cfg, &mut rng)?);
    }

    let mut metadata = table.metadata.clone();
    metadata.insert("delta".into(), args.delta.to_string());
    metadata.insert("metrics_use".into(), "truncated".into());
    let out = EvalOutput {
        metadata,
        groups: reports,
    };
    write_json(&out, &args.output)?;
    Ok(out)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mean = MeanParams::new(args.theta1, args.theta2, args.epsilon);
    if args.data_only {
        let mut sizes = args.pilot_sizes.clone();
        sizes.extend(&args.heldout_sizes);
        let generated = generate(&SyntheticSpec {
            family: args.mean,
            mean,
            noise_tau: args.noise_tau,
            wiggle: None,
            sizes,
            seeds_per_size: args.seeds_per_size,
            master_seed: args.seed,
            split: None,
        })?;
        let rows = generated
            .table
            .rows()
            .iter()
            .cloned()
            .map(|mut r| {
                r.split = Some(if args.pilot_sizes.contains(&r.size) {
                    Split::Pilot
                } else {
                    Split::Coverage
                });
                r
            })
            .collect();
        if generated.clipped > 0 {
            log::warn!("{} of {} values clipped to [0, 1]", generated.clipped, generated.table.len());
        }
        return write_measurements(&MeasurementTable::new(rows)?, File::create(&args.output)?);
    }

    check_delta(args.delta)?;
    check_levels(&args.levels)?;
    args.mean.check(&mean)?;
    let pilot_top = args.pilot_sizes.iter().copied().max().unwrap_or(1) as f64;
    let (prior, _) = build_prior_config(args.mean.eval(pilot_top, &mean), &args.prior.settings(args.seed))?;
    let report = run_study(&StudyConfig {
        family: args.mean,
        mean,
        noise_tau: args.noise_tau,
        wiggle: None,
        pilot_sizes: args.pilot_sizes.clone(),
        heldout_sizes: args.heldout_sizes.clone(),
        seeds_per_size: args.seeds_per_size,
        worlds: args.worlds,
        master_seed: args.seed,
        fit_family: args.mean,
        fit: FitConfig {
            n_starts: args.starts,
            ..FitConfig::default()
        },
        prior,
        eval: EvalConfig {
            delta: args.delta,
            levels: args.levels.clone(),
            ..EvalConfig::default()
        },
    })?;
    write_json(&report, &args.output)
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }
    match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(a).map(drop),
        Command::Fit(a) => cmd_fit(a).map(drop),
        Command::Extrapolate(a) => cmd_extrapolate(a).map(drop),
        Command::Eval(a) => cmd_eval(a).map(drop),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
