//! Synthetic learning curves drawn from the model family, and end-to-end
//! studies that fit and score many such curves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve_models::{kernel_matrix, KernelParams, MeanFamily, MeanParams};
use crate::data_io::{aggregate_replicates, Measurement, MeasurementTable, Split};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, CoverageRate, EvalConfig, EvalPoint};
use crate::fitting::{fit_map, FitConfig};
use crate::priors::PriorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: MeanFamily,
    pub mean: MeanParams,
    pub noise_tau: f64,
    /// Smooth GP deviation from the mean curve, redrawn for every seed.
    pub wiggle: Option<KernelParams>,
    pub sizes: Vec<u64>,
    pub seeds_per_size: usize,
    pub master_seed: u64,
    pub split: Option<Split>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        self.family.check(&self.mean)?;
        if !(self.noise_tau > 0.0 && self.noise_tau.is_finite()) {
            return Err(Error::InvalidParams(format!("noise_tau must be > 0, got {}", self.noise_tau)));
        }
        if let Some(k) = &self.wiggle {
            k.check()?;
        }
        if self.seeds_per_size == 0 {
            return Err(Error::InvalidParams("seeds_per_size must be at least 1".into()));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::InvalidParams("sizes must be a nonempty list of positive integers".into()));
        }
        let mut sorted = self.sizes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.sizes.len() {
            return Err(Error::InvalidParams("sizes must be distinct".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub table: MeasurementTable,
    pub clipped: usize,
}

impl Generated {
    pub fn clip_rate(&self) -> f64 {
        self.clipped as f64 / self.table.len().max(1) as f64
    }
}

fn seed_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Draws one replicate per seed at every size. Seed `j` uses its own random
/// stream, so results do not depend on thread scheduling.
pub fn generate(spec: &SyntheticSpec) -> Result<Generated> {
    spec.validate()?;
    let xs: Vec<f64> = spec.sizes.iter().map(|&s| s as f64).collect();
    let base: Vec<f64> = xs.iter().map(|&x| spec.family.eval(x, &spec.mean)).collect();
    let chol = match &spec.wiggle {
        Some(k) => {
            let mut gram = kernel_matrix(&xs, &xs, k)?;
            for i in 0..xs.len() {
                gram[(i, i)] += 1e-10;
            }
            Some(
                gram.cholesky()
                    .ok_or_else(|| Error::Factorization("wiggle covariance is not positive definite".into()))?
                    .unpack(),
            )
        }
        None => None,
    };

    let worlds: Vec<(Vec<Measurement>, usize)> = (0..spec.seeds_per_size)
        .into_par_iter()
        .map(|j| {
            let mut rng = seed_rng(spec.master_seed, j as u64 + 1);
            let mut f = base.clone();
            if let Some(l) = &chol {
                let z: Vec<f64> = (0..xs.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi += (0..=i).map(|c| l[(i, c)] * z[c]).sum::<f64>();
                }
            }
            let mut clipped = 0;
            let rows = spec
                .sizes
                .iter()
                .zip(&f)
                .map(|(&size, &fi)| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let y = fi + spec.noise_tau * noise;
                    if !(0.0..=1.0).contains(&y) {
                        clipped += 1;
                    }
                    Measurement {
                        size,
                        seed: format!("s{j}"),
                        accuracy: y.clamp(0.0, 1.0),
                        split: spec.split,
                    }
                })
                .collect();
            (rows, clipped)
        })
        .collect();

    let clipped = worlds.iter().map(|w| w.1).sum();
    let rows = worlds.into_iter().flat_map(|w| w.0).collect();
    Ok(Generated {
        table: MeasurementTable::new(rows)?,
        clipped,
    })
}

/// Repeated fit-and-score experiment on synthetic curves. World `w` uses
/// master seed `master_seed + w` for data and for its fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub family: MeanFamily,
    pub mean: MeanParams,
    pub noise_tau: f64,
    pub wiggle: Option<KernelParams>,
    pub pilot_sizes: Vec<u64>,
    pub heldout_sizes: Vec<u64>,
    pub seeds_per_size: usize,
    pub worlds: usize,
    pub master_seed: u64,
    /// Fitted family; may differ from the generating one.
    pub fit_family: MeanFamily,
    pub fit: FitConfig,
    /// `y_best_observed` is replaced by each world's best pilot accuracy.
    pub prior: PriorConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldResult {
    pub world: usize,
    pub rmse: f64,
    pub mae: f64,
    pub mean_quantized_likelihood: f64,
    pub coverage: Vec<CoverageRate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub worlds: usize,
    pub failed_worlds: Vec<(usize, String)>,
    pub clip_rate: f64,
    pub mean_rmse: f64,
    pub mean_mae: f64,
    pub mean_quantized_likelihood: f64,
    /// Pooled over worlds: fraction of all heldout replicates inside the HDI.
    pub coverage: Vec<CoverageRate>,
    pub per_world: Vec<WorldResult>,
}

impl StudyReport {
    /// Pooled coverage at `level` over every heldout size.
    pub fn overall_coverage(&self, level: f64) -> Option<f64> {
        let rates: Vec<f64> = self.coverage.iter().filter(|c| c.level == level).map(|c| c.rate).collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }
}

fn run_world(cfg: &StudyConfig, world: usize) -> Result<(WorldResult, usize, usize)> {
    let seed = cfg.master_seed.wrapping_add(world as u64);
    let spec = SyntheticSpec {
        family: cfg.family,
        mean: cfg.mean,
        noise_tau: cfg.noise_tau,
        wiggle: cfg.wiggle,
        sizes: cfg.pilot_sizes.iter().chain(&cfg.heldout_sizes).copied().collect(),
        seeds_per_size: cfg.seeds_per_size,
        master_seed: seed,
        split: None,
    };
    let data = generate(&spec)?;
    let (pilot_rows, heldout_rows): (Vec<_>, Vec<_>) = data
        .table
        .rows()
        .iter()
        .cloned()
        .partition(|r| cfg.pilot_sizes.contains(&r.size));
    let pilot = aggregate_replicates(&MeasurementTable::new(pilot_rows)?)?;
    let heldout = aggregate_replicates(&MeasurementTable::new(heldout_rows)?)?;

    let dataset = pilot.dataset()?;
    let prior = PriorConfig {
        y_best_observed: dataset.best_accuracy(),
        ..cfg.prior.clone()
    };
    let fit_cfg = FitConfig {
        seed,
        ..cfg.fit.clone()
    };
    let model = fit_map(&dataset, cfg.fit_family, &prior, &fit_cfg)?;
    let pred = model.predict(&heldout.sizes)?;
    let points = heldout
        .sizes
        .iter()
        .zip(&heldout.replicates)
        .map(|(&s, r)| EvalPoint::new(s, vec![r.iter().sum::<f64>() / r.len() as f64]))
        .collect::<Result<Vec<_>>>()?;
    let eval_cfg = EvalConfig {
        bootstrap_rounds: 0,
        ..cfg.eval.clone()
    };
    let mut rng = seed_rng(seed, 0);
    let report = evaluate(&pred, &points, &eval_cfg, &mut rng)?;
    let result = WorldResult {
        world,
        rmse: report.rmse,
        mae: report.mae,
        mean_quantized_likelihood: report.mean_quantized_likelihood(),
        coverage: report.coverage,
    };
    Ok((result, data.clipped, data.table.len()))
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    if cfg.worlds == 0 {
        return Err(Error::InvalidParams("a study needs at least one world".into()));
    }
    if cfg.pilot_sizes.len() < 2 || cfg.heldout_sizes.is_empty() {
        return Err(Error::InvalidParams("need at least 2 pilot sizes and 1 heldout size".into()));
    }
    cfg.prior.validate()?;
    let outcomes: Vec<Result<(WorldResult, usize, usize)>> =
        (0..cfg.worlds).into_par_iter().map(|w| run_world(cfg, w)).collect();

    let mut per_world = Vec::new();
    let mut failed_worlds = Vec::new();
    let (mut clipped, mut total) = (0, 0);
    for (w, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok((r, c, t)) => {
                clipped += c;
                total += t;
                per_world.push(r);
            }
            Err(e @ (Error::Factorization(_) | Error::AllStartsFailed(_) | Error::InfeasibleBounds { .. })) => {
                log::warn!("world {w} failed: {e}");
                failed_worlds.push((w, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if per_world.is_empty() {
        return Err(Error::AllStartsFailed(cfg.worlds));
    }

    let n = per_world.len() as f64;
    let avg = |f: fn(&WorldResult) -> f64| per_world.iter().map(f).sum::<f64>() / n;
    let mut coverage: Vec<CoverageRate> = per_world[0]
        .coverage
        .iter()
        .map(|c| CoverageRate {
            size: c.size,
            level: c.level,
            rate: 0.0,
        })
        .collect();
    for w in &per_world {
        for (acc, c) in coverage.iter_mut().zip(&w.coverage) {
            acc.rate += c.rate / n;
        }
    }

    Ok(StudyReport {
        worlds: cfg.worlds,
        failed_worlds,
        clip_rate: clipped as f64 / total.max(1) as f64,
        mean_rmse: avg(|w| w.rmse),
        mean_mae: avg(|w| w.mae),
        mean_quantized_likelihood: avg(|w| w.mean_quantized_likelihood),
        coverage,
        per_world,
    })
}
