//! Error, quantized-likelihood and coverage metrics for extrapolated curves.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp_core::PredictiveDistribution;
use crate::math_stats::TruncNormal;

pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_BOOTSTRAP_ROUNDS: usize = 500;

/// A heldout size with one or more observed accuracies (one per seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub size: f64,
    pub observed: Vec<f64>,
}

impl EvalPoint {
    pub fn new(size: f64, observed: Vec<f64>) -> Result<Self> {
        if !(size >= 1.0 && size.is_finite()) {
            return Err(Error::Domain(format!("size must be a finite value >= 1, got {size}")));
        }
        if observed.is_empty() {
            return Err(Error::Empty(format!("no observations at size {size}")));
        }
        if let Some(y) = observed.iter().find(|y| !(0.0..=1.0).contains(*y)) {
            return Err(Error::Domain(format!("accuracy {y} at size {size} outside [0, 1]")));
        }
        Ok(EvalPoint { size, observed })
    }

    pub fn mean_observed(&self) -> f64 {
        self.observed.iter().sum::<f64>() / self.observed.len() as f64
    }
}

fn check_pair(pred: &[f64], obs: &[f64]) -> Result<()> {
    if pred.len() != obs.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: obs.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("no points to score".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(pred, obs)?;
    let ss: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o).powi(2)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], obs: &[f64]) -> Result<f64> {
    check_pair(pred, obs)?;
    let s: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o).abs()).sum();
    Ok(s / pred.len() as f64)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("delta must be positive, got {delta}")))
    }
}

/// Predictive mass in `(y_star - delta, y_star + delta)`.
pub fn quantized_likelihood(pred: &TruncNormal, y_star: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(0.0..=1.0).contains(&y_star) {
        return Err(Error::Domain(format!("accuracy {y_star} outside [0, 1]")));
    }
    Ok(pred.mass_between(y_star - delta, y_star + delta).clamp(0.0, 1.0))
}

/// Likelihood of `y_star` under a uniform distribution on
/// `[y_min_train, y_max_task]`, quantized the same way.
pub fn uniform_baseline_likelihood(y_min_train: f64, y_max_task: f64, y_star: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(y_min_train < y_max_task) {
        return Err(Error::Empty(format!(
            "baseline range [{y_min_train}, {y_max_task}] is empty"
        )));
    }
    let lo = (y_star - delta).max(y_min_train);
    let hi = (y_star + delta).min(y_max_task);
    Ok(((hi - lo).max(0.0) / (y_max_task - y_min_train)).min(1.0))
}

/// Shortest interval holding mass `level`. Interior endpoints have equal
/// density; when the mode sits on a bound the interval is anchored there.
pub fn hdi(pred: &TruncNormal, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    pred.validate()?;
    let (lo, hi) = (pred.lower, pred.upper);
    let mode = pred.mode();
    if mode <= lo {
        return Ok((lo, pred.ppf(level)?));
    }
    if mode >= hi {
        return Ok((pred.ppf(1.0 - level)?, hi));
    }
    let window = |h: f64| ((mode - h).max(lo), (mode + h).min(hi));
    let mass = |h: f64| {
        let (a, b) = window(h);
        pred.mass_between(a, b)
    };
    let (mut a, mut b) = (0.0, (mode - lo).max(hi - mode));
    if !b.is_finite() {
        b = pred.scale;
        while mass(b) < level {
            b *= 2.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if mass(mid) < level {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(window(b))
}

/// Fraction of `replicates` inside the `level` HDI of `pred`.
pub fn coverage(pred: &TruncNormal, replicates: &[f64], level: f64) -> Result<f64> {
    if replicates.is_empty() {
        return Err(Error::Empty("coverage needs at least one replicate".into()));
    }
    let (a, b) = hdi(pred, level)?;
    let inside = replicates.iter().filter(|&&y| y >= a && y <= b).count();
    Ok(inside as f64 / replicates.len() as f64)
}

/// Standard deviation of `metric` over `rounds` resamples (with replacement)
/// of the per-seed values.
pub fn bootstrap_std<T, F, R>(metric: F, per_seed: &[T], rounds: usize, rng: &mut R) -> Result<f64>
where
    T: Clone,
    F: Fn(&[T]) -> f64,
    R: Rng + ?Sized,
{
    if per_seed.len() < 2 {
        return Err(Error::InsufficientSeeds(per_seed.len()));
    }
    if rounds == 0 {
        return Err(Error::InvalidParams("bootstrap needs at least one round".into()));
    }
    let n = per_seed.len();
    let mut sample = Vec::with_capacity(n);
    let values: Vec<f64> = (0..rounds)
        .map(|_| {
            sample.clear();
            sample.extend((0..n).map(|_| per_seed[rng.gen_range(0..n)].clone()));
            metric(&sample)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / rounds as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rounds as f64;
    Ok(var.sqrt())
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub delta: f64,
    pub levels: Vec<f64>,
    /// Range of the uniform baseline; `None` skips it.
    pub baseline_range: Option<(f64, f64)>,
    pub bootstrap_rounds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            delta: DEFAULT_DELTA,
            levels: vec![0.8, 0.95],
            baseline_range: None,
            bootstrap_rounds: DEFAULT_BOOTSTRAP_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRate {
    pub size: f64,
    pub level: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapStd {
    pub rmse: f64,
    pub mae: f64,
    pub quantized_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Scored against the truncated predictive means.
    pub rmse: f64,
    pub mae: f64,
    /// Scored against the untruncated posterior means.
    pub rmse_untruncated: f64,
    pub mae_untruncated: f64,
    pub quantized_likelihoods: Vec<f64>,
    pub uniform_baseline: Option<Vec<f64>>,
    pub coverage: Vec<CoverageRate>,
    pub bootstrap_std: Option<BootstrapStd>,
}

impl MetricReport {
    pub fn mean_quantized_likelihood(&self) -> f64 {
        mean(&self.quantized_likelihoods)
    }
}

/// Scores `pred` (one marginal per point, in order) against `points`.
/// Error and likelihood use each point's seed-averaged accuracy; coverage
/// uses every replicate. When all points carry the same number (≥ 2) of
/// replicates, replicate `j` is treated as seed `j` for the bootstrap.
pub fn evaluate<R: Rng + ?Sized>(
    pred: &PredictiveDistribution,
    points: &[EvalPoint],
    cfg: &EvalConfig,
    rng: &mut R,
) -> Result<MetricReport> {
    if pred.len() != points.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: points.len(),
        });
    }
    check_delta(cfg.delta)?;
    let observed: Vec<f64> = points.iter().map(EvalPoint::mean_observed).collect();
    let truncated = pred.truncated_means();
    let quantized_likelihoods = pred
        .marginals
        .iter()
        .zip(&observed)
        .map(|(m, &y)| quantized_likelihood(m, y, cfg.delta))
        .collect::<Result<Vec<_>>>()?;
    let uniform_baseline = cfg
        .baseline_range
        .map(|(lo, hi)| {
            observed
                .iter()
                .map(|&y| uniform_baseline_likelihood(lo, hi, y, cfg.delta))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let mut rates = Vec::new();
    for (m, p) in pred.marginals.iter().zip(points) {
        for &level in &cfg.levels {
            rates.push(CoverageRate {
                size: p.size,
                level,
                rate: coverage(m, &p.observed, level)?,
            });
        }
    }

    let seeds = points[0].observed.len();
    let bootstrap_std = if seeds >= 2 && cfg.bootstrap_rounds > 0 && points.iter().all(|p| p.observed.len() == seeds) {
        let per_seed = (0..seeds)
            .map(|j| {
                let ys: Vec<f64> = points.iter().map(|p| p.observed[j]).collect();
                let ql = pred
                    .marginals
                    .iter()
                    .zip(&ys)
                    .map(|(m, &y)| quantized_likelihood(m, y, cfg.delta))
                    .collect::<Result<Vec<_>>>()?;
                Ok([rmse(&truncated, &ys)?, mae(&truncated, &ys)?, mean(&ql)])
            })
            .collect::<Result<Vec<[f64; 3]>>>()?;
        let col = |k: usize| move |s: &[[f64; 3]]| s.iter().map(|v| v[k]).sum::<f64>() / s.len() as f64;
        Some(BootstrapStd {
            rmse: bootstrap_std(col(0), &per_seed, cfg.bootstrap_rounds, rng)?,
            mae: bootstrap_std(col(1), &per_seed, cfg.bootstrap_rounds, rng)?,
            quantized_likelihood: bootstrap_std(col(2), &per_seed, cfg.bootstrap_rounds, rng)?,
        })
    } else {
        None
    };

    Ok(MetricReport {
        rmse: rmse(&truncated, &observed)?,
        mae: mae(&truncated, &observed)?,
        rmse_untruncated: rmse(&pred.mean, &observed)?,
        mae_untruncated: mae(&pred.mean, &observed)?,
        quantized_likelihoods,
        uniform_baseline,
        coverage: rates,
        bootstrap_std,
    })
}
