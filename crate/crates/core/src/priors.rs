//! Priors on the uncertainty/asymptote parameters `τ, σ, λ, ε`.
//!
//! `τ`, `σ` and `λ` get truncated-normal priors on `[0, ∞)`; `ε` gets a flat
//! prior between an expert lower bound and the gap left by the best pilot
//! accuracy. The `σ` prior is calibrated by Monte Carlo so that the implied
//! 6-standard-deviation window `w = 6·sqrt(τ² + σ²)` hits target percentiles.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math_stats::{percentile_nearest_rank, TruncNormal};

/// Location/scale of the shipped `τ` prior, `N[0,∞)(0, 0.01²)`: three standard
/// deviations land at 0.03.
pub const DEFAULT_TAU_LOC: f64 = 0.0;
pub const DEFAULT_TAU_SCALE: f64 = 0.01;

pub const DEFAULT_LAMBDA_LOC: f64 = -1.23;
pub const DEFAULT_LAMBDA_SCALE: f64 = 2.14;

pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
pub const MIN_MC_SAMPLES: usize = 100_000;
pub const GRID_POINTS: usize = 41;
const NU_GRID_MIN: f64 = 1e-3;

/// Grid candidates are screened with this many draws before the best few are
/// re-scored with the full sample budget.
const SCREEN_SAMPLES: usize = 20_000;
const REFINE_CANDIDATES: usize = 8;

pub fn default_tau_prior() -> TruncNormal {
    TruncNormal::nonnegative(DEFAULT_TAU_LOC, DEFAULT_TAU_SCALE).expect("valid constant prior")
}

pub fn default_lambda_prior() -> TruncNormal {
    TruncNormal::nonnegative(DEFAULT_LAMBDA_LOC, DEFAULT_LAMBDA_SCALE).expect("valid constant prior")
}

/// Support of the flat `ε` prior: `(epsilon_min, 1 - y_best_observed)`.
pub fn epsilon_bounds(y_best_observed: f64, epsilon_min: f64) -> Result<(f64, f64)> {
    if !(y_best_observed > 0.0 && y_best_observed < 1.0) {
        return Err(Error::Domain(format!(
            "best observed accuracy must lie in (0, 1), got {y_best_observed}"
        )));
    }
    if !(0.0..1.0).contains(&epsilon_min) {
        return Err(Error::Domain(format!("epsilon_min must lie in [0, 1), got {epsilon_min}")));
    }
    let upper = 1.0 - y_best_observed;
    if epsilon_min > upper {
        return Err(Error::InfeasibleBounds {
            epsilon_min,
            y_best: y_best_observed,
            upper,
        });
    }
    Ok((epsilon_min, upper))
}

/// Length scale at which `k(x, r·x) / σ² = fraction`.
pub fn solve_lambda_for_fraction(r: f64, fraction: f64) -> Result<f64> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::Domain(format!("size ratio must be > 1, got {r}")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Domain(format!("covariance fraction must lie in (0, 1), got {fraction}")));
    }
    Ok(r.ln() / (-2.0 * fraction.ln()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eta {
    pub tau: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub tau_prior: TruncNormal,
    pub sigma_prior: TruncNormal,
    pub lambda_prior: TruncNormal,
    pub epsilon_min: f64,
    /// Best accuracy seen in the pilot data (`y'`).
    pub y_best_observed: f64,
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("tau", &self.tau_prior),
            ("sigma", &self.sigma_prior),
            ("lambda", &self.lambda_prior),
        ] {
            p.validate()?;
            if p.lower != 0.0 || p.upper != f64::INFINITY {
                return Err(Error::InvalidParams(format!(
                    "{name} prior must have support [0, inf), got [{}, {}]",
                    p.lower, p.upper
                )));
            }
        }
        let (lo, hi) = self.epsilon_bounds()?;
        if lo >= hi {
            return Err(Error::InfeasibleBounds {
                epsilon_min: self.epsilon_min,
                y_best: self.y_best_observed,
                upper: hi,
            });
        }
        Ok(())
    }

    pub fn epsilon_bounds(&self) -> Result<(f64, f64)> {
        epsilon_bounds(self.y_best_observed, self.epsilon_min)
    }

    /// Stable short digest of the configuration, for output metadata.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = serde_json::to_string(self).expect("prior config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }
}

/// `ln p(η)`: three truncated normals plus the flat `ε` density. Returns `-∞`
/// outside the support.
pub fn log_prior_eta(eta: &Eta, cfg: &PriorConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(log_prior_eta_unchecked(eta, cfg))
}

pub(crate) fn log_prior_eta_unchecked(eta: &Eta, cfg: &PriorConfig) -> f64 {
    let lo = cfg.epsilon_min;
    let hi = 1.0 - cfg.y_best_observed;
    if !(eta.epsilon >= lo && eta.epsilon <= hi) {
        return f64::NEG_INFINITY;
    }
    cfg.tau_prior.logpdf(eta.tau) + cfg.sigma_prior.logpdf(eta.sigma) + cfg.lambda_prior.logpdf(eta.lambda)
        - (hi - lo).ln()
}

/// Gradient of `ln p(η)` as `(τ, σ, λ, ε)` inside the support.
pub(crate) fn grad_log_prior_eta(eta: &Eta, cfg: &PriorConfig) -> [f64; 4] {
    [
        cfg.tau_prior.dlogpdf(eta.tau),
        cfg.sigma_prior.dlogpdf(eta.sigma),
        cfg.lambda_prior.dlogpdf(eta.lambda),
        0.0,
    ]
}

/// Which 20th/80th percentile targets (as fractions of the width `W`) the `σ`
/// calibration aims for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileTargets {
    /// `(W/4, W/2)`
    Figure,
    /// `(W/2, 3W/4)`
    Equation,
}

impl PercentileTargets {
    pub fn fractions(self) -> (f64, f64) {
        match self {
            PercentileTargets::Figure => (0.25, 0.5),
            PercentileTargets::Equation => (0.5, 0.75),
        }
    }
}

impl fmt::Display for PercentileTargets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PercentileTargets::Figure => "figure",
            PercentileTargets::Equation => "equation",
        })
    }
}

impl FromStr for PercentileTargets {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "figure" => Ok(PercentileTargets::Figure),
            "equation" => Ok(PercentileTargets::Equation),
            other => Err(Error::Format(format!("unknown percentile targets '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    /// Accuracy headroom `W = max accuracy - y'`.
    pub width: f64,
    pub pct_lo_target: f64,
    pub pct_hi_target: f64,
    pub mc_samples: usize,
    pub mu_grid: Vec<f64>,
    pub nu_grid: Vec<f64>,
}

impl CalibrationTargets {
    /// Default 41×41 grid: `μ_σ` linear on `[0, W]`, `ν_σ` log-spaced on `[1e-3, W]`.
    pub fn new(width: f64, targets: PercentileTargets, mc_samples: usize) -> Result<Self> {
        if !(width > NU_GRID_MIN && width <= 1.0) {
            return Err(Error::Domain(format!(
                "calibration width must lie in ({NU_GRID_MIN}, 1], got {width}"
            )));
        }
        let n = GRID_POINTS;
        let mu_grid = (0..n).map(|i| width * i as f64 / (n - 1) as f64).collect();
        let (l0, l1) = (NU_GRID_MIN.ln(), width.ln());
        let nu_grid = (0..n)
            .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
            .collect();
        let (pct_lo_target, pct_hi_target) = targets.fractions();
        let t = CalibrationTargets {
            width,
            pct_lo_target,
            pct_hi_target,
            mc_samples,
            mu_grid,
            nu_grid,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) {
            return Err(Error::Domain(format!("width must be positive, got {}", self.width)));
        }
        if !(0.0 < self.pct_lo_target && self.pct_lo_target < self.pct_hi_target && self.pct_hi_target < 1.0) {
            return Err(Error::InvalidParams(format!(
                "percentile targets must satisfy 0 < lo < hi < 1, got ({}, {})",
                self.pct_lo_target, self.pct_hi_target
            )));
        }
        if self.mc_samples < MIN_MC_SAMPLES {
            return Err(Error::InvalidParams(format!(
                "mc_samples must be at least {MIN_MC_SAMPLES}, got {}",
                self.mc_samples
            )));
        }
        Ok(())
    }

    /// Target values for the 20th and 80th percentiles of `w`.
    pub fn target_values(&self) -> (f64, f64) {
        (self.pct_lo_target * self.width, self.pct_hi_target * self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCalibration {
    pub prior: TruncNormal,
    pub achieved_p20: f64,
    pub achieved_p80: f64,
    pub target_p20: f64,
    pub target_p80: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

/// 20th and 80th nearest-rank percentiles of `w = 6·sqrt(τ² + σ²)` over `n`
/// independent prior draws taken from `rng`.
pub fn implied_window_percentiles(
    tau_prior: &TruncNormal,
    sigma_prior: &TruncNormal,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let tau = tau_prior.sampler();
    let sigma = sigma_prior.sampler();
    let mut w: Vec<f64> = (0..n)
        .map(|_| {
            let t = tau.sample(rng);
            let s = sigma.sample(rng);
            6.0 * (t * t + s * s).sqrt()
        })
        .collect();
    let p20 = percentile_nearest_rank(&mut w, 20.0);
    let p80 = percentile_nearest_rank(&mut w, 80.0);
    (p20, p80)
}

fn candidate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Grid search for the `σ` prior hyperparameters.
///
/// Every candidate draws from its own ChaCha stream derived from `seed`, so the
/// result does not depend on evaluation order. All candidates are scored on a
/// prefix of their stream; the closest few are re-scored on `mc_samples` draws
/// and the best of those wins (ties go to the lowest grid index).
pub fn calibrate_sigma_prior(
    tau_prior: &TruncNormal,
    targets: &CalibrationTargets,
    seed: u64,
) -> Result<SigmaCalibration> {
    targets.validate()?;
    tau_prior.validate()?;
    if targets.mu_grid.is_empty() || targets.nu_grid.is_empty() {
        return Err(Error::Empty("sigma calibration grid".into()));
    }
    let (t_lo, t_hi) = target_values_checked(targets)?;

    let candidates: Vec<TruncNormal> = targets
        .mu_grid
        .iter()
        .flat_map(|&mu| targets.nu_grid.iter().map(move |&nu| (mu, nu)))
        .filter_map(|(mu, nu)| TruncNormal::nonnegative(mu, nu).ok())
        .collect();
    if candidates.is_empty() {
        return Err(Error::Empty("no valid sigma calibration candidates".into()));
    }

    let loss = |(p20, p80): (f64, f64)| (p20 - t_lo).powi(2) + (p80 - t_hi).powi(2);
    let score = |idx: usize, n: usize| {
        let mut rng = candidate_rng(seed, idx);
        let pct = implied_window_percentiles(tau_prior, &candidates[idx], n, &mut rng);
        (loss(pct), pct)
    };

    let screen_n = targets.mc_samples.min(SCREEN_SAMPLES);
    let mut screened: Vec<(usize, f64)> = (0..candidates.len())
        .into_par_iter()
        .map(|i| (i, score(i, screen_n).0))
        .collect();
    screened.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    screened.truncate(REFINE_CANDIDATES);

    let refined: Vec<(usize, f64, (f64, f64))> = screened
        .par_iter()
        .map(|&(i, _)| {
            let (l, pct) = score(i, targets.mc_samples);
            (i, l, pct)
        })
        .collect();
    let (best, _, (p20, p80)) = refined
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("at least one refined candidate");

    Ok(SigmaCalibration {
        prior: candidates[best],
        achieved_p20: p20,
        achieved_p80: p80,
        target_p20: t_lo,
        target_p80: t_hi,
        mc_samples: targets.mc_samples,
        seed,
    })
}

fn target_values_checked(targets: &CalibrationTargets) -> Result<(f64, f64)> {
    let (lo, hi) = targets.target_values();
    if lo.is_finite() && hi.is_finite() {
        Ok((lo, hi))
    } else {
        Err(Error::InvalidParams("non-finite calibration targets".into()))
    }
}

/// Settings for building a full [`PriorConfig`] from pilot data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSettings {
    pub epsilon_min: f64,
    /// Best accuracy believed achievable; defaults to `1 - epsilon_min`.
    pub max_accuracy: Option<f64>,
    pub tau_prior: TruncNormal,
    pub lambda_prior: TruncNormal,
    pub percentile_targets: PercentileTargets,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for PriorSettings {
    fn default() -> Self {
        PriorSettings {
            epsilon_min: 0.0,
            max_accuracy: None,
            tau_prior: default_tau_prior(),
            lambda_prior: default_lambda_prior(),
            percentile_targets: PercentileTargets::Figure,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

impl PriorSettings {
    pub fn max_accuracy(&self) -> f64 {
        self.max_accuracy.unwrap_or(1.0 - self.epsilon_min)
    }
}

/// Calibrates `σ` for the headroom above `y_best_observed` and assembles the
/// full prior configuration.
pub fn build_prior_config(y_best_observed: f64, settings: &PriorSettings) -> Result<(PriorConfig, SigmaCalibration)> {
    epsilon_bounds(y_best_observed, settings.epsilon_min)?;
    let width = settings.max_accuracy() - y_best_observed;
    if !(width > 0.0) {
        return Err(Error::InvalidParams(format!(
            "max accuracy {} must exceed best observed accuracy {y_best_observed}",
            settings.max_accuracy()
        )));
    }
    let targets = CalibrationTargets::new(width, settings.percentile_targets, settings.mc_samples)?;
    let calibration = calibrate_sigma_prior(&settings.tau_prior, &targets, settings.seed)?;
    let cfg = PriorConfig {
        tau_prior: settings.tau_prior,
        sigma_prior: calibration.prior,
        lambda_prior: settings.lambda_prior,
        epsilon_min: settings.epsilon_min,
        y_best_observed,
    };
    cfg.validate()?;
    Ok((cfg, calibration))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve_models::{kernel_log_rbf, KernelParams};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg(epsilon_min: f64, y_best: f64) -> PriorConfig {
        PriorConfig {
            tau_prior: default_tau_prior(),
            sigma_prior: TruncNormal::nonnegative(0.01, 0.01).unwrap(),
            lambda_prior: default_lambda_prior(),
            epsilon_min,
            y_best_observed: y_best,
        }
    }

    fn eta(epsilon: f64) -> Eta {
        Eta {
            tau: 0.01,
            sigma: 0.02,
            lambda: 0.5,
            epsilon,
        }
    }

    #[test]
    fn epsilon_bound_examples() {
        let (lo, hi) = epsilon_bounds(0.7, 0.05).unwrap();
        assert_eq!(lo, 0.05);
        assert_abs_diff_eq!(hi, 0.30, epsilon = 1e-15);

        let (lo, hi) = epsilon_bounds(0.999, 0.0).unwrap();
        assert_eq!(lo, 0.0);
        assert_abs_diff_eq!(hi, 0.001, epsilon = 1e-15);

        let err = epsilon_bounds(0.99, 0.05).unwrap_err();
        assert!(matches!(err, Error::InfeasibleBounds { .. }));
        let msg = err.to_string();
        assert!(msg.contains("0.05") && msg.contains("0.99"), "{msg}");
    }

    #[test]
    fn epsilon_term_is_flat() {
        let c = cfg(0.05, 0.7);
        let base = log_prior_eta(&eta(0.1), &c).unwrap();
        let other = log_prior_eta(&eta(0.29), &c).unwrap();
        assert_abs_diff_eq!(base, other, epsilon = 1e-14);

        let rest = c.tau_prior.logpdf(0.01) + c.sigma_prior.logpdf(0.02) + c.lambda_prior.logpdf(0.5);
        assert_abs_diff_eq!(base - rest, -(0.25f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(base - rest, 1.386_294_361_119_890_6, epsilon = 1e-12);

        assert_eq!(log_prior_eta(&eta(0.049), &c).unwrap(), f64::NEG_INFINITY);
        assert_eq!(log_prior_eta(&eta(0.31), &c).unwrap(), f64::NEG_INFINITY);
        let mut neg = eta(0.1);
        neg.tau = -0.001;
        assert_eq!(log_prior_eta(&neg, &c).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(log_prior_eta(&eta(0.1), &cfg(0.05, 0.99)).is_err());
        let mut c = cfg(0.0, 0.7);
        c.lambda_prior = TruncNormal::new(0.0, 1.0, -1.0, f64::INFINITY).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn lambda_solutions() {
        assert_abs_diff_eq!(solve_lambda_for_fraction(1.5, 0.01).unwrap(), 0.133_602_826_869_339_28, epsilon = 1e-12);
        assert_abs_diff_eq!(solve_lambda_for_fraction(1.5, 0.99).unwrap(), 2.859_882_578_128_35, epsilon = 1e-10);
        for r in [1.1, 2.0, 37.0] {
            let lam = solve_lambda_for_fraction(r, (-0.5f64).exp()).unwrap();
            assert_abs_diff_eq!(lam, f64::ln(r), epsilon = 1e-12);
        }
        assert!(solve_lambda_for_fraction(1.0, 0.5).is_err());
        assert!(solve_lambda_for_fraction(2.0, 1.0).is_err());
        assert!(solve_lambda_for_fraction(2.0, 0.0).is_err());
    }

    #[test]
    fn default_lambda_prior_percentiles() {
        let p = default_lambda_prior();
        assert_eq!((p.loc, p.scale, p.lower, p.upper), (-1.23, 2.14, 0.0, f64::INFINITY));
        // independently computed quantiles of N[0,∞)(-1.23, 2.14²)
        let p10 = p.ppf(0.1).unwrap();
        let p90 = p.ppf(0.9).unwrap();
        assert_abs_diff_eq!(p10, 0.183_565_496_564_784_16, epsilon = 1e-9);
        assert_abs_diff_eq!(p90, 2.850_577_753_567_222_8, epsilon = 1e-9);
        assert_abs_diff_eq!(p90, 2.86, epsilon = 0.3);
        assert_eq!(p.cdf(0.0), 0.0);
    }

    #[test]
    fn degenerate_monte_carlo_window() {
        let s0 = 0.02;
        let tau = TruncNormal::new(0.0, 1.0, 0.0, 1e-12).unwrap();
        let sigma = TruncNormal::new(s0, 1e-9, 0.0, f64::INFINITY).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p20, p80) = implied_window_percentiles(&tau, &sigma, 10_000, &mut rng);
        assert_abs_diff_eq!(p20, 6.0 * s0, epsilon = 1e-7);
        assert_abs_diff_eq!(p80, 6.0 * s0, epsilon = 1e-7);

        let targets = CalibrationTargets {
            width: 0.25,
            pct_lo_target: 0.25,
            pct_hi_target: 0.5,
            mc_samples: MIN_MC_SAMPLES,
            mu_grid: vec![s0],
            nu_grid: vec![1e-9],
        };
        let cal = calibrate_sigma_prior(&tau, &targets, 9).unwrap();
        assert_abs_diff_eq!(cal.achieved_p20, 6.0 * s0, epsilon = 1e-7);
        assert_abs_diff_eq!(cal.achieved_p80, 6.0 * s0, epsilon = 1e-7);
    }

    #[test]
    fn empty_grid_rejected() {
        let mut t = CalibrationTargets::new(0.25, PercentileTargets::Figure, MIN_MC_SAMPLES).unwrap();
        t.mu_grid.clear();
        assert!(calibrate_sigma_prior(&default_tau_prior(), &t, 0).is_err());
    }

    #[test]
    fn targets_scale_with_width() {
        let a = CalibrationTargets::new(0.2, PercentileTargets::Figure, MIN_MC_SAMPLES).unwrap();
        let b = CalibrationTargets::new(0.4, PercentileTargets::Figure, MIN_MC_SAMPLES).unwrap();
        let (a_lo, a_hi) = a.target_values();
        let (b_lo, b_hi) = b.target_values();
        assert_abs_diff_eq!(b_lo, 2.0 * a_lo, epsilon = 1e-15);
        assert_abs_diff_eq!(b_hi, 2.0 * a_hi, epsilon = 1e-15);

        let e = CalibrationTargets::new(0.25, PercentileTargets::Equation, MIN_MC_SAMPLES).unwrap();
        assert_eq!(e.target_values(), (0.125, 0.1875));
        assert_eq!(a.mu_grid.len(), 41);
        assert_eq!(a.nu_grid.len(), 41);
        assert_abs_diff_eq!(a.nu_grid[0], 1e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(a.nu_grid[40], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn calibration_is_deterministic() {
        let t = CalibrationTargets::new(0.25, PercentileTargets::Figure, MIN_MC_SAMPLES).unwrap();
        let a = calibrate_sigma_prior(&default_tau_prior(), &t, 42).unwrap();
        let b = calibrate_sigma_prior(&default_tau_prior(), &t, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn digest_changes_with_config() {
        let a = cfg(0.0, 0.7);
        let b = cfg(0.0, 0.71);
        assert_eq!(a.digest(), cfg(0.0, 0.7).digest());
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 16);
    }

    proptest! {
        #[test]
        fn lambda_round_trips_through_kernel(r in 1.01..100.0f64, f in 0.001..0.999f64) {
            let lam = solve_lambda_for_fraction(r, f).unwrap();
            let k = kernel_log_rbf(50.0, 50.0 * r, &KernelParams::new(1.0, lam)).unwrap();
            prop_assert!((k - f).abs() < 1e-10);
        }

        #[test]
        fn prior_flat_in_epsilon(e1 in 0.05..0.3f64, e2 in 0.05..0.3f64) {
            let c = cfg(0.05, 0.7);
            let a = log_prior_eta(&eta(e1), &c).unwrap();
            let b = log_prior_eta(&eta(e2), &c).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
