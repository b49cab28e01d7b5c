//! MAP fitting of the GP learning-curve model and the least-squares "best-fit"
//! baselines.
//!
//! Each parameter is optimized on an unconstrained scale: `θ1, σ, λ, τ` (and
//! the arctan `θ2`) through `exp`, the power-law `θ2` through `-sigmoid` onto
//! `(-1, 0)`, and `ε` through a sigmoid onto its prior support.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve_models::{KernelParams, MeanFamily, MeanParams};
use crate::error::{Error, Result};
use crate::gp_core::{
    log_marginal_likelihood_with_gradient, map_objective, posterior_predictive, CurveDataset, ModelParams,
    PredictiveDistribution,
};
use crate::optim::bfgs;
use crate::priors::{grad_log_prior_eta, log_prior_eta_unchecked, PriorConfig};

const THETA1: usize = 0;
const THETA2: usize = 1;
const EPSILON: usize = 2;
const SIGMA: usize = 3;
const LAMBDA: usize = 4;
const TAU: usize = 5;

/// Parameters held fixed during a MAP fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrozenParams {
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_starts: usize,
    pub max_iters: usize,
    /// Relative objective change treated as converged.
    pub convergence_tol: f64,
    pub seed: u64,
    #[serde(default)]
    pub frozen: FrozenParams,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_starts: 16,
            max_iters: 500,
            convergence_tol: 1e-9,
            seed: 0,
            frozen: FrozenParams::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::InvalidParams("n_starts must be at least 1".into()));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(Error::InvalidParams("convergence_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Audit record for one optimizer start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub start: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub data: CurveDataset,
    pub family: MeanFamily,
    pub params: ModelParams,
    pub prior: PriorConfig,
    pub objective: f64,
    pub trace: Vec<StartRecord>,
    pub fit_config: FitConfig,
}

impl FittedModel {
    pub fn predict(&self, query_sizes: &[f64]) -> Result<PredictiveDistribution> {
        posterior_predictive(self.data.sizes(), self.data.accuracies(), &self.params, query_sizes)
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Map between the six natural parameters and the free unconstrained ones.
#[derive(Debug, Clone, Copy)]
struct Reparam {
    family: MeanFamily,
    eps_lo: f64,
    eps_hi: f64,
    fixed: [Option<f64>; 6],
}

impl Reparam {
    fn free(&self) -> Vec<usize> {
        (0..6).filter(|&k| self.fixed[k].is_none()).collect()
    }

    /// Natural value and `d value / d u` for coordinate `k`.
    fn forward(&self, k: usize, u: f64) -> (f64, f64) {
        match (k, self.family) {
            (THETA2, MeanFamily::PowerLaw) => {
                let s = sigmoid(u);
                (-s, -s * (1.0 - s))
            }
            (EPSILON, _) => {
                let s = sigmoid(u);
                let w = self.eps_hi - self.eps_lo;
                (self.eps_lo + w * s, w * s * (1.0 - s))
            }
            _ => {
                let e = u.exp();
                (e, e)
            }
        }
    }

    fn inverse(&self, k: usize, v: f64) -> f64 {
        match (k, self.family) {
            (THETA2, MeanFamily::PowerLaw) => logit(-v),
            (EPSILON, _) => logit((v - self.eps_lo) / (self.eps_hi - self.eps_lo)),
            _ => v.ln(),
        }
    }

    fn natural(&self, u: &[f64]) -> ([f64; 6], [f64; 6]) {
        let mut v = [0.0; 6];
        let mut d = [0.0; 6];
        let mut it = u.iter();
        for k in 0..6 {
            match self.fixed[k] {
                Some(x) => v[k] = x,
                None => {
                    let (val, der) = self.forward(k, *it.next().expect("free coordinate"));
                    v[k] = val;
                    d[k] = der;
                }
            }
        }
        (v, d)
    }

    fn unconstrained(&self, v: &[f64; 6]) -> Vec<f64> {
        self.free().into_iter().map(|k| self.inverse(k, v[k])).collect()
    }

    fn params(&self, v: &[f64; 6]) -> ModelParams {
        ModelParams {
            family: self.family,
            mean: MeanParams::new(v[THETA1], v[THETA2], v[EPSILON]),
            kernel: KernelParams::new(v[SIGMA], v[LAMBDA]),
            tau: v[TAU],
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    lo + u * (hi - lo)
}

/// Random `(θ1, θ2)` from the family's initialization box.
fn draw_theta<R: Rng>(family: MeanFamily, rng: &mut R) -> (f64, f64) {
    match family {
        MeanFamily::PowerLaw => (log_uniform(rng, 1e-2, 1e2), uniform(rng, -0.98, -0.02)),
        MeanFamily::Arctan => (log_uniform(rng, 1e-5, 1e-1), uniform(rng, 0.01, 3.0)),
    }
}

fn start_rng(seed: u64, start: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64 + 1);
    rng
}

/// Argmax by objective; the lowest start index wins ties.
fn best_start<T>(results: &[(usize, f64, T)]) -> Option<&(usize, f64, T)> {
    results
        .iter()
        .filter(|r| r.1.is_finite())
        .fold(None, |best: Option<&(usize, f64, T)>, r| match best {
            Some(b) if b.1 > r.1 || (b.1 == r.1 && b.0 < r.0) => Some(b),
            _ => Some(r),
        })
}

/// Multi-start MAP estimate of `(θ, η)`.
pub fn fit_map(data: &CurveDataset, family: MeanFamily, prior: &PriorConfig, cfg: &FitConfig) -> Result<FittedModel> {
    cfg.validate()?;
    prior.validate()?;
    let (eps_lo, eps_hi) = prior.epsilon_bounds()?;
    let fz = cfg.frozen;
    if let Some(e) = fz.epsilon {
        if !(e >= eps_lo && e <= eps_hi) {
            return Err(Error::InvalidParams(format!(
                "frozen epsilon {e} outside prior support [{eps_lo}, {eps_hi}]"
            )));
        }
    }
    for (name, v) in [("sigma", fz.sigma), ("lambda", fz.lambda), ("tau", fz.tau)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("frozen {name} must be > 0, got {v}")));
            }
        }
    }
    let rp = Reparam {
        family,
        eps_lo,
        eps_hi,
        fixed: [None, None, fz.epsilon, fz.sigma, fz.lambda, fz.tau],
    };
    let free = rp.free();
    let xs = data.sizes();
    let ys = data.accuracies();

    let neg_objective = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (v, dv) = rp.natural(u);
        let params = rp.params(&v);
        let lp = log_prior_eta_unchecked(&params.eta(), prior);
        if !lp.is_finite() {
            return None;
        }
        let (ll, gll) = log_marginal_likelihood_with_gradient(xs, ys, &params).ok()?;
        let gp = grad_log_prior_eta(&params.eta(), prior);
        let mut g = gll;
        g[TAU] += gp[0];
        g[SIGMA] += gp[1];
        g[LAMBDA] += gp[2];
        g[EPSILON] += gp[3];
        Some((-(ll + lp), free.iter().map(|&k| -g[k] * dv[k]).collect()))
    };

    let runs: Vec<(usize, f64, (StartRecord, [f64; 6]))> = (0..cfg.n_starts)
        .into_par_iter()
        .map(|start| {
            let mut rng = start_rng(cfg.seed, start);
            let (t1, t2) = draw_theta(family, &mut rng);
            let init = [
                t1,
                t2,
                fz.epsilon.unwrap_or_else(|| uniform(&mut rng, eps_lo, eps_hi)),
                fz.sigma.unwrap_or_else(|| prior.sigma_prior.sample(&mut rng).max(1e-8)),
                fz.lambda.unwrap_or_else(|| prior.lambda_prior.sample(&mut rng).max(1e-8)),
                fz.tau.unwrap_or_else(|| prior.tau_prior.sample(&mut rng).max(1e-8)),
            ];
            let u0 = rp.unconstrained(&init);
            let initial = neg_objective(&u0).map(|(f, _)| -f).unwrap_or(f64::NEG_INFINITY);
            let record = |final_objective: f64, iterations, converged, error| StartRecord {
                start,
                initial_objective: initial,
                final_objective,
                iterations,
                converged,
                error,
            };
            match bfgs(neg_objective, &u0, cfg.max_iters, cfg.convergence_tol) {
                Some(out) => {
                    let (v, _) = rp.natural(&out.x);
                    (start, -out.f, (record(-out.f, out.iterations, out.converged, None), v))
                }
                None => (
                    start,
                    f64::NEG_INFINITY,
                    (
                        record(f64::NEG_INFINITY, 0, false, Some("objective undefined at start".into())),
                        init,
                    ),
                ),
            }
        })
        .collect();

    let trace: Vec<StartRecord> = runs.iter().map(|r| r.2 .0.clone()).collect();
    let (_, _, (_, best)) = best_start(&runs).ok_or(Error::AllStartsFailed(cfg.n_starts))?;
    let params = rp.params(best);
    params.check()?;
    let objective = map_objective(data, &params, prior)?;
    Ok(FittedModel {
        data: data.clone(),
        family,
        params,
        prior: prior.clone(),
        objective,
        trace,
        fit_config: cfg.clone(),
    })
}

/// Least-squares curve fit with `ε` held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicFit {
    pub family: MeanFamily,
    pub mean: MeanParams,
    pub sse: f64,
}

impl DeterministicFit {
    pub fn predict(&self, sizes: &[f64]) -> Vec<f64> {
        sizes.iter().map(|&x| self.family.eval(x, &self.mean)).collect()
    }
}

/// Multi-start least squares over `θ` under the family's constraints.
pub fn fit_deterministic(
    data: &CurveDataset,
    family: MeanFamily,
    epsilon_fixed: f64,
    cfg: &FitConfig,
) -> Result<DeterministicFit> {
    cfg.validate()?;
    if !(0.0..1.0).contains(&epsilon_fixed) {
        return Err(Error::Constraint(format!("epsilon must lie in [0, 1), got {epsilon_fixed}")));
    }
    let rp = Reparam {
        family,
        eps_lo: 0.0,
        eps_hi: 1.0,
        fixed: [None, None, Some(epsilon_fixed), Some(1.0), Some(1.0), Some(1.0)],
    };
    let xs = data.sizes();
    let ys = data.accuracies();
    let sse = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (v, dv) = rp.natural(u);
        let mean = MeanParams::new(v[THETA1], v[THETA2], v[EPSILON]);
        let mut total = 0.0;
        let mut g = [0.0; 2];
        for (&x, &y) in xs.iter().zip(ys) {
            let r = y - family.eval(x, &mean);
            let gm = family.gradient(x, &mean);
            total += r * r;
            g[0] -= 2.0 * r * gm[0];
            g[1] -= 2.0 * r * gm[1];
        }
        Some((total, vec![g[0] * dv[THETA1], g[1] * dv[THETA2]]))
    };

    let runs: Vec<(usize, f64, MeanParams)> = (0..cfg.n_starts)
        .into_par_iter()
        .filter_map(|start| {
            let mut rng = start_rng(cfg.seed, start);
            let (t1, t2) = draw_theta(family, &mut rng);
            let u0 = vec![rp.inverse(THETA1, t1), rp.inverse(THETA2, t2)];
            let out = bfgs(sse, &u0, cfg.max_iters, cfg.convergence_tol)?;
            let (v, _) = rp.natural(&out.x);
            // negate so the shared argmax helper picks the smallest SSE
            Some((start, -out.f, MeanParams::new(v[THETA1], v[THETA2], epsilon_fixed)))
        })
        .collect();
    let (_, neg_sse, mean) = best_start(&runs).ok_or(Error::AllStartsFailed(cfg.n_starts))?;
    family.check(mean)?;
    Ok(DeterministicFit {
        family,
        mean: *mean,
        sse: -neg_sse,
    })
}

/// Predictive distribution with equal-tailed intervals of the truncated
/// marginals. `intervals[q][l]` is the interval at `levels[l]` for query `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    pub predictive: PredictiveDistribution,
    pub levels: Vec<f64>,
    pub intervals: Vec<Vec<(f64, f64)>>,
}

pub fn central_interval(marginal: &crate::math_stats::TruncNormal, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("interval level must lie in (0, 1), got {level}")));
    }
    Ok((marginal.ppf(0.5 * (1.0 - level))?, marginal.ppf(0.5 * (1.0 + level))?))
}

pub fn extrapolate(model: &FittedModel, query_sizes: &[f64], levels: &[f64]) -> Result<Extrapolation> {
    let predictive = model.predict(query_sizes)?;
    let intervals = predictive
        .marginals
        .iter()
        .map(|m| levels.iter().map(|&l| central_interval(m, l)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Extrapolation {
        predictive,
        levels: levels.to_vec(),
        intervals,
    })
}
