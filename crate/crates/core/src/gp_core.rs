//! Gaussian-process learning-curve model: marginal likelihood, MAP objective,
//! posterior predictive and its truncation to `[0, 1]`.
//!
//! All solves go through a Cholesky factor of `K + τ²I`. If the plain factor
//! fails, a diagonal jitter ladder `1e-10, 1e-9, …, 1e-6` is tried.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::curve_models::{kernel_matrix, mean_vector, KernelParams, MeanFamily, MeanParams};
use crate::error::{Error, Result};
use crate::math_stats::TruncNormal;
use crate::priors::{log_prior_eta_unchecked, Eta, PriorConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Pilot measurements: strictly increasing sizes with accuracies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDataset {
    sizes: Vec<f64>,
    accuracies: Vec<f64>,
}

impl CurveDataset {
    pub fn new(sizes: Vec<f64>, accuracies: Vec<f64>) -> Result<Self> {
        if sizes.len() != accuracies.len() {
            return Err(Error::LengthMismatch {
                left: sizes.len(),
                right: accuracies.len(),
            });
        }
        if sizes.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "a curve dataset needs at least 2 points, got {}",
                sizes.len()
            )));
        }
        if let Some(&x) = sizes.iter().find(|x| !(**x >= 1.0 && x.is_finite())) {
            return Err(Error::InvalidParams(format!("sizes must be finite and >= 1, got {x}")));
        }
        if !sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParams("sizes must be strictly increasing".into()));
        }
        if let Some(&y) = accuracies.iter().find(|y| !(0.0..=1.0).contains(*y)) {
            return Err(Error::InvalidParams(format!("accuracies must lie in [0, 1], got {y}")));
        }
        Ok(CurveDataset { sizes, accuracies })
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.accuracies
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Largest observed accuracy (`y'`).
    pub fn best_accuracy(&self) -> f64 {
        self.accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub family: MeanFamily,
    pub mean: MeanParams,
    pub kernel: KernelParams,
    /// Observation noise standard deviation.
    pub tau: f64,
}

impl ModelParams {
    pub fn check(&self) -> Result<()> {
        self.family.check(&self.mean)?;
        self.kernel.check()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Constraint(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }

    pub fn eta(&self) -> Eta {
        Eta {
            tau: self.tau,
            sigma: self.kernel.sigma,
            lambda: self.kernel.lambda,
            epsilon: self.mean.epsilon,
        }
    }
}

fn check_lengths(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::Empty("no training points".into()));
    }
    Ok(())
}

/// Cholesky factor of `K + τ²I`, plus whatever jitter it needed.
struct NoisyGram {
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl NoisyGram {
    fn new(xs: &[f64], params: &ModelParams) -> Result<Self> {
        let mut c = kernel_matrix(xs, xs, &params.kernel)?;
        let gram = c.clone();
        let tau2 = params.tau * params.tau;
        for i in 0..xs.len() {
            c[(i, i)] += tau2;
        }
        if let Some(chol) = c.clone().cholesky() {
            return Ok(NoisyGram { gram, chol });
        }
        let mut applied = 0.0;
        for &j in &JITTER_LADDER {
            for i in 0..xs.len() {
                c[(i, i)] += j - applied;
            }
            applied = j;
            if let Some(chol) = c.clone().cholesky() {
                return Ok(NoisyGram { gram, chol });
            }
        }
        Err(Error::Factorization(format!(
            "K + tau^2 I not positive definite even with jitter {} (sigma={}, lambda={}, tau={})",
            applied, params.kernel.sigma, params.kernel.lambda, params.tau
        )))
    }

    fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

fn residuals(xs: &[f64], ys: &[f64], params: &ModelParams) -> Result<DVector<f64>> {
    let m = mean_vector(xs, params.family, &params.mean)?;
    Ok(DVector::from_iterator(xs.len(), ys.iter().zip(&m).map(|(y, m)| y - m)))
}

/// `ln N(y | m(x), K + τ²I)`.
pub fn log_marginal_likelihood(xs: &[f64], ys: &[f64], params: &ModelParams) -> Result<f64> {
    check_lengths(xs, ys)?;
    params.check()?;
    let r = residuals(xs, ys, params)?;
    let g = NoisyGram::new(xs, params)?;
    let alpha = g.chol.solve(&r);
    Ok(-0.5 * xs.len() as f64 * LN_2PI - 0.5 * g.log_det() - 0.5 * r.dot(&alpha))
}

/// Log marginal likelihood together with its gradient with respect to
/// `(θ1, θ2, ε, σ, λ, τ)`.
pub fn log_marginal_likelihood_with_gradient(
    xs: &[f64],
    ys: &[f64],
    params: &ModelParams,
) -> Result<(f64, [f64; 6])> {
    check_lengths(xs, ys)?;
    params.check()?;
    let n = xs.len();
    let r = residuals(xs, ys, params)?;
    let g = NoisyGram::new(xs, params)?;
    let alpha = g.chol.solve(&r);
    let value = -0.5 * n as f64 * LN_2PI - 0.5 * g.log_det() - 0.5 * r.dot(&alpha);

    // W = ααᵀ - C⁻¹; ∂L/∂p = ½ tr(W ∂C/∂p) + αᵀ ∂m/∂p
    let w = &alpha * alpha.transpose() - g.chol.inverse();
    let KernelParams { sigma, lambda } = params.kernel;
    let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let mut d_sigma = 0.0;
    let mut d_lambda = 0.0;
    for i in 0..n {
        for j in 0..n {
            let k = g.gram[(i, j)];
            let d = logs[i] - logs[j];
            d_sigma += w[(i, j)] * 2.0 * k / sigma;
            d_lambda += w[(i, j)] * k * d * d / (lambda * lambda * lambda);
        }
    }
    let d_tau = params.tau * w.trace();

    let mut d_mean = [0.0; 3];
    for (i, &x) in xs.iter().enumerate() {
        let gm = params.family.gradient(x, &params.mean);
        for k in 0..3 {
            d_mean[k] += alpha[i] * gm[k];
        }
    }
    Ok((
        value,
        [d_mean[0], d_mean[1], d_mean[2], 0.5 * d_sigma, 0.5 * d_lambda, d_tau],
    ))
}

/// MAP objective: log marginal likelihood plus `ln p(η)`. `-∞` when any `η`
/// component leaves the prior support.
pub fn map_objective(data: &CurveDataset, params: &ModelParams, cfg: &PriorConfig) -> Result<f64> {
    cfg.validate()?;
    let lp = log_prior_eta_unchecked(&params.eta(), cfg);
    if lp == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(log_marginal_likelihood(data.sizes(), data.accuracies(), params)? + lp)
}

/// Univariate predictive restricted to `[0, 1]`.
pub fn truncated_marginal(mu: f64, var: f64) -> Result<TruncNormal> {
    TruncNormal::unit_interval(mu, var.max(VARIANCE_FLOOR).sqrt())
}

/// Joint Gaussian predictive over query sizes plus per-point truncated marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub query_sizes: Vec<f64>,
    /// Untruncated predictive means.
    pub mean: Vec<f64>,
    /// Untruncated joint covariance, kept for diagnostics.
    pub cov: DMatrix<f64>,
    pub marginals: Vec<TruncNormal>,
}

impl PredictiveDistribution {
    pub fn len(&self) -> usize {
        self.query_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.query_sizes.is_empty()
    }

    /// Means of the truncated marginals.
    pub fn truncated_means(&self) -> Vec<f64> {
        self.marginals.iter().map(|m| m.mean()).collect()
    }
}

/// Conditions the GP on `(xs, ys)` and returns the predictive at `query`.
pub fn posterior_predictive(
    xs: &[f64],
    ys: &[f64],
    params: &ModelParams,
    query: &[f64],
) -> Result<PredictiveDistribution> {
    check_lengths(xs, ys)?;
    params.check()?;
    if query.is_empty() {
        return Err(Error::Empty("no query sizes".into()));
    }
    let r = residuals(xs, ys, params)?;
    let g = NoisyGram::new(xs, params)?;
    let k_star = kernel_matrix(xs, query, &params.kernel)?;
    let mut k_ss = kernel_matrix(query, query, &params.kernel)?;
    let m_star = mean_vector(query, params.family, &params.mean)?;

    let alpha = g.chol.solve(&r);
    let mu = DVector::from_vec(m_star) + k_star.transpose() * alpha;

    let v = g
        .chol
        .l_dirty()
        .solve_lower_triangular(&k_star)
        .ok_or_else(|| Error::Factorization("triangular solve failed".into()))?;
    let tau2 = params.tau * params.tau;
    for q in 0..query.len() {
        k_ss[(q, q)] += tau2;
    }
    let raw = k_ss - v.transpose() * v;
    let cov = (&raw + raw.transpose()) * 0.5;

    let mean: Vec<f64> = mu.iter().copied().collect();
    if mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::Factorization("non-finite predictive mean".into()));
    }
    let marginals = (0..query.len())
        .map(|q| truncated_marginal(mean[q], cov[(q, q)]))
        .collect::<Result<Vec<_>>>()?;

    Ok(PredictiveDistribution {
        query_sizes: query.to_vec(),
        mean,
        cov,
        marginals,
    })
}
