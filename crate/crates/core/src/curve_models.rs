//! Saturating mean functions and the log-space RBF covariance.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFamily {
    /// `(1 - ε) - θ1·x^θ2`
    PowerLaw,
    /// `(2/π)·arctan(θ1·(π/2)·x + θ2) - ε`
    Arctan,
}

impl MeanFamily {
    pub fn short_name(self) -> &'static str {
        match self {
            MeanFamily::PowerLaw => "pow",
            MeanFamily::Arctan => "arc",
        }
    }

    /// Mean at `x` without constraint checks.
    pub fn eval(self, x: f64, p: &MeanParams) -> f64 {
        match self {
            MeanFamily::PowerLaw => (1.0 - p.epsilon) - p.theta1 * (p.theta2 * x.ln()).exp(),
            MeanFamily::Arctan => {
                FRAC_2_PI * (p.theta1 * FRAC_PI_2 * x + p.theta2).atan() - p.epsilon
            }
        }
    }

    /// Partial derivatives `(∂/∂θ1, ∂/∂θ2, ∂/∂ε)` at `x`.
    pub fn gradient(self, x: f64, p: &MeanParams) -> [f64; 3] {
        match self {
            MeanFamily::PowerLaw => {
                let lx = x.ln();
                let pw = (p.theta2 * lx).exp();
                [-pw, -p.theta1 * pw * lx, -1.0]
            }
            MeanFamily::Arctan => {
                let t = p.theta1 * FRAC_PI_2 * x + p.theta2;
                let d = 1.0 / (1.0 + t * t);
                [x * d, FRAC_2_PI * d, -1.0]
            }
        }
    }

    pub fn check(self, p: &MeanParams) -> Result<()> {
        let finite = p.theta1.is_finite() && p.theta2.is_finite() && p.epsilon.is_finite();
        if !finite {
            return Err(Error::Constraint(format!("non-finite mean parameters {p:?}")));
        }
        if p.theta1 < 0.0 {
            return Err(Error::Constraint(format!("theta1 must be >= 0, got {}", p.theta1)));
        }
        match self {
            MeanFamily::PowerLaw if !(-1.0..=0.0).contains(&p.theta2) => {
                return Err(Error::Constraint(format!(
                    "power-law theta2 must lie in [-1, 0], got {}",
                    p.theta2
                )))
            }
            MeanFamily::Arctan if p.theta2 < 0.0 => {
                return Err(Error::Constraint(format!(
                    "arctan theta2 must be >= 0, got {}",
                    p.theta2
                )))
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&p.epsilon) {
            return Err(Error::Constraint(format!("epsilon must lie in [0, 1), got {}", p.epsilon)));
        }
        Ok(())
    }
}

impl fmt::Display for MeanFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for MeanFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pow" | "power" | "power_law" | "powerlaw" => Ok(MeanFamily::PowerLaw),
            "arc" | "arctan" => Ok(MeanFamily::Arctan),
            other => Err(Error::Format(format!("unknown mean family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanParams {
    pub theta1: f64,
    pub theta2: f64,
    /// Saturation gap: the curve approaches `1 - epsilon`.
    pub epsilon: f64,
}

impl MeanParams {
    pub fn new(theta1: f64, theta2: f64, epsilon: f64) -> Self {
        MeanParams {
            theta1,
            theta2,
            epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Output scale, in accuracy units.
    pub sigma: f64,
    /// Length scale, in log-size units.
    pub lambda: f64,
}

impl KernelParams {
    pub fn new(sigma: f64, lambda: f64) -> Self {
        KernelParams { sigma, lambda }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Constraint(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Constraint(format!("lambda must be > 0, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Covariance between two sizes, unchecked.
    pub fn eval(&self, x: f64, x2: f64) -> f64 {
        let d = x.ln() - x2.ln();
        self.sigma * self.sigma * (-d * d / (2.0 * self.lambda * self.lambda)).exp()
    }
}

fn check_size(x: f64) -> Result<()> {
    if x >= 1.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Constraint(format!("sizes must be finite and >= 1, got {x}")))
    }
}

pub fn mean_power_law(x: f64, p: &MeanParams) -> Result<f64> {
    check_size(x)?;
    MeanFamily::PowerLaw.check(p)?;
    Ok(MeanFamily::PowerLaw.eval(x, p))
}

pub fn mean_arctan(x: f64, p: &MeanParams) -> Result<f64> {
    check_size(x)?;
    MeanFamily::Arctan.check(p)?;
    Ok(MeanFamily::Arctan.eval(x, p))
}

pub fn kernel_log_rbf(x: f64, x2: f64, k: &KernelParams) -> Result<f64> {
    check_size(x)?;
    check_size(x2)?;
    k.check()?;
    Ok(k.eval(x, x2))
}

/// Cross-covariance matrix with entry `(s, t) = k(xs[s], xs2[t])`.
pub fn kernel_matrix(xs: &[f64], xs2: &[f64], k: &KernelParams) -> Result<DMatrix<f64>> {
    if xs.is_empty() || xs2.is_empty() {
        return Err(Error::Empty("kernel_matrix needs nonempty size lists".into()));
    }
    k.check()?;
    xs.iter().chain(xs2).try_for_each(|&x| check_size(x))?;
    Ok(DMatrix::from_fn(xs.len(), xs2.len(), |s, t| k.eval(xs[s], xs2[t])))
}

pub fn mean_vector(xs: &[f64], family: MeanFamily, p: &MeanParams) -> Result<Vec<f64>> {
    family.check(p)?;
    xs.iter()
        .map(|&x| {
            check_size(x)?;
            Ok(family.eval(x, p))
        })
        .collect()
}
