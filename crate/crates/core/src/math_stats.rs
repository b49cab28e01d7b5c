//! Gaussian and truncated-Gaussian special functions.
//!
//! Everything that can fall into a far tail (predictive densities truncated to
//! `[0, 1]` routinely sit tens of standard deviations from their location) is
//! computed in log space, so CDF differences never cancel to zero.

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Standardized widths below this (scaled by the distance from the mode) are
/// integrated with a local series instead of a CDF difference.
const NARROW_WINDOW: f64 = 1e-3;

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

pub fn normal_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal CDF. Saturates to exactly 0 or 1 in the extreme tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(z)` without cancellation.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// `ln Φ(z)`, accurate far into the lower tail.
pub fn log_normal_cdf(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if z > 5.0 {
        return (-normal_sf(z)).ln_1p();
    }
    if z > -35.0 {
        return normal_cdf(z).ln();
    }
    // asymptotic (Mills ratio) expansion; the truncation error is below 1e-15 here
    let inv = 1.0 / (z * z);
    let series =
        1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv * (1.0 - 9.0 * inv))));
    -0.5 * z * z - (-z).ln() - LN_SQRT_2PI + series.ln()
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation followed by one Halley step against the
/// erfc-based CDF; the upper half is mapped onto the lower half, where `1 - p`
/// is exact.
pub fn normal_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -normal_ppf_lower(1.0 - p);
    }
    normal_ppf_lower(p)
}

fn normal_ppf_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];

    let x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    let e = normal_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    let refined = x - u / (1.0 + 0.5 * x * u);
    if refined.is_finite() {
        refined
    } else {
        x
    }
}

/// Solves `ln Φ(z) = log_p` for `z`.
fn inv_log_normal_cdf(log_p: f64) -> f64 {
    if log_p >= 0.0 {
        return f64::INFINITY;
    }
    if log_p == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if log_p > -std::f64::consts::LN_2 {
        return -normal_ppf_lower(-log_p.exp_m1());
    }
    if log_p > -700.0 {
        return normal_ppf_lower(log_p.exp());
    }
    let mut z = -(-2.0 * log_p).sqrt();
    for _ in 0..60 {
        let lc = log_normal_cdf(z);
        let slope = (normal_logpdf(z) - lc).exp();
        let step = (lc - log_p) / slope;
        z -= step;
        if step.abs() <= 1e-15 * z.abs() {
            break;
        }
    }
    z
}

fn log_add_exp(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(Φ(hi) - Φ(lo))` for standardized `lo < hi`.
fn log_mass(lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return f64::NEG_INFINITY;
    }
    let width = hi - lo;
    let mid = 0.5 * (lo + hi);
    if width.is_finite() && width * (1.0 + mid.abs()) < NARROW_WINDOW {
        // ∫φ over a short window: φ(m)·w·(1 + (m²-1)w²/24)
        return normal_logpdf(mid) + width.ln() + ((mid * mid - 1.0) * width * width / 24.0).ln_1p();
    }
    if lo >= 0.0 {
        return log_mass(-hi, -lo);
    }
    let lh = log_normal_cdf(hi);
    let ll = log_normal_cdf(lo);
    lh + (-(ll - lh).exp_m1()).ln()
}

/// Nearest-rank percentile (`pct` in percent): the smallest sample whose rank
/// is at least `ceil(pct/100 · n)`. Reorders `values` in place.
pub fn percentile_nearest_rank(values: &mut [f64], pct: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty sample");
    let n = values.len();
    let rank = ((pct / 100.0) * n as f64).ceil().clamp(1.0, n as f64) as usize;
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    *v
}

mod bound_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.trim() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a bound: {other}"))),
            },
        }
    }
}

/// A normal distribution `N(loc, scale²)` restricted to `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncNormal {
    pub loc: f64,
    pub scale: f64,
    #[serde(with = "bound_serde")]
    pub lower: f64,
    #[serde(with = "bound_serde")]
    pub upper: f64,
}

impl TruncNormal {
    pub fn new(loc: f64, scale: f64, lower: f64, upper: f64) -> Result<Self> {
        let p = TruncNormal {
            loc,
            scale,
            lower,
            upper,
        };
        p.validate()?;
        Ok(p)
    }

    /// Support `[0, ∞)`.
    pub fn nonnegative(loc: f64, scale: f64) -> Result<Self> {
        Self::new(loc, scale, 0.0, f64::INFINITY)
    }

    /// Support `[0, 1]`.
    pub fn unit_interval(loc: f64, scale: f64) -> Result<Self> {
        Self::new(loc, scale, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidParams(format!(
                "truncated normal scale must be positive and finite, got {}",
                self.scale
            )));
        }
        if !self.loc.is_finite() {
            return Err(Error::InvalidParams(format!(
                "truncated normal loc must be finite, got {}",
                self.loc
            )));
        }
        if self.lower.is_nan() || self.upper.is_nan() || !(self.lower < self.upper) {
            return Err(Error::InvalidParams(format!(
                "truncated normal needs lower < upper, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    fn standardize(&self, v: f64) -> f64 {
        (v - self.loc) / self.scale
    }

    fn std_bounds(&self) -> (f64, f64) {
        (self.standardize(self.lower), self.standardize(self.upper))
    }

    /// `ln Z` with `Z = Φ(b) - Φ(a)` the normalizer over the support.
    pub fn log_normalizer(&self) -> f64 {
        let (a, b) = self.std_bounds();
        log_mass(a, b)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }

    pub fn logpdf(&self, v: f64) -> f64 {
        if !self.contains(v) {
            return f64::NEG_INFINITY;
        }
        normal_logpdf(self.standardize(v)) - self.scale.ln() - self.log_normalizer()
    }

    pub fn pdf(&self, v: f64) -> f64 {
        self.logpdf(v).exp()
    }

    /// Derivative of `logpdf` with respect to `v` inside the support.
    pub fn dlogpdf(&self, v: f64) -> f64 {
        -(v - self.loc) / (self.scale * self.scale)
    }

    pub fn cdf(&self, v: f64) -> f64 {
        if v <= self.lower {
            return 0.0;
        }
        if v >= self.upper {
            return 1.0;
        }
        let (a, _) = self.std_bounds();
        (log_mass(a, self.standardize(v)) - self.log_normalizer())
            .exp()
            .min(1.0)
    }

    /// Probability mass on `[lo, hi] ∩ support`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(self.lower);
        let hi = hi.min(self.upper);
        if lo >= hi {
            return 0.0;
        }
        (log_mass(self.standardize(lo), self.standardize(hi)) - self.log_normalizer())
            .exp()
            .min(1.0)
    }

    /// Quantile function; `q` must lie in `(0, 1)`.
    pub fn ppf(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("quantile level must be in (0, 1), got {q}")));
        }
        Ok(self.ppf_unchecked(q))
    }

    fn ppf_unchecked(&self, q: f64) -> f64 {
        let (a, b) = self.std_bounds();
        let log_z = log_mass(a, b);
        let mut z = if a >= 0.0 {
            // reflect so the mass sits in the lower tail: Φ(-z) = Φ(-a) - qZ
            let la = log_normal_cdf(-a);
            let target = la + (-(q.ln() + log_z - la).exp_m1()).ln();
            -inv_log_normal_cdf(target)
        } else {
            inv_log_normal_cdf(log_add_exp(log_normal_cdf(a), q.ln() + log_z))
        };
        z = clamp_open(z, a, b);

        // Newton polish against the log-space CDF
        for _ in 0..3 {
            let c = (log_mass(a, z) - log_z).exp();
            let slope = (normal_logpdf(z) - log_z).exp();
            if !(slope > 0.0) {
                break;
            }
            let step = (c - q) / slope;
            if !step.is_finite() {
                break;
            }
            z = clamp_open(z - step, a, b);
            if step.abs() <= 1e-15 * (1.0 + z.abs()) {
                break;
            }
        }
        (self.loc + self.scale * z).clamp(self.lower, self.upper)
    }

    pub fn median(&self) -> f64 {
        self.ppf_unchecked(0.5)
    }

    pub fn mode(&self) -> f64 {
        self.loc.clamp(self.lower, self.upper)
    }

    pub fn mean(&self) -> f64 {
        let (a, b) = self.std_bounds();
        let log_z = log_mass(a, b);
        let ra = if a.is_finite() { (normal_logpdf(a) - log_z).exp() } else { 0.0 };
        let rb = if b.is_finite() { (normal_logpdf(b) - log_z).exp() } else { 0.0 };
        (self.loc + self.scale * (ra - rb)).clamp(self.lower, self.upper)
    }

    pub fn variance(&self) -> f64 {
        let (a, b) = self.std_bounds();
        let log_z = log_mass(a, b);
        let ra = if a.is_finite() { (normal_logpdf(a) - log_z).exp() } else { 0.0 };
        let rb = if b.is_finite() { (normal_logpdf(b) - log_z).exp() } else { 0.0 };
        let ta = if a.is_finite() { a * ra } else { 0.0 };
        let tb = if b.is_finite() { b * rb } else { 0.0 };
        let d = ra - rb;
        (self.scale * self.scale * (1.0 + ta - tb - d * d)).max(0.0)
    }

    /// Precomputes the constants needed for repeated inverse-CDF draws.
    pub fn sampler(&self) -> TruncNormalSampler {
        let (a, b) = self.std_bounds();
        let kind = if a >= 0.0 || (b == f64::INFINITY && a > f64::NEG_INFINITY) {
            let hi = normal_sf(a);
            SamplerKind::UpperTail { hi, span: hi - normal_sf(b) }
        } else {
            let lo = normal_cdf(a);
            SamplerKind::LowerTail { lo, span: normal_cdf(b) - lo }
        };
        TruncNormalSampler { dist: *self, kind }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }
}

fn clamp_open(z: f64, a: f64, b: f64) -> f64 {
    if z.is_nan() {
        return if a.is_finite() { a } else { b };
    }
    z.clamp(a, b)
}

#[derive(Debug, Clone, Copy)]
enum SamplerKind {
    /// `1 - Φ(z) = hi - u·span`
    UpperTail { hi: f64, span: f64 },
    /// `Φ(z) = lo + u·span`
    LowerTail { lo: f64, span: f64 },
}

/// Inverse-CDF sampler for a fixed [`TruncNormal`].
#[derive(Debug, Clone, Copy)]
pub struct TruncNormalSampler {
    dist: TruncNormal,
    kind: SamplerKind,
}

impl TruncNormalSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        let z = match self.kind {
            SamplerKind::UpperTail { hi, span } => {
                let p = hi - u * span;
                if p > 0.0 && p < 1.0 && span > 0.0 {
                    Some(-normal_ppf(p))
                } else {
                    None
                }
            }
            SamplerKind::LowerTail { lo, span } => {
                let p = lo + u * span;
                if p > 0.0 && p < 1.0 && span > 0.0 {
                    Some(normal_ppf(p))
                } else {
                    None
                }
            }
        };
        match z {
            Some(z) => (self.dist.loc + self.dist.scale * z).clamp(self.dist.lower, self.dist.upper),
            // support beyond double-precision tail probabilities
            None => self.dist.ppf_unchecked(u),
        }
    }
}

/// Validating free-function form of [`TruncNormal::logpdf`].
pub fn trunc_normal_logpdf(v: f64, p: &TruncNormal) -> Result<f64> {
    p.validate()?;
    Ok(p.logpdf(v))
}

/// Validating free-function form of [`TruncNormal::ppf`].
pub fn trunc_normal_ppf(q: f64, p: &TruncNormal) -> Result<f64> {
    p.validate()?;
    p.ppf(q)
}

pub fn trunc_normal_sample<R: Rng + ?Sized>(p: &TruncNormal, rng: &mut R) -> Result<f64> {
    p.validate()?;
    Ok(p.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Composite Gauss-Legendre (5 point) over `n` panels.
    fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let h = (b - a) / n as f64;
        (0..n)
            .map(|i| {
                let c = a + (i as f64 + 0.5) * h;
                X.iter()
                    .zip(W.iter())
                    .map(|(x, w)| w * f(c + 0.5 * h * x))
                    .sum::<f64>()
                    * 0.5
                    * h
            })
            .sum()
    }

    fn cases() -> Vec<TruncNormal> {
        vec![
            TruncNormal::new(0.0, 1.0, f64::NEG_INFINITY, f64::INFINITY).unwrap(),
            TruncNormal::nonnegative(0.0, 1.0).unwrap(),
            TruncNormal::nonnegative(-1.23, 2.14).unwrap(),
            TruncNormal::nonnegative(0.0, 0.01).unwrap(),
            TruncNormal::unit_interval(0.5, 0.1).unwrap(),
            TruncNormal::unit_interval(1.2, 0.1).unwrap(),
            TruncNormal::unit_interval(-0.3, 0.05).unwrap(),
            TruncNormal::unit_interval(0.93, 0.02).unwrap(),
            TruncNormal::new(3.0, 0.5, 1.0, 2.0).unwrap(),
        ]
    }

    #[test]
    fn cdf_reference_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_abs_diff_eq!(normal_cdf(40.0), 1.0, epsilon = 1e-15);
        // quadrature of the standard normal density from -40
        let quad = integrate(normal_pdf, -40.0, 1.959964, 4000);
        assert_abs_diff_eq!(quad, 0.975, epsilon = 1e-8);
        assert_abs_diff_eq!(normal_cdf(1.959964), quad, epsilon = 1e-12);
    }

    #[test]
    fn cdf_is_monotone() {
        let mut prev = 0.0;
        for i in -400..=400 {
            let c = normal_cdf(i as f64 * 0.05);
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn ppf_matches_cdf_inverse() {
        for &p in &[1e-300, 1e-30, 1e-8, 0.01, 0.02425, 0.3, 0.5, 0.75, 0.975, 1.0 - 1e-12] {
            let z = normal_ppf(p);
            let back = normal_cdf(z);
            assert!(((back - p) / p).abs() < 1e-12, "p={p} z={z} back={back}");
        }
        assert_abs_diff_eq!(normal_ppf(0.75), 0.674_489_750_196_081_7, epsilon = 1e-14);
    }

    #[test]
    fn log_cdf_tail_is_continuous() {
        let left = log_normal_cdf(-35.0 - 1e-9);
        let right = log_normal_cdf(-35.0 + 1e-9);
        assert!((left - right).abs() < 1e-6);
        assert!(log_normal_cdf(-60.0).is_finite());
        assert_abs_diff_eq!(inv_log_normal_cdf(log_normal_cdf(-60.0)), -60.0, epsilon = 1e-10);
    }

    #[test]
    fn logpdf_examples() {
        let std = TruncNormal::new(0.3, 2.0, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(std.logpdf(0.3), normal_logpdf(0.0) - 2.0_f64.ln(), epsilon = 1e-14);

        let half = TruncNormal::nonnegative(0.0, 1.0).unwrap();
        assert_eq!(half.logpdf(-1e-9), f64::NEG_INFINITY);
        assert_abs_diff_eq!(half.logpdf(0.0), 0.797_884_560_802_865_4_f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(TruncNormal::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(TruncNormal::new(0.0, 1.0, 1.0, 1.0).is_err());
        let bad = TruncNormal {
            loc: 0.0,
            scale: -1.0,
            lower: 0.0,
            upper: 1.0,
        };
        assert!(trunc_normal_logpdf(0.5, &bad).is_err());
        assert!(trunc_normal_ppf(0.5, &bad).is_err());
    }

    #[test]
    fn ppf_examples() {
        let sym = TruncNormal::new(1.5, 0.3, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(sym.ppf(0.5).unwrap(), 1.5, epsilon = 1e-14);

        let half = TruncNormal::nonnegative(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(half.ppf(0.5).unwrap(), 0.674_489_8, epsilon = 1e-7);

        assert!(half.ppf(0.0).is_err());
        assert!(half.ppf(1.0).is_err());
    }

    #[test]
    fn ppf_cdf_round_trip() {
        for p in cases() {
            for &q in &[1e-6, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0 - 1e-6] {
                let v = p.ppf(q).unwrap();
                assert!(v >= p.lower && v <= p.upper);
                assert_abs_diff_eq!(p.cdf(v), q, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn normalized_density_integrates_to_one() {
        for p in cases() {
            let lo = p.lower.max(p.loc - 40.0 * p.scale);
            let hi = p.upper.min(p.loc + 40.0 * p.scale);
            let total = integrate(|v| p.pdf(v), lo, hi, 4000);
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn analytic_mean_matches_quadrature() {
        for p in cases() {
            let lo = p.lower.max(p.loc - 40.0 * p.scale);
            let hi = p.upper.min(p.loc + 40.0 * p.scale);
            let m = integrate(|v| v * p.pdf(v), lo, hi, 4000);
            assert_abs_diff_eq!(p.mean(), m, epsilon = 1e-8);
            let var = integrate(|v| (v - m).powi(2) * p.pdf(v), lo, hi, 4000);
            assert_abs_diff_eq!(p.variance(), var, epsilon = 1e-8);
        }
    }

    #[test]
    fn far_tail_truncation_stays_finite() {
        let p = TruncNormal::unit_interval(3.0, 0.01).unwrap();
        assert!(p.log_normalizer().is_finite());
        let v = p.ppf(0.5).unwrap();
        assert!(v > 0.9999 && v <= 1.0, "{v}");
        // exponential-tail approximation: 1 - ln2 · scale² / (loc - 1)
        assert_abs_diff_eq!(v, 1.0 - std::f64::consts::LN_2 * 1e-4 / 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(p.cdf(v), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(p.mass_between(0.0, 1.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pinched_support_samples_at_lower() {
        let p = TruncNormal::new(0.0, 1.0, 0.3, 0.3 + 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = p.sample(&mut rng);
            assert!(s >= 0.3 && s <= 0.3 + 1e-9);
            assert_abs_diff_eq!(s, 0.3, epsilon = 1e-8);
        }
    }

    #[test]
    fn half_normal_samples() {
        let p = TruncNormal::nonnegative(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut xs: Vec<f64> = (0..n).map(|_| p.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| x >= 0.0));
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mean, (2.0 / std::f64::consts::PI).sqrt(), epsilon = 0.01);

        xs.sort_by(|a, b| a.total_cmp(b));
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = p.cdf(x);
                (c - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - c).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn sampler_ks_on_shifted_priors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in cases() {
            let s = p.sampler();
            let n = 100_000;
            let mut xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
            xs.sort_by(|a, b| a.total_cmp(b));
            let ks = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let c = p.cdf(x);
                    (c - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - c).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 0.01, "{p:?}: KS statistic {ks}");
        }
    }

    #[test]
    fn nearest_rank_percentile() {
        let mut v = vec![15.0, 20.0, 35.0, 40.0, 50.0];
        assert_eq!(percentile_nearest_rank(&mut v, 30.0), 20.0);
        assert_eq!(percentile_nearest_rank(&mut v, 40.0), 20.0);
        assert_eq!(percentile_nearest_rank(&mut v, 50.0), 35.0);
        assert_eq!(percentile_nearest_rank(&mut v, 100.0), 50.0);
        assert_eq!(percentile_nearest_rank(&mut v, 0.0), 15.0);
    }

    #[test]
    fn bound_serde_round_trip() {
        let p = TruncNormal::nonnegative(-1.23, 2.14).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"inf\""));
        let back: TruncNormal = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
    }

    proptest::proptest! {
        #[test]
        fn logpdf_continuous_inside(loc in -2.0..2.0f64, scale in 0.05..3.0f64, v in 0.01..0.99f64) {
            let p = TruncNormal::unit_interval(loc, scale).unwrap();
            let h = 1e-9;
            proptest::prop_assert!((p.logpdf(v + h) - p.logpdf(v)).abs() < 1e-6);
        }

        #[test]
        fn ppf_inverts_cdf(loc in -1.0..2.0f64, scale in 0.005..2.0f64, q in 0.001..0.999f64) {
            let p = TruncNormal::unit_interval(loc, scale).unwrap();
            let v = p.ppf(q).unwrap();
            proptest::prop_assert!((p.cdf(v) - q).abs() < 1e-9);
        }
    }
}
