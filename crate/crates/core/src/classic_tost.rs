//! Non-private two one-sided tests, used as the benchmark.
//!
//! Both endpoints use the unpooled variance estimator. Proportions use the
//! standard normal reference; means use Student's t with Welch-Satterthwaite
//! degrees of freedom. The decision follows the interval-inclusion rule: the
//! `1 - 2 alpha` interval must lie strictly inside `(-c0, c0)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{invalid, Error, Result};

/// Absolute tolerance of the numeric quantile inversion.
const QUANTILE_TOL: f64 = 1e-10;

/// Symmetric equivalence margin `c0` and level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceSpec {
    c0: f64,
    alpha: f64,
}

impl EquivalenceSpec {
    pub fn new(c0: f64, alpha: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(invalid(format!("margin c0 must be positive, got {c0}")));
        }
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(invalid(format!("alpha must lie in (0, 1/2], got {alpha}")));
        }
        Ok(Self { c0, alpha })
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TostResult {
    pub theta_hat: f64,
    pub se_hat: f64,
    /// `(theta_hat + c0) / se_hat`
    pub t_lower: f64,
    /// `(theta_hat - c0) / se_hat`
    pub t_upper: f64,
    /// Reference degrees of freedom; `f64::INFINITY` encodes the normal reference.
    pub df: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub equivalent: bool,
}

impl TostResult {
    /// The two one-sided tests written on the statistics:
    /// `T_L >= q_{1-alpha}` and `T_U <= -q_{1-alpha}`.
    pub fn rejects_by_statistics(&self, alpha: f64) -> Result<bool> {
        let q = student_t_quantile(1.0 - alpha, self.df)?;
        Ok(self.t_lower >= q && self.t_upper <= -q)
    }
}

fn invert_cdf(p: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    // upper half only; callers use symmetry
    let mut lo = 0.0;
    let mut hi = 1.0;
    while cdf(hi) < p {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    while hi - lo > QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn symmetric_quantile(p: f64, cdf: impl Fn(f64) -> f64) -> f64 {
    if p == 0.5 {
        0.0
    } else if p > 0.5 {
        invert_cdf(p, cdf)
    } else {
        -invert_cdf(1.0 - p, cdf)
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// Standard normal quantile by numeric CDF inversion.
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    let normal = Normal::standard();
    Ok(symmetric_quantile(p, |x| normal.cdf(x)))
}

/// Student t quantile by numeric CDF inversion; `df = +inf` gives the normal quantile.
pub fn student_t_quantile(p: f64, df: f64) -> Result<f64> {
    check_probability(p)?;
    if !(df > 0.0) {
        return Err(invalid(format!("degrees of freedom must be positive, got {df}")));
    }
    if df.is_infinite() {
        return normal_quantile(p);
    }
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| invalid(e.to_string()))?;
    Ok(symmetric_quantile(p, |x| t.cdf(x)))
}

/// Welch-Satterthwaite degrees of freedom.
pub fn welch_df(sd1: f64, n: usize, sd2: f64, m: usize) -> Result<f64> {
    if n < 2 || m < 2 {
        return Err(invalid(format!("both groups need at least 2 observations, got {n} and {m}")));
    }
    if !(sd1 >= 0.0 && sd2 >= 0.0) {
        return Err(invalid("standard deviations must be non-negative"));
    }
    let v1 = sd1 * sd1 / n as f64;
    let v2 = sd2 * sd2 / m as f64;
    if v1 + v2 == 0.0 {
        return Err(Error::DegenerateData("both standard deviations are zero".into()));
    }
    Ok((v1 + v2).powi(2) / (v1 * v1 / (n - 1) as f64 + v2 * v2 / (m - 1) as f64))
}

fn assemble(theta_hat: f64, se_hat: f64, df: f64, spec: &EquivalenceSpec) -> Result<TostResult> {
    let q = student_t_quantile(1.0 - spec.alpha(), df)?;
    let c0 = spec.c0();
    let ci_lower = theta_hat - q * se_hat;
    let ci_upper = theta_hat + q * se_hat;
    Ok(TostResult {
        theta_hat,
        se_hat,
        t_lower: (theta_hat + c0) / se_hat,
        t_upper: (theta_hat - c0) / se_hat,
        df,
        ci_lower,
        ci_upper,
        equivalent: -c0 < ci_lower && ci_upper < c0,
    })
}

/// TOST for a difference of two proportions with the normal reference.
pub fn tost_prop(xbar: f64, n: usize, ybar: f64, m: usize, spec: &EquivalenceSpec) -> Result<TostResult> {
    if !(0.0..=1.0).contains(&xbar) || !(0.0..=1.0).contains(&ybar) {
        return Err(invalid(format!("proportions must lie in [0, 1], got {xbar} and {ybar}")));
    }
    if n == 0 || m == 0 {
        return Err(invalid("sample sizes must be positive"));
    }
    let se_hat = (xbar * (1.0 - xbar) / n as f64 + ybar * (1.0 - ybar) / m as f64).sqrt();
    if se_hat == 0.0 {
        return Err(Error::DegenerateData("both proportions are 0 or 1; the unpooled variance is zero".into()));
    }
    assemble(xbar - ybar, se_hat, f64::INFINITY, spec)
}

/// Welch TOST for a difference of two means.
#[allow(clippy::too_many_arguments)]
pub fn tost_mean(
    mean1: f64,
    sd1: f64,
    n: usize,
    mean2: f64,
    sd2: f64,
    m: usize,
    spec: &EquivalenceSpec,
) -> Result<TostResult> {
    let df = welch_df(sd1, n, sd2, m)?;
    let se_hat = (sd1 * sd1 / n as f64 + sd2 * sd2 / m as f64).sqrt();
    assemble(mean1 - mean2, se_hat, df, spec)
}
