//! Clamping, global sensitivities and the additive Laplace mechanism.
//!
//! Each group's release uses the full budget: the groups hold disjoint
//! individuals. Within a group, a moment release spends `epsilon / 2` on the
//! mean and `epsilon / 2` on the standard deviation.
//!
//! Released values are never post-processed here. A privatized proportion may
//! leave [0, 1] and a privatized standard deviation may be negative; the
//! matching step compares them against equally noised simulated counterparts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::stochastics::RngState;

/// Slack allowed on the clamped-data standard deviation bound.
const SD_BOUND_TOL: f64 = 1e-9;

/// Total per-sample privacy budget.
///
/// `epsilon = +inf` is accepted and denotes the non-private limit (zero noise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// A priori data bounds `[a, b]` with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampBounds {
    a: f64,
    b: f64,
}

impl ClampBounds {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(invalid(format!("clamp bounds need finite a < b, got [{a}, {b}]")));
        }
        Ok(Self { a, b })
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.a).min(self.b)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a <= x && x <= self.b
    }

    /// Largest sample standard deviation (divisor n - 1) attainable by `n`
    /// values inside the bounds: half the sample at each end.
    pub fn max_sample_sd(&self, n: usize) -> f64 {
        let n = n as f64;
        0.5 * self.width() * (n / (n - 1.0)).sqrt()
    }
}

/// Zero-mean symmetric additive noise.
pub trait SymmetricNoise {
    fn scale(&self) -> f64;
    fn sample(&self, rng: &mut RngState) -> f64;
}

/// Laplace(0, scale) noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceNoise {
    scale: f64,
}

impl LaplaceNoise {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale >= 0.0) || scale.is_infinite() {
            return Err(invalid(format!("noise scale must be finite and >= 0, got {scale}")));
        }
        Ok(Self { scale })
    }

    /// Calibrated to `sensitivity / epsilon`.
    pub fn calibrated(sensitivity: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Self::new(sensitivity / epsilon)
    }

    /// Density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        (-x.abs() / self.scale).exp() / (2.0 * self.scale)
    }
}

impl SymmetricNoise for LaplaceNoise {
    fn scale(&self) -> f64 {
        self.scale
    }

    fn sample(&self, rng: &mut RngState) -> f64 {
        // scale is validated at construction
        rng.laplace(self.scale).unwrap_or(0.0)
    }
}

/// Additive mechanism `f(X) + U`.
pub fn additive_release<N: SymmetricNoise>(value: f64, noise: &N, rng: &mut RngState) -> f64 {
    value + noise.sample(rng)
}

/// A released proportion `p_hat = xbar + U`, `U ~ Laplace(0, 1 / (n eps))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivatizedProportion {
    pub p_hat: f64,
    pub n: usize,
    pub epsilon: f64,
    pub noise_scale: f64,
}

impl PrivatizedProportion {
    /// Wrap an already released value (the analyst's view).
    pub fn from_release(p_hat: f64, n: usize, budget: PrivacyBudget) -> Result<Self> {
        if !p_hat.is_finite() {
            return Err(invalid(format!("released proportion must be finite, got {p_hat}")));
        }
        let noise_scale = 1.0 / (n as f64 * budget.epsilon());
        proportion_sensitivity(n)?;
        Ok(Self { p_hat, n, epsilon: budget.epsilon(), noise_scale })
    }
}

/// A released moment pair `(m + U_mean, s + U_sd)` for one clamped sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivatizedMoments {
    pub mean_hat: f64,
    pub sd_hat: f64,
    pub n: usize,
    pub bounds: ClampBounds,
    pub epsilon: f64,
    pub tau_mean: f64,
    pub tau_sd: f64,
}

impl PrivatizedMoments {
    /// Wrap an already released pair (the analyst's view).
    pub fn from_release(
        mean_hat: f64,
        sd_hat: f64,
        n: usize,
        bounds: ClampBounds,
        budget: PrivacyBudget,
    ) -> Result<Self> {
        if !(mean_hat.is_finite() && sd_hat.is_finite()) {
            return Err(invalid("released moments must be finite"));
        }
        let (tau_mean, tau_sd) = moment_noise_scales(&bounds, n, budget)?;
        Ok(Self { mean_hat, sd_hat, n, bounds, epsilon: budget.epsilon(), tau_mean, tau_sd })
    }
}

/// `y_i = min(max(x_i, a), b)`.
pub fn clamp_sample(values: &[f64], bounds: &ClampBounds) -> Vec<f64> {
    values.iter().map(|&x| bounds.clamp(x)).collect()
}

/// Global sensitivity of a sample proportion: `1 / n`.
pub fn proportion_sensitivity(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("sample size n must be at least 1"));
    }
    Ok(1.0 / n as f64)
}

/// Global sensitivity of a clamped sample mean: `(b - a) / n`.
pub fn mean_sensitivity(bounds: &ClampBounds, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("sample size n must be at least 1"));
    }
    Ok(bounds.width() / n as f64)
}

/// Global sensitivity of a clamped sample standard deviation: `(b - a) / sqrt(n - 1)`.
pub fn sd_sensitivity(bounds: &ClampBounds, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!("sample size n must be at least 2, got {n}")));
    }
    Ok(bounds.width() / ((n - 1) as f64).sqrt())
}

/// `(tau_mean, tau_sd)`, each the sensitivity divided by `epsilon / 2`.
pub fn moment_noise_scales(bounds: &ClampBounds, n: usize, budget: PrivacyBudget) -> Result<(f64, f64)> {
    let half = budget.epsilon() / 2.0;
    Ok((bounds.width() / (n as f64 * half), sd_sensitivity(bounds, n)? / half))
}

pub fn privatize_proportion(
    xbar: f64,
    n: usize,
    budget: PrivacyBudget,
    rng: &mut RngState,
) -> Result<PrivatizedProportion> {
    if !(0.0..=1.0).contains(&xbar) {
        return Err(invalid(format!("sample proportion must lie in [0, 1], got {xbar}")));
    }
    let sensitivity = proportion_sensitivity(n)?;
    let noise = LaplaceNoise::calibrated(sensitivity, budget.epsilon())?;
    let p_hat = additive_release(xbar, &noise, rng);
    PrivatizedProportion::from_release(p_hat, n, budget)
}

/// Release `(mean + U_mean, sd + U_sd)` with independent Laplace noise at the
/// half-budget scales. `mean` and `sd` must be summaries of clamped data.
pub fn privatize_moments(
    mean: f64,
    sd: f64,
    bounds: &ClampBounds,
    n: usize,
    budget: PrivacyBudget,
    rng: &mut RngState,
) -> Result<PrivatizedMoments> {
    if n < 2 {
        return Err(invalid(format!("sample size n must be at least 2, got {n}")));
    }
    if !bounds.contains(mean) {
        return Err(invalid(format!("clamped mean {mean} lies outside [{}, {}]", bounds.lower(), bounds.upper())));
    }
    if !(sd >= 0.0) || sd > bounds.max_sample_sd(n) + SD_BOUND_TOL {
        return Err(invalid(format!(
            "clamped sd {sd} is not attainable inside [{}, {}] with n = {n}",
            bounds.lower(),
            bounds.upper()
        )));
    }
    let (tau_mean, tau_sd) = moment_noise_scales(bounds, n, budget)?;
    let mean_noise = LaplaceNoise::new(tau_mean)?;
    let sd_noise = LaplaceNoise::new(tau_sd)?;
    let mean_hat = additive_release(mean, &mean_noise, rng);
    let sd_hat = additive_release(sd, &sd_noise, rng);
    Ok(PrivatizedMoments { mean_hat, sd_hat, n, bounds: *bounds, epsilon: budget.epsilon(), tau_mean, tau_sd })
}
