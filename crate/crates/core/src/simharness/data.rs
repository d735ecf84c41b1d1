//! Synthetic two-sample data, reduced to the summaries the tests consume.

use rand_distr::{Binomial, Distribution};

use crate::error::{invalid, Result};
use crate::privacy::ClampBounds;
use crate::stochastics::RngState;

use super::scenario::{Endpoint, ParamPair};

/// Sample mean and standard deviation (divisor n - 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub mean: f64,
    pub sd: f64,
}

impl MomentSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        Self { mean, sd: (ss / (n - 1.0)).sqrt() }
    }
}

/// Summaries of one normal sample, before and after clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalSampleSummary {
    pub raw: MomentSummary,
    pub clamped: MomentSummary,
    /// Fraction of observations moved by clamping.
    pub clamped_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TwoSampleSummary {
    Proportion { xbar: f64, ybar: f64 },
    Mean { x: NormalSampleSummary, y: NormalSampleSummary },
}

/// `Binomial(n, pi) / n`.
pub fn sample_proportion(pi: f64, n: usize, rng: &mut RngState) -> Result<f64> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    let dist = Binomial::new(n as u64, pi).map_err(|e| invalid(format!("binomial({n}, {pi}): {e}")))?;
    Ok(dist.sample(rng) as f64 / n as f64)
}

/// `n` draws from `N(mu, sd^2)`, summarised raw and clamped to `bounds`.
pub fn sample_normal_summary(
    mu: f64,
    sd: f64,
    n: usize,
    bounds: &ClampBounds,
    rng: &mut RngState,
) -> Result<NormalSampleSummary> {
    if n < 2 {
        return Err(invalid("normal samples need at least 2 observations"));
    }
    if !(sd > 0.0 && sd.is_finite() && mu.is_finite()) {
        return Err(invalid(format!("invalid normal parameters mean {mu}, sd {sd}")));
    }
    let raw: Vec<f64> = (0..n).map(|_| mu + sd * rng.std_normal()).collect();
    let clamped: Vec<f64> = raw.iter().map(|&x| bounds.clamp(x)).collect();
    let moved = raw.iter().zip(&clamped).filter(|(r, c)| r != c).count();
    Ok(NormalSampleSummary {
        raw: MomentSummary::of(&raw),
        clamped: MomentSummary::of(&clamped),
        clamped_fraction: moved as f64 / n as f64,
    })
}

/// Draw group 1 then group 2 from `rng`. `bounds` is required for means.
pub fn generate_two_sample_data(
    endpoint: Endpoint,
    params: &ParamPair,
    n: usize,
    m: usize,
    bounds: Option<&(ClampBounds, ClampBounds)>,
    rng: &mut RngState,
) -> Result<TwoSampleSummary> {
    params.validate(endpoint).map_err(|e| invalid(e.to_string()))?;
    match endpoint {
        Endpoint::Proportion => {
            let xbar = sample_proportion(params.group1, n, rng)?;
            let ybar = sample_proportion(params.group2, m, rng)?;
            Ok(TwoSampleSummary::Proportion { xbar, ybar })
        }
        Endpoint::Mean => {
            let (bx, by) = bounds.ok_or_else(|| invalid("the mean endpoint requires clamping bounds"))?;
            let sd1 = params.sd1.unwrap_or_default();
            let sd2 = params.sd2.unwrap_or_default();
            let x = sample_normal_summary(params.group1, sd1, n, bx, rng)?;
            let y = sample_normal_summary(params.group2, sd2, m, by, rng)?;
            Ok(TwoSampleSummary::Mean { x, y })
        }
    }
}
