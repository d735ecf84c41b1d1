//! Percentile intervals and equivalence decisions from matched draws, and the
//! end-to-end DP-TOST drivers for proportions and means.

use serde::{Deserialize, Serialize};

use crate::classic_tost::EquivalenceSpec;
use crate::error::{invalid, Error, Result};
use crate::mean_match::{matched_mean_difference_draws, MeanMatchConfig};
use crate::privacy::{PrivacyBudget, PrivatizedMoments};
use crate::prop_match::{matched_difference_draws, PropMatchConfig};
use crate::stochastics::RngState;

/// Matching-failure counts accumulated over both groups of every draw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawDiagnostics {
    /// Attempts beyond the first, summed over all solves.
    pub retries: u64,
    /// Solves that exhausted their attempts and used the fallback.
    pub fallbacks: u64,
}

/// The `H` matched draws of the difference estimator, kept sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawSequence {
    draws: Vec<f64>,
    sorted: Vec<f64>,
    diagnostics: DrawDiagnostics,
}

impl DrawSequence {
    pub fn new(draws: Vec<f64>, diagnostics: DrawDiagnostics) -> Result<Self> {
        if draws.is_empty() {
            return Err(invalid("a draw sequence needs at least one draw"));
        }
        if let Some(bad) = draws.iter().find(|d| !d.is_finite()) {
            return Err(invalid(format!("draws must be finite, found {bad}")));
        }
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { draws, sorted, diagnostics })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Draws in generation order.
    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn diagnostics(&self) -> DrawDiagnostics {
        self.diagnostics
    }
}

/// Nearest-rank index `k = ceil(delta H)`, 1-based. The small slack keeps
/// products like `0.05 * 1000` from rounding up to the next rank.
fn nearest_rank(delta: f64, h: usize) -> usize {
    ((delta * h as f64 - 1e-9).ceil() as usize).clamp(1, h)
}

/// The `k`-th smallest draw with `k = ceil(delta H)`.
pub fn empirical_quantile(draws: &DrawSequence, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("quantile level must lie in (0, 1), got {delta}")));
    }
    Ok(draws.sorted[nearest_rank(delta, draws.len()) - 1])
}

/// `[q_alpha, q_{1 - alpha}]`; needs at least `ceil(1 / alpha)` draws.
pub fn percentile_ci(draws: &DrawSequence, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(invalid(format!("alpha must lie in (0, 1/2], got {alpha}")));
    }
    let needed = (1.0 / alpha - 1e-9).ceil() as usize;
    if draws.len() < needed {
        return Err(Error::InsufficientDraws { needed, got: draws.len() });
    }
    Ok((empirical_quantile(draws, alpha)?, empirical_quantile(draws, 1.0 - alpha)?))
}

/// True iff the interval lies strictly inside `(-c0, c0)`.
pub fn equivalence_decision(ci: (f64, f64), c0: f64) -> bool {
    -c0 < ci.0 && ci.1 < c0
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceResult {
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub alpha: f64,
    pub c0: f64,
    pub equivalent: bool,
    pub draws: DrawSequence,
}

impl EquivalenceResult {
    pub fn from_draws(draws: DrawSequence, spec: &EquivalenceSpec) -> Result<Self> {
        let ci = percentile_ci(&draws, spec.alpha())?;
        Ok(Self {
            ci_lower: ci.0,
            ci_upper: ci.1,
            alpha: spec.alpha(),
            c0: spec.c0(),
            equivalent: equivalence_decision(ci, spec.c0()),
            draws,
        })
    }
}

/// DP-TOST for two privatized proportions.
#[allow(clippy::too_many_arguments)]
pub fn dp_tost_prop(
    p_hat1: f64,
    n: usize,
    p_hat2: f64,
    m: usize,
    budget: PrivacyBudget,
    spec: &EquivalenceSpec,
    cfg: &PropMatchConfig,
    rng: &RngState,
) -> Result<EquivalenceResult> {
    if !(p_hat1.is_finite() && p_hat2.is_finite()) {
        return Err(invalid("released proportions must be finite"));
    }
    let draws = matched_difference_draws(p_hat1, n, p_hat2, m, budget, rng, cfg)?;
    EquivalenceResult::from_draws(draws, spec)
}

/// DP-TOST for two privatized clamped mean/sd pairs.
pub fn dp_tost_mean(
    target_x: &PrivatizedMoments,
    target_y: &PrivatizedMoments,
    spec: &EquivalenceSpec,
    cfg: &MeanMatchConfig,
    rng: &RngState,
) -> Result<EquivalenceResult> {
    let draws = matched_mean_difference_draws(target_x, target_y, rng, cfg)?;
    EquivalenceResult::from_draws(draws, spec)
}
