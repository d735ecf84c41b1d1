//! Closed-form matching for privatized proportions.
//!
//! With the CLT representation `p* = pi + sqrt(pi (1 - pi) / n) z + u`, the
//! matching equation `p_hat = p*(pi)` squares into a quadratic in `pi` whose
//! roots are available in closed form. Squaring introduces a spurious root
//! (the solution for `-z`), so a candidate is only accepted when it zeroes the
//! unsquared residual. A draw whose `(z, u)` admits no exact match in [0, 1]
//! is discarded and redrawn, up to `max_attempts` times.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inference::{DrawDiagnostics, DrawSequence};
use crate::privacy::PrivacyBudget;
use crate::stochastics::RngState;

/// Residual magnitude below which a candidate counts as an exact match.
pub const EXACT_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropMatchConfig {
    /// Number of matched draws `H`.
    pub replicates: usize,
    pub max_attempts: usize,
}

impl Default for PropMatchConfig {
    fn default() -> Self {
        Self { replicates: 1000, max_attempts: 100 }
    }
}

impl PropMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.max_attempts == 0 {
            return Err(invalid("replicates and max_attempts must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootSide {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropMatchDraw {
    pub pi_check: f64,
    pub attempts_used: usize,
    pub root_side: RootSide,
    /// Set when every attempt failed and the exhaustion fallback was used.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discriminant {
    pub delta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

/// `delta = z / sqrt(n)`, `gamma = delta^2` and
/// `Lambda = -4 p^2 + 4 p + gamma + 8 p u - 4 u^2 - 4 u`.
pub fn discriminant(p_hat: f64, z: f64, u: f64, n: usize) -> Discriminant {
    let delta = z / (n as f64).sqrt();
    let gamma = delta * delta;
    let lambda = -4.0 * p_hat * p_hat + 4.0 * p_hat + gamma + 8.0 * p_hat * u - 4.0 * u * u - 4.0 * u;
    Discriminant { delta, gamma, lambda }
}

/// The two roots of the squared matching equation, `(left, right)`.
pub fn candidate_roots(p_hat: f64, d: &Discriminant, u: f64) -> Result<(f64, f64)> {
    if !(d.lambda >= 0.0) {
        return Err(Error::NoRealRoot(d.lambda));
    }
    let centre = 2.0 * p_hat + d.gamma - 2.0 * u;
    let spread = d.delta * d.lambda.sqrt();
    let denom = 2.0 * (d.gamma + 1.0);
    Ok(((centre - spread) / denom, (centre + spread) / denom))
}

/// Signed matching residual `p_hat - pi - sqrt(pi (1 - pi) / n) z - u`.
pub fn matching_residual(p_hat: f64, pi: f64, z: f64, u: f64, n: usize) -> f64 {
    let var = (pi * (1.0 - pi)).max(0.0) / n as f64;
    p_hat - pi - var.sqrt() * z - u
}

/// Among the roots inside [0, 1], the one with the smaller absolute residual
/// (left on ties); `None` when neither root is in range.
pub fn select_root(p_hat: f64, z: f64, u: f64, n: usize, roots: (f64, f64)) -> Option<(f64, RootSide)> {
    let in_range = |r: f64| (0.0..=1.0).contains(&r);
    let loss = |r: f64| matching_residual(p_hat, r, z, u, n).abs();
    match (in_range(roots.0), in_range(roots.1)) {
        (true, true) => {
            if loss(roots.1) < loss(roots.0) {
                Some((roots.1, RootSide::Right))
            } else {
                Some((roots.0, RootSide::Left))
            }
        }
        (true, false) => Some((roots.0, RootSide::Left)),
        (false, true) => Some((roots.1, RootSide::Right)),
        (false, false) => None,
    }
}

/// One `(z, u)` attempt; `Some` when it yields an exact match in [0, 1].
fn attempt(p_hat: f64, z: f64, u: f64, n: usize) -> Option<(f64, RootSide)> {
    let d = discriminant(p_hat, z, u, n);
    let roots = candidate_roots(p_hat, &d, u).ok()?;
    let (pi, side) = select_root(p_hat, z, u, n, roots)?;
    (matching_residual(p_hat, pi, z, u, n).abs() <= EXACT_MATCH_TOL).then_some((pi, side))
}

/// Best of `{0, 1, clamp(p_hat - u, 0, 1)}` under the last drawn `(z, u)`.
fn exhaustion_fallback(p_hat: f64, z: f64, u: f64, n: usize) -> f64 {
    let candidates = [0.0, 1.0, (p_hat - u).clamp(0.0, 1.0)];
    let mut best = candidates[0];
    let mut best_loss = matching_residual(p_hat, best, z, u, n).abs();
    for &c in &candidates[1..] {
        let l = matching_residual(p_hat, c, z, u, n).abs();
        if l < best_loss {
            best = c;
            best_loss = l;
        }
    }
    best
}

/// Draw `z ~ N(0, 1)` and `u ~ Laplace(0, 1 / (n eps))` until an exact match
/// in [0, 1] is found.
pub fn draw_matched_proportion(
    p_hat: f64,
    n: usize,
    budget: PrivacyBudget,
    rng: &mut RngState,
    cfg: &PropMatchConfig,
) -> Result<PropMatchDraw> {
    if n == 0 {
        return Err(invalid("sample size n must be at least 1"));
    }
    cfg.validate()?;
    let scale = 1.0 / (n as f64 * budget.epsilon());
    let mut last = (0.0, 0.0);
    for attempts_used in 1..=cfg.max_attempts {
        let z = rng.std_normal();
        let u = rng.laplace(scale)?;
        last = (z, u);
        if let Some((pi_check, root_side)) = attempt(p_hat, z, u, n) {
            return Ok(PropMatchDraw { pi_check, attempts_used, root_side, fallback: false });
        }
    }
    let pi_check = exhaustion_fallback(p_hat, last.0, last.1, n);
    Ok(PropMatchDraw { pi_check, attempts_used: cfg.max_attempts, root_side: RootSide::Left, fallback: true })
}

/// `H` draws of `pi1_check - pi2_check`. Draw `h` uses substream `h` of `rng`
/// for group 1 and substream `H + h` for group 2.
pub fn matched_difference_draws(
    p_hat1: f64,
    n: usize,
    p_hat2: f64,
    m: usize,
    budget: PrivacyBudget,
    rng: &RngState,
    cfg: &PropMatchConfig,
) -> Result<DrawSequence> {
    cfg.validate()?;
    let h_total = cfg.replicates as u64;
    let pairs = (0..h_total)
        .into_par_iter()
        .map(|h| {
            let g1 = draw_matched_proportion(p_hat1, n, budget, &mut rng.substream(h), cfg)?;
            let g2 = draw_matched_proportion(p_hat2, m, budget, &mut rng.substream(h_total + h), cfg)?;
            Ok((g1, g2))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut diagnostics = DrawDiagnostics::default();
    let draws = pairs
        .iter()
        .map(|(g1, g2)| {
            for g in [g1, g2] {
                diagnostics.retries += (g.attempts_used - 1) as u64;
                diagnostics.fallbacks += g.fallback as u64;
            }
            g1.pi_check - g2.pi_check
        })
        .collect();
    DrawSequence::new(draws, diagnostics)
}
