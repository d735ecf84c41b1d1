//! Moment matching for privatized clamped means and standard deviations.
//!
//! For each draw, one standard-normal vector `z` and one noise pair
//! `(u_mean, u_sd)` are fixed (common random numbers), which turns the
//! matching objective into a deterministic, piecewise-smooth function of
//! `(mu, sigma)`:
//!
//! ```text
//! || (mean_hat, sd_hat) - (m*(mu, sigma) + u_mean, s*(mu, sigma) + u_sd) ||
//! ```
//!
//! where `m*` and `s*` are the mean and standard deviation of
//! `clamp(mu + sigma z, a, b)`. It is minimised with projected Nelder-Mead over
//! `[a, b] x [sigma_min, sigma_max]`. Draws whose matched mean ends up on the
//! boundary of `[a, b]` (the unconstrained solution lies outside) or whose
//! optimiser fails are discarded and redrawn.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::inference::{DrawDiagnostics, DrawSequence};
use crate::optim::{nelder_mead_restarts, Domain, NelderMeadOptions};
use crate::privacy::{ClampBounds, PrivatizedMoments};
use crate::stochastics::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMatchConfig {
    /// Number of matched draws `H`.
    pub replicates: usize,
    pub max_attempts: usize,
    pub opt_tolerance: f64,
    pub opt_max_iter: usize,
    /// Total Nelder-Mead runs per solve (the first from the initial point).
    pub restarts: usize,
}

impl Default for MeanMatchConfig {
    fn default() -> Self {
        Self { replicates: 1000, max_attempts: 100, opt_tolerance: 1e-8, opt_max_iter: 500, restarts: 3 }
    }
}

impl MeanMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 || self.max_attempts == 0 || self.opt_max_iter == 0 || self.restarts == 0 {
            return Err(invalid("mean matching counts must all be at least 1"));
        }
        if !(self.opt_tolerance > 0.0) {
            return Err(invalid("optimizer tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentMatchDraw {
    pub mu_check: f64,
    pub sigma_check: f64,
    pub objective_value: f64,
    /// False when the optimiser did not converge or the exhaustion fallback was used.
    pub converged: bool,
    pub attempts_used: usize,
}

/// `(sigma_min, sigma_max) = (1e-6 (b - a), b - a)`.
pub fn sigma_domain(bounds: &ClampBounds) -> (f64, f64) {
    (1e-6 * bounds.width(), bounds.width())
}

fn sample_moments(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss = values.map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Mean and standard deviation (divisor n - 1) of `clamp(mu + sigma z_i, a, b)`.
pub fn simulate_clamped_moments(mu: f64, sigma: f64, bounds: &ClampBounds, z: &[f64]) -> Result<(f64, f64)> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    if z.len() < 2 {
        return Err(invalid("simulated sample needs at least 2 values"));
    }
    Ok(sample_moments(z.iter().map(|&zi| bounds.clamp(mu + sigma * zi)), z.len()))
}

/// Matching objective evaluated directly from `z`.
pub fn matching_objective(
    mu: f64,
    sigma: f64,
    target: &PrivatizedMoments,
    z: &[f64],
    u_mean: f64,
    u_sd: f64,
) -> Result<f64> {
    if z.len() != target.n {
        return Err(invalid(format!("simulated sample length {} differs from target n = {}", z.len(), target.n)));
    }
    let (m, s) = simulate_clamped_moments(mu, sigma, &target.bounds, z)?;
    Ok((target.mean_hat - (m + u_mean)).hypot(target.sd_hat - (s + u_sd)))
}

/// A simulated standard-normal sample prepared for fast evaluation of the
/// clamped moments: sorted, with prefix sums of `z` and `z^2`. Each evaluation
/// is two binary searches instead of a pass over the sample.
#[derive(Debug, Clone)]
pub struct ClampedNormalSample {
    sorted: Vec<f64>,
    sum1: Vec<f64>,
    sum2: Vec<f64>,
    bounds: ClampBounds,
}

impl ClampedNormalSample {
    pub fn new(z: &[f64], bounds: ClampBounds) -> Result<Self> {
        if z.len() < 2 {
            return Err(invalid("simulated sample needs at least 2 values"));
        }
        let mut sorted = z.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut sum1 = Vec::with_capacity(sorted.len() + 1);
        let mut sum2 = Vec::with_capacity(sorted.len() + 1);
        let (mut s1, mut s2) = (0.0, 0.0);
        sum1.push(0.0);
        sum2.push(0.0);
        for &v in &sorted {
            s1 += v;
            s2 += v * v;
            sum1.push(s1);
            sum2.push(s2);
        }
        Ok(Self { sorted, sum1, sum2, bounds })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Same quantity as [`simulate_clamped_moments`]; requires `sigma > 0`.
    pub fn moments(&self, mu: f64, sigma: f64) -> (f64, f64) {
        let (a, b) = (self.bounds.lower(), self.bounds.upper());
        let n = self.sorted.len();
        let lo_cut = (a - mu) / sigma;
        let hi_cut = (b - mu) / sigma;
        // [0, lo) clamp to a, [hi, n) clamp to b
        let lo = self.sorted.partition_point(|&z| z <= lo_cut);
        let hi = self.sorted.partition_point(|&z| z < hi_cut).max(lo);

        // accumulate deviations from a centre inside the bounds to limit cancellation
        let c = mu.clamp(a, b);
        let (da, db, dm) = (a - c, b - c, mu - c);
        let n_lo = lo as f64;
        let n_hi = (n - hi) as f64;
        let n_mid = (hi - lo) as f64;
        let z1 = self.sum1[hi] - self.sum1[lo];
        let z2 = self.sum2[hi] - self.sum2[lo];

        let s1 = n_lo * da + n_hi * db + n_mid * dm + sigma * z1;
        let s2 = n_lo * da * da + n_hi * db * db + n_mid * dm * dm + 2.0 * dm * sigma * z1 + sigma * sigma * z2;
        let nf = n as f64;
        let var = ((s2 - s1 * s1 / nf) / (nf - 1.0)).max(0.0);
        (c + s1 / nf, var.sqrt())
    }
}

fn interior(mu: f64, bounds: &ClampBounds) -> bool {
    let margin = 1e-9 * bounds.width();
    mu > bounds.lower() + margin && mu < bounds.upper() - margin
}

/// Solve the matching problem for fixed simulated draws `z`, `u_mean`, `u_sd`.
///
/// `rng` only jitters the restart simplices. `attempts_used` is reported as 1.
pub fn match_fixed_draws(
    target: &PrivatizedMoments,
    z: &[f64],
    u_mean: f64,
    u_sd: f64,
    cfg: &MeanMatchConfig,
    rng: &mut RngState,
) -> Result<MomentMatchDraw> {
    if z.len() != target.n {
        return Err(invalid(format!("simulated sample length {} differs from target n = {}", z.len(), target.n)));
    }
    let bounds = target.bounds;
    let sample = ClampedNormalSample::new(z, bounds)?;
    let (sigma_min, sigma_max) = sigma_domain(&bounds);
    let domain = Domain::new([bounds.lower(), sigma_min], [bounds.upper(), sigma_max])?;

    let objective = |p: [f64; 2]| {
        let (m, s) = sample.moments(p[0], p[1]);
        (target.mean_hat - (m + u_mean)).hypot(target.sd_hat - (s + u_sd))
    };

    let init = domain.project([target.mean_hat - u_mean, (target.sd_hat - u_sd).abs()]);
    let step = (0.1 * init[1]).max(1e-4 * bounds.width());
    let opts =
        NelderMeadOptions { tolerance: cfg.opt_tolerance, max_iter: cfg.opt_max_iter, initial_step: [step, step] };
    let scales: Vec<f64> = (1..cfg.restarts).map(|_| 0.25 + 0.75 * rng.uniform_open()).collect();
    let best = nelder_mead_restarts(objective, init, &domain, &opts, &scales);

    Ok(MomentMatchDraw {
        mu_check: best.point[0],
        sigma_check: best.point[1],
        objective_value: best.value,
        converged: best.converged,
        attempts_used: 1,
    })
}

/// One matched `(mu_check, sigma_check)` for a privatized moment pair.
///
/// Each attempt draws `n` standard normals, then `u_mean ~ Laplace(tau_mean)`
/// and `u_sd ~ Laplace(tau_sd)`, in that order, from `rng`.
pub fn solve_moment_match(
    target: &PrivatizedMoments,
    rng: &mut RngState,
    cfg: &MeanMatchConfig,
) -> Result<MomentMatchDraw> {
    cfg.validate()?;
    if target.n < 2 {
        return Err(invalid("target sample size must be at least 2"));
    }
    let mut z = vec![0.0; target.n];
    let mut best: Option<MomentMatchDraw> = None;
    for attempts_used in 1..=cfg.max_attempts {
        z.iter_mut().for_each(|v| *v = rng.std_normal());
        let u_mean = rng.laplace(target.tau_mean)?;
        let u_sd = rng.laplace(target.tau_sd)?;
        let mut draw = match_fixed_draws(target, &z, u_mean, u_sd, cfg, rng)?;
        draw.attempts_used = attempts_used;
        if draw.converged && interior(draw.mu_check, &target.bounds) {
            return Ok(draw);
        }
        if best.is_none_or(|b| draw.objective_value < b.objective_value) {
            best = Some(draw);
        }
    }
    let mut fallback = best.expect("max_attempts >= 1");
    fallback.mu_check = target.bounds.clamp(fallback.mu_check);
    fallback.converged = false;
    fallback.attempts_used = cfg.max_attempts;
    Ok(fallback)
}

/// `H` draws of `mu1_check - mu2_check`. Draw `h` uses substream `h` of `rng`
/// for the first group and substream `H + h` for the second.
pub fn matched_mean_difference_draws(
    target_x: &PrivatizedMoments,
    target_y: &PrivatizedMoments,
    rng: &RngState,
    cfg: &MeanMatchConfig,
) -> Result<DrawSequence> {
    cfg.validate()?;
    let h_total = cfg.replicates as u64;
    let pairs = (0..h_total)
        .into_par_iter()
        .map(|h| {
            let gx = solve_moment_match(target_x, &mut rng.substream(h), cfg)?;
            let gy = solve_moment_match(target_y, &mut rng.substream(h_total + h), cfg)?;
            Ok((gx, gy))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut diagnostics = DrawDiagnostics::default();
    let draws = pairs
        .iter()
        .map(|(gx, gy)| {
            for g in [gx, gy] {
                diagnostics.retries += (g.attempts_used - 1) as u64;
                diagnostics.fallbacks += (!g.converged) as u64;
            }
            gx.mu_check - gy.mu_check
        })
        .collect();
    DrawSequence::new(draws, diagnostics)
}
