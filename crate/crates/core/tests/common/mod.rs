//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

/// Residual of the proportion matching equation, written out directly.
pub fn residual(p_hat: f64, pi: f64, z: f64, u: f64, n: usize) -> f64 {
    p_hat - pi - (pi * (1.0 - pi) / n as f64).sqrt() * z - u
}

/// Zero of the matching residual on [0, 1] by grid scan and bisection,
/// without using the quadratic. Returns the zero with the smallest residual,
/// or the grid minimiser of |residual| when no sign change exists.
pub fn root_oracle(p_hat: f64, z: f64, u: f64, n: usize) -> f64 {
    let grid = 20_000;
    let f = |pi: f64| residual(p_hat, pi, z, u, n);
    let mut best = (f64::INFINITY, 0.0);
    let mut prev = (0.0, f(0.0));
    if prev.1 == 0.0 {
        return 0.0;
    }
    for k in 1..=grid {
        let x = k as f64 / grid as f64;
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx.signum() != prev.1.signum() {
            let (mut lo, mut hi) = (prev.0, x);
            let flo_sign = prev.1.signum();
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid).signum() == flo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            if f(root).abs() < best.0 {
                best = (f(root).abs(), root);
            }
        }
        if best.0.is_infinite() && fx.abs() < f(best.1).abs() {
            best.1 = x;
        }
        prev = (x, fx);
    }
    best.1
}

pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

/// Standard normal CDF via the complementary error function series in statrs.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level 1e-3.
pub fn ks_critical_1e3(n: usize) -> f64 {
    (-0.5 * (0.5e-3f64).ln()).sqrt() / (n as f64).sqrt()
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_dp-tost")
}

/// Run the CLI binary with an optional worker cap.
pub fn run_cli(args: &[&str], threads: Option<usize>, dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(binary());
    cmd.args(args).env_remove("DP_TOST_THREADS");
    if let Some(k) = threads {
        cmd.env("DP_TOST_THREADS", k.to_string());
    }
    if let Some(d) = dir {
        cmd.current_dir(d);
    }
    cmd.output().expect("binary runs")
}
