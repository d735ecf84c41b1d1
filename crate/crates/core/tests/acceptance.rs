//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so the report is always
//! printed. Failures are reported but only change the exit status when
//! `DP_TOST_ACCEPTANCE_STRICT=1` is set, so the rest of the workspace suite
//! still runs.

mod common;

use std::time::{Duration, Instant};

use dp_tost::mean_match::{match_fixed_draws, MeanMatchConfig};
use dp_tost::privacy::{
    privatize_moments, privatize_proportion, sd_sensitivity, ClampBounds, PrivacyBudget, PrivatizedMoments,
};
use dp_tost::prop_match::{candidate_roots, discriminant, matching_residual, select_root};
use dp_tost::simharness::{
    run_emulation_actg, run_power_curve, run_size_experiment, to_csv_bytes, AgreementRow, Clamping, EmulationConfig,
    EmulationRow, Endpoint, Outcome, ParamPair, RateRow, ScenarioGrid,
};
use dp_tost::stochastics::make_rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn find<'a>(rows: &'a [RateRow], eps: f64, method: &str) -> &'a RateRow {
    rows.iter()
        .find(|r| r.epsilon == eps && r.method == method)
        .unwrap_or_else(|| panic!("missing row eps={eps} method={method}"))
}

fn prop_grid(pair: ParamPair, n: usize, eps: Vec<f64>, h: usize, b: usize, seed: u64) -> ScenarioGrid {
    ScenarioGrid {
        endpoint: Endpoint::Proportion,
        param_grid: vec![pair],
        n,
        m: n,
        epsilon_list: eps,
        c0: 0.1,
        alpha: 0.05,
        h,
        b,
        clamping: None,
        seed,
    }
}

/// 1000 random instances: closed-form root against grid scan + bisection.
fn root_oracle_equivalence() -> Verdict {
    let mut rng = make_rng(1);
    let (mut worst_gap, mut worst_resid) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = (10f64 * 500f64.powf(rng.uniform_open())).round() as usize;
        let eps = 0.1 * 100f64.powf(rng.uniform_open());
        let a = rng.uniform_open();
        let u = rng.laplace(1.0 / (n as f64 * eps)).unwrap();
        let z = rng.std_normal();
        let p_hat = a + u;
        let d = discriminant(p_hat, z, u, n);
        let Ok(roots) = candidate_roots(p_hat, &d, u) else {
            return verdict(false, format!("no real root for p_hat={p_hat} z={z} u={u} n={n}"));
        };
        let Some((pi, _)) = select_root(p_hat, z, u, n, roots) else {
            return verdict(false, format!("no root in [0, 1] for p_hat={p_hat} z={z} u={u} n={n}"));
        };
        worst_gap = worst_gap.max((pi - common::root_oracle(p_hat, z, u, n)).abs());
        worst_resid = worst_resid.max(matching_residual(p_hat, pi, z, u, n).abs());
    }
    verdict(
        worst_gap <= 1e-6 && worst_resid <= 1e-9,
        format!("max |root - oracle| = {worst_gap:.2e} (<= 1e-6), max residual = {worst_resid:.2e} (<= 1e-9)"),
    )
}

/// 200 zero-noise, wide-bounds instances against the unclamped closed form.
fn mean_match_analytic_oracle() -> Verdict {
    let mut rng = make_rng(2);
    let cfg = MeanMatchConfig::default();
    let budget = PrivacyBudget::new(1.0).unwrap();
    let (mut worst_mu, mut worst_sigma) = (0.0f64, 0.0f64);
    for k in 0..200u64 {
        let n = 20 + (480.0 * rng.uniform_open()) as usize;
        let m_hat = -5.0 + 10.0 * rng.uniform_open();
        let s_hat = 0.2 + 2.8 * rng.uniform_open();
        let bounds = ClampBounds::new(m_hat - 100.0 * s_hat, m_hat + 100.0 * s_hat).unwrap();
        let target = PrivatizedMoments::from_release(m_hat, s_hat, n, bounds, budget).unwrap();
        let z: Vec<f64> = (0..n).map(|_| rng.std_normal()).collect();
        let (zbar, sz) = common::mean_sd(&z);
        let sigma = s_hat / sz;
        let mu = m_hat - sigma * zbar;
        let got = match_fixed_draws(&target, &z, 0.0, 0.0, &cfg, &mut make_rng(1000 + k)).unwrap();
        worst_mu = worst_mu.max((got.mu_check - mu).abs());
        worst_sigma = worst_sigma.max((got.sigma_check - sigma).abs());
    }
    verdict(
        worst_mu <= 1e-6 && worst_sigma <= 1e-6,
        format!("max |mu error| = {worst_mu:.2e}, max |sigma error| = {worst_sigma:.2e} (<= 1e-6)"),
    )
}

/// Largest bin-count ratio between two samples in either direction, over bins
/// of width `width` where both counts reach `min_count`.
fn max_bin_ratio(a: &[f64], b: &[f64], width: f64, min_count: usize) -> (f64, usize) {
    let lo = a.iter().chain(b).fold(f64::INFINITY, |m, &x| m.min(x));
    let bin = |x: f64| ((x - lo) / width) as usize;
    let bins = a.iter().chain(b).map(|&x| bin(x)).max().unwrap() + 1;
    let (mut ca, mut cb) = (vec![0usize; bins], vec![0usize; bins]);
    a.iter().for_each(|&x| ca[bin(x)] += 1);
    b.iter().for_each(|&x| cb[bin(x)] += 1);
    let mut used = 0;
    let mut worst = 0.0f64;
    for (&x, &y) in ca.iter().zip(&cb) {
        if x >= min_count && y >= min_count {
            used += 1;
            worst = worst.max(x as f64 / y as f64).max(y as f64 / x as f64);
        }
    }
    (worst, used)
}

/// Binned density ratios of mechanism outputs on adjacent inputs.
fn dp_mechanism_bound() -> Verdict {
    const DRAWS: usize = 100_000;
    const MIN_COUNT: usize = 5000;
    let mut lines = Vec::new();
    let mut pass = true;
    for (k, eps) in [0.5f64, 1.0].into_iter().enumerate() {
        let budget = PrivacyBudget::new(eps).unwrap();
        let seed = 30 + 10 * k as u64;

        // proportion: neighbouring datasets move the sample proportion by 1/n
        let n = 100;
        let (mut ra, mut rb) = (make_rng(seed), make_rng(seed + 1));
        let pa: Vec<f64> = (0..DRAWS).map(|_| privatize_proportion(0.5, n, budget, &mut ra).unwrap().p_hat).collect();
        let pb: Vec<f64> = (0..DRAWS).map(|_| privatize_proportion(0.51, n, budget, &mut rb).unwrap().p_hat).collect();
        let scale = 1.0 / (n as f64 * eps);
        let (ratio, used) = max_bin_ratio(&pa, &pb, 0.5 * scale, MIN_COUNT);
        let bound = eps.exp() * 1.05;
        pass &= ratio <= bound && used >= 3;
        lines.push(format!("eps={eps} proportion: max ratio {ratio:.3} <= {bound:.3} over {used} bins"));

        // moments: mean and sd each shift by their sensitivity, each spending eps/2
        let bounds = ClampBounds::new(0.0, 1.0).unwrap();
        let m = 50;
        let shift_mean = 1.0 / m as f64;
        let shift_sd = sd_sensitivity(&bounds, m).unwrap();
        let (mut ra, mut rb) = (make_rng(seed + 2), make_rng(seed + 3));
        let (ma, sa): (Vec<f64>, Vec<f64>) = (0..DRAWS)
            .map(|_| {
                let r = privatize_moments(0.4, 0.2, &bounds, m, budget, &mut ra).unwrap();
                (r.mean_hat, r.sd_hat)
            })
            .unzip();
        let (mb, sb): (Vec<f64>, Vec<f64>) = (0..DRAWS)
            .map(|_| {
                let r =
                    privatize_moments(0.4 + shift_mean, 0.2 + shift_sd.min(0.2), &bounds, m, budget, &mut rb).unwrap();
                (r.mean_hat, r.sd_hat)
            })
            .unzip();
        let tau_mean = shift_mean / (eps / 2.0);
        let tau_sd = shift_sd / (eps / 2.0);
        let half = (eps / 2.0).exp() * 1.05;
        let (r_mean, u_mean) = max_bin_ratio(&ma, &mb, 0.5 * tau_mean, MIN_COUNT);
        let (r_sd, u_sd) = max_bin_ratio(&sa, &sb, 0.5 * tau_sd, MIN_COUNT);
        pass &= r_mean <= half && r_sd <= half && u_mean >= 3 && u_sd >= 3;
        lines.push(format!(
            "eps={eps} moments: mean {r_mean:.3} over {u_mean} bins, sd {r_sd:.3} over {u_sd} bins \
             (each <= e^(eps/2)*1.05 = {half:.3}, composing to e^eps)"
        ));
    }
    verdict(pass, lines.join("; "))
}

fn size_control() -> Verdict {
    let grid = prop_grid(ParamPair::proportions(0.5, 0.4), 800, vec![0.5, 1.0], 500, 2000, 4);
    let rows = run_size_experiment(&grid).unwrap();
    let np = find(&rows, 0.5, "nonprivate").rejection_rate;
    let dp: Vec<f64> = [0.5, 1.0].iter().map(|&e| find(&rows, e, "dp").rejection_rate).collect();
    let pass = (0.040..=0.060).contains(&np) && dp.iter().all(|s| (0.035..=0.065).contains(s));
    verdict(
        pass,
        format!(
            "non-private size {np:.4} in [0.040, 0.060]; DP size eps=0.5 {:.4}, eps=1 {:.4} in [0.035, 0.065]",
            dp[0], dp[1]
        ),
    )
}

fn strict_privacy_conservative() -> Verdict {
    let grid = prop_grid(ParamPair::proportions(0.5, 0.4), 200, vec![0.1], 500, 2000, 5);
    let rows = run_size_experiment(&grid).unwrap();
    let dp = find(&rows, 0.1, "dp").rejection_rate;
    let np = find(&rows, 0.1, "nonprivate").rejection_rate;
    verdict(dp <= 0.065, format!("DP size {dp:.4} <= 0.065 (non-private {np:.4})"))
}

fn power_convergence() -> Verdict {
    let grid = prop_grid(ParamPair::proportions(0.5, 0.5), 800, vec![0.1, 1.0], 500, 2000, 6);
    let rows = run_power_curve(&grid).unwrap();
    let (dp1, np1) = (find(&rows, 1.0, "dp"), find(&rows, 1.0, "nonprivate"));
    let (dp01, np01) = (find(&rows, 0.1, "dp"), find(&rows, 0.1, "nonprivate"));
    let gap = (dp1.rejection_rate - np1.rejection_rate).abs();
    let se = (dp01.mc_se().powi(2) + np01.mc_se().powi(2)).sqrt();
    let pass = gap <= 0.05 && dp01.rejection_rate <= np01.rejection_rate + 3.0 * se;
    verdict(
        pass,
        format!(
            "eps=1: DP {:.4} vs non-private {:.4}, gap {gap:.4} <= 0.05; eps=0.1: DP {:.4} <= {:.4} + 3*{se:.4}",
            dp1.rejection_rate, np1.rejection_rate, dp01.rejection_rate, np01.rejection_rate
        ),
    )
}

fn means_size_power() -> Verdict {
    let mean_grid = |pair: ParamPair, seed: u64| ScenarioGrid {
        endpoint: Endpoint::Mean,
        param_grid: vec![pair],
        n: 200,
        m: 200,
        epsilon_list: vec![2.0],
        c0: 0.5,
        alpha: 0.05,
        h: 300,
        b: 500,
        clamping: Some(Clamping::Symmetric { center: 0.0, half_width: 2.0 }),
        seed,
    };
    let power = run_power_curve(&mean_grid(ParamPair::means(0.0, 1.0, 0.0, 1.0), 7)).unwrap();
    let size = run_size_experiment(&mean_grid(ParamPair::means(0.0, 1.0, 0.5, 1.0), 8)).unwrap();
    let (dp, np) = (find(&power, 2.0, "dp").rejection_rate, find(&power, 2.0, "nonprivate").rejection_rate);
    let dp_size = find(&size, 2.0, "dp").rejection_rate;
    let np_size = find(&size, 2.0, "nonprivate").rejection_rate;
    verdict(
        (dp - np).abs() <= 0.10 && dp_size <= 0.065,
        format!(
            "power DP {dp:.4} vs non-private {np:.4} (within 0.10); boundary size DP {dp_size:.4} <= 0.065 \
             (non-private {np_size:.4})"
        ),
    )
}

fn row<'a>(rows: &'a [AgreementRow], label: &str, eps: f64) -> &'a AgreementRow {
    rows.iter()
        .find(|r| r.comparison_label == label && r.epsilon == eps)
        .unwrap_or_else(|| panic!("missing {label} at {eps}"))
}

fn emulation_runs() -> (Vec<AgreementRow>, Vec<AgreementRow>) {
    let off = run_emulation_actg(&EmulationConfig::new(Outcome::OffTreat, vec![0.1, 0.5], 300, 500, 9)).unwrap();
    let mut cd4_cfg = EmulationConfig::new(Outcome::LogCd4, vec![0.5, 1.0], 300, 500, 10);
    cd4_cfg.comparisons = Some(vec!["ZDV+ddC vs ddI".into()]);
    let cd4 = run_emulation_actg(&cd4_cfg).unwrap();
    (off, cd4)
}

fn emulation_reproduction(off: &[AgreementRow], cd4: &[AgreementRow]) -> Verdict {
    let a = row(off, "ZDV vs ZDV+ddI", 0.5);
    let b = row(cd4, "ZDV+ddC vs ddI", 1.0);
    let c = row(cd4, "ZDV+ddC vs ddI", 0.5);
    let checks = [
        (a.nonprivate_reject_pct - 15.7).abs() <= 6.0,
        (a.dp_reject_pct - 14.2).abs() <= 6.0,
        (b.nonprivate_reject_pct - 99.3).abs() <= 3.0,
        (b.dp_reject_pct - 39.8).abs() <= 9.0,
        c.dp_reject_pct <= 5.0,
    ];
    verdict(
        checks.iter().all(|&c| c),
        format!(
            "off-treat ZDV vs ZDV+ddI eps=0.5: NP {:.1}% (15.7+-6), DP {:.1}% (14.2+-6); \
             log-CD4 ZDV+ddC vs ddI eps=1: NP {:.1}% (99.3+-3), DP {:.1}% (39.8+-9); eps=0.5 DP {:.1}% (<= 5)",
            a.nonprivate_reject_pct, a.dp_reject_pct, b.nonprivate_reject_pct, b.dp_reject_pct, c.dp_reject_pct
        ),
    )
}

fn discordance_asymmetry(off: &[AgreementRow]) -> Verdict {
    let cells: Vec<&AgreementRow> = off.iter().filter(|r| r.epsilon <= 0.5).collect();
    let worst = cells.iter().map(|r| r.discord_dp_rejects_pct).fold(0.0f64, f64::max);
    verdict(
        cells.len() == 12 && worst <= 10.0,
        format!("max DP-only rejection over {} off-treat cells = {worst:.1}% (<= 10)", cells.len()),
    )
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn harness_bytes() -> Vec<u8> {
    let mut g = prop_grid(ParamPair::proportions(0.5, 0.45), 300, vec![0.5, 2.0], 100, 30, 12);
    g.param_grid.push(ParamPair::proportions(0.5, 0.4));
    let mut bytes = to_csv_bytes(&run_power_curve(&g).unwrap()).unwrap();
    bytes.extend(
        to_csv_bytes(
            &run_size_experiment(&prop_grid(ParamPair::proportions(0.5, 0.4), 300, vec![1.0], 100, 30, 13)).unwrap(),
        )
        .unwrap(),
    );
    let mean = ScenarioGrid {
        endpoint: Endpoint::Mean,
        param_grid: vec![ParamPair::means(0.0, 1.0, 0.2, 1.0)],
        n: 80,
        m: 80,
        epsilon_list: vec![1.0],
        c0: 0.5,
        alpha: 0.05,
        h: 40,
        b: 8,
        clamping: Some(Clamping::Symmetric { center: 0.0, half_width: 2.0 }),
        seed: 14,
    };
    bytes.extend(to_csv_bytes(&run_power_curve(&mean).unwrap()).unwrap());
    for (outcome, seed) in [(Outcome::OffTreat, 15), (Outcome::LogCd4, 16)] {
        let rows = run_emulation_actg(&EmulationConfig::new(outcome, vec![1.0], 4, 40, seed)).unwrap();
        let csv: Vec<EmulationRow> = rows.iter().map(|r| r.to_csv_row(outcome)).collect();
        bytes.extend(to_csv_bytes(&csv).unwrap());
    }
    bytes
}

fn cli_outputs(threads: usize, dir: &std::path::Path) -> Vec<Vec<u8>> {
    let grid = dir.join("grid.json");
    let emu = dir.join("emu.json");
    let (sim_out, emu_out) = (dir.join(format!("sim{threads}.csv")), dir.join(format!("emu{threads}.csv")));
    let commands: Vec<Vec<String>> = vec![
        "prop --p1 0.41 --n 532 --p2 0.33 --m 522 --eps 0.5 --c0 0.1 --H 200 --seed 7"
            .split(' ')
            .map(String::from)
            .collect(),
        "mean --mean1 5.87 --sd1 0.34 --mean2 5.87 --sd2 0.36 --n 524 --m 561 --lo1 4.60517 --hi1 7.31322 \
         --lo2 4.60517 --hi2 7.31322 --eps 1 --c0 0.0953102 --H 60 --seed 3"
            .split_whitespace()
            .map(String::from)
            .collect(),
        vec![
            "simulate".into(),
            "--config".into(),
            grid.display().to_string(),
            "--out".into(),
            sim_out.display().to_string(),
        ],
        vec![
            "emulate".into(),
            "--config".into(),
            emu.display().to_string(),
            "--out".into(),
            emu_out.display().to_string(),
        ],
    ];
    let mut outputs = Vec::new();
    for args in &commands {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = common::run_cli(&refs, Some(threads), None);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        // the out path differs per run; compare everything except that line
        let text = String::from_utf8(o.stdout).unwrap();
        outputs.push(text.lines().filter(|l| !l.starts_with("rows=")).collect::<Vec<_>>().join("\n").into_bytes());
    }
    outputs.push(std::fs::read(&sim_out).unwrap());
    outputs.push(std::fs::read(&emu_out).unwrap());
    outputs
}

fn determinism() -> Verdict {
    let base = in_pool(1, harness_bytes);
    let harness_same = [4, 8].iter().all(|&k| in_pool(k, harness_bytes) == base);

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("grid.json"),
        r#"{"endpoint": "proportion", "param_grid": [{"group1": 0.5, "group2": 0.45}],
            "n": 300, "m": 300, "epsilon_list": [0.5, 1.0], "c0": 0.1, "H": 80, "B": 20, "seed": 21}"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("emu.json"),
        r#"{"outcome": "log_cd4", "epsilon_list": [1.0], "B": 3, "H": 40, "seed": 22}"#,
    )
    .unwrap();
    let cli_base = cli_outputs(1, dir.path());
    let cli_same = [4, 8].iter().all(|&k| cli_outputs(k, dir.path()) == cli_base);
    verdict(
        harness_same && cli_same,
        format!("harness CSV identical under 1/4/8 threads: {harness_same}; CLI stdout and CSV identical: {cli_same}"),
    )
}

fn main() {
    // honour `cargo test -- --list` and similar harness probes
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    println!("acceptance suite");
    let mut failures = 0;
    let mut report = |id: usize, name: &str, limit: Duration, run: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = run();
        let took = start.elapsed();
        let in_time = took <= limit;
        let pass = v.pass && in_time;
        failures += (!pass) as usize;
        println!(
            "{} [{id}] {name}: {} ({:.1}s, limit {}s{})",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    };
    let mins = |m: u64| Duration::from_secs(60 * m);
    report(1, "root-oracle equivalence", Duration::from_secs(10), &mut root_oracle_equivalence);
    report(2, "mean-match analytic oracle", Duration::from_secs(30), &mut mean_match_analytic_oracle);
    report(3, "DP mechanism density-ratio bound", Duration::from_secs(10), &mut dp_mechanism_bound);
    report(4, "size control, proportions", mins(10), &mut size_control);
    report(5, "conservative at strict privacy", mins(5), &mut strict_privacy_conservative);
    report(6, "power convergence, proportions", mins(10), &mut power_convergence);
    report(7, "means size and power", mins(30), &mut means_size_power);
    let start = Instant::now();
    let (off, cd4) = emulation_runs();
    let emu_time = start.elapsed();
    println!("      emulation runs took {:.1}s", emu_time.as_secs_f64());
    report(8, "emulation reproduction", mins(45).saturating_sub(emu_time), &mut || emulation_reproduction(&off, &cd4));
    report(9, "discordance asymmetry", mins(45).saturating_sub(emu_time), &mut || discordance_asymmetry(&off));
    report(10, "determinism across thread counts", mins(10), &mut determinism);
    println!("{} of 10 criteria passed", 10 - failures);
    if failures > 0 && std::env::var("DP_TOST_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
