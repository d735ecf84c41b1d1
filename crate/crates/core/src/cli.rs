//! Command-line front end.
//!
//! `prop` and `mean` run DP-TOST on released summaries (or, with `--raw`,
//! privatize raw summaries first), `privatize` releases raw summaries, and
//! `simulate` / `emulate` run the harness from a JSON config and write CSV.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 runtime or config error.
//!
//! Streams for a given `--seed`: group `k` is privatized from
//! `make_rng(seed).substream(0).substream(k)` and the matched draws use
//! `make_rng(seed).substream(1)`, so `privatize` followed by `prop`/`mean`
//! reproduces the one-shot `--raw` run exactly.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classic_tost::EquivalenceSpec;
use crate::error::Error;
use crate::inference::{dp_tost_mean, dp_tost_prop, EquivalenceResult};
use crate::mean_match::MeanMatchConfig;
use crate::privacy::{privatize_moments, privatize_proportion, ClampBounds, PrivacyBudget, PrivatizedMoments};
use crate::prop_match::PropMatchConfig;
use crate::simharness::{self, CsvRow, EmulationRow};
use crate::stochastics::{make_rng, RngState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Released proportions further than this many noise scales outside [0, 1]
/// are rejected as implausible inputs.
const PLAUSIBLE_SCALES: f64 = 50.0;

#[derive(Debug, Parser)]
#[command(name = "dp-tost", version, about = "Differentially private equivalence testing (DP-TOST)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// DP-TOST for a difference of two proportions.
    Prop(PropArgs),
    /// DP-TOST for a difference of two clamped means.
    Mean(MeanArgs),
    /// Release raw summaries through the Laplace mechanism.
    Privatize {
        #[command(subcommand)]
        target: PrivatizeTarget,
    },
    /// Size or power experiment from a scenario grid config.
    Simulate(SimulateArgs),
    /// ACTG175 emulation from a config.
    Emulate(EmulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    CsvLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    Size,
    Power,
}

#[derive(Debug, Args)]
struct TestArgs {
    /// Privacy budget per group.
    #[arg(long)]
    eps: f64,
    /// Equivalence margin.
    #[arg(long)]
    c0: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Number of matched draws.
    #[arg(long = "H", default_value_t = 1000)]
    h: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Treat the summaries as raw (non-private) and privatize them first.
    #[arg(long)]
    raw: bool,
}

#[derive(Debug, Args)]
struct PropGroups {
    #[arg(long, allow_hyphen_values = true)]
    p1: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, allow_hyphen_values = true)]
    p2: f64,
    #[arg(long)]
    m: usize,
}

#[derive(Debug, Args)]
struct MeanGroups {
    #[arg(long, allow_hyphen_values = true)]
    mean1: f64,
    #[arg(long, allow_hyphen_values = true)]
    sd1: f64,
    #[arg(long, allow_hyphen_values = true)]
    mean2: f64,
    #[arg(long, allow_hyphen_values = true)]
    sd2: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, allow_hyphen_values = true)]
    lo1: f64,
    #[arg(long, allow_hyphen_values = true)]
    hi1: f64,
    #[arg(long, allow_hyphen_values = true)]
    lo2: f64,
    #[arg(long, allow_hyphen_values = true)]
    hi2: f64,
}

#[derive(Debug, Args)]
struct PropArgs {
    #[command(flatten)]
    groups: PropGroups,
    #[command(flatten)]
    test: TestArgs,
}

#[derive(Debug, Args)]
struct MeanArgs {
    #[command(flatten)]
    groups: MeanGroups,
    #[command(flatten)]
    test: TestArgs,
}

#[derive(Debug, Args)]
struct ReleaseArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum PrivatizeTarget {
    /// Release two sample proportions.
    Prop {
        #[command(flatten)]
        groups: PropGroups,
        #[command(flatten)]
        release: ReleaseArgs,
    },
    /// Release the mean and sd of two clamped samples.
    Mean {
        #[command(flatten)]
        groups: MeanGroups,
        #[command(flatten)]
        release: ReleaseArgs,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Experiment::Power)]
    experiment: Experiment,
}

#[derive(Debug, Args)]
struct EmulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn runtime(err: Error) -> Self {
        Self { code: EXIT_RUNTIME, message: err.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage_on_err<T>(r: crate::Result<T>) -> CliResult<T> {
    r.map_err(|e| Failure::usage(e.to_string()))
}

fn check_test_args(t: &TestArgs) -> CliResult<(PrivacyBudget, EquivalenceSpec)> {
    let budget = PrivacyBudget::new(t.eps).map_err(|e| Failure::usage(format!("--eps: {e}")))?;
    let spec = EquivalenceSpec::new(t.c0, t.alpha).map_err(|e| Failure::usage(format!("--c0/--alpha: {e}")))?;
    let needed = (1.0 / t.alpha - 1e-9).ceil() as usize;
    if t.h < needed {
        return Err(Failure::usage(format!("--H must be at least {needed} for alpha = {}", t.alpha)));
    }
    Ok((budget, spec))
}

fn check_sizes(n: usize, m: usize, min: usize) -> CliResult<()> {
    if n < min || m < min {
        return Err(Failure::usage(format!("--n and --m must be at least {min}")));
    }
    Ok(())
}

fn check_raw_proportions(g: &PropGroups) -> CliResult<()> {
    for (flag, p) in [("--p1", g.p1), ("--p2", g.p2)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Failure::usage(format!("{flag}: proportion {p} is outside [0, 1]")));
        }
    }
    Ok(())
}

fn check_released_proportions(g: &PropGroups, budget: PrivacyBudget) -> CliResult<()> {
    for (flag, p, size) in [("--p1", g.p1, g.n), ("--p2", g.p2, g.m)] {
        let scale = 1.0 / (size as f64 * budget.epsilon());
        let outside = (-p).max(p - 1.0).max(0.0);
        if !p.is_finite() || outside > PLAUSIBLE_SCALES * scale {
            return Err(Failure::usage(format!(
                "{flag}: released proportion {p} is implausibly far outside [0, 1] for n = {size}, eps = {}",
                budget.epsilon()
            )));
        }
    }
    Ok(())
}

fn group_bounds(g: &MeanGroups) -> CliResult<(ClampBounds, ClampBounds)> {
    let b1 = ClampBounds::new(g.lo1, g.hi1).map_err(|e| Failure::usage(format!("--lo1/--hi1: {e}")))?;
    let b2 = ClampBounds::new(g.lo2, g.hi2).map_err(|e| Failure::usage(format!("--lo2/--hi2: {e}")))?;
    Ok((b1, b2))
}

fn release_proportions(g: &PropGroups, budget: PrivacyBudget, seed: u64) -> CliResult<(f64, f64)> {
    let noise = make_rng(seed).substream(0);
    let p1 = usage_on_err(privatize_proportion(g.p1, g.n, budget, &mut noise.substream(0)))?;
    let p2 = usage_on_err(privatize_proportion(g.p2, g.m, budget, &mut noise.substream(1)))?;
    Ok((p1.p_hat, p2.p_hat))
}

fn release_moments(
    g: &MeanGroups,
    bounds: (ClampBounds, ClampBounds),
    budget: PrivacyBudget,
    seed: u64,
) -> CliResult<(PrivatizedMoments, PrivatizedMoments)> {
    let noise = make_rng(seed).substream(0);
    let x = privatize_moments(g.mean1, g.sd1, &bounds.0, g.n, budget, &mut noise.substream(0))
        .map_err(|e| Failure::usage(format!("group 1: {e}")))?;
    let y = privatize_moments(g.mean2, g.sd2, &bounds.1, g.m, budget, &mut noise.substream(1))
        .map_err(|e| Failure::usage(format!("group 2: {e}")))?;
    Ok((x, y))
}

fn matching_stream(seed: u64) -> RngState {
    make_rng(seed).substream(1)
}

fn report(
    out: &mut impl Write,
    format: Format,
    title: &str,
    inputs: &[String],
    t: &TestArgs,
    r: &EquivalenceResult,
) -> std::io::Result<()> {
    match format {
        Format::CsvLine => writeln!(out, "{},{},{}", r.ci_lower, r.ci_upper, r.equivalent),
        Format::Text => {
            writeln!(out, "ci_lower={} ci_upper={} equivalent={}", r.ci_lower, r.ci_upper, r.equivalent)?;
            writeln!(out)?;
            writeln!(out, "{title}")?;
            for line in inputs {
                writeln!(out, "  {line}")?;
            }
            writeln!(out, "  epsilon = {}, c0 = {}, alpha = {}, H = {}, seed = {}", t.eps, t.c0, t.alpha, t.h, t.seed)?;
            writeln!(
                out,
                "  {}% percentile interval: [{:.6}, {:.6}]",
                100.0 * (1.0 - 2.0 * r.alpha),
                r.ci_lower,
                r.ci_upper
            )?;
            let d = r.draws.diagnostics();
            writeln!(out, "  matching retries = {}, fallbacks = {}", d.retries, d.fallbacks)?;
            let verdict = if r.equivalent { "equivalent" } else { "not shown equivalent" };
            writeln!(out, "  decision: {verdict} within (-{}, {})", r.c0, r.c0)
        }
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure { code: EXIT_RUNTIME, message: format!("writing output: {e}") }
}

fn run_prop(a: &PropArgs, out: &mut impl Write) -> CliResult<()> {
    let (budget, spec) = check_test_args(&a.test)?;
    let g = &a.groups;
    check_sizes(g.n, g.m, 1)?;
    let (p1, p2) = if a.test.raw {
        check_raw_proportions(g)?;
        release_proportions(g, budget, a.test.seed)?
    } else {
        check_released_proportions(g, budget)?;
        (g.p1, g.p2)
    };
    let cfg = PropMatchConfig { replicates: a.test.h, ..Default::default() };
    let r =
        dp_tost_prop(p1, g.n, p2, g.m, budget, &spec, &cfg, &matching_stream(a.test.seed)).map_err(Failure::runtime)?;
    let inputs = [format!("released p1 = {p1}, n = {}", g.n), format!("released p2 = {p2}, m = {}", g.m)];
    report(out, a.test.format, "DP-TOST, difference of proportions", &inputs, &a.test, &r).map_err(io_failure)
}

fn run_mean(a: &MeanArgs, out: &mut impl Write) -> CliResult<()> {
    let (budget, spec) = check_test_args(&a.test)?;
    let g = &a.groups;
    check_sizes(g.n, g.m, 2)?;
    let bounds = group_bounds(g)?;
    let (tx, ty) = if a.test.raw {
        release_moments(g, bounds, budget, a.test.seed)?
    } else {
        let wrap =
            |flag: &str, r: crate::Result<PrivatizedMoments>| r.map_err(|e| Failure::usage(format!("{flag}: {e}")));
        (
            wrap("group 1", PrivatizedMoments::from_release(g.mean1, g.sd1, g.n, bounds.0, budget))?,
            wrap("group 2", PrivatizedMoments::from_release(g.mean2, g.sd2, g.m, bounds.1, budget))?,
        )
    };
    let cfg = MeanMatchConfig { replicates: a.test.h, ..Default::default() };
    let r = dp_tost_mean(&tx, &ty, &spec, &cfg, &matching_stream(a.test.seed)).map_err(Failure::runtime)?;
    let inputs = [
        format!("released mean1 = {}, sd1 = {}, n = {}, bounds [{}, {}]", tx.mean_hat, tx.sd_hat, g.n, g.lo1, g.hi1),
        format!("released mean2 = {}, sd2 = {}, m = {}, bounds [{}, {}]", ty.mean_hat, ty.sd_hat, g.m, g.lo2, g.hi2),
    ];
    report(out, a.test.format, "DP-TOST, difference of means", &inputs, &a.test, &r).map_err(io_failure)
}

fn run_privatize(target: &PrivatizeTarget, out: &mut impl Write) -> CliResult<()> {
    let budget_of = |eps: f64| PrivacyBudget::new(eps).map_err(|e| Failure::usage(format!("--eps: {e}")));
    let written = match target {
        PrivatizeTarget::Prop { groups, release } => {
            let budget = budget_of(release.eps)?;
            check_sizes(groups.n, groups.m, 1)?;
            check_raw_proportions(groups)?;
            let (p1, p2) = release_proportions(groups, budget, release.seed)?;
            match release.format {
                Format::CsvLine => writeln!(out, "{p1},{p2}"),
                Format::Text => writeln!(out, "p1={p1} p2={p2}"),
            }
        }
        PrivatizeTarget::Mean { groups, release } => {
            let budget = budget_of(release.eps)?;
            check_sizes(groups.n, groups.m, 2)?;
            let bounds = group_bounds(groups)?;
            let (x, y) = release_moments(groups, bounds, budget, release.seed)?;
            match release.format {
                Format::CsvLine => writeln!(out, "{},{},{},{}", x.mean_hat, x.sd_hat, y.mean_hat, y.sd_hat),
                Format::Text => {
                    writeln!(out, "mean1={} sd1={} mean2={} sd2={}", x.mean_hat, x.sd_hat, y.mean_hat, y.sd_hat)
                }
            }
        }
    };
    written.map_err(io_failure)
}

fn run_simulate(a: &SimulateArgs, out: &mut impl Write) -> CliResult<()> {
    let grids = simharness::load_grids(&a.config).map_err(Failure::runtime)?;
    let rows = simharness::run_grids(&grids, a.experiment == Experiment::Size).map_err(Failure::runtime)?;
    simharness::write_csv(&rows, &a.out).map_err(Failure::runtime)?;
    writeln!(out, "rows={} out={}", rows.len(), a.out.display()).map_err(io_failure)
}

fn run_emulate(a: &EmulateArgs, out: &mut impl Write) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|source| Failure::runtime(Error::Io { path: a.config.clone(), source }))?;
    let cfg = simharness::parse_emulation_config(&text).map_err(Failure::runtime)?;
    let rows: Vec<EmulationRow> = simharness::run_emulation_actg(&cfg)
        .map_err(Failure::runtime)?
        .iter()
        .map(|r| r.to_csv_row(cfg.outcome))
        .collect();
    simharness::write_csv(&rows, &a.out).map_err(Failure::runtime)?;
    writeln!(out, "rows={} out={}", rows.len(), a.out.display()).map_err(io_failure)?;
    let mut sorted = rows;
    sorted.sort_by(EmulationRow::order);
    for r in &sorted {
        writeln!(
            out,
            "  {:<20} eps={:<5} both_equiv={:>5.1}% both_nonequiv={:>5.1}% np_only={:>5.1}% dp_only={:>5.1}%",
            r.comparison, r.epsilon, r.both_equiv_pct, r.both_nonequiv_pct, r.np_only_pct, r.dp_only_pct
        )
        .map_err(io_failure)?;
    }
    Ok(())
}

/// Worker count from `DP_TOST_THREADS`, if set.
fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var("DP_TOST_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k >= 1 => Ok(Some(k)),
            _ => Err(Failure::usage(format!("DP_TOST_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

fn dispatch(cli: &Cli, out: &mut impl Write) -> CliResult<()> {
    match &cli.command {
        Command::Prop(a) => run_prop(a, out),
        Command::Mean(a) => run_mean(a, out),
        Command::Privatize { target } => run_privatize(target, out),
        Command::Simulate(a) => run_simulate(a, out),
        Command::Emulate(a) => run_emulate(a, out),
    }
}

/// Parse `args` (including the program name), execute, and return the exit code.
pub fn run<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{rendered}");
                EXIT_OK
            } else {
                let _ = write!(err, "{rendered}");
                EXIT_USAGE
            };
        }
    };

    // output is buffered so the command can run inside a dedicated pool
    let mut buffer = Vec::new();
    let result = thread_cap().and_then(|cap| match cap {
        None => dispatch(&cli, &mut buffer),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Failure { code: EXIT_RUNTIME, message: format!("thread pool: {e}") })?;
            pool.install(|| dispatch(&cli, &mut buffer))
        }
    });
    let result = result.and_then(|()| out.write_all(&buffer).and_then(|()| out.flush()).map_err(io_failure));
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
