//! Empirical size and power of DP-TOST against the non-private benchmark.
//!
//! Stream layout for replicate `b` of a grid with seed `s`:
//! `make_rng(s).substream(b)` is the replicate stream, and within it
//! `substream(0).substream(cell)` generates the data, `substream(1)` the
//! privatization noise and `substream(2)` the matched draws, the last two
//! further indexed by `cell` and the budget index.

use rayon::prelude::*;

use crate::classic_tost::{tost_mean, tost_prop, EquivalenceSpec, TostResult};
use crate::error::{Error, Result};
use crate::inference::{dp_tost_mean, dp_tost_prop};
use crate::mean_match::MeanMatchConfig;
use crate::privacy::{privatize_moments, privatize_proportion, ClampBounds, PrivacyBudget};
use crate::prop_match::PropMatchConfig;
use crate::stochastics::{make_rng, RngState};

use super::data::{generate_two_sample_data, TwoSampleSummary};
use super::output::RateRow;
use super::scenario::{ParamPair, ScenarioGrid};

/// Rejection counts of one parameter cell over all replicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellCounts {
    pub nonprivate: u64,
    /// One count per entry of the grid's `epsilon_list`.
    pub dp: Vec<u64>,
    pub replicates: u64,
}

/// A non-private decision; degenerate data (zero variance) cannot establish
/// equivalence and counts as no rejection.
pub(crate) fn nonprivate_decision(result: Result<TostResult>) -> Result<bool> {
    match result {
        Ok(r) => Ok(r.equivalent),
        Err(Error::DegenerateData(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

struct Design<'a> {
    grid: &'a ScenarioGrid,
    spec: EquivalenceSpec,
    bounds: Option<(ClampBounds, ClampBounds)>,
    budgets: Vec<PrivacyBudget>,
}

impl<'a> Design<'a> {
    fn new(grid: &'a ScenarioGrid) -> Result<Self> {
        grid.validate()?;
        Ok(Self {
            grid,
            spec: EquivalenceSpec::new(grid.c0, grid.alpha)?,
            bounds: grid.bounds()?,
            budgets: grid.epsilon_list.iter().map(|&e| PrivacyBudget::new(e)).collect::<Result<_>>()?,
        })
    }

    /// Non-private decision and one DP decision per budget for one replicate.
    fn replicate(&self, cell: u64, params: &ParamPair, rep: &RngState) -> Result<(bool, Vec<bool>)> {
        let g = self.grid;
        let data = generate_two_sample_data(
            g.endpoint,
            params,
            g.n,
            g.m,
            self.bounds.as_ref(),
            &mut rep.substream(0).substream(cell),
        )?;
        let noise = rep.substream(1).substream(cell);
        let matching = rep.substream(2).substream(cell);

        match data {
            TwoSampleSummary::Proportion { xbar, ybar } => {
                let np = nonprivate_decision(tost_prop(xbar, g.n, ybar, g.m, &self.spec))?;
                let cfg = PropMatchConfig { replicates: g.h, ..Default::default() };
                let dp = self
                    .budgets
                    .iter()
                    .enumerate()
                    .map(|(k, &budget)| {
                        let stream = noise.substream(k as u64);
                        let px = privatize_proportion(xbar, g.n, budget, &mut stream.substream(0))?;
                        let py = privatize_proportion(ybar, g.m, budget, &mut stream.substream(1))?;
                        let r = dp_tost_prop(
                            px.p_hat,
                            g.n,
                            py.p_hat,
                            g.m,
                            budget,
                            &self.spec,
                            &cfg,
                            &matching.substream(k as u64),
                        )?;
                        Ok(r.equivalent)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((np, dp))
            }
            TwoSampleSummary::Mean { x, y } => {
                let (bx, by) = self.bounds.expect("validated mean design has bounds");
                let np =
                    nonprivate_decision(tost_mean(x.raw.mean, x.raw.sd, g.n, y.raw.mean, y.raw.sd, g.m, &self.spec))?;
                let cfg = MeanMatchConfig { replicates: g.h, ..Default::default() };
                let dp = self
                    .budgets
                    .iter()
                    .enumerate()
                    .map(|(k, &budget)| {
                        let stream = noise.substream(k as u64);
                        let tx = privatize_moments(
                            x.clamped.mean,
                            x.clamped.sd,
                            &bx,
                            g.n,
                            budget,
                            &mut stream.substream(0),
                        )?;
                        let ty = privatize_moments(
                            y.clamped.mean,
                            y.clamped.sd,
                            &by,
                            g.m,
                            budget,
                            &mut stream.substream(1),
                        )?;
                        let r = dp_tost_mean(&tx, &ty, &self.spec, &cfg, &matching.substream(k as u64))?;
                        Ok(r.equivalent)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((np, dp))
            }
        }
    }

    fn run(&self, cells: &[ParamPair]) -> Result<Vec<CellCounts>> {
        let b = self.grid.b as u64;
        let root = make_rng(self.grid.seed);
        let decisions = (0..cells.len() as u64 * b)
            .into_par_iter()
            .map(|k| {
                let (cell, rep) = (k / b, k % b);
                self.replicate(cell, &cells[cell as usize], &root.substream(rep))
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(decisions
            .chunks(b as usize)
            .map(|chunk| {
                let mut counts = CellCounts { nonprivate: 0, dp: vec![0; self.budgets.len()], replicates: b };
                for (np, dp) in chunk {
                    counts.nonprivate += *np as u64;
                    for (c, &d) in counts.dp.iter_mut().zip(dp) {
                        *c += d as u64;
                    }
                }
                counts
            })
            .collect())
    }
}

/// Counts for each cell of `cells` under the design of `grid` (its own
/// `param_grid` is ignored).
pub fn run_cells(grid: &ScenarioGrid, cells: &[ParamPair]) -> Result<Vec<CellCounts>> {
    for p in cells {
        p.validate(grid.endpoint)?;
    }
    Design::new(grid)?.run(cells)
}

fn rate_rows(grid: &ScenarioGrid, reference: f64, effect: f64, counts: &CellCounts) -> Vec<RateRow> {
    let row = |epsilon: f64, method: &str, rejections: u64| RateRow {
        endpoint: grid.endpoint.as_str().to_string(),
        reference,
        n: grid.n,
        m: grid.m,
        epsilon,
        effect,
        method: method.to_string(),
        rejections,
        replicates: counts.replicates,
        rejection_rate: rejections as f64 / counts.replicates as f64,
    };
    grid.epsilon_list
        .iter()
        .zip(&counts.dp)
        .flat_map(|(&eps, &dp)| [row(eps, "dp", dp), row(eps, "nonprivate", counts.nonprivate)])
        .collect()
}

fn sort_rows(mut rows: Vec<RateRow>) -> Vec<RateRow> {
    use super::output::CsvRow;
    rows.sort_by(RateRow::order);
    rows
}

/// Rejection fraction for every cell of the grid, both methods, every budget.
/// Non-private rows are repeated per budget; they share the replicate data.
pub fn run_power_curve(grid: &ScenarioGrid) -> Result<Vec<RateRow>> {
    let counts = Design::new(grid)?.run(&grid.param_grid)?;
    let rows =
        grid.param_grid.iter().zip(&counts).flat_map(|(p, c)| rate_rows(grid, p.group1, p.effect(), c)).collect();
    Ok(sort_rows(rows))
}

/// Empirical size: each grid pair must sit on the null boundary
/// (`|group1 - group2| = c0`); it is run together with its mirror image and
/// the larger rejection count of the two is reported with `effect = c0`.
pub fn run_size_experiment(grid: &ScenarioGrid) -> Result<Vec<RateRow>> {
    let design = Design::new(grid)?;
    let tol = 1e-9 * grid.c0.max(1.0);
    let mut bases: Vec<ParamPair> = Vec::new();
    for p in &grid.param_grid {
        if (p.effect().abs() - grid.c0).abs() > tol {
            return Err(Error::Config(format!(
                "size cells must lie on the null boundary: effect {} vs c0 {}",
                p.effect(),
                grid.c0
            )));
        }
        let base = if p.effect() > 0.0 { *p } else { p.mirrored() };
        if !bases.contains(&base) {
            bases.push(base);
        }
    }
    let cells: Vec<ParamPair> = bases.iter().flat_map(|p| [*p, p.mirrored()]).collect();
    for c in &cells {
        c.validate(grid.endpoint)?;
    }
    let counts = design.run(&cells)?;
    let rows = bases
        .iter()
        .zip(counts.chunks(2))
        .flat_map(|(p, pair)| {
            let merged = CellCounts {
                nonprivate: pair[0].nonprivate.max(pair[1].nonprivate),
                dp: pair[0].dp.iter().zip(&pair[1].dp).map(|(a, b)| *a.max(b)).collect(),
                replicates: pair[0].replicates,
            };
            rate_rows(grid, p.group1, grid.c0, &merged)
        })
        .collect();
    Ok(sort_rows(rows))
}

/// Run several grids and concatenate their rows in scenario order.
pub fn run_grids(grids: &[ScenarioGrid], size: bool) -> Result<Vec<RateRow>> {
    let mut rows = Vec::new();
    for g in grids {
        rows.extend(if size { run_size_experiment(g)? } else { run_power_curve(g)? });
    }
    Ok(sort_rows(rows))
}
