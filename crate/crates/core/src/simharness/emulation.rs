//! Parametric emulation of the four-arm ACTG175 trial.
//!
//! Each replicate draws every arm once from its published summary values
//! (binomial off-treatment counts, or normal log CD4 counts clamped to
//! `[ln 100, ln 1500]`), privatizes every arm once per budget, and runs the
//! six pairwise comparisons with the non-private TOST and DP-TOST.
//!
//! Streams within replicate `b` (`make_rng(seed).substream(b)`):
//! `substream(0).substream(arm)` for data, `substream(1).substream(eps).substream(arm)`
//! for privatization and `substream(2).substream(eps).substream(comparison)`
//! for matched draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic_tost::{tost_mean, tost_prop, EquivalenceSpec};
use crate::error::{Error, Result};
use crate::inference::{dp_tost_mean, dp_tost_prop};
use crate::mean_match::MeanMatchConfig;
use crate::privacy::{privatize_moments, privatize_proportion, ClampBounds, PrivacyBudget};
use crate::prop_match::PropMatchConfig;
use crate::stochastics::{make_rng, RngState};

use super::data::{sample_normal_summary, sample_proportion, NormalSampleSummary};
use super::experiments::nonprivate_decision;
use super::output::EmulationRow;

const TABLE2_CSV: &str = include_str!("../../data/actg175_table2.csv");

/// Published summary values of one treatment arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActgArm {
    pub arm: String,
    pub n: usize,
    pub cd4_log_mean: f64,
    pub cd4_log_sd: f64,
    pub off_treat: f64,
}

/// The four arms in their published order: ZDV, ZDV+ddI, ZDV+ddC, ddI.
pub fn actg_arms() -> Vec<ActgArm> {
    csv::Reader::from_reader(TABLE2_CSV.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<ActgArm>, _>>()
        .expect("bundled arm table is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    OffTreat,
    LogCd4,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::OffTreat => "off_treat",
            Outcome::LogCd4 => "log_cd4",
        }
    }

    pub fn margin(&self) -> f64 {
        match self {
            Outcome::OffTreat => 0.1,
            Outcome::LogCd4 => 1.1f64.ln(),
        }
    }
}

/// Clamping bounds for log CD4 counts: `[ln 100, ln 1500]`.
pub fn cd4_bounds() -> ClampBounds {
    ClampBounds::new(100f64.ln(), 1500f64.ln()).expect("valid bounds")
}

fn default_alpha() -> f64 {
    0.05
}

fn default_h() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmulationConfig {
    pub outcome: Outcome,
    pub epsilon_list: Vec<f64>,
    #[serde(rename = "B", alias = "b")]
    pub b: usize,
    #[serde(rename = "H", alias = "h", default = "default_h")]
    pub h: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Restrict to these comparison labels (e.g. "ZDV vs ZDV+ddI"); all six when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparisons: Option<Vec<String>>,
}

impl EmulationConfig {
    pub fn new(outcome: Outcome, epsilon_list: Vec<f64>, b: usize, h: usize, seed: u64) -> Self {
        Self { outcome, epsilon_list, b, h, seed, alpha: 0.05, comparisons: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon_list.is_empty() {
            return Err(Error::Config("epsilon_list must be non-empty".into()));
        }
        if self.b == 0 || self.h == 0 {
            return Err(Error::Config("B and H must be at least 1".into()));
        }
        for &e in &self.epsilon_list {
            PrivacyBudget::new(e).map_err(|e| Error::Config(e.to_string()))?;
        }
        EquivalenceSpec::new(self.outcome.margin(), self.alpha).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(wanted) = &self.comparisons {
            let all = comparison_pairs(&actg_arms());
            for w in wanted {
                if !all.iter().any(|(label, _, _)| label == w) {
                    return Err(Error::Config(format!("unknown comparison {w:?}")));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_emulation_config(json: &str) -> Result<EmulationConfig> {
    let cfg: EmulationConfig = serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Agreement between the two procedures for one comparison and budget.
/// "Reject" means rejecting non-equivalence, i.e. declaring equivalence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub comparison_label: String,
    pub true_effect: f64,
    pub within_margin: bool,
    pub epsilon: f64,
    pub nonprivate_reject_pct: f64,
    pub dp_reject_pct: f64,
    /// DP-TOST rejects while the non-private test cannot.
    pub discord_dp_rejects_pct: f64,
    /// The non-private test rejects while DP-TOST cannot.
    pub discord_dp_cannot_pct: f64,
}

impl AgreementRow {
    pub fn to_csv_row(&self, outcome: Outcome) -> EmulationRow {
        let both_equiv = self.dp_reject_pct - self.discord_dp_rejects_pct;
        EmulationRow {
            comparison: self.comparison_label.clone(),
            outcome: outcome.as_str().to_string(),
            epsilon: self.epsilon,
            both_equiv_pct: both_equiv,
            both_nonequiv_pct: 100.0 - both_equiv - self.discord_dp_rejects_pct - self.discord_dp_cannot_pct,
            np_only_pct: self.discord_dp_cannot_pct,
            dp_only_pct: self.discord_dp_rejects_pct,
        }
    }
}

/// All pairs `(i, j)` with `i < j` in arm order, labelled `"A vs B"`.
fn comparison_pairs(arms: &[ActgArm]) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..arms.len() {
        for j in i + 1..arms.len() {
            out.push((format!("{} vs {}", arms[i].arm, arms[j].arm), i, j));
        }
    }
    out
}

enum ArmData {
    Proportion(f64),
    Normal(NormalSampleSummary),
}

/// Decisions `(nonprivate, dp)` per comparison, per budget, for one replicate.
fn replicate(
    cfg: &EmulationConfig,
    arms: &[ActgArm],
    pairs: &[(usize, usize, usize)],
    rep: &RngState,
) -> Result<Vec<Vec<(bool, bool)>>> {
    let spec = EquivalenceSpec::new(cfg.outcome.margin(), cfg.alpha)?;
    let bounds = cd4_bounds();
    let data = arms
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let mut rng = rep.substream(0).substream(k as u64);
            Ok(match cfg.outcome {
                Outcome::OffTreat => ArmData::Proportion(sample_proportion(a.off_treat, a.n, &mut rng)?),
                Outcome::LogCd4 => {
                    ArmData::Normal(sample_normal_summary(a.cd4_log_mean, a.cd4_log_sd, a.n, &bounds, &mut rng)?)
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;

    cfg.epsilon_list
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let budget = PrivacyBudget::new(eps)?;
            let noise = rep.substream(1).substream(e as u64);
            let matching = rep.substream(2).substream(e as u64);
            match cfg.outcome {
                Outcome::OffTreat => {
                    let cfg_match = PropMatchConfig { replicates: cfg.h, ..Default::default() };
                    let released = data
                        .iter()
                        .enumerate()
                        .map(|(k, d)| {
                            let ArmData::Proportion(x) = d else { unreachable!() };
                            privatize_proportion(*x, arms[k].n, budget, &mut noise.substream(k as u64))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    pairs
                        .iter()
                        .map(|&(c, i, j)| {
                            let (ArmData::Proportion(xi), ArmData::Proportion(xj)) = (&data[i], &data[j]) else {
                                unreachable!()
                            };
                            let np = nonprivate_decision(tost_prop(*xi, arms[i].n, *xj, arms[j].n, &spec))?;
                            let dp = dp_tost_prop(
                                released[i].p_hat,
                                arms[i].n,
                                released[j].p_hat,
                                arms[j].n,
                                budget,
                                &spec,
                                &cfg_match,
                                &matching.substream(c as u64),
                            )?;
                            Ok((np, dp.equivalent))
                        })
                        .collect()
                }
                Outcome::LogCd4 => {
                    let cfg_match = MeanMatchConfig { replicates: cfg.h, ..Default::default() };
                    let released = data
                        .iter()
                        .enumerate()
                        .map(|(k, d)| {
                            let ArmData::Normal(s) = d else { unreachable!() };
                            privatize_moments(
                                s.clamped.mean,
                                s.clamped.sd,
                                &bounds,
                                arms[k].n,
                                budget,
                                &mut noise.substream(k as u64),
                            )
                        })
                        .collect::<Result<Vec<_>>>()?;
                    pairs
                        .iter()
                        .map(|&(c, i, j)| {
                            let (ArmData::Normal(si), ArmData::Normal(sj)) = (&data[i], &data[j]) else {
                                unreachable!()
                            };
                            let np = nonprivate_decision(tost_mean(
                                si.raw.mean,
                                si.raw.sd,
                                arms[i].n,
                                sj.raw.mean,
                                sj.raw.sd,
                                arms[j].n,
                                &spec,
                            ))?;
                            let dp = dp_tost_mean(
                                &released[i],
                                &released[j],
                                &spec,
                                &cfg_match,
                                &matching.substream(c as u64),
                            )?;
                            Ok((np, dp.equivalent))
                        })
                        .collect()
                }
            }
        })
        .collect()
}

/// Agreement rows ordered by comparison (arm order) then budget.
pub fn run_emulation_actg(cfg: &EmulationConfig) -> Result<Vec<AgreementRow>> {
    cfg.validate()?;
    let arms = actg_arms();
    let pairs: Vec<(usize, usize, usize)> = comparison_pairs(&arms)
        .into_iter()
        .enumerate()
        .filter(|(_, (label, _, _))| cfg.comparisons.as_ref().is_none_or(|w| w.contains(label)))
        .map(|(c, (_, i, j))| (c, i, j))
        .collect();
    let labels = comparison_pairs(&arms);

    let root = make_rng(cfg.seed);
    let decisions = (0..cfg.b as u64)
        .into_par_iter()
        .map(|b| replicate(cfg, &arms, &pairs, &root.substream(b)))
        .collect::<Result<Vec<_>>>()?;

    let pct = |count: usize| 100.0 * count as f64 / cfg.b as f64;
    let mut rows = Vec::new();
    for (p, &(c, i, j)) in pairs.iter().enumerate() {
        let true_effect = match cfg.outcome {
            Outcome::OffTreat => arms[i].off_treat - arms[j].off_treat,
            Outcome::LogCd4 => arms[i].cd4_log_mean - arms[j].cd4_log_mean,
        };
        for (e, &eps) in cfg.epsilon_list.iter().enumerate() {
            let cell = decisions.iter().map(|rep| rep[e][p]);
            let count = |f: fn(&(bool, bool)) -> bool| cell.clone().filter(f).count();
            rows.push(AgreementRow {
                comparison_label: labels[c].0.clone(),
                true_effect,
                within_margin: true_effect.abs() < cfg.outcome.margin(),
                epsilon: eps,
                nonprivate_reject_pct: pct(count(|d| d.0)),
                dp_reject_pct: pct(count(|d| d.1)),
                discord_dp_rejects_pct: pct(count(|d| d.1 && !d.0)),
                discord_dp_cannot_pct: pct(count(|d| d.0 && !d.1)),
            });
        }
    }
    Ok(rows)
}
