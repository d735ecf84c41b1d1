//! Scenario grids for the size and power experiments, as read from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::{ClampBounds, PrivacyBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Proportion,
    Mean,
}

impl Endpoint {
    pub fn as_str(&self) -> &'static str {
        match self {
            Endpoint::Proportion => "proportion",
            Endpoint::Mean => "mean",
        }
    }
}

/// Population parameters for one cell: proportions `(pi1, pi2)`, or means
/// `(mu1, mu2)` with standard deviations `(sd1, sd2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamPair {
    pub group1: f64,
    pub group2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd2: Option<f64>,
}

impl ParamPair {
    pub fn proportions(pi1: f64, pi2: f64) -> Self {
        Self { group1: pi1, group2: pi2, sd1: None, sd2: None }
    }

    pub fn means(mu1: f64, sd1: f64, mu2: f64, sd2: f64) -> Self {
        Self { group1: mu1, group2: mu2, sd1: Some(sd1), sd2: Some(sd2) }
    }

    /// True effect `group1 - group2`.
    pub fn effect(&self) -> f64 {
        self.group1 - self.group2
    }

    /// The same design with the effect sign flipped and group 1 held fixed.
    pub fn mirrored(&self) -> Self {
        Self { group2: 2.0 * self.group1 - self.group2, ..*self }
    }

    pub fn validate(&self, endpoint: Endpoint) -> Result<()> {
        match endpoint {
            Endpoint::Proportion => {
                for p in [self.group1, self.group2] {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::Config(format!("proportion {p} is outside [0, 1]")));
                    }
                }
            }
            Endpoint::Mean => {
                if !(self.group1.is_finite() && self.group2.is_finite()) {
                    return Err(Error::Config("means must be finite".into()));
                }
                match (self.sd1, self.sd2) {
                    (Some(s1), Some(s2)) if s1 > 0.0 && s2 > 0.0 && s1.is_finite() && s2.is_finite() => {}
                    _ => return Err(Error::Config("mean designs need positive sd1 and sd2".into())),
                }
            }
        }
        Ok(())
    }
}

/// Clamping bounds for the mean endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Clamping {
    /// `[center - half_width, center + half_width]` for both groups.
    Symmetric {
        center: f64,
        half_width: f64,
    },
    Explicit {
        lo1: f64,
        hi1: f64,
        lo2: f64,
        hi2: f64,
    },
}

impl Clamping {
    pub fn bounds(&self) -> Result<(ClampBounds, ClampBounds)> {
        let (lo1, hi1, lo2, hi2) = match *self {
            Clamping::Symmetric { center, half_width } => {
                (center - half_width, center + half_width, center - half_width, center + half_width)
            }
            Clamping::Explicit { lo1, hi1, lo2, hi2 } => (lo1, hi1, lo2, hi2),
        };
        let wrap = |e: Error| Error::Config(format!("clamping: {e}"));
        Ok((ClampBounds::new(lo1, hi1).map_err(wrap)?, ClampBounds::new(lo2, hi2).map_err(wrap)?))
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_h() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGrid {
    pub endpoint: Endpoint,
    pub param_grid: Vec<ParamPair>,
    pub n: usize,
    pub m: usize,
    pub epsilon_list: Vec<f64>,
    pub c0: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Matched draws per DP-TOST call.
    #[serde(rename = "H", alias = "h", default = "default_h")]
    pub h: usize,
    /// Monte Carlo replicates per cell.
    #[serde(rename = "B", alias = "b")]
    pub b: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamping: Option<Clamping>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioGrid {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.param_grid.is_empty() || self.epsilon_list.is_empty() {
            return fail("param_grid and epsilon_list must be non-empty".into());
        }
        if self.b == 0 || self.h == 0 {
            return fail("B and H must be at least 1".into());
        }
        let min_n = match self.endpoint {
            Endpoint::Proportion => 1,
            Endpoint::Mean => 2,
        };
        if self.n < min_n || self.m < min_n {
            return fail(format!("n and m must be at least {min_n}"));
        }
        for &eps in &self.epsilon_list {
            PrivacyBudget::new(eps).map_err(|e| Error::Config(e.to_string()))?;
        }
        crate::classic_tost::EquivalenceSpec::new(self.c0, self.alpha).map_err(|e| Error::Config(e.to_string()))?;
        for p in &self.param_grid {
            p.validate(self.endpoint)?;
        }
        match (self.endpoint, &self.clamping) {
            (Endpoint::Mean, None) => return fail("the mean endpoint requires clamping bounds".into()),
            (_, Some(c)) => {
                c.bounds()?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Bounds for the mean endpoint; `None` for proportions.
    pub fn bounds(&self) -> Result<Option<(ClampBounds, ClampBounds)>> {
        match self.endpoint {
            Endpoint::Proportion => Ok(None),
            Endpoint::Mean => match &self.clamping {
                Some(c) => c.bounds().map(Some),
                None => Err(Error::Config("the mean endpoint requires clamping bounds".into())),
            },
        }
    }
}

/// A config holds one grid object or an array of them.
pub fn parse_grids(json: &str) -> Result<Vec<ScenarioGrid>> {
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
    let grids = if value.is_array() {
        serde_json::from_value::<Vec<ScenarioGrid>>(value)
    } else {
        serde_json::from_value::<ScenarioGrid>(value).map(|g| vec![g])
    }
    .map_err(|e| Error::Config(e.to_string()))?;
    for g in &grids {
        g.validate()?;
    }
    Ok(grids)
}

pub fn load_grids(path: &Path) -> Result<Vec<ScenarioGrid>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_grids(&text)
}
