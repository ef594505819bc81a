//! Oil-market application: calibrate one game per month from market-share
//! tables and price-change data, solve it, and compare the implied shares
//! `100 x_i / Σ x_j` with the observed ones.

pub mod calibrate;
pub mod data;
pub mod run;
pub mod scenarios;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::SolverConfig;

pub use calibrate::{anchor_month, calibrate_first_stage, AnchorPolicy, ShareUnit};
pub use data::{validate_data, MarketData, PriceSeries, ProducerTable, RSchedule, ValidationIssue};
pub use run::{
    build_triples, run_month, spearman, write_triples_csv, MarketReport, MarketResult, ShareTriple,
};
pub use scenarios::{sample_scenarios, ScenarioSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    InSample,
    OutOfSample,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in_sample" => Ok(Mode::InSample),
            "out_of_sample" => Ok(Mode::OutOfSample),
            _ => Err(Error::invalid(format!(
                "mode `{s}` is not in_sample or out_of_sample"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::InSample => "in_sample",
            Mode::OutOfSample => "out_of_sample",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketRunConfig {
    /// `YYYY-MM`.
    pub month: String,
    pub mode: Mode,
    pub nu: usize,
    pub zeta_range: (f64, f64),
    pub seed: u64,
    pub anchor: AnchorPolicy,
    pub share_unit: ShareUnit,
    pub solver: SolverConfig,
}

impl Default for MarketRunConfig {
    fn default() -> Self {
        Self {
            month: "2019-01".into(),
            mode: Mode::InSample,
            nu: 800,
            zeta_range: (0.05, 0.1),
            seed: 0,
            anchor: AnchorPolicy::default(),
            share_unit: ShareUnit::default(),
            solver: SolverConfig {
                contraction_report: true,
                ..SolverConfig::default()
            },
        }
    }
}

impl MarketRunConfig {
    pub fn validate(&self) -> Result<()> {
        data::parse_month(&self.month)?;
        if self.nu == 0 {
            return Err(Error::invalid("nu must be at least 1"));
        }
        let (lo, hi) = self.zeta_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::invalid(format!(
                "zeta range [{lo}, {hi}] must lie inside (0, 1)"
            )));
        }
        self.solver.validate()
    }
}
