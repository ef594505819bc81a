use serde::{Deserialize, Serialize};

use super::data::{parse_month, previous_month, ProducerTable, RSchedule};
use super::{MarketRunConfig, Mode};
use crate::error::{Error, Result};
use crate::game::FirstStageParams;

/// Numerators of `c_i = k_i / Λ_i` for the first three producers; the rest
/// use `0.1`.
pub const COST_NUMERATORS: [f64; 3] = [0.11, 0.115, 0.095];
pub const DEFAULT_COST_NUMERATOR: f64 = 0.1;
/// `a_i = c_i` except for these `(index, factor)` pairs (USA, Canada).
pub const LINEAR_COST_FACTORS: [(usize, f64); 2] = [(2, 6.0), (5, 2.0)];

/// Which month's shares calibrate the costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnchorPolicy {
    /// In-sample uses the run month, out-of-sample the month before.
    #[default]
    Rolling,
    /// As `Rolling`, except every 2020 run anchors on January 2020
    /// (in-sample) or December 2019 (out-of-sample).
    Fixed2020,
}

/// How table shares enter `c_i = k_i / Λ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShareUnit {
    /// `Λ = percent / 100`.
    #[default]
    Fraction,
    /// `Λ` taken as the table percentage.
    Percent,
}

pub fn anchor_month(cfg: &MarketRunConfig) -> Result<String> {
    let (year, _) = parse_month(&cfg.month)?;
    Ok(match (cfg.anchor, cfg.mode, year) {
        (AnchorPolicy::Fixed2020, Mode::InSample, 2020) => "2020-01".into(),
        (AnchorPolicy::Fixed2020, Mode::OutOfSample, 2020) => "2019-12".into(),
        (_, Mode::InSample, _) => cfg.month.clone(),
        (_, Mode::OutOfSample, _) => previous_month(&cfg.month)?,
    })
}

/// `c_1 = 0.11/Λ_1`, `c_2 = 0.115/Λ_2`, `c_3 = 0.095/Λ_3`, `c_i = 0.1/Λ_i`;
/// `a = c` except `a_3 = 6c_3` and `a_6 = 2c_6`; `r` from the schedule for
/// the run month.
pub fn calibrate_first_stage(
    shares: &ProducerTable,
    rsched: &RSchedule,
    cfg: &MarketRunConfig,
) -> Result<FirstStageParams> {
    let anchor = anchor_month(cfg)?;
    let lambda = shares
        .month(&anchor)
        .ok_or_else(|| Error::invalid(format!("no market shares for {anchor}")))?;
    if rsched.0.producers.len() != lambda.len() {
        return Err(Error::dim(
            "r schedule producers",
            lambda.len(),
            rsched.0.producers.len(),
        ));
    }
    let scale = match cfg.share_unit {
        ShareUnit::Fraction => 0.01,
        ShareUnit::Percent => 1.0,
    };
    let c = lambda
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if !(l > 0.0) {
                return Err(Error::invalid(format!(
                    "share of {} in {anchor} must be positive",
                    shares.producers[i]
                )));
            }
            let k = COST_NUMERATORS
                .get(i)
                .copied()
                .unwrap_or(DEFAULT_COST_NUMERATOR);
            Ok(k / (l * scale))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut a = c.clone();
    for (i, f) in LINEAR_COST_FACTORS {
        if i < a.len() {
            a[i] *= f;
        }
    }
    FirstStageParams::new(c, a, rsched.r_for(&cfg.month))
}
