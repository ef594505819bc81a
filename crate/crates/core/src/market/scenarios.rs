use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::{previous_month, PriceSeries};
use super::{MarketRunConfig, Mode};
use crate::error::{Error, Result};
use crate::game::ScenarioData;

/// Lower bound on `γ`; a sampled day with no price move would give 0.
pub const GAMMA_FLOOR: f64 = 1e-12;
pub const XI_RANGE: (f64, f64) = (0.99, 1.01);

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSample {
    pub scenarios: Vec<ScenarioData>,
    pub zeta: f64,
    /// `h = β = ζa`, shared by every scenario.
    pub beta: Vec<f64>,
    pub xi: Vec<f64>,
    pub alpha: Vec<f64>,
    pub days: Vec<String>,
    pub window_month: String,
    pub total_supply: f64,
}

/// Month whose trading days feed the empirical distribution.
pub fn window_month(cfg: &MarketRunConfig) -> Result<String> {
    match cfg.mode {
        Mode::InSample => Ok(cfg.month.clone()),
        Mode::OutOfSample => previous_month(&cfg.month),
    }
}

/// `ν` scenarios. `ζ` is drawn once; then each scenario picks one trading
/// day of the window (demand and residual contributions together), draws
/// `ξ ~ U[0.99, 1.01]`, and sets
///
/// ```text
/// α = α₀(1 + d + r),   γ = max(|α - α₀| / (ξ η̄), 1e-12),   ρ = -α + β
/// ```
///
/// with `α₀` the prior day's price and `η̄` the window month's total supply.
pub fn sample_scenarios(
    prices: &PriceSeries,
    cfg: &MarketRunConfig,
    a: &[f64],
) -> Result<ScenarioSample> {
    cfg.validate()?;
    let month = window_month(cfg)?;
    let window = prices.window(&month)?;
    if window.is_empty() {
        return Err(Error::invalid(format!(
            "no trading days with contributions in {month}"
        )));
    }
    let eta = prices.total_supply_for(&month)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let zeta = rng.gen_range(cfg.zeta_range.0..=cfg.zeta_range.1);
    let beta: Vec<f64> = a.iter().map(|ai| zeta * ai).collect();

    let mut out = ScenarioSample {
        scenarios: Vec::with_capacity(cfg.nu),
        zeta,
        beta: beta.clone(),
        xi: Vec::with_capacity(cfg.nu),
        alpha: Vec::with_capacity(cfg.nu),
        days: Vec::with_capacity(cfg.nu),
        window_month: month,
        total_supply: eta,
    };
    for _ in 0..cfg.nu {
        let day = &window[rng.gen_range(0..window.len())];
        let xi = rng.gen_range(XI_RANGE.0..=XI_RANGE.1);
        let a0 = day.prior_price;
        let alpha = a0 * (1.0 + day.contribution.demand + day.contribution.residual);
        let gamma = ((alpha - a0).abs() / (xi * eta)).max(GAMMA_FLOOR);
        out.scenarios.push(ScenarioData::from_prices(
            beta.clone(),
            gamma,
            alpha,
            &beta,
        )?);
        out.xi.push(xi);
        out.alpha.push(alpha);
        out.days.push(day.date.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::data::DailyContribution;

    fn series(d: f64, r: f64) -> PriceSeries {
        let mut ps = PriceSeries::default();
        ps.prices.insert("2019-01-31".into(), 60.0);
        ps.prices.insert("2019-02-01".into(), 61.0);
        ps.contributions.insert(
            "2019-02-01".into(),
            DailyContribution {
                demand: d,
                supply: 0.0,
                residual: r,
            },
        );
        ps.total_supply.insert("2019-02".into(), 1e8);
        ps
    }

    fn cfg(nu: usize) -> MarketRunConfig {
        MarketRunConfig {
            month: "2019-02".into(),
            nu,
            ..Default::default()
        }
    }

    #[test]
    fn formulas() {
        let s = sample_scenarios(&series(0.02, -0.01), &cfg(50), &[1.0, 2.0]).unwrap();
        assert_eq!(s.scenarios.len(), 50);
        assert!((0.05..=0.1).contains(&s.zeta));
        assert_eq!(s.beta, vec![s.zeta, 2.0 * s.zeta]);
        for (k, sc) in s.scenarios.iter().enumerate() {
            assert!((s.alpha[k] - 60.0 * 1.01).abs() < 1e-12);
            assert!((XI_RANGE.0..=XI_RANGE.1).contains(&s.xi[k]));
            let gamma = (s.alpha[k] - 60.0).abs() / (s.xi[k] * 1e8);
            assert!((sc.gamma() - gamma).abs() < 1e-20);
            assert_eq!(sc.h(), s.beta.as_slice());
            assert!((sc.rho()[1] - (-s.alpha[k] + 2.0 * s.zeta)).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_day_floors_gamma() {
        let s = sample_scenarios(&series(0.0, 0.0), &cfg(3), &[1.0]).unwrap();
        for (k, sc) in s.scenarios.iter().enumerate() {
            assert_eq!(s.alpha[k], 60.0);
            assert_eq!(sc.gamma(), GAMMA_FLOOR);
        }
    }

    #[test]
    fn default_size_and_determinism() {
        let ps = series(0.01, 0.0);
        let c = MarketRunConfig {
            month: "2019-02".into(),
            ..Default::default()
        };
        let a = sample_scenarios(&ps, &c, &[1.0]).unwrap();
        assert_eq!(a.scenarios.len(), 800);
        assert_eq!(a, sample_scenarios(&ps, &c, &[1.0]).unwrap());
    }

    #[test]
    fn empty_window() {
        let c = MarketRunConfig {
            month: "2019-03".into(),
            ..Default::default()
        };
        assert!(sample_scenarios(&series(0.0, 0.0), &c, &[1.0]).is_err());
    }
}
