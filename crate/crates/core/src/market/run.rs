use std::io::Write;

use serde::Serialize;
use serde_json::{Map, Value};

use super::calibrate::{anchor_month, calibrate_first_stage};
use super::data::{PriceSeries, ProducerTable, RSchedule};
use super::scenarios::sample_scenarios;
use super::{MarketRunConfig, Mode};
use crate::error::{Error, Result};
use crate::game::{check_condition_9, Condition9Report, TwoStageGame};
use crate::solvers::{solve_aba, solve_pha, EquilibriumSolution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketResult {
    pub month: String,
    pub mode: Mode,
    pub producers: Vec<String>,
    /// `100 x_i / Σ x_j`.
    pub computed_shares: Vec<f64>,
    /// Observed shares of the run month, when the table has them.
    pub real_shares: Option<Vec<f64>>,
    pub anchor_month: String,
    pub window_month: String,
    pub zeta: f64,
    pub condition_9: Condition9Report,
    /// Set when ABA failed or stopped short and PHA was run instead.
    pub fallback: Option<String>,
    pub equilibrium: EquilibriumSolution,
}

impl MarketResult {
    pub fn converged(&self) -> bool {
        self.equilibrium.converged
    }

    /// Spearman correlation between computed and observed shares.
    pub fn rank_correlation(&self) -> Option<f64> {
        self.real_shares
            .as_ref()
            .and_then(|real| spearman(&self.computed_shares, real))
    }

    pub fn report(&self) -> MarketReport {
        let to_map = |v: &[f64]| -> Map<String, Value> {
            self.producers
                .iter()
                .zip(v)
                .map(|(p, s)| (p.clone(), Value::from(*s)))
                .collect()
        };
        let eq = &self.equilibrium;
        MarketReport {
            month: self.month.clone(),
            mode: self.mode,
            computed_shares: to_map(&self.computed_shares),
            real_shares: self.real_shares.as_deref().map(to_map),
            residual: eq.residual,
            iterations: eq.iterations,
            converged: eq.converged,
            algorithm: eq.algorithm.to_string(),
            fallback: self.fallback.clone(),
            spearman: self.rank_correlation(),
            anchor_month: self.anchor_month.clone(),
            window_month: self.window_month.clone(),
            zeta: self.zeta,
            contraction: eq.contraction.as_ref().map(|c| c.value),
        }
    }
}

/// JSON summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketReport {
    pub month: String,
    pub mode: Mode,
    pub computed_shares: Map<String, Value>,
    pub real_shares: Option<Map<String, Value>>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub algorithm: String,
    pub fallback: Option<String>,
    pub spearman: Option<f64>,
    pub anchor_month: String,
    pub window_month: String,
    pub zeta: f64,
    pub contraction: Option<f64>,
}

/// Calibrates, samples, and solves one month. ABA runs first; if it errors
/// or stops short of convergence, PHA runs and the better of the two is
/// kept.
pub fn run_month(
    shares: &ProducerTable,
    rsched: &RSchedule,
    prices: &PriceSeries,
    cfg: &MarketRunConfig,
) -> Result<MarketResult> {
    cfg.validate()?;
    let first = calibrate_first_stage(shares, rsched, cfg)?;
    let condition_9 = check_condition_9(&first);
    let sample = sample_scenarios(prices, cfg, first.a())?;
    let game = TwoStageGame::new(first, sample.scenarios)?;

    let (equilibrium, fallback) = match solve_aba(&game, &cfg.solver) {
        Ok(sol) if sol.converged => (sol, None),
        aba => {
            let why = match &aba {
                Ok(s) => format!("ABA stopped at residual {:.3e}", s.residual),
                Err(e) => format!("ABA failed: {e}"),
            };
            match (aba, solve_pha(&game, &cfg.solver)) {
                (_, Ok(p)) if p.converged => (p, Some(why)),
                (Ok(a), Ok(p)) => (if a.residual <= p.residual { a } else { p }, Some(why)),
                (Ok(a), Err(_)) => (a, Some(why)),
                (Err(_), Ok(p)) => (p, Some(why)),
                (Err(ea), Err(ep)) => {
                    return Err(Error::invalid(format!(
                        "{} {}: ABA failed ({ea}); PHA failed ({ep})",
                        cfg.month, cfg.mode
                    )))
                }
            }
        }
    };

    let total: f64 = equilibrium.x.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid(format!(
            "{} {}: equilibrium has zero total production",
            cfg.month, cfg.mode
        )));
    }
    let computed_shares = equilibrium.x.iter().map(|x| 100.0 * x / total).collect();
    Ok(MarketResult {
        month: cfg.month.clone(),
        mode: cfg.mode,
        producers: shares.producers.clone(),
        computed_shares,
        real_shares: shares.month(&cfg.month).map(<[f64]>::to_vec),
        anchor_month: anchor_month(cfg)?,
        window_month: sample.window_month,
        zeta: sample.zeta,
        condition_9,
        fallback,
        equilibrium,
    })
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut k = i;
        while k + 1 < idx.len() && v[idx[k + 1]] == v[idx[i]] {
            k += 1;
        }
        let r = (i + k) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=k] {
            ranks[p] = r;
        }
        i = k + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` for
/// mismatched lengths, fewer than two points, or a constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShareTriple {
    pub month: String,
    pub producer: String,
    pub real: Option<f64>,
    pub in_sample: Option<f64>,
    pub out_of_sample: Option<f64>,
}

/// One row per producer: observed, in-sample and out-of-sample shares.
pub fn build_triples(
    shares: &ProducerTable,
    month: &str,
    in_sample: Option<&MarketResult>,
    out_of_sample: Option<&MarketResult>,
) -> Vec<ShareTriple> {
    let real = shares.month(month);
    shares
        .producers
        .iter()
        .enumerate()
        .map(|(i, p)| ShareTriple {
            month: month.to_string(),
            producer: p.clone(),
            real: real.map(|r| r[i]),
            in_sample: in_sample.map(|r| r.computed_shares[i]),
            out_of_sample: out_of_sample.map(|r| r.computed_shares[i]),
        })
        .collect()
}

/// `month,producer,real,in_sample,out_of_sample`; missing values are empty.
pub fn write_triples_csv<W: Write>(rows: &[ShareTriple], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["month", "producer", "real", "in_sample", "out_of_sample"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.month.clone(),
            r.producer.clone(),
            opt(r.real),
            opt(r.in_sample),
            opt(r.out_of_sample),
        ])?;
    }
    w.flush()?;
    Ok(())
}
