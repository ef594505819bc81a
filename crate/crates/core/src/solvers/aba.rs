use nalgebra::DVector;
use rayon::prelude::*;

use super::{starting_point, Algorithm, EquilibriumSolution, SolverConfig, Termination, Tracker};
use crate::error::{Error, Result};
use crate::game::{StackedPoint, TwoStageGame};
use crate::lcp::{is_positive_definite, newton_pd, LcpProblem};
use crate::second_stage::{least_norm_multiplier, solve_box_qp_from};

/// Alternating block algorithm.
///
/// Each sweep solves the `ν` box QPs at the current `x^k`, reads off the
/// least-norm multipliers `s_ℓ^k`, and records `(x^k, y^k, s^k)`. If no
/// stopping rule fires, `x^{k+1}` solves `LCP(C + re', a - (1/ν)Σ s_ℓ^k)`.
pub fn solve_aba(g: &TwoStageGame, cfg: &SolverConfig) -> Result<EquilibriumSolution> {
    cfg.validate()?;
    let fs = g.first_stage();
    let j = g.agents();
    let nu = g.num_scenarios();
    let m = fs.first_stage_matrix();
    if !is_positive_definite(&m) {
        return Err(Error::NotPositiveDefinite(
            "C + re' (the first-stage block) has an indefinite symmetric part".into(),
        ));
    }
    let mut first = LcpProblem::new(m, DVector::from_column_slice(fs.a()))?;

    let mut x = starting_point(g, cfg)?;
    let mut tracker = Tracker::new(g, Algorithm::Aba, &x, cfg)?;
    let mut ys: Vec<Vec<f64>> = vec![vec![0.0; j]; nu];
    let mut x_lcp: Option<DVector<f64>> = None;

    for k in 1..=cfg.max_iter {
        let blocks: Vec<(Vec<f64>, Vec<f64>)> = g
            .scenarios()
            .par_iter()
            .zip(ys.par_iter())
            .map(|(sc, warm)| {
                let y = solve_box_qp_from(sc, &x, cfg.inner_tol, Some(warm))?.y;
                let s = least_norm_multiplier(sc, &x, &y);
                Ok((y, s))
            })
            .collect::<Result<_>>()?;
        let (y, s): (Vec<_>, Vec<_>) = blocks.into_iter().unzip();

        let mut mean_s = vec![0.0; j];
        for sl in &s {
            for (m, v) in mean_s.iter_mut().zip(sl) {
                *m += v;
            }
        }
        for m in &mut mean_s {
            *m /= nu as f64;
        }

        ys = y.clone();
        let point = StackedPoint { x: x.clone(), y, s };
        if let Some(t) = tracker.record(g, k, point, None, cfg)? {
            return finish(g, tracker, t, cfg);
        }

        let q = DVector::from_iterator(j, fs.a().iter().zip(&mean_s).map(|(a, m)| a - m));
        first.set_q(q);
        let sol = newton_pd(&first, cfg.inner_tol, x_lcp.as_ref())?;
        x = sol.v.iter().copied().collect();
        x_lcp = Some(sol.v);
    }
    unreachable!("the tracker stops at max_iter")
}

fn finish(
    g: &TwoStageGame,
    tracker: Tracker,
    t: Termination,
    cfg: &SolverConfig,
) -> Result<EquilibriumSolution> {
    let mut out = tracker.finish(t, cfg);
    if cfg.contraction_report {
        out.contraction = Some(super::contraction_diagnostic(g, 0)?);
    }
    Ok(out)
}
