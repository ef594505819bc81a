use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{
    starting_point, Algorithm, EquilibriumSolution, SolverConfig, Tracker, STEP_STOP_SLACK,
};
use crate::error::{Error, Result};
use crate::game::{stacked_residual, ScenarioData, StackedPoint, TwoStageGame};
use crate::lcp::{is_positive_definite, newton_pd, LcpProblem};
use crate::second_stage::solve_second_stage_from;

/// `[[C + re' + tI, -B], [B', M(ξ) + tI]]`, with `B = (0, I)`.
fn subproblem_matrix(first: &DMatrix<f64>, sc: &ScenarioData, t: f64) -> DMatrix<f64> {
    let j = first.nrows();
    let mut m = DMatrix::zeros(3 * j, 3 * j);
    m.view_mut((0, 0), (j, j)).copy_from(first);
    m.view_mut((j, j), (2 * j, 2 * j))
        .copy_from(&sc.lcp_matrix());
    for i in 0..j {
        m[(i, 2 * j + i)] = -1.0;
        m[(2 * j + i, i)] = 1.0;
    }
    for i in 0..3 * j {
        m[(i, i)] += t;
    }
    m
}

struct Scenario {
    prob: LcpProblem,
    /// Last subproblem solution `(x̂, y, s)`, reused as the Newton start.
    last: DVector<f64>,
}

/// Progressive hedging.
///
/// Sweep `k` solves, for every scenario, the `3J`-dimensional LCP
///
/// ```text
/// 0 <= x ⊥ (C + re')x - s + a + w_ℓ + t(x - x̄^k)  >= 0
/// 0 <= v ⊥ B'x + M(ξ_ℓ)v + ϱ_ℓ + t(v - v_ℓ^k)     >= 0
/// ```
///
/// then sets `x̄^{k+1}` to the mean of the `x̂_ℓ` and
/// `w_ℓ += t(x̂_ℓ - x̄^{k+1})`. The recorded point is `(x̄^{k+1}, v^{k+1})`;
/// the returned one keeps `x̄` and re-solves each second stage at it.
pub fn solve_pha(g: &TwoStageGame, cfg: &SolverConfig) -> Result<EquilibriumSolution> {
    cfg.validate()?;
    let fs = g.first_stage();
    let j = g.agents();
    let nu = g.num_scenarios();
    let t = cfg.pha_step_t;
    let first = fs.first_stage_matrix();

    let mut scen: Vec<Scenario> = Vec::with_capacity(nu);
    for sc in g.scenarios() {
        let m = subproblem_matrix(&first, sc, t);
        if scen.is_empty() && !is_positive_definite(&m) {
            // Only the first-stage block can break definiteness, and it is
            // shared by every scenario.
            return Err(Error::NotPositiveDefinite(format!(
                "C + re' + {t}I has an indefinite symmetric part"
            )));
        }
        scen.push(Scenario {
            prob: LcpProblem::new(m, DVector::zeros(3 * j))?,
            last: DVector::zeros(3 * j),
        });
    }

    let mut x_bar = starting_point(g, cfg)?;
    let mut tracker = Tracker::new(g, Algorithm::Pha, &x_bar, cfg)?;
    let mut y: Vec<Vec<f64>> = vec![vec![0.0; j]; nu];
    let mut s: Vec<Vec<f64>> = vec![vec![0.0; j]; nu];
    let mut w: Vec<Vec<f64>> = vec![vec![0.0; j]; nu];
    for sc in &mut scen {
        sc.last.rows_mut(0, j).copy_from_slice(&x_bar);
    }

    for k in 1..=cfg.max_iter {
        let x_hat: Vec<Vec<f64>> = scen
            .par_iter_mut()
            .zip(g.scenarios().par_iter())
            .zip(w.par_iter())
            .zip(y.par_iter_mut().zip(s.par_iter_mut()))
            .map(|(((st, sc), wl), (yl, sl))| {
                let mut q = DVector::zeros(3 * j);
                for i in 0..j {
                    q[i] = fs.a()[i] + wl[i] - t * x_bar[i];
                    q[j + i] = sc.rho()[i] - t * yl[i];
                    q[2 * j + i] = -t * sl[i];
                }
                st.prob.set_q(q);
                let sol = newton_pd(&st.prob, cfg.inner_tol, Some(&st.last))?;
                let v = sol.v.as_slice();
                yl.copy_from_slice(&v[j..2 * j]);
                sl.copy_from_slice(&v[2 * j..]);
                let xh = v[..j].to_vec();
                st.last = sol.v;
                Ok(xh)
            })
            .collect::<Result<_>>()?;

        let mut next = vec![0.0; j];
        for xh in &x_hat {
            for (m, v) in next.iter_mut().zip(xh) {
                *m += v;
            }
        }
        for m in &mut next {
            *m /= nu as f64;
        }
        for (wl, xh) in w.iter_mut().zip(&x_hat) {
            for i in 0..j {
                wl[i] += t * (xh[i] - next[i]);
            }
        }
        x_bar = next;

        let drift = (0..j)
            .map(|i| (w.iter().map(|wl| wl[i]).sum::<f64>() / nu as f64).abs())
            .fold(0.0f64, f64::max);
        let point = StackedPoint {
            x: x_bar.clone(),
            y: y.clone(),
            s: s.clone(),
        };
        if let Some(term) = tracker.record(g, k, point, Some(drift), cfg)? {
            return settle_second_stage(g, tracker.finish(term, cfg), cfg);
        }
    }
    unreachable!("the tracker stops at max_iter")
}

/// The proximal `y` can overshoot `x̄` by up to the residual; replace each
/// `(y_ℓ, s_ℓ)` by the exact second-stage answer at `x̄`.
fn settle_second_stage(
    g: &TwoStageGame,
    mut sol: EquilibriumSolution,
    cfg: &SolverConfig,
) -> Result<EquilibriumSolution> {
    let exact: Vec<_> = g
        .scenarios()
        .par_iter()
        .zip(sol.y.par_iter())
        .map(|(sc, yl)| solve_second_stage_from(sc, &sol.x, cfg.inner_tol, Some(yl.as_slice())))
        .collect::<Result<_>>()?;
    for (l, e) in exact.into_iter().enumerate() {
        sol.y[l] = e.y;
        sol.s[l] = e.s;
    }
    sol.residual = stacked_residual(g, &sol.point())?;
    sol.converged &= sol.residual <= STEP_STOP_SLACK * cfg.tol_residual;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::Termination;

    #[test]
    fn trivial_instance_stops_at_first_sweep() {
        let g = TwoStageGame::new(
            crate::game::FirstStageParams::new(vec![1.0, 2.0], vec![0.5, 0.0], vec![0.0, 0.0])
                .unwrap(),
            vec![
                ScenarioData::new(vec![1.0, 1.0], 0.5, vec![0.0, 2.0]).unwrap(),
                ScenarioData::new(vec![2.0, 1.0], 0.1, vec![1.0, 0.0]).unwrap(),
            ],
        )
        .unwrap();
        let sol = solve_pha(&g, &SolverConfig::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.termination, Termination::Residual);
        assert_eq!(sol.x, vec![0.0, 0.0]);
        assert_eq!(sol.max_multiplier_mean, Some(0.0));
    }

    #[test]
    fn subproblem_blocks() {
        let first = DMatrix::from_row_slice(1, 1, &[2.0]);
        let sc = ScenarioData::new(vec![1.0], 0.5, vec![-1.0]).unwrap();
        let m = subproblem_matrix(&first, &sc, 1.0);
        let expected =
            DMatrix::from_row_slice(3, 3, &[3.0, 0.0, -1.0, 0.0, 3.0, 1.0, 1.0, -1.0, 1.0]);
        assert_eq!(m, expected);
    }

    #[test]
    fn scalar_instance_converges() {
        let g = TwoStageGame::new(
            crate::game::FirstStageParams::new(vec![1.0], vec![-1.0], vec![0.0]).unwrap(),
            vec![
                ScenarioData::new(vec![2.0], 1.0, vec![-6.0]).unwrap(),
                ScenarioData::new(vec![2.0], 1.0, vec![-3.0]).unwrap(),
            ],
        )
        .unwrap();
        let sol = solve_pha(&g, &SolverConfig::default()).unwrap();
        assert!(sol.converged, "{:?}", sol.termination);
        assert!(sol.max_multiplier_mean.unwrap() < 1e-12);
    }
}
