//! Scenario subproblem for a fixed first-stage decision `x >= 0`.
//!
//! The supply `y` minimizes `½y'(H + γee')y + ρ'y` over the box `[0, x]`.
//! The multiplier of `y <= x` is then read off the gradient, which gives the
//! least-norm solution of `LCP(M(ξ), q(x, ξ))`.

use crate::error::{Error, Result};
use crate::game::ScenarioData;
use crate::lcp::natural_residual;

pub const DEFAULT_QP_TOL: f64 = 1e-10;
pub const QP_MAX_ITER: usize = 10_000;

/// `x_i - y_i` above `SLACK_TOL * (1 + x_i)` counts as an inactive upper bound.
const SLACK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SecondStageSolution {
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    /// Natural residual of `(y, s)` on `LCP(M(ξ), q(x, ξ))`.
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQpOutcome {
    pub y: Vec<f64>,
    pub iterations: usize,
    /// `‖y - Π_[0,x](y - ∇f(y))‖`.
    pub residual: f64,
}

fn gradient(s: &ScenarioData, y: &[f64]) -> Vec<f64> {
    s.hessian_times(y)
        .into_iter()
        .zip(s.rho())
        .map(|(hy, r)| hy + r)
        .collect()
}

/// Fixed-point residual `‖y - Π_[0,x](y - ∇f(y))‖` with unit step.
pub fn projection_residual(s: &ScenarioData, x: &[f64], y: &[f64]) -> f64 {
    let g = gradient(s, y);
    y.iter()
        .zip(&g)
        .zip(x)
        .map(|((&yi, &gi), &xi)| {
            let d = yi - (yi - gi).clamp(0.0, xi);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn validate(s: &ScenarioData, x: &[f64]) -> Result<()> {
    if x.len() != s.agents() {
        return Err(Error::dim("first-stage decision", s.agents(), x.len()));
    }
    if let Some(i) = x.iter().position(|&xi| !(xi >= 0.0) || !xi.is_finite()) {
        return Err(Error::invalid(format!(
            "x[{i}] must be finite and nonnegative"
        )));
    }
    Ok(())
}

/// Minimizer of `½y'(H + γee')y + ρ'y` over `[0, x]`.
pub fn solve_box_qp(s: &ScenarioData, x: &[f64], tol: f64) -> Result<Vec<f64>> {
    solve_box_qp_from(s, x, tol, None).map(|o| o.y)
}

/// Accelerated projected gradient with step `1/L`,
/// `L = max_i(h_i + γ) + γJ`, and adaptive restart. Every few iterations the
/// bound pattern of the current iterate is tried as an exact active set; the
/// reduced system is diagonal plus rank one and solves in `O(J)`.
pub fn solve_box_qp_from(
    s: &ScenarioData,
    x: &[f64],
    tol: f64,
    start: Option<&[f64]>,
) -> Result<BoxQpOutcome> {
    validate(s, x)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let j = s.agents();
    let lipschitz = s.h_diag().iter().fold(0.0f64, |m, &d| m.max(d)) + s.gamma() * j as f64;
    let step = 1.0 / lipschitz;

    let mut y: Vec<f64> = match start {
        Some(st) if st.len() == j => st.iter().zip(x).map(|(v, xi)| v.clamp(0.0, *xi)).collect(),
        Some(st) => return Err(Error::dim("box QP warm start", j, st.len())),
        None => vec![0.0; j],
    };
    let mut res = projection_residual(s, x, &y);
    let mut best = (res, y.clone());

    let mut z = y.clone();
    let mut t = 1.0f64;
    for it in 0..QP_MAX_ITER {
        if it % 10 == 0 {
            if let Some((cand, cres)) = polish(s, x, &y) {
                if cres < res {
                    y = cand;
                    res = cres;
                    z.copy_from_slice(&y);
                    t = 1.0;
                }
            }
        }
        if res < best.0 {
            best = (res, y.clone());
        }
        if res <= tol {
            return Ok(BoxQpOutcome {
                y,
                iterations: it,
                residual: res,
            });
        }

        let g = gradient(s, &z);
        let y_new: Vec<f64> = z
            .iter()
            .zip(&g)
            .zip(x)
            .map(|((zi, gi), xi)| (zi - step * gi).clamp(0.0, *xi))
            .collect();
        // Restart momentum when the step opposes the previous direction.
        let uphill: f64 = z
            .iter()
            .zip(&y_new)
            .zip(&y)
            .map(|((zi, yn), yo)| (zi - yn) * (yn - yo))
            .sum();
        let t_new = if uphill > 0.0 {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        let beta = if uphill > 0.0 { 0.0 } else { (t - 1.0) / t_new };
        for i in 0..j {
            z[i] = (y_new[i] + beta * (y_new[i] - y[i])).clamp(0.0, x[i]);
        }
        y = y_new;
        t = t_new;
        res = projection_residual(s, x, &y);
    }
    if res < best.0 {
        best = (res, y);
    }
    if best.0 <= tol {
        return Ok(BoxQpOutcome {
            y: best.1,
            iterations: QP_MAX_ITER,
            residual: best.0,
        });
    }
    Err(Error::NotConverged {
        solver: "box_qp",
        iterations: QP_MAX_ITER,
        residual: best.0,
        best: best.1,
    })
}

/// Primal-dual active-set refinement from `y`. Returns the best candidate
/// found and its residual.
fn polish(s: &ScenarioData, x: &[f64], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let j = s.agents();
    let d = s.h_diag();
    let gamma = s.gamma();
    let rho = s.rho();
    let mut cur = y.to_vec();
    let mut out: Option<(Vec<f64>, f64)> = None;
    for _ in 0..6 {
        let g = gradient(s, &cur);
        // 0 = lower bound, 1 = upper bound, 2 = free
        let state: Vec<u8> = (0..j)
            .map(|i| {
                let p = cur[i] - g[i];
                if p <= 0.0 {
                    0
                } else if p >= x[i] {
                    1
                } else {
                    2
                }
            })
            .collect();
        let upper_sum: f64 = (0..j).filter(|&i| state[i] == 1).map(|i| x[i]).sum();
        // (D_F + γee') y_F = b with b = -ρ_F - γ Σ_U x_i; Sherman-Morrison.
        let mut dinv_b_sum = 0.0;
        let mut dinv_sum = 0.0;
        for i in (0..j).filter(|&i| state[i] == 2) {
            dinv_b_sum += (-rho[i] - gamma * upper_sum) / d[i];
            dinv_sum += 1.0 / d[i];
        }
        let shift = gamma * dinv_b_sum / (1.0 + gamma * dinv_sum);
        let cand: Vec<f64> = (0..j)
            .map(|i| match state[i] {
                0 => 0.0,
                1 => x[i],
                _ => ((-rho[i] - gamma * upper_sum - shift) / d[i]).clamp(0.0, x[i]),
            })
            .collect();
        let cres = projection_residual(s, x, &cand);
        let improved = out.as_ref().is_none_or(|(_, r)| cres < *r);
        if cand == cur || !improved {
            if improved {
                out = Some((cand, cres));
            }
            break;
        }
        out = Some((cand.clone(), cres));
        cur = cand;
    }
    out
}

/// `s = max(0, -ρ - (H + γee')y)` with the least-norm tie rule: `s_i = 0`
/// whenever the upper bound is slack, `x_i - y_i > 1e-9 (1 + x_i)`.
pub fn least_norm_multiplier(s: &ScenarioData, x: &[f64], y: &[f64]) -> Vec<f64> {
    let hy = s.hessian_times(y);
    (0..s.agents())
        .map(|i| {
            if x[i] - y[i] > SLACK_TOL * (1.0 + x[i]) {
                0.0
            } else {
                (-s.rho()[i] - hy[i]).max(0.0)
            }
        })
        .collect()
}

/// Natural residual of `(y, s)` on `LCP(M(ξ), q(x, ξ))` without forming `M`.
pub fn scenario_residual(sd: &ScenarioData, x: &[f64], y: &[f64], s: &[f64]) -> f64 {
    let hy = sd.hessian_times(y);
    let wy: Vec<f64> = (0..sd.agents())
        .map(|i| hy[i] + s[i] + sd.rho()[i])
        .collect();
    let ws: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    natural_residual(&wy, y).hypot(natural_residual(&ws, s))
}

/// Box QP plus least-norm multiplier.
pub fn solve_second_stage(sd: &ScenarioData, x: &[f64], tol: f64) -> Result<SecondStageSolution> {
    solve_second_stage_from(sd, x, tol, None)
}

pub fn solve_second_stage_from(
    sd: &ScenarioData,
    x: &[f64],
    tol: f64,
    start: Option<&[f64]>,
) -> Result<SecondStageSolution> {
    let y = solve_box_qp_from(sd, x, tol, start)?.y;
    let s = least_norm_multiplier(sd, x, &y);
    let kkt_residual = scenario_residual(sd, x, &y, &s);
    Ok(SecondStageSolution { y, s, kkt_residual })
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|t| t * t).sum::<f64>().sqrt()
}

/// `max_i |(h_i + γ) - (h̄_i + γ̄)|`, the spectral norm of `H - H̄`.
fn h_distance(s: &ScenarioData, s_bar: &ScenarioData) -> f64 {
    s.h_diag()
        .iter()
        .zip(s_bar.h_diag())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

fn check_pair(s: &ScenarioData, s_bar: &ScenarioData, x: &[f64], cap: f64) -> Result<()> {
    if s.agents() != s_bar.agents() {
        return Err(Error::dim("perturbed scenario", s.agents(), s_bar.agents()));
    }
    validate(s, x)?;
    if !(cap * s.gamma() >= 1.0 - 1e-12) || !(cap * s_bar.gamma() >= 1.0 - 1e-12) {
        return Err(Error::invalid(format!(
            "bound constant {cap} violates Γγ >= 1 (γ = {}, γ̄ = {})",
            s.gamma(),
            s_bar.gamma()
        )));
    }
    Ok(())
}

/// Upper bound on `‖y* - ū‖` between the box-QP solutions of two scenarios:
/// `Γ(‖ρ - ρ̄‖ + ‖x‖‖H - H̄‖ + J‖x‖|γ - γ̄|)`. Requires `Γγ >= 1` and
/// `Γγ̄ >= 1`.
pub fn perturbation_bound(
    s: &ScenarioData,
    s_bar: &ScenarioData,
    x: &[f64],
    cap: f64,
) -> Result<f64> {
    check_pair(s, s_bar, x, cap)?;
    let j = s.agents() as f64;
    let d_rho = norm(s.rho().iter().zip(s_bar.rho()).map(|(a, b)| a - b));
    let x_norm = norm(x.iter().copied());
    let d_gamma = (s.gamma() - s_bar.gamma()).abs();
    Ok(cap * (d_rho + x_norm * h_distance(s, s_bar) + j * x_norm * d_gamma))
}

/// Bound on `‖s* - t̄‖` for the least-norm multipliers, valid for small
/// perturbations: `(L + (‖H‖ + γJ)Γ)(‖ρ - ρ̄‖ + ‖H - H̄‖ + |γ - γ̄|)` with
/// `L = max(1, J‖x‖)`.
pub fn multiplier_perturbation_bound(
    s: &ScenarioData,
    s_bar: &ScenarioData,
    x: &[f64],
    cap: f64,
) -> Result<f64> {
    check_pair(s, s_bar, x, cap)?;
    let j = s.agents() as f64;
    let x_norm = norm(x.iter().copied());
    let l = (j * x_norm).max(1.0);
    let h_norm = s.h_diag().iter().fold(0.0f64, |m, &d| m.max(d));
    let d_rho = norm(s.rho().iter().zip(s_bar.rho()).map(|(a, b)| a - b));
    let pert = d_rho + h_distance(s, s_bar) + (s.gamma() - s_bar.gamma()).abs();
    Ok((l + (h_norm + s.gamma() * j) * cap) * pert)
}
