//! One scenario's second stage at a fixed first-stage production `x`:
//! the box-constrained QP, its least-norm multiplier, and the perturbation
//! bound under noisy data.

use twostage_lcp::game::build_scenario_matrix;
use twostage_lcp::lcp::lcp_residual;
use twostage_lcp::second_stage::{least_norm_multiplier, perturbation_bound, solve_box_qp};
use twostage_lcp::ScenarioData;

fn main() -> twostage_lcp::Result<()> {
    let sd = ScenarioData::new(vec![1.0, 2.0, 0.5], 0.8, vec![-6.0, -3.0, -2.0])?;
    let x = [1.0, 2.0, 0.0];

    let y = solve_box_qp(&sd, &x, 1e-13)?;
    let s = least_norm_multiplier(&sd, &x, &y);
    println!("y = {y:.6?}");
    println!("s = {s:.6?}");
    // x_3 = 0 yet s_3 > 0: the least-norm multiplier there is
    // max(0, -(rho + (H + gamma ee')y)_3), and that term stays negative.
    let v: Vec<f64> = y.iter().chain(&s).copied().collect();
    let prob = build_scenario_matrix(&sd, &x)?;
    println!(
        "scenario LCP residual {:.2e}",
        lcp_residual(&prob, &v.into())?
    );

    let noisy = ScenarioData::new(vec![1.01, 1.98, 0.5], 0.79, vec![-6.05, -3.0, -1.98])?;
    let u = solve_box_qp(&noisy, &x, 1e-13)?;
    let dist = y
        .iter()
        .zip(&u)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let cap = 1.0 / sd.gamma().min(noisy.gamma());
    println!(
        "|y - u| = {dist:.4e}  bound = {:.4e}",
        perturbation_bound(&sd, &noisy, &x, cap)?
    );
    Ok(())
}
