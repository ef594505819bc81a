//! Dense LCP toolkit: residual, the positive-definite solver, and the
//! brute-force enumerator used as a reference.

use twostage_lcp::lcp::{enumerate_active_sets, lcp_residual, solve_lcp_pd, LcpProblem};

fn main() -> twostage_lcp::Result<()> {
    // Nonsymmetric but positive definite.
    let prob = LcpProblem::from_rows(
        &[&[4.0, 1.0, 0.0], &[-1.0, 3.0, 1.0], &[0.0, -1.0, 2.0]],
        &[-2.0, 1.0, -3.0],
    )?;

    let sol = solve_lcp_pd(&prob, 1e-12)?;
    println!("newton   v = {:.6?}", sol.v.as_slice());
    println!(
        "         residual {:.2e} after {} steps",
        sol.residual, sol.iterations
    );

    for (k, cand) in enumerate_active_sets(&prob)?.iter().enumerate() {
        println!("oracle {k} v = {:.6?}", cand.v.as_slice());
    }

    let zero = nalgebra::DVector::zeros(3);
    println!("residual at v = 0: {:.4}", lcp_residual(&prob, &zero)?);
    Ok(())
}
