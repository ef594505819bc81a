//! Generate an instance, solve it with both algorithms, and write the ABA
//! iteration trace.
//!
//! cargo run --example solve_generated -- [J] [nu] [seed]

use std::fs::File;

use twostage_lcp::solvers::{default_initial_point, SolverConfig};
use twostage_lcp::{generate_instance, solve_aba, solve_pha, GeneratorSpec};

fn main() -> twostage_lcp::Result<()> {
    let args: Vec<u64> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let j = args.first().copied().unwrap_or(5) as usize;
    let nu = args.get(1).copied().unwrap_or(50) as usize;
    let seed = args.get(2).copied().unwrap_or(0);

    let g = generate_instance(&GeneratorSpec::new(j, nu, seed)?)?;
    println!("J {j} nu {nu} dim {}", g.lcp_dim());
    println!("x0 {:.4?}", default_initial_point(&g)?);

    let cfg = SolverConfig {
        contraction_report: true,
        ..SolverConfig::default()
    };
    let aba = solve_aba(&g, &cfg)?;
    let pha = solve_pha(&g, &cfg)?;
    for sol in [&aba, &pha] {
        println!(
            "{}: {} iterations, residual {:.3e} (from {:.3e}), {:?}",
            sol.algorithm, sol.iterations, sol.residual, sol.initial_residual, sol.termination
        );
        println!("     x = {:.6?}", sol.x);
    }
    if let Some(c) = &aba.contraction {
        println!(
            "contraction estimate {:.3} ({} subsets per scenario, exhaustive: {})",
            c.value, c.subsets_per_scenario, c.exhaustive
        );
    }
    println!(
        "PHA multiplier mean stayed below {:.1e}",
        pha.max_multiplier_mean.unwrap_or(0.0)
    );

    aba.write_trace_csv(File::create("aba_trace.csv")?)?;
    println!("wrote aba_trace.csv");
    Ok(())
}
