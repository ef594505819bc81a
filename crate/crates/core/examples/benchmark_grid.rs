//! ABA against PHA over a grid of (J, nu) cells, ten seeds each.
//!
//! cargo run --release --example benchmark_grid -- [grid] [out.csv]

use std::fs::File;

use twostage_lcp::bench::{parse_grid, run_benchmark, write_bench_csv, BenchOptions};

fn main() -> twostage_lcp::Result<()> {
    let mut args = std::env::args().skip(1);
    let grid = parse_grid(&args.next().unwrap_or_else(|| "5:5,5:50,10:100".into()))?;
    let out = args.next().unwrap_or_else(|| "bench.csv".into());

    let opts = BenchOptions::default();
    let rows = run_benchmark(&grid, &opts)?;
    println!(
        "{:>3} {:>5} {:>6} | {:>8} {:>9} | {:>8} {:>9}",
        "J", "nu", "dim", "aba it", "aba cpu", "pha it", "pha cpu"
    );
    for r in &rows {
        let cell = |s: Option<twostage_lcp::bench::CellStats>| match s {
            Some(s) => format!("{:>8.2} {:>9.4}", s.mean_iterations, s.mean_cpu_seconds),
            None => format!("{:>8} {:>9}", "failed", ""),
        };
        println!(
            "{:>3} {:>5} {:>6} | {} | {}",
            r.agents,
            r.nu,
            r.dim,
            cell(r.aba),
            cell(r.pha)
        );
    }
    write_bench_csv(&rows, &opts, File::create(&out)?)?;
    println!("wrote {out}");
    Ok(())
}
