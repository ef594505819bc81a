//! Seeded benchmark grid comparing ABA and PHA.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{stacked_residual, StackedPoint};
use crate::generator::{generate_instance, GeneratorSpec};
use crate::solvers::{
    default_initial_point, solve_aba, solve_pha, EquilibriumSolution, SolverConfig,
};

pub const CSV_HEADER: [&str; 10] = [
    "J", "nu", "dim", "aba_iter", "aba_cpu", "aba_res", "pha_iter", "pha_cpu", "pha_res",
    "init_res",
];

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub repetitions: usize,
    pub base_seed: u64,
    pub solver: SolverConfig,
    pub run_aba: bool,
    pub run_pha: bool,
    /// Leave the CPU columns empty so the CSV is reproducible byte for byte.
    pub timing: bool,
    /// Run grid cells concurrently. CPU columns are then unreliable.
    pub parallel_cells: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repetitions: 10,
            base_seed: 0,
            solver: SolverConfig::default(),
            run_aba: true,
            run_pha: true,
            timing: true,
            parallel_cells: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub cpu_seconds: f64,
    pub residual: f64,
    pub converged: bool,
    pub max_multiplier_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRun {
    pub seed: u64,
    pub initial_residual: f64,
    /// `Err` holds the solver error message.
    pub aba: Option<std::result::Result<RunSummary, String>>,
    pub pha: Option<std::result::Result<RunSummary, String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStats {
    pub mean_iterations: f64,
    pub mean_cpu_seconds: f64,
    pub mean_final_residual: f64,
    pub converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    #[serde(rename = "J")]
    pub agents: usize,
    pub nu: usize,
    pub dim: usize,
    /// `None` when the algorithm was skipped or failed on some repetition.
    pub aba: Option<CellStats>,
    pub pha: Option<CellStats>,
    pub mean_initial_residual: f64,
    pub cpu_reliable: bool,
    pub runs: Vec<BenchRun>,
}

/// Parses `"5:5,5:50,10:100"` into `(J, ν)` pairs.
pub fn parse_grid(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|cell| {
            let (j, nu) = cell
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("grid cell `{cell}` is not J:nu")))?;
            let parse = |s: &str| {
                s.trim().parse::<usize>().map_err(|_| {
                    Error::invalid(format!("grid cell `{cell}`: `{s}` is not a count"))
                })
            };
            let (j, nu) = (parse(j)?, parse(nu)?);
            GeneratorSpec::new(j, nu, 0)?;
            Ok((j, nu))
        })
        .collect()
}

fn summarize(sol: &EquilibriumSolution, cpu: f64) -> RunSummary {
    RunSummary {
        iterations: sol.iterations,
        cpu_seconds: cpu,
        residual: sol.residual,
        converged: sol.converged,
        max_multiplier_mean: sol.max_multiplier_mean,
    }
}

fn timed(
    f: impl Fn() -> Result<EquilibriumSolution>,
) -> std::result::Result<(EquilibriumSolution, f64), String> {
    let t0 = std::time::Instant::now();
    let sol = f().map_err(|e| e.to_string())?;
    Ok((sol, t0.elapsed().as_secs_f64()))
}

fn run_one(agents: usize, nu: usize, seed: u64, opts: &BenchOptions) -> Result<BenchRun> {
    let g = generate_instance(&GeneratorSpec::new(agents, nu, seed)?)?;
    let x0 = match &opts.solver.x0 {
        Some(x) => x.clone(),
        None => default_initial_point(&g)?,
    };
    let initial_residual = stacked_residual(&g, &StackedPoint::first_stage_only(x0, nu))?;
    let aba = opts
        .run_aba
        .then(|| timed(|| solve_aba(&g, &opts.solver)).map(|(s, t)| summarize(&s, t)));
    let pha = opts
        .run_pha
        .then(|| timed(|| solve_pha(&g, &opts.solver)).map(|(s, t)| summarize(&s, t)));
    Ok(BenchRun {
        seed,
        initial_residual,
        aba,
        pha,
    })
}

fn cell_stats<'a>(
    runs: impl Iterator<Item = Option<&'a std::result::Result<RunSummary, String>>>,
) -> Option<CellStats> {
    let mut n = 0usize;
    let (mut it, mut cpu, mut res, mut conv) = (0.0, 0.0, 0.0, 0usize);
    for r in runs {
        let r = r?.as_ref().ok()?;
        n += 1;
        it += r.iterations as f64;
        cpu += r.cpu_seconds;
        res += r.residual;
        conv += r.converged as usize;
    }
    let nf = n as f64;
    (n > 0).then(|| CellStats {
        mean_iterations: it / nf,
        mean_cpu_seconds: cpu / nf,
        mean_final_residual: res / nf,
        converged: conv,
    })
}

fn run_cell(agents: usize, nu: usize, opts: &BenchOptions) -> Result<BenchRow> {
    let runs = (0..opts.repetitions as u64)
        .map(|k| run_one(agents, nu, opts.base_seed.wrapping_add(k), opts))
        .collect::<Result<Vec<_>>>()?;
    let mean_initial_residual =
        runs.iter().map(|r| r.initial_residual).sum::<f64>() / runs.len() as f64;
    Ok(BenchRow {
        agents,
        nu,
        dim: agents * (2 * nu + 1),
        aba: cell_stats(runs.iter().map(|r| r.aba.as_ref())),
        pha: cell_stats(runs.iter().map(|r| r.pha.as_ref())),
        mean_initial_residual,
        cpu_reliable: opts.timing && !opts.parallel_cells,
        runs,
    })
}

/// One row per grid cell; each cell averages `repetitions` instances with
/// seeds `base_seed + k`. A solver error on any repetition marks that
/// algorithm's columns as failed for the cell without stopping the grid.
pub fn run_benchmark(grid: &[(usize, usize)], opts: &BenchOptions) -> Result<Vec<BenchRow>> {
    if opts.repetitions == 0 {
        return Err(Error::invalid("repetitions must be at least 1"));
    }
    opts.solver.validate()?;
    if opts.parallel_cells {
        grid.par_iter()
            .map(|&(j, nu)| run_cell(j, nu, opts))
            .collect()
    } else {
        grid.iter().map(|&(j, nu)| run_cell(j, nu, opts)).collect()
    }
}

fn stat_fields(s: Option<&CellStats>, enabled: bool, timing: bool) -> [String; 3] {
    match s {
        Some(s) => [
            s.mean_iterations.to_string(),
            if timing {
                s.mean_cpu_seconds.to_string()
            } else {
                String::new()
            },
            format!("{:e}", s.mean_final_residual),
        ],
        None if enabled => ["failed".into(), "failed".into(), "failed".into()],
        None => [String::new(), String::new(), String::new()],
    }
}

/// Writes the grid with header
/// `J,nu,dim,aba_iter,aba_cpu,aba_res,pha_iter,pha_cpu,pha_res,init_res`.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], opts: &BenchOptions, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let mut rec = vec![r.agents.to_string(), r.nu.to_string(), r.dim.to_string()];
        rec.extend(stat_fields(r.aba.as_ref(), opts.run_aba, opts.timing));
        rec.extend(stat_fields(r.pha.as_ref(), opts.run_pha, opts.timing));
        rec.push(format!("{:e}", r.mean_initial_residual));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("5:5, 10:100").unwrap(), vec![(5, 5), (10, 100)]);
        assert_eq!(parse_grid("").unwrap(), vec![]);
        assert!(parse_grid("5").is_err());
        assert!(parse_grid("0:5").is_err());
        assert!(parse_grid("5:x").is_err());
    }

    #[test]
    fn empty_grid() {
        let rows = run_benchmark(&[], &BenchOptions::default()).unwrap();
        assert!(rows.is_empty());
        let mut buf = Vec::new();
        write_bench_csv(&rows, &BenchOptions::default(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "J,nu,dim,aba_iter,aba_cpu,aba_res,pha_iter,pha_cpu,pha_res,init_res\n"
        );
    }

    #[test]
    fn zero_repetitions_rejected() {
        let opts = BenchOptions {
            repetitions: 0,
            ..Default::default()
        };
        assert!(run_benchmark(&[(2, 2)], &opts).is_err());
    }

    #[test]
    fn small_cell() {
        let opts = BenchOptions {
            repetitions: 2,
            run_pha: false,
            timing: false,
            ..Default::default()
        };
        let rows = run_benchmark(&[(2, 3)], &opts).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].dim, 14);
        assert_eq!(rows[0].runs.len(), 2);
        assert_eq!(rows[0].runs[1].seed, 1);
        assert!(rows[0].pha.is_none());
        let aba = rows[0].aba.unwrap();
        assert_eq!(aba.converged, 2);
        let mut buf = Vec::new();
        write_bench_csv(&rows, &opts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 10);
        assert_eq!(&fields[..3], &["2", "3", "14"]);
        assert_eq!(fields[4], "");
        assert_eq!(&fields[6..9], &["", "", ""]);
    }

    #[test]
    fn failure_marker() {
        let rows = vec![BenchRow {
            agents: 1,
            nu: 1,
            dim: 3,
            aba: None,
            pha: None,
            mean_initial_residual: 0.5,
            cpu_reliable: true,
            runs: vec![],
        }];
        let mut buf = Vec::new();
        write_bench_csv(&rows, &BenchOptions::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "1,1,3,failed,failed,failed,failed,failed,failed,5e-1"
        );
    }
}
