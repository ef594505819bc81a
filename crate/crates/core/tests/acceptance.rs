//! Exit criteria. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test --test acceptance -- --nocapture` to see them all.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twostage_lcp::bench::{
    parse_grid, run_benchmark, write_bench_csv, BenchOptions, BenchRow, RunSummary,
};
use twostage_lcp::game::{assemble_big_lcp, build_scenario_matrix};
use twostage_lcp::lcp::{enumerate_active_sets, lcp_residual};
use twostage_lcp::market::{
    build_triples, run_month, write_triples_csv, MarketData, MarketRunConfig, Mode,
};
use twostage_lcp::second_stage::{least_norm_multiplier, perturbation_bound, solve_box_qp};
use twostage_lcp::{
    generate_instance, solve_aba, solve_pha, GeneratorSpec, ScenarioData, SolverConfig,
};

fn report(n: u32, ok: bool, detail: &str) {
    println!(
        "{} criterion {n}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

fn within(start: Instant, limit: Duration) -> bool {
    start.elapsed() <= limit
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

struct OracleRuns {
    checked: usize,
    worst: f64,
    failures: Vec<String>,
    pha_drift: Vec<f64>,
    elapsed: Duration,
}

fn oracle_runs() -> &'static OracleRuns {
    static CELL: OnceLock<OracleRuns> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let cfg = SolverConfig {
            max_iter: 5000,
            tol_residual: 1e-12,
            tol_step: 1e-14,
            ..SolverConfig::default()
        };
        let mut out = OracleRuns {
            checked: 0,
            worst: 0.0,
            failures: Vec::new(),
            pha_drift: Vec::new(),
            elapsed: Duration::ZERO,
        };
        for k in 0..50u64 {
            let (j, nu) = (1 + (k % 3) as usize, 1 + ((k / 3) % 3) as usize);
            let g = generate_instance(&GeneratorSpec::new(j, nu, k).unwrap()).unwrap();
            let big = assemble_big_lcp(&g).unwrap();
            let sols = enumerate_active_sets(&big).unwrap();
            let aba = solve_aba(&g, &cfg).unwrap();
            let pha = solve_pha(&g, &cfg).unwrap();
            out.pha_drift
                .push(pha.max_multiplier_mean.unwrap_or(f64::INFINITY));
            let Some(oracle) = sols
                .iter()
                .find(|s| s.v.rows(0, j).iter().all(|x| *x > 0.0))
            else {
                continue;
            };
            out.checked += 1;
            for sol in [&aba, &pha] {
                let d = max_abs_diff(sol.point().to_vector().as_slice(), oracle.v.as_slice());
                out.worst = out.worst.max(d);
                if d > 1e-8 {
                    out.failures
                        .push(format!("seed {k} J={j} nu={nu} {}: {d:.2e}", sol.algorithm));
                }
            }
        }
        out.elapsed = t0.elapsed();
        out
    })
}

#[test]
fn criterion_1_oracle_equivalence() {
    let r = oracle_runs();
    let ok = r.failures.is_empty() && r.checked > 0 && r.elapsed <= Duration::from_secs(30);
    report(
        1,
        ok,
        &format!(
            "{} of 50 instances with x* > 0, worst deviation {:.2e}, {:.1}s {:?}",
            r.checked,
            r.worst,
            r.elapsed.as_secs_f64(),
            r.failures
        ),
    );
    assert!(ok);
}

fn random_scenario(rng: &mut ChaCha8Rng, j: usize) -> ScenarioData {
    ScenarioData::new(
        (0..j).map(|_| rng.gen_range(0.1..5.0)).collect(),
        rng.gen_range(0.01..2.0),
        (0..j).map(|_| rng.gen_range(-10.0..10.0)).collect(),
    )
    .unwrap()
}

#[test]
fn criterion_2_least_norm_suite() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let j = rng.gen_range(1..=8);
        let sd = random_scenario(&mut rng, j);
        let x: Vec<f64> = (0..j).map(|_| rng.gen_range(0.01..5.0)).collect();
        let y = solve_box_qp(&sd, &x, 1e-13).unwrap();
        let s = least_norm_multiplier(&sd, &x, &y);
        let v: Vec<f64> = y.iter().chain(&s).copied().collect();
        let prob = build_scenario_matrix(&sd, &x).unwrap();
        worst = worst.max(lcp_residual(&prob, &v.into()).unwrap());
    }

    // Same construction with some capacities set to zero.
    // `forced` counts entries where zeroing s_i leaves the scenario LCP unsolved.
    let (mut zero_entries, mut nonzero_multipliers, mut forced) = (0, 0, 0);
    for _ in 0..200 {
        let j = rng.gen_range(1..=8);
        let sd = random_scenario(&mut rng, j);
        let mut x: Vec<f64> = (0..j).map(|_| rng.gen_range(0.01..5.0)).collect();
        x[rng.gen_range(0..j)] = 0.0;
        for xi in x.iter_mut() {
            if rng.gen_bool(0.3) {
                *xi = 0.0;
            }
        }
        let y = solve_box_qp(&sd, &x, 1e-13).unwrap();
        let s = least_norm_multiplier(&sd, &x, &y);
        for (xi, si) in x.iter().zip(&s) {
            if *xi == 0.0 {
                zero_entries += 1;
                if *si != 0.0 {
                    nonzero_multipliers += 1;
                }
            }
        }
        let prob = build_scenario_matrix(&sd, &x).unwrap();
        for i in (0..j).filter(|&i| x[i] == 0.0 && s[i] != 0.0) {
            let mut zeroed = s.clone();
            zeroed[i] = 0.0;
            let v: Vec<f64> = y.iter().chain(&zeroed).copied().collect();
            if lcp_residual(&prob, &v.into()).unwrap() > 1e-10 {
                forced += 1;
            }
        }
    }
    let elapsed = t0.elapsed();
    let ok = worst <= 1e-10 && nonzero_multipliers == 0 && elapsed <= Duration::from_secs(10);
    report(
        2,
        ok,
        &format!(
            "worst residual {worst:.2e} (x > 0); s_i != 0 at {nonzero_multipliers} of {zero_entries} zero-capacity entries ({forced} of them infeasible with s_i = 0); {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_3_perturbation_bound() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let mut tightest = 0.0f64;
    for _ in 0..100 {
        let j = rng.gen_range(1..=8);
        let sd = random_scenario(&mut rng, j);
        let mag = 10f64.powf(rng.gen_range(-4.0..0.0));
        let bar = ScenarioData::new(
            sd.h()
                .iter()
                .map(|h| (h + rng.gen_range(-mag..mag)).max(0.05))
                .collect(),
            (sd.gamma() + rng.gen_range(-mag..mag)).max(0.005),
            sd.rho()
                .iter()
                .map(|r| r + rng.gen_range(-mag..mag))
                .collect(),
        )
        .unwrap();
        let x: Vec<f64> = (0..j).map(|_| rng.gen_range(0.0..5.0)).collect();
        let cap = 1.0 / sd.gamma().min(bar.gamma());
        let y = solve_box_qp(&sd, &x, 1e-13).unwrap();
        let u = solve_box_qp(&bar, &x, 1e-13).unwrap();
        let dist = y
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let bound = perturbation_bound(&sd, &bar, &x, cap).unwrap();
        if dist > bound {
            violations += 1;
        }
        if bound > 0.0 {
            tightest = tightest.max(dist / bound);
        }
    }
    let ok = violations == 0 && within(t0, Duration::from_secs(10));
    report(
        3,
        ok,
        &format!("{violations} violations in 100 pairs, largest distance/bound {tightest:.3}"),
    );
    assert!(ok);
}

struct GridRuns {
    rows: Vec<BenchRow>,
    elapsed: Duration,
}

fn grid_options() -> BenchOptions {
    BenchOptions {
        timing: false,
        ..BenchOptions::default()
    }
}

fn grid_runs() -> &'static GridRuns {
    static CELL: OnceLock<GridRuns> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let grid = parse_grid("5:5,5:50,10:100").unwrap();
        let rows = run_benchmark(&grid, &grid_options()).unwrap();
        GridRuns {
            rows,
            elapsed: t0.elapsed(),
        }
    })
}

#[test]
fn criterion_4_benchmark_regime() {
    let g = grid_runs();
    let mut notes = Vec::new();
    let mut ok = g.elapsed <= Duration::from_secs(300);
    for row in &g.rows {
        let aba: Vec<&RunSummary> = row
            .runs
            .iter()
            .filter_map(|r| r.aba.as_ref()?.as_ref().ok())
            .collect();
        let pha: Vec<&RunSummary> = row
            .runs
            .iter()
            .filter_map(|r| r.pha.as_ref()?.as_ref().ok())
            .collect();
        let aba_all = aba.len() == 10 && aba.iter().all(|s| s.converged && s.residual <= 1e-6);
        let aba_mean =
            aba.iter().map(|s| s.iterations as f64).sum::<f64>() / aba.len().max(1) as f64;
        let pha_mean =
            pha.iter().map(|s| s.iterations as f64).sum::<f64>() / pha.len().max(1) as f64;
        let pha_conv = pha
            .iter()
            .filter(|s| s.converged && s.iterations <= 400)
            .count();
        let mut cell_ok = aba_all && (5.0..=60.0).contains(&aba_mean) && aba_mean < pha_mean;
        match (row.agents, row.nu) {
            (5, 5) => cell_ok &= pha_conv >= 8,
            (10, 100) => cell_ok &= pha.len() == 10 && pha.iter().all(|s| s.iterations == 400),
            _ => {}
        }
        ok &= cell_ok;
        notes.push(format!(
            "({},{}) aba {aba_mean:.1} pha {pha_mean:.1} pha-converged {pha_conv}/10",
            row.agents, row.nu
        ));
    }
    report(
        4,
        ok,
        &format!("{}; {:.1}s", notes.join(", "), g.elapsed.as_secs_f64()),
    );
    assert!(ok);
}

#[test]
fn criterion_5_aba_scalability() {
    let t0 = Instant::now();
    let cfg = SolverConfig::default();
    let mean_iters = |nu: usize| -> (f64, bool) {
        let mut total = 0;
        let mut all = true;
        for seed in 0..10 {
            let g = generate_instance(&GeneratorSpec::new(15, nu, seed).unwrap()).unwrap();
            let sol = solve_aba(&g, &cfg).unwrap();
            total += sol.iterations;
            all &= sol.converged;
        }
        (total as f64 / 10.0, all)
    };
    let (small, c1) = mean_iters(5);
    let (large, c2) = mean_iters(500);
    let ok = c1 && c2 && large <= 3.0 * small && within(t0, Duration::from_secs(180));
    report(
        5,
        ok,
        &format!(
            "J=15 mean iterations nu=5 {small:.1}, nu=500 {large:.1}; {:.1}s",
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_pha_multiplier_mean() {
    let mut drift = oracle_runs().pha_drift.clone();
    for row in &grid_runs().rows {
        for run in &row.runs {
            match &run.pha {
                Some(Ok(s)) => drift.push(s.max_multiplier_mean.unwrap_or(f64::INFINITY)),
                _ => drift.push(f64::INFINITY),
            }
        }
    }
    let worst = drift.iter().copied().fold(0.0, f64::max);
    let ok = worst <= 1e-12;
    report(
        6,
        ok,
        &format!("{} PHA runs, largest |mean w| {worst:.2e}", drift.len()),
    );
    assert!(ok);
}

fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn criterion_7_market_pipeline() {
    let t0 = Instant::now();
    let data = MarketData::load(&data_dir()).unwrap();
    let run = |month: &str, mode| {
        let cfg = MarketRunConfig {
            month: month.into(),
            mode,
            ..MarketRunConfig::default()
        };
        run_month(&data.shares, &data.r_schedule, &data.prices, &cfg)
    };
    let mut ok = true;
    let mut worst_rho = f64::INFINITY;
    for m in 1..=12 {
        let month = format!("2019-{m:02}");
        let res = run(&month, Mode::InSample).unwrap();
        let sum: f64 = res.computed_shares.iter().sum();
        let rho = res.rank_correlation().unwrap_or(f64::NEG_INFINITY);
        worst_rho = worst_rho.min(rho);
        ok &= res.converged() && (sum - 100.0).abs() <= 1e-9 && rho >= 0.9;
    }
    let mut triples = Vec::new();
    let mut converged_2020 = 0;
    for m in 1..=5 {
        let month = format!("2020-{m:02}");
        let ins = run(&month, Mode::InSample).unwrap();
        let oos = run(&month, Mode::OutOfSample).unwrap();
        converged_2020 += usize::from(ins.converged()) + usize::from(oos.converged());
        triples.extend(build_triples(&data.shares, &month, Some(&ins), Some(&oos)));
    }
    ok &= converged_2020 == 10;
    let mut buf = Vec::new();
    write_triples_csv(&triples, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    ok &= lines[0] == "month,producer,real,in_sample,out_of_sample"
        && lines.len() == 1 + 5 * data.shares.producers.len()
        && lines[1..]
            .iter()
            .all(|l| l.split(',').all(|f| !f.is_empty()));
    ok &= within(t0, Duration::from_secs(600));
    report(
        7,
        ok,
        &format!(
            "2019 min Spearman {worst_rho:.3}; 2020 runs converged {converged_2020}/10; {} CSV rows; {:.1}s",
            lines.len() - 1,
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_8_determinism() {
    let render = || {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        pool.install(|| {
            let grid = parse_grid("5:5,5:50,10:100").unwrap();
            let rows = run_benchmark(&grid, &grid_options()).unwrap();
            let mut buf = Vec::new();
            write_bench_csv(&rows, &grid_options(), &mut buf).unwrap();
            buf
        })
    };
    let (a, b) = (render(), render());
    let mut parallel = Vec::new();
    write_bench_csv(&grid_runs().rows, &grid_options(), &mut parallel).unwrap();
    let ok = a == b && a == parallel;
    report(
        8,
        ok,
        &format!(
            "{} bytes, identical across two single-thread runs and the pooled run: {ok}",
            a.len()
        ),
    );
    assert!(ok);
}
