//! Command-line driver behind the `twostage` binary.
//!
//! Exit codes: 0 success, 1 error (including usage errors), 2 a solve or
//! market run that stopped without converging, or a failed `validate`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{parse_grid, run_benchmark, write_bench_csv, BenchOptions};
use crate::error::{Error, Result};
use crate::game::TwoStageGame;
use crate::generator::{generate_instance, GeneratorSpec};
use crate::market::{
    build_triples, run_month, validate_data, write_triples_csv, AnchorPolicy, MarketData,
    MarketRunConfig, Mode, ShareUnit,
};
use crate::solvers::{solve_aba, solve_pha, SolverConfig};

/// Default data directory when `--data-dir` is not given.
pub const DATA_DIR_ENV: &str = "TWOSTAGE_DATA_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "twostage", version, about = "Two-stage stochastic LCP games")]
pub struct Cli {
    /// Worker threads for scenario loops (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random instance as JSON.
    Generate {
        #[arg(long = "J", value_parser = clap::value_parser!(u64).range(1..))]
        agents: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        nu: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Solve an instance file.
    Solve {
        game: PathBuf,
        #[arg(long, value_enum, default_value_t = Algo::Aba)]
        algo: Algo,
        #[command(flatten)]
        solver: SolverArgs,
        /// Solution JSON.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Iteration trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the ABA/PHA comparison grid and write CSV.
    Bench {
        /// Cells as J:nu, comma separated.
        #[arg(long, default_value = "5:5,5:50,10:100")]
        grid: String,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
        /// Skip PHA (or ABA) entirely.
        #[arg(long, value_enum)]
        only: Option<Algo>,
        /// Leave CPU columns empty for byte-stable output.
        #[arg(long)]
        no_timing: bool,
        /// Run grid cells concurrently; CPU columns become unreliable.
        #[arg(long)]
        parallel_cells: bool,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Calibrate and solve one month of the oil market.
    Market {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// YYYY-MM
        #[arg(long)]
        month: String,
        #[arg(long, value_enum, default_value_t = ModeArg::InSample)]
        mode: ModeArg,
        #[arg(long, default_value_t = 800)]
        nu: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = AnchorArg::Rolling)]
        anchor: AnchorArg,
        #[arg(long, value_enum, default_value_t = UnitArg::Fraction)]
        share_unit: UnitArg,
        /// Report JSON.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Also run the other mode and write real/in-sample/out-of-sample rows.
        #[arg(long)]
        triples: Option<PathBuf>,
    },
    /// Check data CSVs and instance files.
    Validate {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Allowed gap between summed contributions and the price change.
        #[arg(long, default_value_t = 1e-9)]
        contribution_tol: f64,
        /// Instance JSON files to check.
        games: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Aba,
    Pha,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "in_sample")]
    InSample,
    #[value(name = "out_of_sample")]
    OutOfSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnchorArg {
    Rolling,
    Fixed2020,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Fraction,
    Percent,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 400)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_step: f64,
    /// PHA proximal step.
    #[arg(long = "t", default_value_t = 1.0)]
    pub step_t: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            max_iter: self.max_iter,
            tol_residual: self.tol,
            tol_step: self.tol_step,
            pha_step_t: self.step_t,
            ..SolverConfig::default()
        }
    }
}

fn data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::invalid(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn read_game(path: &Path) -> Result<TwoStageGame> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    TwoStageGame::from_json(&text)
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Generate {
            agents,
            nu,
            seed,
            out,
        } => {
            let spec = GeneratorSpec::new(agents as usize, nu as usize, seed)?;
            let game = generate_instance(&spec)?;
            std::fs::write(&out, game.to_json()?)
                .map_err(|e| Error::invalid(format!("cannot write {}: {e}", out.display())))?;
            println!("J {}", spec.agents);
            println!("nu {}", spec.nu);
            println!("dim {}", spec.dim());
            Ok(EXIT_OK)
        }
        Command::Solve {
            game,
            algo,
            solver,
            out,
            trace,
        } => {
            let g = read_game(&game)?;
            let cfg = SolverConfig {
                contraction_report: algo == Algo::Aba,
                ..solver.config()
            };
            let sol = match algo {
                Algo::Aba => solve_aba(&g, &cfg)?,
                Algo::Pha => solve_pha(&g, &cfg)?,
            };
            println!(
                "{} dim {} iterations {} residual {:.3e} converged {} ({:?})",
                sol.algorithm,
                g.lcp_dim(),
                sol.iterations,
                sol.residual,
                sol.converged,
                sol.termination
            );
            if let Some(p) = out {
                write_json(&p, &sol)?;
            }
            if let Some(p) = trace {
                sol.write_trace_csv(create(&p)?)?;
            }
            Ok(if sol.converged {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            })
        }
        Command::Bench {
            grid,
            reps,
            seed,
            solver,
            only,
            no_timing,
            parallel_cells,
            out,
        } => {
            let cells = parse_grid(&grid)?;
            let opts = BenchOptions {
                repetitions: reps,
                base_seed: seed,
                solver: solver.config(),
                run_aba: only != Some(Algo::Pha),
                run_pha: only != Some(Algo::Aba),
                timing: !no_timing,
                parallel_cells,
            };
            let rows = run_benchmark(&cells, &opts)?;
            match out {
                Some(p) => write_bench_csv(&rows, &opts, create(&p)?)?,
                None => write_bench_csv(&rows, &opts, std::io::stdout().lock())?,
            }
            Ok(EXIT_OK)
        }
        Command::Market {
            data_dir: dir,
            month,
            mode,
            nu,
            seed,
            anchor,
            share_unit,
            out,
            triples,
        } => {
            let data = MarketData::load(&data_dir(dir))?;
            let base = MarketRunConfig {
                month: month.clone(),
                mode: match mode {
                    ModeArg::InSample => Mode::InSample,
                    ModeArg::OutOfSample => Mode::OutOfSample,
                },
                nu,
                seed,
                anchor: match anchor {
                    AnchorArg::Rolling => AnchorPolicy::Rolling,
                    AnchorArg::Fixed2020 => AnchorPolicy::Fixed2020,
                },
                share_unit: match share_unit {
                    UnitArg::Fraction => ShareUnit::Fraction,
                    UnitArg::Percent => ShareUnit::Percent,
                },
                ..MarketRunConfig::default()
            };
            let result = run_month(&data.shares, &data.r_schedule, &data.prices, &base)?;
            let report = result.report();
            let text = serde_json::to_string_pretty(&report)?;
            match &out {
                Some(p) => write_json(p, &report)?,
                None => {
                    let _ = writeln!(std::io::stdout().lock(), "{text}");
                }
            }
            if let Some(p) = triples {
                let other_mode = match base.mode {
                    Mode::InSample => Mode::OutOfSample,
                    Mode::OutOfSample => Mode::InSample,
                };
                let other_cfg = MarketRunConfig {
                    mode: other_mode,
                    ..base.clone()
                };
                // The other mode may lack inputs (no shares before the first
                // month); its column is then left empty.
                let other =
                    run_month(&data.shares, &data.r_schedule, &data.prices, &other_cfg).ok();
                let (ins, oos) = match base.mode {
                    Mode::InSample => (Some(&result), other.as_ref()),
                    Mode::OutOfSample => (other.as_ref(), Some(&result)),
                };
                write_triples_csv(&build_triples(&data.shares, &month, ins, oos), create(&p)?)?;
            }
            Ok(if result.converged() {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            })
        }
        Command::Validate {
            data_dir: dir,
            contribution_tol,
            games,
        } => {
            let dir = data_dir(dir);
            let data = MarketData::load(&dir)?;
            let mut failures = 0usize;
            for issue in validate_data(&data, contribution_tol) {
                println!("FAIL {}: {}", issue.file, issue.message);
                failures += 1;
            }
            println!(
                "{}: {} months of shares, {} r-schedule months, {} price days",
                dir.display(),
                data.shares.months.len(),
                data.r_schedule.0.months.len(),
                data.prices.prices.len()
            );
            for path in games {
                match read_game(&path) {
                    Ok(g) => println!(
                        "{}: J {} nu {} dim {}",
                        path.display(),
                        g.agents(),
                        g.num_scenarios(),
                        g.lcp_dim()
                    ),
                    Err(e) => {
                        println!("FAIL {}: {e}", path.display());
                        failures += 1;
                    }
                }
            }
            if failures == 0 {
                println!("ok");
                Ok(EXIT_OK)
            } else {
                Ok(EXIT_NOT_CONVERGED)
            }
        }
    }
}

/// Parses `args` (program name first), runs the command, and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::invalid(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
