//! Monthly oil-market shares, January 2019 to May 2020.
//!
//! For each month, calibrates the game from the share tables and price data in
//! `data/`, solves in-sample and out-of-sample, and prints rank correlations
//! against the observed shares. Writes the real/in-sample/out-of-sample
//! triples to `market_shares.csv` (or the path given).
//!
//!     cargo run --release --example oil_market -- [--nu 200] [out.csv]

use std::error::Error;
use std::path::PathBuf;

use twostage_lcp::market::{
    build_triples, run_month, write_triples_csv, MarketData, MarketRunConfig, Mode,
};

fn main() -> Result<(), Box<dyn Error>> {
    let mut nu = 800;
    let mut out = PathBuf::from("market_shares.csv");
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        match a.as_str() {
            "--nu" => nu = args.next().ok_or("--nu needs a value")?.parse()?,
            other => out = other.into(),
        }
    }
    let dir = std::env::var("TWOSTAGE_DATA_DIR")
        .unwrap_or_else(|_| concat!(env!("CARGO_MANIFEST_DIR"), "/../../data").to_string());
    let data = MarketData::load(dir.as_ref())?;

    let months: Vec<String> = data.shares.months.keys().cloned().collect();
    let mut triples = Vec::new();
    println!("month    mode           algo  iter  residual   spearman  USA share (real)");
    for month in &months {
        let mut results = Vec::new();
        for mode in [Mode::InSample, Mode::OutOfSample] {
            let cfg = MarketRunConfig {
                month: month.clone(),
                mode,
                nu,
                ..Default::default()
            };
            match run_month(&data.shares, &data.r_schedule, &data.prices, &cfg) {
                Ok(r) => {
                    println!(
                        "{month}  {:<13}  {}   {:>3}   {:.2e}   {:>7.4}   {:.2} ({:.2})",
                        mode.to_string(),
                        r.equilibrium.algorithm,
                        r.equilibrium.iterations,
                        r.equilibrium.residual,
                        r.rank_correlation().unwrap_or(f64::NAN),
                        r.computed_shares[2],
                        r.real_shares.as_ref().map_or(f64::NAN, |s| s[2]),
                    );
                    results.push(Some(r));
                }
                Err(e) => {
                    println!("{month}  {:<13}  skipped: {e}", mode.to_string());
                    results.push(None);
                }
            }
        }
        triples.extend(build_triples(
            &data.shares,
            month,
            results[0].as_ref(),
            results[1].as_ref(),
        ));
    }
    write_triples_csv(&triples, std::fs::File::create(&out)?)?;
    println!("wrote {}", out.display());
    Ok(())
}
