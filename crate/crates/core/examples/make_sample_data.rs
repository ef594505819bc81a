//! Writes the synthetic price inputs for the market examples:
//! `brent_daily.csv`, `contributions_daily.csv` and `total_supply.csv`.
//!
//! Daily prices follow a mean-reverting walk around approximate monthly Brent
//! averages (Nov 2018 to May 2020) and are rescaled so each month hits its
//! average exactly. Each day's relative change is split at random into
//! demand, supply and residual parts that add up to it exactly. Total supply
//! is a rounded monthly world figure in barrels per day.
//!
//! These series only stand in for the real data and are not the real data.
//!
//!     cargo run --example make_sample_data -- [out_dir]

use std::error::Error;
use std::path::PathBuf;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MONTHS: [(i32, u32, f64, f64); 19] = [
    // year, month, average price, world supply (million b/d)
    (2018, 11, 64.75, 101.0),
    (2018, 12, 57.36, 101.3),
    (2019, 1, 59.41, 100.6),
    (2019, 2, 63.96, 100.1),
    (2019, 3, 66.14, 99.6),
    (2019, 4, 71.23, 100.3),
    (2019, 5, 71.32, 100.0),
    (2019, 6, 64.22, 100.5),
    (2019, 7, 63.92, 99.9),
    (2019, 8, 59.04, 100.6),
    (2019, 9, 62.83, 98.7),
    (2019, 10, 59.71, 101.0),
    (2019, 11, 63.21, 101.4),
    (2019, 12, 67.31, 101.3),
    (2020, 1, 63.65, 100.6),
    (2020, 2, 55.66, 100.0),
    (2020, 3, 32.01, 100.3),
    (2020, 4, 18.38, 100.0),
    (2020, 5, 29.38, 88.5),
];

fn trading_days(year: i32, month: u32) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month");
    let mut out = Vec::new();
    while d.month() == month {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("in range");
    }
    out
}

fn main() -> Result<(), Box<dyn Error>> {
    let out_dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| "data".into());
    std::fs::create_dir_all(&out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2020);

    let mut days: Vec<(NaiveDate, f64)> = Vec::new();
    let mut dev = 0.0f64;
    for &(y, m, avg, _) in &MONTHS {
        let dates = trading_days(y, m);
        let raw: Vec<f64> = dates
            .iter()
            .map(|_| {
                dev = 0.8 * dev + rng.gen_range(-0.02..0.02);
                avg * dev.exp()
            })
            .collect();
        let scale = avg / (raw.iter().sum::<f64>() / raw.len() as f64);
        days.extend(dates.into_iter().zip(raw.into_iter().map(|p| p * scale)));
    }

    let mut prices = csv::Writer::from_path(out_dir.join("brent_daily.csv"))?;
    prices.write_record(["date", "price"])?;
    for (d, p) in &days {
        prices.write_record([d.to_string(), format!("{p:.4}")])?;
    }
    prices.flush()?;

    // Contributions use the rounded prices so they sum to the published change.
    let rounded: Vec<f64> = days.iter().map(|(_, p)| (p * 1e4).round() / 1e4).collect();
    let mut contrib = csv::Writer::from_path(out_dir.join("contributions_daily.csv"))?;
    contrib.write_record([
        "date",
        "demand_contrib",
        "supply_contrib",
        "residual_contrib",
    ])?;
    for k in 1..days.len() {
        let change = rounded[k] / rounded[k - 1] - 1.0;
        let noise = rng.gen_range(-0.004..0.004);
        let demand = change * rng.gen_range(0.2..0.6) + noise;
        let supply = change * rng.gen_range(0.1..0.4) - 0.5 * noise;
        let residual = change - demand - supply;
        contrib.write_record([
            days[k].0.to_string(),
            demand.to_string(),
            supply.to_string(),
            residual.to_string(),
        ])?;
    }
    contrib.flush()?;

    let mut supply = csv::Writer::from_path(out_dir.join("total_supply.csv"))?;
    supply.write_record(["month", "total_supply_bpd"])?;
    for &(y, m, _, mbd) in &MONTHS {
        supply.write_record([format!("{y:04}-{m:02}"), format!("{:.0}", mbd * 1e6)])?;
    }
    supply.flush()?;

    println!("wrote {} trading days to {}", days.len(), out_dir.display());
    Ok(())
}
