//! CSV inputs for the oil-market runs.
//!
//! | file                      | columns                                                  |
//! |---------------------------|----------------------------------------------------------|
//! | `shares.csv`              | `producer,month,share_percent`                           |
//! | `r_schedule.csv`          | `producer,month,r_value`                                 |
//! | `brent_daily.csv`         | `date,price`                                             |
//! | `contributions_daily.csv` | `date,demand_contrib,supply_contrib,residual_contrib`    |
//! | `total_supply.csv`        | `month,total_supply_bpd`                                 |
//!
//! Months are `YYYY-MM`, dates `YYYY-MM-DD`, contributions are fractions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SHARES_FILE: &str = "shares.csv";
pub const R_SCHEDULE_FILE: &str = "r_schedule.csv";
pub const PRICES_FILE: &str = "brent_daily.csv";
pub const CONTRIBUTIONS_FILE: &str = "contributions_daily.csv";
pub const TOTAL_SUPPLY_FILE: &str = "total_supply.csv";

/// Tolerance on monthly share totals; the tables are rounded to 0.01.
pub const SHARE_SUM_TOL: f64 = 0.5;

pub fn parse_month(m: &str) -> Result<(i32, u32)> {
    let bad = || Error::invalid(format!("month `{m}` is not YYYY-MM"));
    let (y, mo) = m.split_once('-').ok_or_else(bad)?;
    if y.len() != 4 || mo.len() != 2 {
        return Err(bad());
    }
    let y: i32 = y.parse().map_err(|_| bad())?;
    let mo: u32 = mo.parse().map_err(|_| bad())?;
    if !(1..=12).contains(&mo) {
        return Err(bad());
    }
    Ok((y, mo))
}

pub fn previous_month(m: &str) -> Result<String> {
    let (y, mo) = parse_month(m)?;
    Ok(if mo == 1 {
        format!("{:04}-12", y - 1)
    } else {
        format!("{y:04}-{:02}", mo - 1)
    })
}

/// Monthly values per producer, in a fixed producer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyTable {
    pub producers: Vec<String>,
    pub months: BTreeMap<String, Vec<f64>>,
}

impl MonthlyTable {
    pub fn month(&self, m: &str) -> Option<&[f64]> {
        self.months.get(m).map(Vec::as_slice)
    }

    fn from_records(records: Vec<(String, String, f64)>, what: &str) -> Result<Self> {
        let mut producers: Vec<String> = Vec::new();
        for (p, _, _) in &records {
            if !producers.contains(p) {
                producers.push(p.clone());
            }
        }
        let mut months: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
        for (p, m, v) in records {
            parse_month(&m)?;
            if !v.is_finite() {
                return Err(Error::Schema {
                    field: what.into(),
                    message: format!("non-finite value for {p} in {m}"),
                });
            }
            let i = producers
                .iter()
                .position(|q| *q == p)
                .expect("collected above");
            let row = months
                .entry(m.clone())
                .or_insert_with(|| vec![None; producers.len()]);
            if row[i].replace(v).is_some() {
                return Err(Error::Schema {
                    field: what.into(),
                    message: format!("duplicate entry for {p} in {m}"),
                });
            }
        }
        let months = months
            .into_iter()
            .map(|(m, row)| {
                let missing: Vec<&str> = row
                    .iter()
                    .zip(&producers)
                    .filter(|(v, _)| v.is_none())
                    .map(|(_, p)| p.as_str())
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::Schema {
                        field: what.into(),
                        message: format!("month {m} lacks {}", missing.join(", ")),
                    });
                }
                Ok((m, row.into_iter().map(Option::unwrap).collect()))
            })
            .collect::<Result<_>>()?;
        Ok(Self { producers, months })
    }
}

/// Monthly market shares in percent.
pub type ProducerTable = MonthlyTable;

/// Per-month `r` values. Months not listed have `r = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSchedule(pub MonthlyTable);

impl RSchedule {
    pub fn zeros(producers: Vec<String>) -> Self {
        Self(MonthlyTable {
            producers,
            months: BTreeMap::new(),
        })
    }

    pub fn r_for(&self, month: &str) -> Vec<f64> {
        self.0
            .month(month)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.0.producers.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyContribution {
    pub demand: f64,
    pub supply: f64,
    pub residual: f64,
}

/// Benchmark prices, daily price-change contributions and monthly total
/// supply (barrels per day).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PriceSeries {
    pub prices: BTreeMap<String, f64>,
    pub contributions: BTreeMap<String, DailyContribution>,
    pub total_supply: BTreeMap<String, f64>,
}

/// One resampling candidate: a trading day with its contributions and the
/// previous trading day's price.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDay {
    pub date: String,
    pub prior_price: f64,
    pub contribution: DailyContribution,
}

impl PriceSeries {
    /// Trading days of `month` that carry contributions and have a prior
    /// price.
    pub fn window(&self, month: &str) -> Result<Vec<WindowDay>> {
        parse_month(month)?;
        let prefix = format!("{month}-");
        let mut out = Vec::new();
        let mut prior: Option<f64> = None;
        for (date, &p) in &self.prices {
            if date.starts_with(&prefix) {
                if let (Some(pp), Some(c)) = (prior, self.contributions.get(date)) {
                    out.push(WindowDay {
                        date: date.clone(),
                        prior_price: pp,
                        contribution: *c,
                    });
                }
            }
            prior = Some(p);
        }
        Ok(out)
    }

    pub fn total_supply_for(&self, month: &str) -> Result<f64> {
        self.total_supply
            .get(month)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no total supply for {month}")))
    }
}

#[derive(Debug, Deserialize)]
struct ShareRecord {
    producer: String,
    month: String,
    share_percent: f64,
}

#[derive(Debug, Deserialize)]
struct RRecord {
    producer: String,
    month: String,
    r_value: f64,
}

#[derive(Debug, Deserialize)]
struct PriceRecord {
    date: String,
    price: f64,
}

#[derive(Debug, Deserialize)]
struct ContributionRecord {
    date: String,
    demand_contrib: f64,
    supply_contrib: f64,
    residual_contrib: f64,
}

#[derive(Debug, Deserialize)]
struct SupplyRecord {
    month: String,
    total_supply_bpd: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::invalid(format!("cannot read {}: {e}", path.display())),
        _ => e.into(),
    })?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec.map_err(|e| Error::Schema {
            field: path.display().to_string(),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn load_shares(path: &Path) -> Result<ProducerTable> {
    let recs: Vec<ShareRecord> = read_csv(path)?;
    MonthlyTable::from_records(
        recs.into_iter()
            .map(|r| (r.producer, r.month, r.share_percent))
            .collect(),
        "share_percent",
    )
}

pub fn load_r_schedule(path: &Path) -> Result<RSchedule> {
    let recs: Vec<RRecord> = read_csv(path)?;
    MonthlyTable::from_records(
        recs.into_iter()
            .map(|r| (r.producer, r.month, r.r_value))
            .collect(),
        "r_value",
    )
    .map(RSchedule)
}

fn check_date(d: &str) -> Result<()> {
    let ok = d.len() == 10
        && d.as_bytes()[7] == b'-'
        && parse_month(&d[..7]).is_ok()
        && d[8..].parse::<u32>().is_ok_and(|x| (1..=31).contains(&x));
    if ok {
        Ok(())
    } else {
        Err(Error::Schema {
            field: "date".into(),
            message: format!("`{d}` is not YYYY-MM-DD"),
        })
    }
}

pub fn load_prices(prices: &Path, contributions: &Path, supply: &Path) -> Result<PriceSeries> {
    let mut out = PriceSeries::default();
    for r in read_csv::<PriceRecord>(prices)? {
        check_date(&r.date)?;
        if !(r.price > 0.0) {
            return Err(Error::Schema {
                field: "price".into(),
                message: format!("price on {} must be positive", r.date),
            });
        }
        out.prices.insert(r.date, r.price);
    }
    for r in read_csv::<ContributionRecord>(contributions)? {
        check_date(&r.date)?;
        out.contributions.insert(
            r.date,
            DailyContribution {
                demand: r.demand_contrib,
                supply: r.supply_contrib,
                residual: r.residual_contrib,
            },
        );
    }
    for r in read_csv::<SupplyRecord>(supply)? {
        parse_month(&r.month)?;
        if !(r.total_supply_bpd > 0.0) {
            return Err(Error::Schema {
                field: "total_supply_bpd".into(),
                message: format!("total supply for {} must be positive", r.month),
            });
        }
        out.total_supply.insert(r.month, r.total_supply_bpd);
    }
    Ok(out)
}

/// All inputs of a market run, loaded from one directory.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketData {
    pub shares: ProducerTable,
    pub r_schedule: RSchedule,
    pub prices: PriceSeries,
}

impl MarketData {
    pub fn load(dir: &Path) -> Result<Self> {
        let shares = load_shares(&dir.join(SHARES_FILE))?;
        let r_schedule = load_r_schedule(&dir.join(R_SCHEDULE_FILE))?;
        if r_schedule.0.producers != shares.producers {
            return Err(Error::Schema {
                field: "producer".into(),
                message: "r schedule producers differ from the share table".into(),
            });
        }
        let prices = load_prices(
            &dir.join(PRICES_FILE),
            &dir.join(CONTRIBUTIONS_FILE),
            &dir.join(TOTAL_SUPPLY_FILE),
        )?;
        Ok(Self {
            shares,
            r_schedule,
            prices,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub file: String,
    pub message: String,
}

/// Months whose shares do not sum to `100 ± 0.5`, and days whose
/// contributions do not add up to the relative price change within `tol`.
pub fn validate_data(data: &MarketData, contribution_tol: f64) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    for (m, row) in &data.shares.months {
        let total: f64 = row.iter().sum();
        if (total - 100.0).abs() > SHARE_SUM_TOL {
            issues.push(ValidationIssue {
                file: SHARES_FILE.into(),
                message: format!("{m}: shares sum to {total:.2}"),
            });
        }
        if let Some(i) = row.iter().position(|v| *v < 0.0) {
            issues.push(ValidationIssue {
                file: SHARES_FILE.into(),
                message: format!("{m}: negative share for {}", data.shares.producers[i]),
            });
        }
    }
    let mut prior: Option<f64> = None;
    for (date, &p) in &data.prices.prices {
        if let (Some(pp), Some(c)) = (prior, data.prices.contributions.get(date)) {
            let change = p / pp - 1.0;
            let sum = c.demand + c.supply + c.residual;
            if (change - sum).abs() > contribution_tol {
                issues.push(ValidationIssue {
                    file: CONTRIBUTIONS_FILE.into(),
                    message: format!("{date}: contributions {sum:.6} vs price change {change:.6}"),
                });
            }
        }
        prior = Some(p);
    }
    issues
}
