use std::path::Path;

use twostage_lcp::game::check_condition_9;
use twostage_lcp::market::{
    calibrate_first_stage, run_month, validate_data, MarketData, MarketRunConfig, Mode, RSchedule,
};

fn data() -> MarketData {
    MarketData::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")).unwrap()
}

fn cfg(month: &str, mode: Mode, nu: usize) -> MarketRunConfig {
    MarketRunConfig {
        month: month.into(),
        mode,
        nu,
        ..MarketRunConfig::default()
    }
}

#[test]
fn shipped_data_loads_and_validates() {
    let d = data();
    assert_eq!(d.shares.producers.len(), 15);
    assert_eq!(d.shares.months.len(), 17);
    assert!(validate_data(&d, 1e-9).is_empty());
}

#[test]
fn calibration_constants() {
    let d = data();
    let fs = calibrate_first_stage(
        &d.shares,
        &d.r_schedule,
        &cfg("2019-01", Mode::InSample, 10),
    )
    .unwrap();
    assert!((fs.c()[0] - 0.11 / 0.1031).abs() < 1e-12);
    assert!(fs.r().iter().all(|r| *r == 0.0));

    let fs = calibrate_first_stage(
        &d.shares,
        &d.r_schedule,
        &cfg("2020-04", Mode::InSample, 10),
    )
    .unwrap();
    let usa = d.shares.producers.iter().position(|p| p == "USA").unwrap();
    assert_eq!(fs.r()[usa], -0.04);
}

#[test]
fn zero_response_months_are_monotone() {
    let d = data();
    for m in 1..=12 {
        let c = cfg(&format!("2019-{m:02}"), Mode::InSample, 10);
        let report =
            check_condition_9(&calibrate_first_stage(&d.shares, &d.r_schedule, &c).unwrap());
        assert!(
            report.diagonally_dominant && report.positive_definite,
            "2019-{m:02}"
        );
    }
}

#[test]
fn shares_sum_to_100_and_runs_repeat() {
    let d = data();
    let c = cfg("2020-02", Mode::OutOfSample, 200);
    let a = run_month(&d.shares, &d.r_schedule, &d.prices, &c).unwrap();
    assert!(a.converged());
    assert!((a.computed_shares.iter().sum::<f64>() - 100.0).abs() < 1e-9);
    assert_eq!(a.anchor_month, "2020-01");
    assert_eq!(a.window_month, "2020-01");
    let b = run_month(&d.shares, &d.r_schedule, &d.prices, &c).unwrap();
    assert_eq!(a.computed_shares, b.computed_shares);
}

#[test]
fn january_2019_has_no_out_of_sample_anchor() {
    let d = data();
    assert!(run_month(
        &d.shares,
        &d.r_schedule,
        &d.prices,
        &cfg("2019-01", Mode::OutOfSample, 10)
    )
    .is_err());
}

// A negative response coefficient lowers the producer's effective marginal
// cost, so its share should rise against the same month solved with r = 0.
#[test]
fn negative_response_raises_share() {
    let d = data();
    let c = cfg("2020-03", Mode::InSample, 200);
    let with_r = run_month(&d.shares, &d.r_schedule, &d.prices, &c).unwrap();
    let zeros = RSchedule::zeros(d.shares.producers.clone());
    let without = run_month(&d.shares, &zeros, &d.prices, &c).unwrap();
    for name in ["UK", "Venezuela", "Indonesia"] {
        let i = d.shares.producers.iter().position(|p| p == name).unwrap();
        assert!(
            with_r.computed_shares[i] > without.computed_shares[i],
            "{name}: {} vs {}",
            with_r.computed_shares[i],
            without.computed_shares[i]
        );
    }
}
