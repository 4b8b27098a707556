mod common;

use chrono::{Days, NaiveDate};
use interveno::backtest::{backtest_artifact, rolling_backtest, run_backtest};
use interveno::ingest::CASES;
use interveno::models::rng::StreamRng;
use interveno::synth::linear_trend;
use interveno::{Error, PipelineConfig};

fn start() -> NaiveDate {
    "2021-01-01".parse().unwrap()
}

#[test]
fn noiseless_linear_trend_is_recovered() {
    let frame = linear_trend("LT", 120, start(), 500.0, 12.0);
    let report = run_backtest(&frame, &PipelineConfig::default()).unwrap();
    assert!((report.r_squared - 1.0).abs() <= 1e-6, "r² = {}", report.r_squared);
}

#[test]
fn white_noise_target_reports_without_crashing() {
    let mut frame = common::fixture("WN", 120, 3);
    let mut rng = StreamRng::new(1, 1);
    let noise: Vec<f64> = (0..frame.len()).map(|_| (1000.0 + 100.0 * rng.normal()).round()).collect();
    for (i, v) in noise.into_iter().enumerate() {
        frame.set(CASES, i, Some(v)).unwrap();
    }
    let report = run_backtest(&frame, &common::small_pipeline()).unwrap();
    assert!(report.r_squared.is_finite());
    assert!(report.r_squared < 0.5, "r² = {}", report.r_squared);
}

#[test]
fn single_origin_equals_run_backtest() {
    let frame = common::fixture("RB", 100, 4);
    let cfg = common::small_pipeline();
    let one = rolling_backtest(&frame, 1, 7, &cfg).unwrap();
    assert_eq!(one, vec![run_backtest(&frame, &cfg).unwrap()]);
}

#[test]
fn origins_are_spaced_by_step() {
    let frame = common::fixture("RB", 100, 4);
    let cfg = common::small_pipeline();
    let last = frame.last_date().unwrap();
    let reports = rolling_backtest(&frame, 3, 7, &cfg).unwrap();
    let through: Vec<NaiveDate> = reports.iter().map(|r| r.train_through).collect();
    assert_eq!(
        through,
        [14, 21, 28].map(|d| last - Days::new(d)).to_vec()
    );
    // Each origin matches a standalone evaluation at that cut-off.
    let alone = rolling_backtest(&frame.truncate_through(last - Days::new(7)), 1, 7, &cfg).unwrap();
    assert_eq!(alone[0], reports[1]);
}

#[test]
fn too_short_for_origins() {
    let frame = common::fixture("RB", 30, 4);
    let cfg = common::small_pipeline();
    assert!(matches!(
        rolling_backtest(&frame, 4, 7, &cfg),
        Err(Error::TooShortSeries { .. })
    ));
    assert!(rolling_backtest(&frame, 0, 7, &cfg).is_err());
}

#[test]
fn test_window_never_reaches_training() {
    let frame = common::fixture("OOT", 100, 5);
    let cfg = common::small_pipeline();
    let through = frame.last_date().unwrap() - Days::new(14);
    let cut = frame.index_of(through).unwrap();
    let mut scrambled = frame.clone();
    let mut rng = StreamRng::new(9, 0);
    for i in cut + 1..frame.len() {
        scrambled.set(CASES, i, Some((rng.unit() * 1e5).round())).unwrap();
        scrambled.set("small_business_revenue_delta", i, Some(rng.normal())).unwrap();
    }
    let a = backtest_artifact(&frame, through, &cfg).unwrap();
    let b = backtest_artifact(&scrambled, through, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.trained_through, through);
}

#[test]
fn default_backtest_uses_fourteen_days() {
    let frame = common::fixture("D", 90, 6);
    let report = run_backtest(&frame, &common::small_pipeline()).unwrap();
    assert_eq!(report.horizon_days, 14);
    assert_eq!(report.test_dates.len(), 14);
    assert_eq!(report.test_dates[13], frame.last_date().unwrap());
    assert_eq!(report.train_through + Days::new(14), frame.last_date().unwrap());
}
