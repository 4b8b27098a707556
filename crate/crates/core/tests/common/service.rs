//! Golden-file walk through every HTTP endpoint. Set `UPDATE_GOLDEN=1` to
//! rewrite the files under `tests/golden/`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::NaiveDate;
use http_body_util::BodyExt;
use interveno::service::http::{router, AppState};
use interveno::service::{RegionStore, RunConfig};
use interveno::synth::{generate, SynthConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

use super::small_pipeline;

pub const REGION: &str = "CA";
/// The fixture's last day, so the trained models end here.
pub const TRAINED_THROUGH: &str = "2020-11-12";

pub fn fixture_csv(region: &str, n_days: usize) -> String {
    let last: NaiveDate = TRAINED_THROUGH.parse().unwrap();
    let cfg = SynthConfig {
        n_days,
        start: last - chrono::Days::new(n_days as u64 - 1),
        ..Default::default()
    };
    generate(region, &cfg).to_csv()
}

pub fn state() -> Arc<AppState> {
    Arc::new(AppState {
        store: Arc::new(RegionStore::in_memory()),
        config: RunConfig {
            pipeline: small_pipeline(),
            ..Default::default()
        },
    })
}

pub async fn call(app: &Router, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"))
}

/// Compares a response against its golden file.
pub fn golden(name: &str, status: StatusCode, body: &Value) -> Result<(), String> {
    let actual = json!({"status": status.as_u16(), "body": body});
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some_and(|v| v == "1") {
        let text = serde_json::to_string_pretty(&actual).unwrap() + "\n";
        std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
        return Ok(());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e} (run with UPDATE_GOLDEN=1)", path.display()))?;
    let expected: Value = serde_json::from_str(&text).map_err(|e| format!("{name}: {e}"))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name}: response differs from {}", path.display()))
    }
}

fn expect(cond: bool, msg: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

/// Runs the endpoint walk; returns the number of golden files checked.
pub async fn golden_suite() -> Result<usize, String> {
    let st = state();
    let app = router(st.clone());
    let mut n = 0;
    let mut check = |name: &str, status: StatusCode, body: &Value| {
        n += 1;
        golden(name, status, body)
    };
    let base = format!("/regions/{REGION}");

    let (s, b) = call(&app, Method::GET, "/health", Body::empty()).await;
    check("health", s, &b)?;

    let (s, b) = call(&app, Method::GET, &format!("{base}/status"), Body::empty()).await;
    expect(s == StatusCode::NOT_FOUND, "status on an unknown region is 404")?;
    check("status_unknown_region", s, &b)?;

    let (s, b) = call(&app, Method::PUT, &format!("{base}/data"), fixture_csv(REGION, 120)).await;
    expect(s == StatusCode::OK, "upload succeeds")?;
    check("put_data", s, &b)?;

    let (s, b) = call(&app, Method::PUT, "/regions/no.dots/data", fixture_csv("no.dots", 30)).await;
    expect(s == StatusCode::BAD_REQUEST, "bad region id is 400")?;
    check("put_data_bad_region", s, &b)?;

    let (s, b) = call(&app, Method::POST, &format!("{base}/simulate"), "{}").await;
    expect(s == StatusCode::NOT_FOUND, "simulate before training is 404")?;
    check("simulate_not_trained", s, &b)?;

    let (s, _) = call(&app, Method::PUT, "/regions/TINY/data", fixture_csv("TINY", 10)).await;
    expect(s == StatusCode::OK, "short upload is accepted")?;
    let (s, b) = call(&app, Method::POST, "/regions/TINY/train", Body::empty()).await;
    expect(s == StatusCode::UNPROCESSABLE_ENTITY, "training on 10 days is 422")?;
    check("train_too_short", s, &b)?;

    {
        let _busy = st.store.try_begin_training(REGION).map_err(|e| e.to_string())?;
        let (s, b) = call(&app, Method::POST, &format!("{base}/train"), Body::empty()).await;
        expect(s == StatusCode::CONFLICT, "second concurrent train is 409")?;
        check("train_conflict", s, &b)?;
    }

    let (s, b) = call(&app, Method::POST, &format!("{base}/train"), "{}").await;
    expect(s == StatusCode::OK, "train succeeds")?;
    expect(b["cases"]["trained_through"] == TRAINED_THROUGH, "trained through the last day")?;
    check("train", s, &b)?;

    let (s, b) = call(&app, Method::GET, &format!("{base}/backtest"), Body::empty()).await;
    expect(s == StatusCode::OK, "backtest succeeds")?;
    expect(b["y_pred"].as_array().map(Vec::len) == Some(14), "backtest covers 14 days")?;
    check("backtest", s, &b)?;

    let (s, b) = call(&app, Method::GET, &format!("{base}/backtest?origins=2&step=7"), Body::empty()).await;
    expect(s == StatusCode::OK, "rolling backtest succeeds")?;
    check("backtest_rolling", s, &b)?;

    let (s, b) = call(&app, Method::POST, &format!("{base}/simulate"), "{}").await;
    expect(s == StatusCode::OK, "empty scenario succeeds")?;
    expect(b["cases_scenario"] == b["cases_baseline"], "empty scenario: cases equal baseline")?;
    expect(b["revenue_scenario"] == b["revenue_baseline"], "empty scenario: revenue equals baseline")?;
    expect(b["dates"].as_array().map(Vec::len) == Some(35), "default horizon is 35 days")?;
    check("simulate_identity", s, &b)?;

    let spec = r#"{"horizon_days": 14, "policy_overrides": {"policy_stay_at_home": 3}}"#;
    let (s, b) = call(&app, Method::POST, &format!("{base}/simulate"), spec).await;
    expect(s == StatusCode::OK, "stay-at-home scenario succeeds")?;
    check("simulate_stay_at_home", s, &b)?;

    let (s, b) = call(&app, Method::POST, &format!("{base}/simulate"), r#"{"policy_overrides": {"policy_stay_at_home": 9}}"#).await;
    expect(s == StatusCode::BAD_REQUEST, "out-of-range level is 400")?;
    check("simulate_invalid_level", s, &b)?;

    let (s, b) = call(&app, Method::POST, &format!("{base}/simulate"), "{horizon").await;
    expect(s == StatusCode::BAD_REQUEST, "malformed JSON is 400")?;
    check("simulate_bad_json", s, &b)?;

    let req = json!({"date": TRAINED_THROUGH, "config": {"n_samples": 300}}).to_string();
    let (s, b) = call(&app, Method::POST, &format!("{base}/explain"), req).await;
    expect(s == StatusCode::OK, "explain succeeds")?;
    check("explain", s, &b)?;

    let req = json!({"date": TRAINED_THROUGH, "target": "revenue", "config": {"n_samples": 300}}).to_string();
    let (s, b) = call(&app, Method::POST, &format!("{base}/explain"), req).await;
    expect(s == StatusCode::OK, "revenue explain succeeds")?;
    check("explain_revenue", s, &b)?;

    let (s, b) = call(&app, Method::POST, &format!("{base}/explain"), r#"{"date": "1999-01-01"}"#).await;
    expect(s == StatusCode::BAD_REQUEST, "explain on an unknown date is 400")?;
    check("explain_unknown_date", s, &b)?;

    let req = json!({
        "space": {
            "horizon_days": 14,
            "policy_levels": {"policy_stay_at_home": [0, 1, 2, 3]},
            "coverage_ramps": [{"end_coverage": 0.3, "ramp_days": 14}],
            "efficacy": [0.6, 0.9]
        },
        "weights": {"protect": 1.0, "revenue": 5.0},
        "top": 3
    })
    .to_string();
    let (s, b) = call(&app, Method::POST, &format!("{base}/best-case"), req).await;
    expect(s == StatusCode::OK, "best-case succeeds")?;
    expect(b["evaluated"] == 8 && b["ranked"].as_array().map(Vec::len) == Some(3), "best-case ranks 8, returns 3")?;
    check("best_case", s, &b)?;

    let (s, b) = call(&app, Method::POST, &format!("{base}/best-case"), r#"{"space": {}}"#).await;
    expect(s == StatusCode::BAD_REQUEST, "empty search space is 400")?;
    check("best_case_empty", s, &b)?;

    let (s, b) = call(&app, Method::GET, &format!("{base}/status?today=2020-12-12"), Body::empty()).await;
    expect(s == StatusCode::OK && b["retrain_due"] == true, "retrain due a month after training")?;
    check("status_due", s, &b)?;

    let (s, b) = call(&app, Method::GET, &format!("{base}/status?today=2020-11-30"), Body::empty()).await;
    expect(s == StatusCode::OK && b["retrain_due"] == false, "retrain not due after 18 days")?;
    check("status_fresh", s, &b)?;

    let (s, b) = call(&app, Method::GET, "/regions/TINY/status?today=2020-12-12", Body::empty()).await;
    expect(s == StatusCode::OK && b["trained_through"].is_null(), "untrained status has no training date")?;
    check("status_untrained", s, &b)?;

    Ok(n)
}
