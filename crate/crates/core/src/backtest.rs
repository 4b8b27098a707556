//! Out-of-time evaluation and the retrain predicate.

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::ingest::{SeriesFrame, CASES};
use crate::models::ModelArtifact;
use crate::pipeline::{train_target, PipelineConfig};
use crate::simulate::{recurse, FutureInputs};

pub const DEFAULT_TEST_DAYS: usize = 14;
pub const RETRAIN_AFTER_DAYS: u64 = 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub r_squared: f64,
    pub horizon_days: usize,
    pub train_through: NaiveDate,
    pub test_dates: Vec<NaiveDate>,
    pub y_true: Vec<f64>,
    pub y_pred: Vec<f64>,
}

impl BacktestReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,y_true,y_pred\n");
        for ((d, t), p) in self.test_dates.iter().zip(&self.y_true).zip(&self.y_pred) {
            out.push_str(&format!("{d},{t},{p}\n"));
        }
        out
    }
}

/// Coefficient of determination; negative when worse than the mean.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.is_empty() || y_true.len() != y_pred.len() {
        return Err(Error::InvalidParams(format!(
            "r² needs equal non-empty inputs ({} vs {})",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Splits off the last `test_days` rows.
pub fn oot_split(matrix: &FeatureMatrix, test_days: usize) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let n = matrix.n_rows();
    if n <= test_days {
        return Err(Error::TooShortSeries {
            needed: test_days + 1,
            available: n,
        });
    }
    let cut = n - test_days;
    Ok((matrix.slice_rows(0..cut), matrix.slice_rows(cut..n)))
}

/// Evaluates the default target over the last `cfg.test_days` days.
pub fn run_backtest(frame: &SeriesFrame, cfg: &PipelineConfig) -> Result<BacktestReport> {
    let last = frame.last_date().ok_or(Error::TooShortSeries {
        needed: cfg.test_days + 1,
        available: 0,
    })?;
    backtest_at(frame, last - Days::new(cfg.test_days as u64), cfg)
}

/// Artifact trained on data through `train_through` only.
pub fn backtest_artifact(
    frame: &SeriesFrame,
    train_through: NaiveDate,
    cfg: &PipelineConfig,
) -> Result<ModelArtifact> {
    train_target(&frame.truncate_through(train_through), cfg, CASES)
}

/// Trains on data through `train_through`, then forecasts the next
/// `cfg.test_days` days recursively with the observed non-target inputs.
pub fn backtest_at(frame: &SeriesFrame, train_through: NaiveDate, cfg: &PipelineConfig) -> Result<BacktestReport> {
    let test_end = train_through + Days::new(cfg.test_days as u64);
    if cfg.test_days == 0 || frame.index_of(test_end).is_none() || frame.index_of(train_through).is_none() {
        return Err(Error::TooShortSeries {
            needed: cfg.test_days + 1,
            available: frame.len(),
        });
    }
    let history = frame.truncate_through(train_through);
    let artifact = train_target(&history, cfg, CASES)?;
    let test = frame.slice_dates(train_through + Days::new(1), test_end);
    let y_pred = predict_observed(&artifact, &history, &test)?;
    let y_true = test.dense(CASES)?;
    Ok(BacktestReport {
        r_squared: r_squared(&y_true, &y_pred)?,
        horizon_days: cfg.test_days,
        train_through,
        test_dates: test.dates().to_vec(),
        y_true,
        y_pred,
    })
}

/// Recursive target predictions for every day of `future`, which must
/// directly follow `history`. Only its non-target columns are read.
pub fn predict_observed(artifact: &ModelArtifact, history: &SeriesFrame, future: &SeriesFrame) -> Result<Vec<f64>> {
    artifact.check()?;
    let paths = recurse(artifact.into(), None, history, future.len(), FutureInputs::Observed(future), None)?;
    Ok(paths.cases)
}

/// One report per origin; origin `k` trains through
/// `last - test_days - k * step`.
pub fn rolling_backtest(
    frame: &SeriesFrame,
    n_origins: usize,
    step: usize,
    cfg: &PipelineConfig,
) -> Result<Vec<BacktestReport>> {
    if n_origins == 0 || (n_origins > 1 && step == 0) {
        return Err(Error::InvalidParams("need n_origins >= 1 and step >= 1".into()));
    }
    let last = frame.last_date().ok_or(Error::TooShortSeries {
        needed: cfg.test_days + 1,
        available: 0,
    })?;
    let needed = cfg.test_days + (n_origins - 1) * step + 1;
    if frame.len() < needed {
        return Err(Error::TooShortSeries {
            needed,
            available: frame.len(),
        });
    }
    (0..n_origins)
        .into_par_iter()
        .map(|k| {
            let through = last - Days::new((cfg.test_days + k * step) as u64);
            backtest_at(frame, through, cfg)
        })
        .collect()
}

/// True once `today` is at least 28 days past the training cut-off.
pub fn retrain_due(trained_through: NaiveDate, today: NaiveDate) -> Result<bool> {
    if today < trained_through {
        return Err(Error::FutureArtifact {
            trained_through,
            today,
        });
    }
    Ok(today >= trained_through + Days::new(RETRAIN_AFTER_DAYS))
}
