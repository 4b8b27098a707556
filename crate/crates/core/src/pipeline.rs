//! End-to-end training of the cases and revenue ensembles for one region.

use serde::{Deserialize, Serialize};

use crate::backtest::DEFAULT_TEST_DAYS;
use crate::error::Result;
use crate::features::{build_matrix, LagSpec};
use crate::ingest::{SeriesFrame, CASES, REVENUE};
use crate::models::{train_artifact_with, validation_score, ModelArtifact, Regressor, TrainConfig};
use crate::simulate::{recurse, FutureInputs, Stepper, DEFAULT_HORIZON_DAYS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub lag_spec: LagSpec,
    pub train: TrainConfig,
    pub test_days: usize,
    pub horizon_days: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lag_spec: LagSpec::default(),
            train: TrainConfig::default(),
            test_days: DEFAULT_TEST_DAYS,
            horizon_days: DEFAULT_HORIZON_DAYS,
        }
    }
}

/// The two models a region needs: cases and small-business revenue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactPair {
    pub cases: ModelArtifact,
    pub revenue: ModelArtifact,
}

/// Trains one target's ensemble. Ensemble weights come from validation r²
/// of recursive predictions over the last `val_days` days, the way the
/// forecaster is used, rather than from one-step predictions.
pub fn train_target(frame: &SeriesFrame, cfg: &PipelineConfig, target: &str) -> Result<ModelArtifact> {
    let mut spec = cfg.lag_spec.clone();
    // Revenue is predicted from cases, never from its own past.
    if target != CASES {
        spec.columns.retain(|c| c.column != target);
    }
    let matrix = build_matrix(frame, &spec, target)?;
    // Only called once the holdout has checked `n_rows > val_days`.
    let recursive = |models: [&dyn Regressor; 3]| -> Result<[f64; 3]> {
        let val_days = cfg.train.val_days;
        let dates = frame.dates();
        let cut = frame.len() - val_days;
        let history = frame.truncate_through(dates[cut - 1]);
        let future = frame.slice_dates(dates[cut], dates[frame.len() - 1]);
        let y_val = &matrix.target[matrix.n_rows() - val_days..];
        let mut out = [0.0; 3];
        for (o, model) in out.iter_mut().zip(models) {
            let stepper = Stepper {
                model,
                spec: &spec,
                target,
            };
            let paths = recurse(stepper, None, &history, val_days, FutureInputs::Observed(&future), None)?;
            *o = validation_score(y_val, &paths.cases);
        }
        Ok(out)
    };
    train_artifact_with(&matrix, &spec, &cfg.train, Some(&recursive))
}

pub fn train_pair(frame: &SeriesFrame, cfg: &PipelineConfig) -> Result<ArtifactPair> {
    let (cases, revenue) = rayon::join(
        || train_target(frame, cfg, CASES),
        || train_target(frame, cfg, REVENUE),
    );
    Ok(ArtifactPair {
        cases: cases?,
        revenue: revenue?,
    })
}
