use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::tune::{holdout, tune, validation_score, TrainConfig};
use super::{
    fit_forest, fit_gbm, fit_linear, Forest, ForestParams, Gbm, GbmParams, LinearModel,
    LinearParams, Regressor,
};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, LagSpec};
use crate::matrix::Matrix;

pub const ARTIFACT_FORMAT_VERSION: i64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub linear: LinearParams,
    pub forest: ForestParams,
    pub gbm: GbmParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleFit {
    pub linear: LinearModel,
    pub forest: Forest,
    pub gbm: Gbm,
    pub val_r2: [f64; 3],
    pub weights: [f64; 3],
}

/// Convex weights proportional to positive validation r²; equal weights when
/// no model beats the mean.
pub fn ensemble_weights(val_r2: [f64; 3]) -> [f64; 3] {
    let clipped = val_r2.map(|r| if r > 0.0 { r } else { 0.0 });
    let total: f64 = clipped.iter().sum();
    if total > 0.0 {
        clipped.map(|r| r / total)
    } else {
        [1.0 / 3.0; 3]
    }
}

/// Scores the split-fitted base models (linear, forest, gbm) on the
/// validation window.
pub type ValidationScorer<'a> = &'a (dyn Fn([&dyn Regressor; 3]) -> Result<[f64; 3]> + Sync);

/// Fits the three base models on the training split, weights them by
/// validation r², then refits each on all rows with the same hyperparameters.
pub fn fit_ensemble(
    x: &Matrix,
    y: &[f64],
    params: &EnsembleParams,
    val_days: usize,
) -> Result<EnsembleFit> {
    let h = holdout(x, y, val_days)?;
    let one_step = |models: [&dyn Regressor; 3]| -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (o, m) in out.iter_mut().zip(models) {
            *o = validation_score(&h.val_y, &m.predict(&h.val_x)?);
        }
        Ok(out)
    };
    fit_ensemble_with(x, y, params, val_days, &one_step)
}

/// [`fit_ensemble`] with a custom validation scorer.
pub fn fit_ensemble_with(
    x: &Matrix,
    y: &[f64],
    params: &EnsembleParams,
    val_days: usize,
    scorer: ValidationScorer<'_>,
) -> Result<EnsembleFit> {
    let h = holdout(x, y, val_days)?;
    let linear = fit_linear(&h.train_x, &h.train_y, &params.linear)?;
    let forest = fit_forest(&h.train_x, &h.train_y, &params.forest)?;
    let gbm = fit_gbm(&h.train_x, &h.train_y, &params.gbm)?;
    let val_r2 = scorer([&linear, &forest, &gbm])?;
    Ok(EnsembleFit {
        linear: fit_linear(x, y, &params.linear)?,
        forest: fit_forest(x, y, &params.forest)?,
        gbm: fit_gbm(x, y, &params.gbm)?,
        weights: ensemble_weights(val_r2),
        val_r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<String>,
    pub controllable: Vec<bool>,
    pub lag_spec: LagSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: i64,
    pub target_name: String,
    pub trained_through: NaiveDate,
    pub seed: u64,
    pub feature_schema: FeatureSchema,
    pub hyperparams: EnsembleParams,
    /// Validation r² of linear, forest, gbm.
    pub val_r2: [f64; 3],
    pub ensemble_weights: [f64; 3],
    pub linear: LinearModel,
    pub forest: Forest,
    pub gbm: Gbm,
}

impl ModelArtifact {
    pub fn n_features(&self) -> usize {
        self.feature_schema.columns.len()
    }

    /// Checks weights and that every base model agrees with the schema.
    pub fn check(&self) -> Result<()> {
        let w = self.ensemble_weights;
        if w.iter().any(|v| !(*v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Parse(format!("invalid ensemble weights {w:?}")));
        }
        let d = self.n_features();
        if self.feature_schema.controllable.len() != d
            || self.feature_schema.lag_spec.feature_names() != self.feature_schema.columns
        {
            return Err(Error::SchemaNames("feature schema is inconsistent".into()));
        }
        let widths = [
            self.linear.coefs.len(),
            self.linear.means.len(),
            self.linear.scales.len(),
            self.forest.n_features(),
            self.gbm.n_features(),
        ];
        if let Some(&w) = widths.iter().find(|&&w| w != d) {
            return Err(Error::SchemaMismatch {
                expected: d,
                found: w,
            });
        }
        let trees = self.forest.trees.iter().chain(&self.gbm.trees);
        for t in trees {
            let n = t.nodes.len();
            for node in &t.nodes {
                if let super::Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } = node
                {
                    if *feature >= d || *left >= n || *right >= n {
                        return Err(Error::Parse("tree node out of range".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Base predictions (linear, forest, gbm) for one row.
    pub fn base_predictions(&self, row: &[f64]) -> [f64; 3] {
        [
            self.linear.predict_row(row),
            self.forest.predict_row(row),
            self.gbm.predict_row(row),
        ]
    }

    /// Checks a feature matrix's column names against the schema.
    pub fn check_columns(&self, names: &[String]) -> Result<()> {
        if names != self.feature_schema.columns.as_slice() {
            return Err(Error::SchemaNames(format!(
                "artifact expects {} columns {:?}..., got {}",
                self.n_features(),
                self.feature_schema.columns.iter().take(3).collect::<Vec<_>>(),
                names.len()
            )));
        }
        Ok(())
    }
}

impl Regressor for ModelArtifact {
    fn n_features(&self) -> usize {
        self.feature_schema.columns.len()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let p = self.base_predictions(row);
        let w = self.ensemble_weights;
        w[0] * p[0] + w[1] * p[1] + w[2] * p[2]
    }
}

/// Tunes, fits, and packages an ensemble for `matrix`'s target.
pub fn train_artifact(matrix: &FeatureMatrix, lag_spec: &LagSpec, cfg: &TrainConfig) -> Result<ModelArtifact> {
    train_artifact_with(matrix, lag_spec, cfg, None)
}

/// [`train_artifact`] with an optional custom ensemble-weight scorer.
pub fn train_artifact_with(
    matrix: &FeatureMatrix,
    lag_spec: &LagSpec,
    cfg: &TrainConfig,
    scorer: Option<ValidationScorer<'_>>,
) -> Result<ModelArtifact> {
    let expected = lag_spec.feature_names();
    if expected != matrix.column_names {
        return Err(Error::SchemaNames("matrix was not built from this lag spec".into()));
    }
    let trained_through = *matrix.row_dates.last().ok_or(Error::TooShortSeries {
        needed: cfg.val_days + 1,
        available: 0,
    })?;
    let tuned = tune(&matrix.x, &matrix.target, cfg)?;
    let params = EnsembleParams {
        linear: tuned.linear,
        forest: tuned.forest,
        gbm: tuned.gbm,
    };
    let fit = match scorer {
        Some(s) => fit_ensemble_with(&matrix.x, &matrix.target, &params, cfg.val_days, s)?,
        None => fit_ensemble(&matrix.x, &matrix.target, &params, cfg.val_days)?,
    };
    Ok(ModelArtifact {
        format_version: ARTIFACT_FORMAT_VERSION,
        target_name: matrix.target_name.clone(),
        trained_through,
        seed: cfg.seed,
        feature_schema: FeatureSchema {
            columns: matrix.column_names.clone(),
            controllable: matrix.controllable.clone(),
            lag_spec: lag_spec.clone(),
        },
        hyperparams: params,
        val_r2: fit.val_r2,
        ensemble_weights: fit.weights,
        linear: fit.linear,
        forest: fit.forest,
        gbm: fit.gbm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_rules() {
        assert_eq!(ensemble_weights([0.5, 0.5, 0.0]), [0.5, 0.5, 0.0]);
        assert_eq!(ensemble_weights([-1.0, -1.0, -1.0]), [1.0 / 3.0; 3]);
        let w = ensemble_weights([0.9, 0.3, 0.6]);
        let expected = [0.9 / 1.8, 0.3 / 1.8, 0.6 / 1.8];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
