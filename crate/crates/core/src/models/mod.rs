//! Base regressors (ridge, CART forest, gradient boosting), time-aware
//! hyperparameter search, and the weighted ensemble artifact.

mod ensemble;
mod forest;
mod gbm;
mod linear;
pub mod rng;
mod tree;
mod tune;

pub use ensemble::{
    ensemble_weights, fit_ensemble, fit_ensemble_with, train_artifact, train_artifact_with,
    EnsembleFit, EnsembleParams, FeatureSchema, ModelArtifact, ValidationScorer,
    ARTIFACT_FORMAT_VERSION,
};
pub use forest::{fit_forest, Forest, ForestParams};
pub use gbm::{fit_gbm, Gbm, GbmParams};
pub use linear::{fit_linear, LinearModel, LinearParams};
pub use tree::{fit_tree, Node, RegressionTree, TreeParams};
pub use tune::{tune, validation_score, Grids, TrainConfig, TunedParams};

pub(crate) use linear::fit_weighted_ridge;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A fitted model mapping a feature row to a prediction.
pub trait Regressor: Send + Sync {
    fn n_features(&self) -> usize;

    fn predict_row(&self, row: &[f64]) -> f64;

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features() {
            return Err(Error::SchemaMismatch {
                expected: self.n_features(),
                found: x.cols(),
            });
        }
        Ok(x.iter_rows().map(|r| self.predict_row(r)).collect())
    }
}

/// Wraps a closure as a [`Regressor`]; handy for black-box explanations.
pub struct FnModel<F> {
    n_features: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnModel<F> {
    pub fn new(n_features: usize, f: F) -> Self {
        FnModel { n_features, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Regressor for FnModel<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        (self.f)(row)
    }
}
