use serde::{Deserialize, Serialize};

use super::tree::{check_data, fit_tree, RegressionTree, TreeParams};
use super::Regressor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub tree: TreeParams,
    pub n_rounds: usize,
    pub learning_rate: f64,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            tree: TreeParams {
                max_depth: 3,
                min_samples_leaf: 2,
            },
            n_rounds: 100,
            learning_rate: 0.1,
        }
    }
}

/// Least-squares gradient boosting: `F_0 = mean(y)`, then each round adds
/// `learning_rate * h_m` with `h_m` a tree fit to the current residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbm {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl Gbm {
    /// Prediction after the first `rounds` boosting rounds.
    pub fn predict_staged(&self, row: &[f64], rounds: usize) -> f64 {
        let mut f = self.init;
        for tree in self.trees.iter().take(rounds) {
            f += self.learning_rate * tree.predict_row(row);
        }
        f
    }
}

impl Regressor for Gbm {
    fn n_features(&self) -> usize {
        self.trees.first().map_or(0, |t| t.n_features)
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_staged(row, self.trees.len())
    }
}

pub fn fit_gbm(x: &Matrix, y: &[f64], params: &GbmParams) -> Result<Gbm> {
    check_data(x, y)?;
    params.tree.check()?;
    if params.n_rounds < 1 {
        return Err(Error::InvalidParams("n_rounds must be >= 1".into()));
    }
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "learning_rate {} outside (0, 1]",
            params.learning_rate
        )));
    }
    let init = y.iter().sum::<f64>() / y.len() as f64;
    let mut fitted = vec![init; y.len()];
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, f)| a - f).collect();
        let tree = fit_tree(x, &residuals, &params.tree)?;
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += params.learning_rate * tree.predict_row(x.row(i));
        }
        trees.push(tree);
    }
    Ok(Gbm {
        init,
        learning_rate: params.learning_rate,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn single_round_unrolled() {
        let x = col(&[0.0, 1.0, 2.0, 3.0]);
        let y = [1.0, 2.0, 7.0, 9.0];
        let p = GbmParams {
            tree: TreeParams {
                max_depth: 1,
                min_samples_leaf: 1,
            },
            n_rounds: 1,
            learning_rate: 1.0,
        };
        let g = fit_gbm(&x, &y, &p).unwrap();
        let mean = 4.75;
        let resid: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let tree = fit_tree(&x, &resid, &p.tree).unwrap();
        for row in x.iter_rows() {
            assert_eq!(g.predict_row(row), mean + tree.predict_row(row));
        }
    }

    #[test]
    fn constant_target() {
        let g = fit_gbm(&col(&[0.0, 1.0, 2.0]), &[3.0; 3], &GbmParams { n_rounds: 1, ..Default::default() })
            .unwrap();
        assert_eq!(g.predict_row(&[10.0]), 3.0);
    }

    #[test]
    fn zero_rounds_rejected() {
        assert!(fit_gbm(&col(&[0.0, 1.0]), &[1.0, 2.0], &GbmParams { n_rounds: 0, ..Default::default() })
            .is_err());
        assert!(fit_gbm(
            &col(&[0.0, 1.0]),
            &[1.0, 2.0],
            &GbmParams { learning_rate: 1.5, ..Default::default() }
        )
        .is_err());
    }
}
