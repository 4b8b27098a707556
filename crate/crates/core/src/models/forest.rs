use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::StreamRng;
use super::tree::{check_data, grow, FeatureSampler, RegressionTree, TreeParams};
use super::Regressor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree: TreeParams,
    pub n_trees: usize,
    /// Fraction of features offered to each split, in `(0, 1]`.
    pub feature_subsample: f64,
    pub seed: u64,
    /// Draw a bootstrap sample per tree. Off only in tests.
    #[serde(default = "yes")]
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            tree: TreeParams {
                max_depth: 8,
                min_samples_leaf: 2,
            },
            n_trees: 100,
            feature_subsample: 0.5,
            seed: 0,
            bootstrap: true,
        }
    }
}

/// Bagged CART ensemble. Tree `t` draws from random stream `(seed, t)`:
/// first `n` bootstrap indices, then one feature subset per attempted split
/// in pre-order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
}

impl Forest {
    /// Prediction of the first `n_trees` trees only.
    pub fn predict_prefix(&self, row: &[f64], n_trees: usize) -> f64 {
        let k = n_trees.min(self.trees.len());
        self.trees[..k].iter().map(|t| t.predict_row(row)).sum::<f64>() / k as f64
    }
}

impl Regressor for Forest {
    fn n_features(&self) -> usize {
        self.trees.first().map_or(0, |t| t.n_features)
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_prefix(row, self.trees.len())
    }
}

pub fn fit_forest(x: &Matrix, y: &[f64], params: &ForestParams) -> Result<Forest> {
    check_data(x, y)?;
    params.tree.check()?;
    if params.n_trees < 1 {
        return Err(Error::InvalidParams("n_trees must be >= 1".into()));
    }
    if !(params.feature_subsample > 0.0 && params.feature_subsample <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "feature_subsample {} outside (0, 1]",
            params.feature_subsample
        )));
    }
    let n = x.rows();
    let d = x.cols();
    let k = ((params.feature_subsample * d as f64).ceil() as usize).clamp(1, d.max(1));

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = StreamRng::new(params.seed, t as u64);
            let mut indices: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.below(n)).collect()
            } else {
                (0..n).collect()
            };
            indices.sort_unstable();
            grow(
                x,
                y,
                &params.tree,
                indices,
                Some(FeatureSampler { rng: &mut rng, k }),
            )
        })
        .collect();
    Ok(Forest { trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::fit_tree;

    fn data() -> (Matrix, Vec<f64>) {
        let mut rng = StreamRng::new(3, 0);
        let rows: Vec<[f64; 3]> = (0..60).map(|_| [rng.unit(), rng.unit(), rng.unit()]).collect();
        let y = rows.iter().map(|r| 4.0 * r[0] - r[1] + 0.3 * rng.normal()).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn degenerate_forest_is_a_tree() {
        let (x, y) = data();
        let params = ForestParams {
            tree: TreeParams {
                max_depth: 4,
                min_samples_leaf: 2,
            },
            n_trees: 1,
            feature_subsample: 1.0,
            seed: 9,
            bootstrap: false,
        };
        let forest = fit_forest(&x, &y, &params).unwrap();
        let tree = fit_tree(&x, &y, &params.tree).unwrap();
        assert_eq!(forest.trees[0], tree);
    }

    #[test]
    fn seeded_and_bounded() {
        let (x, y) = data();
        let params = ForestParams {
            n_trees: 20,
            seed: 5,
            ..Default::default()
        };
        let a = fit_forest(&x, &y, &params).unwrap();
        let b = fit_forest(&x, &y, &params).unwrap();
        assert_eq!(a, b);
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for p in a.predict(&x).unwrap() {
            assert!(p >= lo && p <= hi);
        }
        let other = fit_forest(&x, &y, &ForestParams { seed: 6, ..params }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn prefix_matches_smaller_forest() {
        let (x, y) = data();
        let big = fit_forest(&x, &y, &ForestParams { n_trees: 12, ..Default::default() }).unwrap();
        let small = fit_forest(&x, &y, &ForestParams { n_trees: 5, ..Default::default() }).unwrap();
        for row in x.iter_rows() {
            assert_eq!(big.predict_prefix(row, 5), small.predict_row(row));
        }
    }

    #[test]
    fn rejects_bad_params() {
        let (x, y) = data();
        assert!(fit_forest(&x, &y, &ForestParams { n_trees: 0, ..Default::default() }).is_err());
        assert!(fit_forest(&x, &y, &ForestParams { feature_subsample: 0.0, ..Default::default() }).is_err());
    }
}
