use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    fit_forest, fit_gbm, fit_linear, ForestParams, GbmParams, LinearParams, Regressor, TreeParams,
};
use crate::backtest::r_squared;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Candidate hyperparameters, searched in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grids {
    pub ridge_lambda: Vec<f64>,
    pub forest_n_trees: Vec<usize>,
    pub forest_max_depth: Vec<usize>,
    pub gbm_n_rounds: Vec<usize>,
    pub gbm_learning_rate: Vec<f64>,
    pub gbm_max_depth: Vec<usize>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            ridge_lambda: vec![0.01, 0.1, 1.0, 10.0],
            forest_n_trees: vec![100, 300],
            forest_max_depth: vec![4, 8],
            gbm_n_rounds: vec![100, 300],
            gbm_learning_rate: vec![0.05, 0.1],
            gbm_max_depth: vec![2, 3],
        }
    }
}

impl Grids {
    fn check(&self) -> Result<()> {
        if self.ridge_lambda.is_empty()
            || self.forest_n_trees.is_empty()
            || self.forest_max_depth.is_empty()
            || self.gbm_n_rounds.is_empty()
            || self.gbm_learning_rate.is_empty()
            || self.gbm_max_depth.is_empty()
        {
            return Err(Error::InvalidParams("every grid needs at least one value".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub grids: Grids,
    /// Trailing rows held out for tuning and ensemble weighting.
    pub val_days: usize,
    pub min_samples_leaf: usize,
    pub feature_subsample: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            grids: Grids::default(),
            val_days: 14,
            min_samples_leaf: 2,
            feature_subsample: 0.5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedParams {
    pub linear: LinearParams,
    pub forest: ForestParams,
    pub gbm: GbmParams,
    /// Validation score of each winner: linear, forest, gbm.
    pub val_r2: [f64; 3],
}

/// r² on a validation window. A constant window has no r²; it scores 1 for
/// an exact fit and 0 otherwise.
pub fn validation_score(y_true: &[f64], y_pred: &[f64]) -> f64 {
    match r_squared(y_true, y_pred) {
        Ok(r2) => r2,
        Err(_) => {
            let scale = y_true.iter().map(|v| v * v).sum::<f64>().max(1.0);
            let sse: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b).powi(2)).sum();
            if sse <= 1e-18 * scale {
                1.0
            } else {
                0.0
            }
        }
    }
}

pub(crate) struct Holdout {
    pub train_x: Matrix,
    pub train_y: Vec<f64>,
    pub val_x: Matrix,
    pub val_y: Vec<f64>,
}

pub(crate) fn holdout(x: &Matrix, y: &[f64], val_days: usize) -> Result<Holdout> {
    let n = x.rows();
    if val_days < 7 || n <= val_days {
        return Err(Error::TooShortSeries {
            needed: val_days.max(7) + 1,
            available: n,
        });
    }
    let cut = n - val_days;
    Ok(Holdout {
        train_x: x.slice_rows(0..cut),
        train_y: y[..cut].to_vec(),
        val_x: x.slice_rows(cut..n),
        val_y: y[cut..].to_vec(),
    })
}

/// Picks the highest-scoring point of `scores`; ties keep the earliest.
fn argmax_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Time-aware holdout search: fit on all but the last `val_days` rows, score
/// r² on those rows, keep the best grid point per model.
pub fn tune(x: &Matrix, y: &[f64], cfg: &TrainConfig) -> Result<TunedParams> {
    cfg.grids.check()?;
    let h = holdout(x, y, cfg.val_days)?;
    let (linear, s_lin) = tune_linear(&h, &cfg.grids)?;
    let (forest, s_for) = tune_forest(&h, cfg)?;
    let (gbm, s_gbm) = tune_gbm(&h, cfg)?;
    Ok(TunedParams {
        linear,
        forest,
        gbm,
        val_r2: [s_lin, s_for, s_gbm],
    })
}

fn tune_linear(h: &Holdout, grids: &Grids) -> Result<(LinearParams, f64)> {
    let mut last_err = None;
    let scores: Vec<f64> = grids
        .ridge_lambda
        .iter()
        .map(|&lambda| {
            let p = LinearParams { ridge_lambda: lambda };
            match fit_linear(&h.train_x, &h.train_y, &p).and_then(|m| m.predict(&h.val_x)) {
                Ok(pred) => validation_score(&h.val_y, &pred),
                Err(e) => {
                    last_err = Some(e);
                    f64::NEG_INFINITY
                }
            }
        })
        .collect();
    let best = argmax_first(&scores).expect("non-empty grid");
    if scores[best] == f64::NEG_INFINITY {
        return Err(last_err.unwrap_or(Error::SingularSystem));
    }
    Ok((
        LinearParams {
            ridge_lambda: grids.ridge_lambda[best],
        },
        scores[best],
    ))
}

fn tune_forest(h: &Holdout, cfg: &TrainConfig) -> Result<(ForestParams, f64)> {
    let g = &cfg.grids;
    let max_trees = *g.forest_n_trees.iter().max().expect("non-empty grid");
    // One forest per depth; smaller tree counts are exact prefixes because
    // each tree owns its random stream.
    let mut by_depth = Vec::with_capacity(g.forest_max_depth.len());
    for &depth in &g.forest_max_depth {
        let params = forest_params(cfg, depth, max_trees);
        let forest = fit_forest(&h.train_x, &h.train_y, &params)?;
        let scores: Vec<f64> = g
            .forest_n_trees
            .iter()
            .map(|&k| {
                let pred: Vec<f64> = h.val_x.iter_rows().map(|r| forest.predict_prefix(r, k)).collect();
                validation_score(&h.val_y, &pred)
            })
            .collect();
        by_depth.push(scores);
    }
    let mut points = Vec::new();
    let mut scores = Vec::new();
    for (ti, &n_trees) in g.forest_n_trees.iter().enumerate() {
        for (di, &depth) in g.forest_max_depth.iter().enumerate() {
            points.push(forest_params(cfg, depth, n_trees));
            scores.push(by_depth[di][ti]);
        }
    }
    let best = argmax_first(&scores).expect("non-empty grid");
    Ok((points[best], scores[best]))
}

fn forest_params(cfg: &TrainConfig, depth: usize, n_trees: usize) -> ForestParams {
    ForestParams {
        tree: TreeParams {
            max_depth: depth,
            min_samples_leaf: cfg.min_samples_leaf,
        },
        n_trees,
        feature_subsample: cfg.feature_subsample,
        seed: cfg.seed,
        bootstrap: true,
    }
}

fn tune_gbm(h: &Holdout, cfg: &TrainConfig) -> Result<(GbmParams, f64)> {
    let g = &cfg.grids;
    let max_rounds = *g.gbm_n_rounds.iter().max().expect("non-empty grid");
    let combos: Vec<(f64, usize)> = g
        .gbm_learning_rate
        .iter()
        .flat_map(|&lr| g.gbm_max_depth.iter().map(move |&d| (lr, d)))
        .collect();
    // Fewer rounds are exact stages of the longest run.
    let staged: Vec<Vec<f64>> = combos
        .par_iter()
        .map(|&(lr, depth)| {
            let params = gbm_params(cfg, depth, max_rounds, lr);
            let gbm = fit_gbm(&h.train_x, &h.train_y, &params)?;
            Ok(g.gbm_n_rounds
                .iter()
                .map(|&rounds| {
                    let pred: Vec<f64> =
                        h.val_x.iter_rows().map(|r| gbm.predict_staged(r, rounds)).collect();
                    validation_score(&h.val_y, &pred)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut scores = Vec::new();
    for (ri, &rounds) in g.gbm_n_rounds.iter().enumerate() {
        for (ci, &(lr, depth)) in combos.iter().enumerate() {
            points.push(gbm_params(cfg, depth, rounds, lr));
            scores.push(staged[ci][ri]);
        }
    }
    let best = argmax_first(&scores).expect("non-empty grid");
    Ok((points[best], scores[best]))
}

fn gbm_params(cfg: &TrainConfig, depth: usize, n_rounds: usize, learning_rate: f64) -> GbmParams {
    GbmParams {
        tree: TreeParams {
            max_depth: depth,
            min_samples_leaf: cfg.min_samples_leaf,
        },
        n_rounds,
        learning_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::rng::StreamRng;

    fn noisy_line(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = StreamRng::new(seed, 0);
        let xs: Vec<f64> = (0..n).map(|_| rng.unit() * 10.0).collect();
        let y = xs.iter().map(|x| 2.0 * x + 0.1 * rng.normal()).collect();
        (Matrix::new(n, 1, xs).unwrap(), y)
    }

    fn small(cfg_grids: Grids) -> TrainConfig {
        TrainConfig {
            grids: cfg_grids,
            ..Default::default()
        }
    }

    fn tiny_grids() -> Grids {
        Grids {
            ridge_lambda: vec![1.0],
            forest_n_trees: vec![5],
            forest_max_depth: vec![2],
            gbm_n_rounds: vec![5],
            gbm_learning_rate: vec![0.1],
            gbm_max_depth: vec![2],
        }
    }

    #[test]
    fn single_point_grid() {
        let (x, y) = noisy_line(40, 1);
        let t = tune(&x, &y, &small(tiny_grids())).unwrap();
        assert_eq!(t.linear.ridge_lambda, 1.0);
        assert_eq!(t.forest.n_trees, 5);
        assert_eq!(t.gbm.n_rounds, 5);
    }

    #[test]
    fn ridge_prefers_small_lambda_on_clean_signal() {
        let (x, y) = noisy_line(60, 2);
        let grids = Grids {
            ridge_lambda: vec![0.01, 1000.0],
            ..tiny_grids()
        };
        let t = tune(&x, &y, &small(grids)).unwrap();
        // Same holdout evaluated directly.
        let h = holdout(&x, &y, 14).unwrap();
        let score = |lambda| {
            let m = fit_linear(&h.train_x, &h.train_y, &LinearParams { ridge_lambda: lambda }).unwrap();
            validation_score(&h.val_y, &m.predict(&h.val_x).unwrap())
        };
        assert!(score(0.01) > score(1000.0));
        assert_eq!(t.linear.ridge_lambda, 0.01);
        assert_eq!(t.val_r2[0], score(0.01));
    }

    #[test]
    fn ties_keep_first_declared() {
        // A constant target scores 1.0 for every ridge strength.
        let (x, _) = noisy_line(30, 3);
        let y = vec![5.0; 30];
        let grids = Grids {
            ridge_lambda: vec![3.0, 0.5, 7.0],
            ..tiny_grids()
        };
        let t = tune(&x, &y, &small(grids)).unwrap();
        assert_eq!(t.linear.ridge_lambda, 3.0);
        assert_eq!(argmax_first(&[1.0, 2.0, 2.0]), Some(1));
    }

    #[test]
    fn staged_tuning_matches_direct_fits() {
        let (x, y) = noisy_line(50, 4);
        let grids = Grids {
            forest_n_trees: vec![3, 8],
            forest_max_depth: vec![2, 3],
            gbm_n_rounds: vec![4, 9],
            gbm_learning_rate: vec![0.1, 0.3],
            gbm_max_depth: vec![1, 2],
            ..tiny_grids()
        };
        let cfg = small(grids.clone());
        let t = tune(&x, &y, &cfg).unwrap();
        let h = holdout(&x, &y, cfg.val_days).unwrap();
        let mut best = (f64::NEG_INFINITY, None);
        for &n in &grids.forest_n_trees {
            for &d in &grids.forest_max_depth {
                let p = forest_params(&cfg, d, n);
                let f = fit_forest(&h.train_x, &h.train_y, &p).unwrap();
                let s = validation_score(&h.val_y, &f.predict(&h.val_x).unwrap());
                if s > best.0 {
                    best = (s, Some(p));
                }
            }
        }
        assert_eq!(t.forest, best.1.unwrap());
        assert_eq!(t.val_r2[1], best.0);

        let mut best = (f64::NEG_INFINITY, None);
        for &n in &grids.gbm_n_rounds {
            for &lr in &grids.gbm_learning_rate {
                for &d in &grids.gbm_max_depth {
                    let p = gbm_params(&cfg, d, n, lr);
                    let g = fit_gbm(&h.train_x, &h.train_y, &p).unwrap();
                    let s = validation_score(&h.val_y, &g.predict(&h.val_x).unwrap());
                    if s > best.0 {
                        best = (s, Some(p));
                    }
                }
            }
        }
        assert_eq!(t.gbm, best.1.unwrap());
    }

    #[test]
    fn too_short() {
        let (x, y) = noisy_line(14, 5);
        assert!(matches!(
            tune(&x, &y, &small(tiny_grids())),
            Err(Error::TooShortSeries { .. })
        ));
        let (x, y) = noisy_line(30, 5);
        let cfg = TrainConfig {
            val_days: 5,
            ..small(tiny_grids())
        };
        assert!(tune(&x, &y, &cfg).is_err());
    }
}
