//! Permutation importance, partial dependence, and a recency- and
//! case-weighted LIME surrogate.

use std::cmp::Ordering;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::backtest::r_squared;
use crate::error::{Error, Result};
use crate::features::{build_matrix, FeatureMatrix};
use crate::ingest::{SeriesFrame, CASES};
use crate::matrix::Matrix;
use crate::models::rng::StreamRng;
use crate::models::{fit_weighted_ridge, ModelArtifact, Regressor};

/// Rows before the instance that LIME resamples from.
pub const DONOR_WINDOW_DAYS: usize = 56;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Kernel width on the RMS standardised distance.
    pub kernel_width: f64,
    /// Half-life of the donor-age weight; `inf` disables it.
    pub recency_halflife_days: f64,
    /// Lower bound of the case weight; 1 disables it.
    pub case_weight_floor: f64,
    pub surrogate_ridge: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_samples: 1000,
            kernel_width: 0.75,
            recency_halflife_days: 14.0,
            case_weight_floor: 0.1,
            surrogate_ridge: 0.01,
            seed: 42,
        }
    }
}

impl LimeConfig {
    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.n_samples < 100 {
            return bad("n_samples must be >= 100");
        }
        if !(self.kernel_width > 0.0) {
            return bad("kernel_width must be positive");
        }
        if !(self.recency_halflife_days > 0.0) {
            return bad("recency_halflife_days must be positive");
        }
        if !(self.case_weight_floor >= 0.0) {
            return bad("case_weight_floor must be >= 0");
        }
        if !(self.surrogate_ridge >= 0.0 && self.surrogate_ridge.is_finite()) {
            return bad("surrogate_ridge must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainMethod {
    Lime,
    Permutation,
    Pdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub target_date: NaiveDate,
    /// Sorted by |weight| descending, then by name.
    pub contributions: Vec<Contribution>,
    pub intercept: f64,
    pub fidelity_r2: f64,
    pub method: ExplainMethod,
}

fn by_magnitude(a: &Contribution, b: &Contribution) -> Ordering {
    b.weight
        .abs()
        .total_cmp(&a.weight.abs())
        .then_with(|| a.feature.cmp(&b.feature))
}

/// Feature with the largest |weight|; ties go to the smallest name.
pub fn most_impactful(explanation: &Explanation) -> Result<&str> {
    explanation
        .contributions
        .iter()
        .min_by(|a, b| by_magnitude(a, b))
        .map(|c| c.feature.as_str())
        .ok_or(Error::EmptyExplanation)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub importance: f64,
}

/// Mean r² drop when each column is shuffled, largest first. Column `j` uses
/// RNG stream `j`, so results do not depend on column evaluation order.
pub fn permutation_importance(
    model: &dyn Regressor,
    data: &FeatureMatrix,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>> {
    let n = data.n_rows();
    if n < 10 {
        return Err(Error::TooShortSeries {
            needed: 10,
            available: n,
        });
    }
    if n_repeats < 1 {
        return Err(Error::InvalidParams("n_repeats must be >= 1".into()));
    }
    let base = r_squared(&data.target, &model.predict(&data.x)?)?;
    let mut out = Vec::with_capacity(data.n_features());
    for (j, name) in data.column_names.iter().enumerate() {
        let mut rng = StreamRng::new(seed, j as u64);
        let original = data.x.column(j);
        let mut x = data.x.clone();
        let mut drop_sum = 0.0;
        for _ in 0..n_repeats {
            let mut col = original.clone();
            rng.shuffle(&mut col);
            x.set_column(j, &col);
            drop_sum += base - r_squared(&data.target, &model.predict(&x)?)?;
        }
        out.push(FeatureImportance {
            feature: name.clone(),
            importance: drop_sum / n_repeats as f64,
        });
    }
    out.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    Ok(out)
}

/// Mean prediction with `feature` forced to each grid value.
pub fn partial_dependence(
    model: &dyn Regressor,
    data: &FeatureMatrix,
    feature: &str,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let j = data
        .column_index(feature)
        .ok_or_else(|| Error::UnknownColumn(feature.to_string()))?;
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::TooShortSeries {
            needed: 1,
            available: 0,
        });
    }
    let mut x = data.x.clone();
    grid.iter()
        .map(|v| {
            x.set_column(j, &vec![*v; n]);
            let preds = model.predict(&x)?;
            Ok((*v, preds.iter().sum::<f64>() / n as f64))
        })
        .collect()
}

/// Local linear surrogate around the row dated `instance_date`.
///
/// Samples resample every feature independently from the last 56 rows up to
/// the instance, so ordinal policy levels stay valid. Sample `i` is weighted
/// `exp(-d^2/sigma^2) * 2^(-age/tau) * max(floor, cases_lag1 / max)`, where
/// `d` is the RMS standardised distance to the instance and `age` the mean
/// donor age in days. Sample 0 is the instance itself.
pub fn lime_explain(
    model: &dyn Regressor,
    context: &FeatureMatrix,
    instance_date: NaiveDate,
    cfg: &LimeConfig,
) -> Result<Explanation> {
    cfg.check()?;
    let row = context.row_of(instance_date).ok_or(Error::UnknownDate(instance_date))?;
    if context.n_features() != model.n_features() {
        return Err(Error::SchemaMismatch {
            expected: model.n_features(),
            found: context.n_features(),
        });
    }
    let d = context.n_features();
    let first = (row + 1).saturating_sub(DONOR_WINDOW_DAYS);
    let donors: Vec<usize> = (first..=row).collect();
    let instance = context.x.row(row).to_vec();

    let scales: Vec<f64> = (0..d)
        .map(|j| {
            let vals: Vec<f64> = donors.iter().map(|&r| context.x.get(r, j)).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
        })
        .collect();
    let case_col = context.column_index(&format!("{CASES}_lag1"));
    let max_cases = case_col.map_or(0.0, |j| {
        donors
            .iter()
            .map(|&r| context.x.get(r, j))
            .fold(0.0f64, f64::max)
    });

    let mut rng = StreamRng::new(cfg.seed, 0);
    let mut samples = Matrix::zeros(cfg.n_samples, d);
    let mut weights = Vec::with_capacity(cfg.n_samples);
    let mut sample = vec![0.0; d];
    for i in 0..cfg.n_samples {
        let mut age = 0.0;
        if i == 0 {
            sample.copy_from_slice(&instance);
        } else {
            for (j, v) in sample.iter_mut().enumerate() {
                let r = donors[rng.below(donors.len())];
                *v = context.x.get(r, j);
                age += (instance_date - context.row_dates[r]).num_days() as f64;
            }
            age /= d.max(1) as f64;
        }
        let mut dist2 = 0.0;
        for j in 0..d {
            if scales[j] > 0.0 {
                dist2 += ((sample[j] - instance[j]) / scales[j]).powi(2);
            }
        }
        dist2 /= d.max(1) as f64;
        let kernel = (-dist2 / (cfg.kernel_width * cfg.kernel_width)).exp();
        let recency = (-std::f64::consts::LN_2 * age / cfg.recency_halflife_days).exp();
        let cases = match case_col {
            Some(j) if max_cases > 0.0 => cfg.case_weight_floor.max(sample[j] / max_cases),
            _ => 1.0,
        };
        weights.push(kernel * recency * cases);
        for (j, v) in sample.iter().enumerate() {
            samples.set(i, j, *v);
        }
    }
    let preds = model.predict(&samples)?;

    // Columns that never vary carry no local signal.
    let active: Vec<usize> = (0..d).filter(|&j| scales[j] > 0.0).collect();
    let mut contributions: Vec<Contribution> = context
        .column_names
        .iter()
        .map(|name| Contribution {
            feature: name.clone(),
            weight: 0.0,
        })
        .collect();
    let wsum: f64 = weights.iter().sum();
    let wmean_pred = weights.iter().zip(&preds).map(|(w, p)| w * p).sum::<f64>() / wsum;
    let (intercept, fitted) = if active.is_empty() {
        (wmean_pred, vec![wmean_pred; preds.len()])
    } else {
        let sub = Matrix::from_rows(
            &samples
                .iter_rows()
                .map(|r| active.iter().map(|&j| r[j]).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        )?;
        let surrogate = fit_weighted_ridge(&sub, &preds, Some(&weights), cfg.surrogate_ridge)?;
        for (k, &j) in active.iter().enumerate() {
            contributions[j].weight = surrogate.raw_slopes()[k];
        }
        (surrogate.raw_intercept(), surrogate.predict(&sub)?)
    };

    let ss_tot: f64 = weights
        .iter()
        .zip(&preds)
        .map(|(w, p)| w * (p - wmean_pred).powi(2))
        .sum();
    let ss_res: f64 = weights
        .iter()
        .zip(preds.iter().zip(&fitted))
        .map(|(w, (p, f))| w * (p - f).powi(2))
        .sum();
    let constant = preds.iter().all(|p| *p == preds[0]);
    let fidelity_r2 = if constant || ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };

    contributions.sort_by(by_magnitude);
    Ok(Explanation {
        target_date: instance_date,
        contributions,
        intercept,
        fidelity_r2,
        method: ExplainMethod::Lime,
    })
}

/// LIME for a trained artifact over its own feature matrix of `frame`.
pub fn explain_artifact(
    artifact: &ModelArtifact,
    frame: &SeriesFrame,
    date: NaiveDate,
    cfg: &LimeConfig,
) -> Result<Explanation> {
    let spec = &artifact.feature_schema.lag_spec;
    let context = build_matrix(frame, spec, &artifact.target_name)?;
    artifact.check_columns(&context.column_names)?;
    lime_explain(artifact, &context, date, cfg)
}
