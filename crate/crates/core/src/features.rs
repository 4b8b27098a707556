//! Lagged design matrices built from an imputed [`SeriesFrame`].
//!
//! Column naming: `<col>` for a current-day value, `<col>_lag<k>` for the
//! value `k` days earlier, and `dow_0` .. `dow_6` (Monday = 0) one-hot
//! day-of-week indicators, always last.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ColumnKind, ColumnMeta, SeriesFrame, CASES};
use crate::matrix::Matrix;

pub const DOW_COLUMNS: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLags {
    pub column: String,
    pub lags: Vec<usize>,
    #[serde(default)]
    pub include_current: bool,
}

/// Which lags of which columns enter the design matrix, in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSpec {
    pub columns: Vec<ColumnLags>,
}

impl Default for LagSpec {
    fn default() -> Self {
        let entry = |column: &str, lags: &[usize], include_current: bool| ColumnLags {
            column: column.to_string(),
            lags: lags.to_vec(),
            include_current,
        };
        LagSpec {
            columns: vec![
                entry(CASES, &[1, 2, 3, 7, 14], false),
                entry("tests", &[1, 7], false),
                entry("temperature_c", &[1], true),
                entry("wind_speed_ms", &[1], true),
                entry("humidity_pct", &[1], true),
                entry("mobility_index", &[1, 7], false),
                entry("policy_stay_at_home", &[1, 7], true),
                entry("policy_school_closing", &[1, 7], true),
                entry("policy_workplace_closing", &[1, 7], true),
                entry("policy_gatherings", &[1, 7], true),
            ],
        }
    }
}

impl LagSpec {
    pub fn max_lag(&self) -> usize {
        self.columns
            .iter()
            .flat_map(|c| c.lags.iter().copied())
            .max()
            .unwrap_or(0)
    }

    pub fn entry(&self, column: &str) -> Option<&ColumnLags> {
        self.columns.iter().find(|c| c.column == column)
    }

    /// Sets (or adds) the lag list for a column.
    pub fn set_lags(&mut self, column: &str, lags: Vec<usize>) {
        match self.columns.iter_mut().find(|c| c.column == column) {
            Some(c) => c.lags = lags,
            None => self.columns.push(ColumnLags {
                column: column.to_string(),
                lags,
                include_current: false,
            }),
        }
    }

    pub fn set_current(&mut self, column: &str, include: bool) {
        match self.columns.iter_mut().find(|c| c.column == column) {
            Some(c) => c.include_current = include,
            None => self.columns.push(ColumnLags {
                column: column.to_string(),
                lags: Vec::new(),
                include_current: include,
            }),
        }
    }

    /// Checks structural rules; `target` may never be used at lag 0.
    pub fn check(&self, target: &str) -> Result<()> {
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|o| o.column == c.column) {
                return Err(Error::InvalidLagSpec(format!(
                    "column `{}` listed twice",
                    c.column
                )));
            }
            if c.lags.contains(&0) {
                return Err(Error::InvalidLagSpec(format!(
                    "lag 0 for `{}`; use include_current",
                    c.column
                )));
            }
            let mut sorted = c.lags.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != c.lags.len() {
                return Err(Error::InvalidLagSpec(format!(
                    "duplicate lag for `{}`",
                    c.column
                )));
            }
            let is_target = c.column == target
                || ColumnMeta::for_column(&c.column).kind == ColumnKind::Target;
            if c.include_current && is_target {
                return Err(Error::InvalidLagSpec(format!(
                    "target column `{}` cannot be a current-day feature",
                    c.column
                )));
            }
        }
        Ok(())
    }

    /// Feature names in matrix order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for c in &self.columns {
            if c.include_current {
                names.push(c.column.clone());
            }
            for k in &c.lags {
                names.push(format!("{}_lag{k}", c.column));
            }
        }
        names.extend((0..DOW_COLUMNS).map(|i| format!("dow_{i}")));
        names
    }

    /// Base column of each feature (`None` for day-of-week indicators).
    pub fn feature_sources(&self) -> Vec<Option<&str>> {
        let mut out = Vec::new();
        for c in &self.columns {
            let n = c.lags.len() + usize::from(c.include_current);
            out.extend(std::iter::repeat_n(Some(c.column.as_str()), n));
        }
        out.extend(std::iter::repeat_n(None, DOW_COLUMNS));
        out
    }

    /// Appends the feature row for day index `t` (dated `date`) to `out`.
    /// `value(column, i)` must return the series value at day index `i`.
    pub fn row_into<F>(&self, value: F, t: usize, date: NaiveDate, out: &mut Vec<f64>)
    where
        F: Fn(&str, usize) -> f64,
    {
        for c in &self.columns {
            if c.include_current {
                out.push(value(&c.column, t));
            }
            for k in &c.lags {
                out.push(value(&c.column, t - k));
            }
        }
        let dow = day_of_week(date);
        out.extend((0..DOW_COLUMNS).map(|i| if i == dow { 1.0 } else { 0.0 }));
    }
}

/// Monday = 0 through Sunday = 6.
pub fn day_of_week(date: NaiveDate) -> usize {
    date.weekday().num_days_from_monday() as usize
}

/// Dense supervised design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub x: Matrix,
    pub column_names: Vec<String>,
    pub controllable: Vec<bool>,
    pub row_dates: Vec<NaiveDate>,
    pub target: Vec<f64>,
    pub target_name: String,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn row_of(&self, date: NaiveDate) -> Option<usize> {
        self.row_dates.binary_search(&date).ok()
    }

    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> FeatureMatrix {
        FeatureMatrix {
            x: self.x.slice_rows(range.clone()),
            column_names: self.column_names.clone(),
            controllable: self.controllable.clone(),
            row_dates: self.row_dates[range.clone()].to_vec(),
            target: self.target[range].to_vec(),
            target_name: self.target_name.clone(),
        }
    }
}

pub fn build_matrix(frame: &SeriesFrame, spec: &LagSpec, target_name: &str) -> Result<FeatureMatrix> {
    spec.check(target_name)?;
    let target = frame.dense(target_name)?;
    let mut series = Vec::with_capacity(spec.columns.len());
    for c in &spec.columns {
        series.push((c.column.as_str(), frame.dense(&c.column)?));
    }
    let max_lag = spec.max_lag();
    if frame.len() <= max_lag {
        return Err(Error::TooShortSeries {
            needed: max_lag + 1,
            available: frame.len(),
        });
    }

    let lookup = |col: &str, i: usize| {
        series
            .iter()
            .find(|(name, _)| *name == col)
            .map(|(_, v)| v[i])
            .expect("column resolved above")
    };
    let names = spec.feature_names();
    let n = frame.len() - max_lag;
    let mut data = Vec::with_capacity(n * names.len());
    for t in max_lag..frame.len() {
        spec.row_into(lookup, t, frame.dates()[t], &mut data);
    }
    let controllable = spec
        .feature_sources()
        .iter()
        .map(|src| {
            src.and_then(|c| frame.column(c))
                .is_some_and(|c| c.meta.controllable)
        })
        .collect();

    Ok(FeatureMatrix {
        x: Matrix::new(n, names.len(), data)?,
        column_names: names,
        controllable,
        row_dates: frame.dates()[max_lag..].to_vec(),
        target: target[max_lag..].to_vec(),
        target_name: target_name.to_string(),
    })
}

/// Names of features derived from controllable inputs (policy levels,
/// mobility, testing).
pub fn controllable_columns(matrix: &FeatureMatrix) -> Vec<String> {
    matrix
        .column_names
        .iter()
        .zip(&matrix.controllable)
        .filter(|(_, c)| **c)
        .map(|(n, _)| n.clone())
        .collect()
}
