//! Recursive multi-day forecasting with scenario overrides, vaccine
//! attenuation, reproduction-number estimates, and best-case search.
//!
//! The vaccine model scales growth by `1 - coverage * efficacy` once per
//! generation interval `g`, applied as a per-day factor
//! `(1 - c_t * e)^(1/g)` that compounds over the horizon. It is a
//! deliberately small model exposing coverage, efficacy, and `g` as levers,
//! not a transmission model.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::features::LagSpec;
use crate::ingest::{ColumnMeta, SeriesFrame, MOBILITY, POLICY_PREFIX, TESTS};
use crate::models::{ModelArtifact, Regressor};

pub const DEFAULT_HORIZON_DAYS: usize = 35;
pub const DEFAULT_GENERATION_INTERVAL: f64 = 5.0;

fn default_horizon() -> usize {
    DEFAULT_HORIZON_DAYS
}

fn default_g() -> f64 {
    DEFAULT_GENERATION_INTERVAL
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// Accepts a bare number as a one-element path.
fn scalar_or_path<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, Vec<f64>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Path {
        One(f64),
        Many(Vec<f64>),
    }
    let raw = BTreeMap::<String, Path>::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| match v {
            Path::One(x) => (k, vec![x]),
            Path::Many(xs) => (k, xs),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaccineSpec {
    /// Cumulative coverage fraction per horizon day, nondecreasing.
    pub coverage_path: Vec<f64>,
    pub efficacy: f64,
    #[serde(default = "default_g")]
    pub generation_interval_days: f64,
}

impl VaccineSpec {
    /// Coverage rising linearly to `end_coverage` over `ramp_days`, then held.
    pub fn ramp(end_coverage: f64, ramp_days: usize, horizon: usize, efficacy: f64) -> Self {
        let coverage_path = (1..=horizon)
            .map(|t| {
                if ramp_days == 0 {
                    end_coverage
                } else {
                    end_coverage * (t.min(ramp_days) as f64 / ramp_days as f64)
                }
            })
            .collect();
        VaccineSpec {
            coverage_path,
            efficacy,
            generation_interval_days: DEFAULT_GENERATION_INTERVAL,
        }
    }

    pub fn protect_rate(&self, day: usize) -> f64 {
        let c = self.coverage_at(day);
        c * self.efficacy
    }

    fn coverage_at(&self, day: usize) -> f64 {
        match self.coverage_path.get(day) {
            Some(c) => *c,
            None => self.coverage_path.last().copied().unwrap_or(0.0),
        }
    }

    pub fn check(&self, horizon: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.coverage_path.len() != horizon {
            return bad(format!(
                "coverage_path has {} days, horizon is {horizon}",
                self.coverage_path.len()
            ));
        }
        if self.coverage_path.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("coverage must lie in [0, 1]".into());
        }
        if self.coverage_path.windows(2).any(|w| w[1] < w[0]) {
            return bad("coverage_path must be nondecreasing".into());
        }
        if !(0.0..=1.0).contains(&self.efficacy) {
            return bad("efficacy must lie in [0, 1]".into());
        }
        if !(self.generation_interval_days > 0.0 && self.generation_interval_days.is_finite()) {
            return bad("generation_interval_days must be positive".into());
        }
        Ok(())
    }
}

/// Overrides of controllable inputs over the forecast horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "default_horizon")]
    pub horizon_days: usize,
    /// Policy column → level path of length 1 (constant) or `horizon_days`.
    #[serde(default, deserialize_with = "scalar_or_path")]
    pub policy_overrides: BTreeMap<String, Vec<f64>>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub mobility_multiplier: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub tests_multiplier: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vaccine: Option<VaccineSpec>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::baseline(DEFAULT_HORIZON_DAYS)
    }
}

impl ScenarioSpec {
    /// The identity scenario: everything held at its last observed value.
    pub fn baseline(horizon_days: usize) -> Self {
        ScenarioSpec {
            horizon_days,
            policy_overrides: BTreeMap::new(),
            mobility_multiplier: 1.0,
            tests_multiplier: 1.0,
            vaccine: None,
        }
    }

    pub fn with_policy(mut self, policy: &str, level: f64) -> Self {
        self.policy_overrides.insert(policy.to_string(), vec![level]);
        self
    }

    pub fn with_vaccine(mut self, vaccine: VaccineSpec) -> Self {
        self.vaccine = Some(vaccine);
        self
    }

    /// Checks the scenario against a frame's columns and bounds.
    pub fn check(&self, frame: &SeriesFrame) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.horizon_days < 1 {
            return bad("horizon_days must be >= 1".into());
        }
        for (name, path) in &self.policy_overrides {
            let Some(col) = frame.column(name).filter(|_| name.starts_with(POLICY_PREFIX)) else {
                return bad(format!("unknown policy `{name}`"));
            };
            if path.len() != 1 && path.len() != self.horizon_days {
                return bad(format!(
                    "override for `{name}` has {} days; expected 1 or {}",
                    path.len(),
                    self.horizon_days
                ));
            }
            if let Some(v) = path.iter().find(|v| !col.meta.is_valid(**v)) {
                return bad(format!("level {v} is not valid for `{name}`"));
            }
        }
        for (label, m) in [
            ("mobility_multiplier", self.mobility_multiplier),
            ("tests_multiplier", self.tests_multiplier),
        ] {
            if !(m > 0.0 && m.is_finite()) {
                return bad(format!("{label} must be positive"));
            }
        }
        if let Some(v) = &self.vaccine {
            v.check(self.horizon_days)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub dates: Vec<NaiveDate>,
    pub cases_baseline: Vec<f64>,
    pub cases_scenario: Vec<f64>,
    pub revenue_baseline: Vec<f64>,
    pub revenue_scenario: Vec<f64>,
    /// Scenario Rt per day; `null` where the earlier window has no cases.
    pub rt_path: Vec<Option<f64>>,
    pub protect_rate_path: Vec<f64>,
}

/// Where future values of non-target inputs come from.
pub(crate) enum FutureInputs<'a> {
    /// Last observed value, adjusted by the scenario.
    Scenario(&'a ScenarioSpec),
    /// Actually observed values (back-testing).
    Observed(&'a SeriesFrame),
}

pub(crate) struct Paths {
    pub cases: Vec<f64>,
    pub revenue: Option<Vec<f64>>,
}

struct Working {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl Working {
    fn get(&self, name: &str, t: usize) -> f64 {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .expect("working column resolved at construction");
        self.values[i][t]
    }

    fn column_mut(&mut self, name: &str) -> &mut Vec<f64> {
        let i = self.names.iter().position(|n| n == name).expect("working column");
        &mut self.values[i]
    }
}

/// A model plus the lag layout that feeds it.
#[derive(Clone, Copy)]
pub(crate) struct Stepper<'a> {
    pub model: &'a dyn Regressor,
    pub spec: &'a LagSpec,
    pub target: &'a str,
}

impl<'a> From<&'a ModelArtifact> for Stepper<'a> {
    fn from(a: &'a ModelArtifact) -> Self {
        Stepper {
            model: a,
            spec: &a.feature_schema.lag_spec,
            target: &a.target_name,
        }
    }
}

/// Runs the day-by-day recursion for `horizon` days past `history`.
/// `primary` predictions are fed back into its target column; `secondary`
/// is evaluated afterwards on the finished path and never fed back.
pub(crate) fn recurse(
    primary: Stepper<'_>,
    secondary: Option<Stepper<'_>>,
    history: &SeriesFrame,
    horizon: usize,
    inputs: FutureInputs<'_>,
    vaccine: Option<&VaccineSpec>,
) -> Result<Paths> {
    for m in std::iter::once(&primary).chain(secondary.as_ref()) {
        let width = m.spec.feature_names().len();
        if width != m.model.n_features() {
            return Err(Error::SchemaMismatch {
                expected: m.model.n_features(),
                found: width,
            });
        }
    }
    let cases_target = primary.target;
    if let Some(rev) = &secondary {
        if rev.spec.entry(rev.target).is_some() {
            return Err(Error::InvalidLagSpec(format!(
                "`{}` model may not consume its own lags",
                rev.target
            )));
        }
    }
    let clamp = ColumnMeta::for_column(cases_target).nonnegative();
    let mut names: Vec<String> = vec![cases_target.to_string()];
    for m in std::iter::once(&primary).chain(secondary.as_ref()) {
        for c in &m.spec.columns {
            if !names.contains(&c.column) {
                names.push(c.column.clone());
            }
        }
    }
    let max_lag = std::iter::once(&primary)
        .chain(secondary.as_ref())
        .map(|m| m.spec.max_lag())
        .max()
        .unwrap_or(0);
    let len = history.len();
    if len < max_lag.max(1) {
        return Err(Error::TooShortSeries {
            needed: max_lag.max(1),
            available: len,
        });
    }
    let last = history.last_date().expect("non-empty history");
    let dates: Vec<NaiveDate> = (1..=horizon as u64).map(|i| last + Days::new(i)).collect();

    let mut values = Vec::with_capacity(names.len());
    for name in &names {
        let mut v = history.dense(name)?;
        let held = v[len - 1];
        for (i, date) in dates.iter().enumerate() {
            let future = if name == cases_target {
                0.0
            } else {
                match &inputs {
                    FutureInputs::Scenario(spec) => scenario_value(spec, name, held, i),
                    FutureInputs::Observed(frame) => {
                        let idx = frame
                            .index_of(*date)
                            .ok_or(Error::TooShortSeries {
                                needed: horizon,
                                available: frame.len(),
                            })?;
                        frame.values(name)?[idx].ok_or_else(|| {
                            Error::InvalidParams(format!("`{name}` missing on {date}"))
                        })?
                    }
                }
            };
            v.push(future);
        }
        values.push(v);
    }
    let mut work = Working { names, values };

    let mut row = Vec::with_capacity(primary.model.n_features());
    let mut cases = Vec::with_capacity(horizon);
    for (i, date) in dates.iter().enumerate() {
        let t = len + i;
        row.clear();
        primary.spec.row_into(|c, j| work.get(c, j), t, *date, &mut row);
        let raw = primary.model.predict_row(&row);
        let pred = if clamp { raw.max(0.0) } else { raw };
        work.column_mut(cases_target)[t] = pred;
        cases.push(pred);
    }

    if let Some(v) = vaccine {
        cases = vaccine_adjust(&cases, v);
        work.column_mut(cases_target)[len..].copy_from_slice(&cases);
    }

    let revenue = secondary.map(|rev| {
        dates
            .iter()
            .enumerate()
            .map(|(i, date)| {
                row.clear();
                rev.spec.row_into(|c, j| work.get(c, j), len + i, *date, &mut row);
                rev.model.predict_row(&row)
            })
            .collect()
    });
    Ok(Paths { cases, revenue })
}

fn scenario_value(spec: &ScenarioSpec, column: &str, held: f64, day: usize) -> f64 {
    if let Some(path) = spec.policy_overrides.get(column) {
        return path[day.min(path.len() - 1)];
    }
    match column {
        MOBILITY => held * spec.mobility_multiplier,
        TESTS => held * spec.tests_multiplier,
        _ => held,
    }
}

/// Forecasts baseline and scenario paths over `spec.horizon_days`.
pub fn forecast(
    cases_model: &ModelArtifact,
    revenue_model: &ModelArtifact,
    frame: &SeriesFrame,
    spec: &ScenarioSpec,
) -> Result<ForecastResult> {
    spec.check(frame)?;
    cases_model.check()?;
    revenue_model.check()?;
    let baseline_spec = ScenarioSpec::baseline(spec.horizon_days);
    let baseline = recurse(
        cases_model.into(),
        Some(revenue_model.into()),
        frame,
        spec.horizon_days,
        FutureInputs::Scenario(&baseline_spec),
        None,
    )?;
    forecast_against(cases_model, revenue_model, frame, spec, &baseline)
}

fn forecast_against(
    cases_model: &ModelArtifact,
    revenue_model: &ModelArtifact,
    frame: &SeriesFrame,
    spec: &ScenarioSpec,
    baseline: &Paths,
) -> Result<ForecastResult> {
    let h = spec.horizon_days;
    let scenario = recurse(
        cases_model.into(),
        Some(revenue_model.into()),
        frame,
        h,
        FutureInputs::Scenario(spec),
        spec.vaccine.as_ref(),
    )?;
    let last = frame.last_date().expect("checked by recurse");
    let g = spec
        .vaccine
        .as_ref()
        .map_or(DEFAULT_GENERATION_INTERVAL, |v| v.generation_interval_days);
    let window = rt_window(g)?;
    let mut series = frame.dense(&cases_model.target_name)?;
    let hist_len = series.len();
    series.extend_from_slice(&scenario.cases);
    let rt_path = (0..h)
        .map(|i| rt_at(&series, hist_len + i, window).ok())
        .collect();
    let protect_rate_path = match &spec.vaccine {
        Some(v) => (0..h).map(|i| v.protect_rate(i)).collect(),
        None => vec![0.0; h],
    };
    Ok(ForecastResult {
        dates: (1..=h as u64).map(|i| last + Days::new(i)).collect(),
        cases_baseline: baseline.cases.clone(),
        cases_scenario: scenario.cases,
        revenue_baseline: baseline.revenue.clone().unwrap_or_default(),
        revenue_scenario: scenario.revenue.unwrap_or_default(),
        rt_path,
        protect_rate_path,
    })
}

fn rt_window(g: f64) -> Result<usize> {
    let w = g.round();
    if !(w >= 1.0 && w.is_finite()) {
        return Err(Error::InvalidParams(format!("generation interval {g}")));
    }
    Ok(w as usize)
}

fn rt_at(cases: &[f64], t: usize, g: usize) -> Result<f64> {
    if t + 1 < 2 * g {
        return Err(Error::InsufficientHistory {
            needed: 2 * g,
            available: t + 1,
        });
    }
    let recent: f64 = cases[t + 1 - g..=t].iter().sum();
    let earlier: f64 = cases[t + 1 - 2 * g..=t - g].iter().sum();
    if earlier <= 0.0 {
        return Err(Error::ZeroDenominator(t));
    }
    Ok(recent / earlier)
}

/// Ratio of case sums over consecutive windows of `g` days (rounded to whole
/// days). Element `i` of the result is Rt at day index `i + 2g - 1`.
pub fn estimate_rt(cases: &[f64], g: f64) -> Result<Vec<f64>> {
    let window = rt_window(g)?;
    if cases.len() < 2 * window {
        return Err(Error::InsufficientHistory {
            needed: 2 * window,
            available: cases.len(),
        });
    }
    (2 * window - 1..cases.len())
        .map(|t| rt_at(cases, t, window))
        .collect()
}

/// `adjusted[t] = cases[t] * prod_{s<=t} (1 - c_s * e)^(1/g)`, days 1-based.
pub fn vaccine_adjust(cases: &[f64], vaccine: &VaccineSpec) -> Vec<f64> {
    let exponent = 1.0 / vaccine.generation_interval_days;
    let mut attenuation = 1.0;
    cases
        .iter()
        .enumerate()
        .map(|(i, c)| {
            attenuation *= (1.0 - vaccine.protect_rate(i)).powf(exponent);
            c * attenuation
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRamp {
    pub end_coverage: f64,
    pub ramp_days: usize,
}

/// Finite grid of scenarios: the product of every listed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    #[serde(default = "default_horizon")]
    pub horizon_days: usize,
    #[serde(default)]
    pub policy_levels: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub coverage_ramps: Vec<CoverageRamp>,
    #[serde(default)]
    pub efficacy: Vec<f64>,
    #[serde(default)]
    pub mobility_multipliers: Vec<f64>,
    #[serde(default = "default_g")]
    pub generation_interval_days: f64,
}

impl SearchSpace {
    /// All grid points, in enumeration order.
    pub fn enumerate(&self) -> Result<Vec<ScenarioSpec>> {
        let has_vaccine = !self.coverage_ramps.is_empty() || !self.efficacy.is_empty();
        if self.policy_levels.is_empty() && !has_vaccine && self.mobility_multipliers.is_empty() {
            return Err(Error::EmptySearchSpace);
        }
        if has_vaccine && (self.coverage_ramps.is_empty() || self.efficacy.is_empty()) {
            return Err(Error::EmptySearchSpace);
        }
        let mut specs = vec![ScenarioSpec::baseline(self.horizon_days)];
        for (policy, levels) in &self.policy_levels {
            specs = specs
                .iter()
                .flat_map(|s| levels.iter().map(|l| s.clone().with_policy(policy, *l)))
                .collect();
        }
        if !self.mobility_multipliers.is_empty() {
            specs = specs
                .iter()
                .flat_map(|s| {
                    self.mobility_multipliers.iter().map(|m| ScenarioSpec {
                        mobility_multiplier: *m,
                        ..s.clone()
                    })
                })
                .collect();
        }
        if has_vaccine {
            let mut out = Vec::new();
            for s in &specs {
                for ramp in &self.coverage_ramps {
                    for e in &self.efficacy {
                        let mut v =
                            VaccineSpec::ramp(ramp.end_coverage, ramp.ramp_days, self.horizon_days, *e);
                        v.generation_interval_days = self.generation_interval_days;
                        out.push(s.clone().with_vaccine(v));
                    }
                }
            }
            specs = out;
        }
        if specs.is_empty() {
            return Err(Error::EmptySearchSpace);
        }
        Ok(specs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedScenario {
    pub spec: ScenarioSpec,
    pub objective: f64,
    pub result: ForecastResult,
}

/// `w_protect * mean(protect rate) + w_revenue * mean(revenue uplift)`.
pub fn objective(result: &ForecastResult, weights: (f64, f64)) -> f64 {
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let uplift: Vec<f64> = result
        .revenue_scenario
        .iter()
        .zip(&result.revenue_baseline)
        .map(|(s, b)| s - b)
        .collect();
    weights.0 * mean(&result.protect_rate_path) + weights.1 * mean(&uplift)
}

/// Total order on scenarios used to break objective ties.
pub fn compare_specs(a: &ScenarioSpec, b: &ScenarioSpec) -> Ordering {
    fn paths(x: &[f64], y: &[f64]) -> Ordering {
        for (p, q) in x.iter().zip(y) {
            match p.total_cmp(q) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        x.len().cmp(&y.len())
    }
    a.horizon_days
        .cmp(&b.horizon_days)
        .then_with(|| {
            let mut ia = a.policy_overrides.iter();
            let mut ib = b.policy_overrides.iter();
            loop {
                match (ia.next(), ib.next()) {
                    (None, None) => return Ordering::Equal,
                    (None, Some(_)) => return Ordering::Less,
                    (Some(_), None) => return Ordering::Greater,
                    (Some((ka, va)), Some((kb, vb))) => {
                        let o = ka.cmp(kb).then_with(|| paths(va, vb));
                        if o != Ordering::Equal {
                            return o;
                        }
                    }
                }
            }
        })
        .then_with(|| a.mobility_multiplier.total_cmp(&b.mobility_multiplier))
        .then_with(|| a.tests_multiplier.total_cmp(&b.tests_multiplier))
        .then_with(|| match (&a.vaccine, &b.vaccine) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(x), Some(y)) => paths(&x.coverage_path, &y.coverage_path)
                .then_with(|| x.efficacy.total_cmp(&y.efficacy))
                .then_with(|| x.generation_interval_days.total_cmp(&y.generation_interval_days)),
        })
}

/// Evaluates every grid point and ranks by objective, best first.
pub fn best_case_search(
    cases_model: &ModelArtifact,
    revenue_model: &ModelArtifact,
    frame: &SeriesFrame,
    space: &SearchSpace,
    weights: (f64, f64),
) -> Result<Vec<RankedScenario>> {
    let specs = space.enumerate()?;
    for s in &specs {
        s.check(frame)?;
    }
    cases_model.check()?;
    revenue_model.check()?;
    let baseline_spec = ScenarioSpec::baseline(space.horizon_days);
    let baseline = recurse(
        cases_model.into(),
        Some(revenue_model.into()),
        frame,
        space.horizon_days,
        FutureInputs::Scenario(&baseline_spec),
        None,
    )?;
    let mut ranked = specs
        .into_par_iter()
        .map(|spec| {
            let result = forecast_against(cases_model, revenue_model, frame, &spec, &baseline)?;
            Ok(RankedScenario {
                objective: objective(&result, weights),
                spec,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        b.objective
            .total_cmp(&a.objective)
            .then_with(|| compare_specs(&a.spec, &b.spec))
    });
    Ok(ranked)
}
