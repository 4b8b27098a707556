//! CSV ingestion, source consolidation, imputation, and data-quality checks
//! for a single region's daily series.
//!
//! A region file has a mandatory `date` column (ISO-8601) followed by numeric
//! columns. Empty cells are missing values. The canonical header is
//! [`CANONICAL_COLUMNS`]; unknown extra columns are kept as plain features.

use chrono::{Days, NaiveDate};
use serde::Serialize;

use crate::error::{Error, Result};

pub const DATE_COLUMN: &str = "date";
pub const CASES: &str = "new_cases";
pub const REVENUE: &str = "small_business_revenue_delta";
pub const TESTS: &str = "tests";
pub const MOBILITY: &str = "mobility_index";
pub const STAY_AT_HOME: &str = "policy_stay_at_home";
pub const POLICY_PREFIX: &str = "policy_";

/// Header of a fully populated region CSV, in file order.
pub const CANONICAL_COLUMNS: [&str; 12] = [
    "date",
    "new_cases",
    "tests",
    "temperature_c",
    "wind_speed_ms",
    "humidity_pct",
    "mobility_index",
    "policy_stay_at_home",
    "policy_school_closing",
    "policy_workplace_closing",
    "policy_gatherings",
    "small_business_revenue_delta",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Target,
    Feature,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnMeta {
    pub kind: ColumnKind,
    pub controllable: bool,
    /// Inclusive `[lo, hi]`; either end may be infinite.
    pub bounds: Option<(f64, f64)>,
    /// Integer-valued levels; imputed by step-hold.
    pub ordinal: bool,
}

impl ColumnMeta {
    pub fn feature() -> Self {
        ColumnMeta {
            kind: ColumnKind::Feature,
            controllable: false,
            bounds: None,
            ordinal: false,
        }
    }

    /// Metadata for a column name, following the canonical schema.
    pub fn for_column(name: &str) -> Self {
        let nonneg = Some((0.0, f64::INFINITY));
        match name {
            CASES => ColumnMeta {
                kind: ColumnKind::Target,
                bounds: nonneg,
                ..Self::feature()
            },
            REVENUE => ColumnMeta {
                kind: ColumnKind::Target,
                ..Self::feature()
            },
            TESTS => ColumnMeta {
                controllable: true,
                bounds: nonneg,
                ..Self::feature()
            },
            MOBILITY => ColumnMeta {
                controllable: true,
                ..Self::feature()
            },
            "wind_speed_ms" => ColumnMeta {
                bounds: nonneg,
                ..Self::feature()
            },
            "humidity_pct" => ColumnMeta {
                bounds: Some((0.0, 100.0)),
                ..Self::feature()
            },
            "policy_stay_at_home" | "policy_school_closing" | "policy_workplace_closing" => {
                Self::policy(3.0)
            }
            "policy_gatherings" => Self::policy(4.0),
            other if other.starts_with(POLICY_PREFIX) => Self::policy(f64::INFINITY),
            _ => Self::feature(),
        }
    }

    fn policy(max_level: f64) -> Self {
        ColumnMeta {
            kind: ColumnKind::Feature,
            controllable: true,
            bounds: Some((0.0, max_level)),
            ordinal: true,
        }
    }

    pub fn nonnegative(&self) -> bool {
        matches!(self.bounds, Some((lo, _)) if lo >= 0.0)
    }

    fn in_bounds(&self, v: f64) -> bool {
        match self.bounds {
            Some((lo, hi)) => v >= lo && v <= hi,
            None => true,
        }
    }

    /// Whether `v` is a usable observation for this column.
    pub fn is_valid(&self, v: f64) -> bool {
        v.is_finite() && self.in_bounds(v) && (!self.ordinal || v.fract() == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<Option<f64>>,
    pub meta: ColumnMeta,
}

/// Date-indexed daily observations for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    pub region_id: String,
    /// Label used to order alternate sources during consolidation.
    pub source: Option<String>,
    dates: Vec<NaiveDate>,
    columns: Vec<Column>,
}

impl SeriesFrame {
    /// Empty frame over `dates`, which must be strictly increasing. Calendar
    /// gaps are allowed here; [`parse_region_csv`] fills them.
    pub fn new(region_id: impl Into<String>, dates: Vec<NaiveDate>) -> Result<Self> {
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::BadDate(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        Ok(SeriesFrame {
            region_id: region_id.into(),
            source: None,
            dates,
            columns: Vec::new(),
        })
    }

    /// Consecutive daily dates starting at `start`.
    pub fn daily(region_id: impl Into<String>, start: NaiveDate, len: usize) -> Self {
        let dates = (0..len as u64)
            .map(|i| start + Days::new(i))
            .collect::<Vec<_>>();
        SeriesFrame {
            region_id: region_id.into(),
            source: None,
            dates,
            columns: Vec::new(),
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    /// Adds a column with metadata derived from its name.
    pub fn add_column(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        self.add_column_with_meta(name, values, ColumnMeta::for_column(name))
    }

    pub fn add_dense_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        self.add_column(name, values.into_iter().map(Some).collect())
    }

    pub fn add_column_with_meta(
        &mut self,
        name: &str,
        values: Vec<Option<f64>>,
        meta: ColumnMeta,
    ) -> Result<()> {
        if name == DATE_COLUMN || self.column(name).is_some() {
            return Err(Error::MalformedCsv(format!("duplicate column `{name}`")));
        }
        if values.len() != self.dates.len() {
            return Err(Error::MalformedCsv(format!(
                "column `{name}` has {} values for {} dates",
                values.len(),
                self.dates.len()
            )));
        }
        self.columns.push(Column {
            name: name.to_string(),
            values,
            meta,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    fn column_mut(&mut self, name: &str) -> Option<&mut Column> {
        self.columns.iter_mut().find(|c| c.name == name)
    }

    pub fn values(&self, name: &str) -> Result<&[Option<f64>]> {
        self.column(name)
            .map(|c| c.values.as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Column values with no missing entries.
    pub fn dense(&self, name: &str) -> Result<Vec<f64>> {
        self.values(name)?
            .iter()
            .map(|v| {
                v.ok_or_else(|| {
                    Error::InvalidParams(format!("column `{name}` has missing values"))
                })
            })
            .collect()
    }

    pub fn set(&mut self, name: &str, index: usize, value: Option<f64>) -> Result<()> {
        let col = self
            .column_mut(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        col.values[index] = value;
        Ok(())
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Rows with `from <= date <= through`.
    pub fn slice_dates(&self, from: NaiveDate, through: NaiveDate) -> SeriesFrame {
        let lo = self.dates.partition_point(|d| *d < from);
        let hi = self.dates.partition_point(|d| *d <= through);
        let hi = hi.max(lo);
        SeriesFrame {
            region_id: self.region_id.clone(),
            source: self.source.clone(),
            dates: self.dates[lo..hi].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    values: c.values[lo..hi].to_vec(),
                    meta: c.meta.clone(),
                })
                .collect(),
        }
    }

    pub fn truncate_through(&self, through: NaiveDate) -> SeriesFrame {
        match self.first_date() {
            Some(first) => self.slice_dates(first, through),
            None => self.clone(),
        }
    }

    /// Serialises to CSV with `date` first and columns in frame order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(DATE_COLUMN);
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.name);
        }
        out.push('\n');
        for (i, d) in self.dates.iter().enumerate() {
            out.push_str(&d.format("%Y-%m-%d").to_string());
            for c in &self.columns {
                out.push(',');
                if let Some(v) = c.values[i] {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| Error::BadDate(format!("{s:?}")))
}

/// Parses a region CSV. Rows are sorted by date and calendar gaps become
/// all-missing rows.
pub fn parse_region_csv(raw: &[u8], region_id: &str) -> Result<SeriesFrame> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::MalformedCsv(e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedCsv(e.to_string()))?
        .clone();
    let date_idx = headers
        .iter()
        .position(|h| h == DATE_COLUMN)
        .ok_or_else(|| Error::MalformedCsv("missing `date` column".into()))?;
    let names: Vec<&str> = headers.iter().collect();
    for (i, n) in names.iter().enumerate() {
        if n.is_empty() {
            return Err(Error::MalformedCsv(format!("empty header at position {i}")));
        }
        if names[..i].contains(n) {
            return Err(Error::MalformedCsv(format!("duplicate header `{n}`")));
        }
    }

    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedCsv(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let date = parse_date(&record[date_idx])?;
        let mut values = Vec::with_capacity(names.len() - 1);
        for (i, cell) in record.iter().enumerate() {
            if i == date_idx {
                continue;
            }
            if cell.is_empty() {
                values.push(None);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(Some(v)),
                _ => {
                    return Err(Error::NonNumericCell {
                        line,
                        column: names[i].to_string(),
                        value: cell.to_string(),
                    })
                }
            }
        }
        rows.push((date, values));
    }
    if rows.is_empty() {
        return Err(Error::MalformedCsv("no data rows".into()));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::BadDate(format!("duplicate date {}", w[0].0)));
    }

    let first = rows[0].0;
    let last = rows[rows.len() - 1].0;
    let len = (last - first).num_days() as usize + 1;
    let mut frame = SeriesFrame::daily(region_id, first, len);
    let value_names: Vec<&str> = names
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != date_idx)
        .map(|(_, n)| *n)
        .collect();
    let mut columns = vec![vec![None; len]; value_names.len()];
    for (date, values) in rows {
        let t = (date - first).num_days() as usize;
        for (c, v) in values.into_iter().enumerate() {
            columns[c][t] = v;
        }
    }
    for (name, values) in value_names.into_iter().zip(columns) {
        frame.add_column(name, values)?;
    }
    Ok(frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeHandling {
    #[default]
    TreatAsMissing,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ImputationPolicy {
    pub source_priority: Vec<String>,
    pub max_interp_gap: usize,
    pub negative_handling: NegativeHandling,
}

impl Default for ImputationPolicy {
    fn default() -> Self {
        ImputationPolicy {
            source_priority: Vec::new(),
            max_interp_gap: 7,
            negative_handling: NegativeHandling::TreatAsMissing,
        }
    }
}

/// Fills each primary cell from the first source holding a valid value, with
/// alternates ordered by `policy.source_priority` (unlisted ones keep their
/// given order, after the listed ones). Cells no source can supply keep the
/// primary value for [`impute`] to handle.
pub fn merge_sources(
    primary: &SeriesFrame,
    alternates: &[SeriesFrame],
    policy: &ImputationPolicy,
) -> Result<SeriesFrame> {
    for alt in alternates {
        if alt.region_id != primary.region_id {
            return Err(Error::RegionMismatch {
                expected: primary.region_id.clone(),
                found: alt.region_id.clone(),
            });
        }
    }
    if alternates.is_empty() {
        return Ok(primary.clone());
    }

    let rank = |f: &SeriesFrame| {
        f.source
            .as_ref()
            .and_then(|s| policy.source_priority.iter().position(|p| p == s))
            .unwrap_or(usize::MAX)
    };
    let mut ordered: Vec<&SeriesFrame> = alternates.iter().collect();
    ordered.sort_by_key(|f| rank(f));

    let start = alternates
        .iter()
        .chain(std::iter::once(primary))
        .filter_map(|f| f.first_date())
        .max();
    let end = alternates
        .iter()
        .chain(std::iter::once(primary))
        .filter_map(|f| f.last_date())
        .min();
    let (Some(start), Some(end)) = (start, end) else {
        return Err(Error::InvalidParams("empty source frame".into()));
    };
    if start > end {
        return Err(Error::InvalidParams("sources share no dates".into()));
    }

    let mut merged = primary.slice_dates(start, end);
    let dates = merged.dates.clone();
    for col in merged.columns.iter_mut() {
        for (t, date) in dates.iter().enumerate() {
            if col.values[t].is_some_and(|v| col.meta.is_valid(v)) {
                continue;
            }
            let replacement = ordered.iter().find_map(|alt| {
                let i = alt.index_of(*date)?;
                let v = alt.column(&col.name)?.values[i]?;
                col.meta.is_valid(v).then_some(v)
            });
            if let Some(v) = replacement {
                col.values[t] = Some(v);
            }
        }
    }
    Ok(merged)
}

/// Produces a frame with no missing values.
///
/// Invalid observations (negative counts, out-of-bounds or fractional policy
/// levels) are first treated as missing. Ordinal columns are step-held.
/// Other columns interpolate interior runs up to `max_interp_gap` days and
/// otherwise take the nearest observed value.
pub fn impute(frame: &SeriesFrame, policy: &ImputationPolicy) -> Result<SeriesFrame> {
    if policy.max_interp_gap < 1 {
        return Err(Error::InvalidParams("max_interp_gap must be >= 1".into()));
    }
    let mut out = frame.clone();
    for col in out.columns.iter_mut() {
        let cleaned: Vec<Option<f64>> = col
            .values
            .iter()
            .map(|v| v.filter(|x| col.meta.is_valid(*x)))
            .collect();
        let filled = if col.meta.ordinal {
            step_hold(&cleaned)
        } else {
            interpolate(&cleaned, policy.max_interp_gap)
        }
        .ok_or_else(|| Error::AllMissingColumn(col.name.clone()))?;
        col.values = filled.into_iter().map(Some).collect();
    }
    Ok(out)
}

fn step_hold(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let first = values.iter().find_map(|v| *v)?;
    let mut last = first;
    Some(
        values
            .iter()
            .map(|v| {
                if let Some(x) = v {
                    last = *x;
                }
                last
            })
            .collect(),
    )
}

fn interpolate(values: &[Option<f64>], max_gap: usize) -> Option<Vec<f64>> {
    let observed: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (&first, &last) = (observed.first()?, observed.last()?);
    let mut out: Vec<f64> = values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let (head, tail) = (out[first], out[last]);
    out[..first].iter_mut().for_each(|v| *v = head);
    out[last + 1..].iter_mut().for_each(|v| *v = tail);
    for pair in observed.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let run = b - a - 1;
        if run == 0 {
            continue;
        }
        let (va, vb) = (out[a], out[b]);
        for i in a + 1..b {
            out[i] = if run <= max_gap {
                va + (vb - va) * (i - a) as f64 / (b - a) as f64
            } else if i - a <= b - i {
                va
            } else {
                vb
            };
        }
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnReport {
    pub name: String,
    pub missing: usize,
    pub negative: usize,
    pub out_of_bounds: usize,
    pub non_integer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub column: String,
    pub date: NaiveDate,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub region_id: String,
    pub n_rows: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub date_gaps: usize,
    pub columns: Vec<ColumnReport>,
    pub bound_violations: Vec<BoundViolation>,
}

pub fn validate(frame: &SeriesFrame) -> ValidationReport {
    let date_gaps = frame
        .dates
        .windows(2)
        .filter(|w| (w[1] - w[0]).num_days() > 1)
        .count();
    let mut bound_violations = Vec::new();
    let columns: Vec<ColumnReport> = frame
        .columns
        .iter()
        .map(|col| {
            let mut report = ColumnReport {
                name: col.name.clone(),
                missing: 0,
                negative: 0,
                out_of_bounds: 0,
                non_integer: 0,
            };
            for (t, v) in col.values.iter().enumerate() {
                let Some(v) = *v else {
                    report.missing += 1;
                    continue;
                };
                if v < 0.0 && col.meta.nonnegative() {
                    report.negative += 1;
                }
                if !col.meta.in_bounds(v) {
                    report.out_of_bounds += 1;
                    bound_violations.push(BoundViolation {
                        column: col.name.clone(),
                        date: frame.dates[t],
                        value: v,
                    });
                }
                if col.meta.ordinal && v.fract() != 0.0 {
                    report.non_integer += 1;
                }
            }
            report
        })
        .collect();
    let ok = date_gaps == 0
        && columns
            .iter()
            .all(|c| c.missing + c.negative + c.out_of_bounds + c.non_integer == 0);
    ValidationReport {
        ok,
        region_id: frame.region_id.clone(),
        n_rows: frame.len(),
        first_date: frame.first_date(),
        last_date: frame.last_date(),
        date_gaps,
        columns,
        bound_violations,
    }
}
