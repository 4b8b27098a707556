//! C ABI for the interveno engine.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns an
//! [`IvStatus`]; on failure [`iv_last_error`] describes the cause. Strings
//! returned through out-parameters are freed with [`iv_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use chrono::NaiveDate;
use interveno::backtest::{retrain_due, run_backtest};
use interveno::ingest::SeriesFrame;
use interveno::service::{ingest_upload, load_artifact, save_artifact, RunConfig};
use interveno::simulate::{forecast, vaccine_adjust, ScenarioSpec, VaccineSpec, DEFAULT_HORIZON_DAYS};
use interveno::{train_pair, ArtifactPair, Error};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed CSV, bad date, non-numeric cell, region mismatch.
    InvalidInput = 3,
    /// Too few rows or days of history, or zero variance.
    InsufficientData = 4,
    InvalidParams = 5,
    InvalidScenario = 6,
    /// Corrupt artifact, bad checksum, unsupported version, bad JSON.
    Parse = 7,
    Io = 8,
    Numerical = 9,
    Config = 10,
    Panic = 99,
}

pub struct IvFrame {
    inner: SeriesFrame,
}

pub struct IvConfig {
    inner: RunConfig,
}

/// A trained cases/revenue model pair.
pub struct IvModels {
    inner: ArtifactPair,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> IvStatus {
    use Error::*;
    match err {
        MalformedCsv(_) | BadDate(_) | NonNumericCell { .. } | RegionMismatch { .. } | AllMissingColumn(_)
        | UnknownColumn(_) | UnknownDate(_) => IvStatus::InvalidInput,
        TooShortSeries { .. } | InsufficientHistory { .. } | ZeroVariance => IvStatus::InsufficientData,
        InvalidScenario(_) | EmptySearchSpace => IvStatus::InvalidScenario,
        Parse(_) | Version(_) | SchemaMismatch { .. } | SchemaNames(_) => IvStatus::Parse,
        Io(_) => IvStatus::Io,
        SingularSystem | ZeroDenominator(_) | EmptyExplanation => IvStatus::Numerical,
        Config(_) => IvStatus::Config,
        _ => IvStatus::InvalidParams,
    }
}

struct Fail(IvStatus);

impl From<Error> for Fail {
    fn from(err: Error) -> Self {
        set_error(err.to_string());
        Fail(status_of(&err))
    }
}

fn fail<T>(status: IvStatus, msg: &str) -> Result<T, Fail> {
    set_error(msg);
    Err(Fail(status))
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            IvStatus::Ok
        }
        Ok(Err(Fail(status))) => status,
        Err(_) => {
            set_error("internal panic");
            IvStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return fail(IvStatus::NullArgument, &format!("`{name}` is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(s),
        Err(_) => fail(IvStatus::InvalidUtf8, &format!("`{name}` is not valid UTF-8")),
    }
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    match p.as_ref() {
        Some(r) => Ok(r),
        None => fail(IvStatus::NullArgument, &format!("`{name}` is null")),
    }
}

unsafe fn out_arg<T>(p: *mut T, value: T) -> Result<(), Fail> {
    if p.is_null() {
        return fail(IvStatus::NullArgument, "output pointer is null");
    }
    p.write(value);
    Ok(())
}

fn date_arg(s: &str) -> Result<NaiveDate, Fail> {
    match s.parse() {
        Ok(d) => Ok(d),
        Err(_) => fail(IvStatus::InvalidInput, &format!("bad date {s:?}")),
    }
}

fn json_out(value: &impl serde::Serialize, out: *mut *mut c_char) -> Result<(), Fail> {
    let text = match serde_json::to_string(value) {
        Ok(t) => t,
        Err(e) => return fail(IvStatus::Parse, &e.to_string()),
    };
    let c = CString::new(text).expect("JSON has no interior NUL");
    unsafe { out_arg(out, c.into_raw()) }
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn iv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn iv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn iv_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and imputes a region CSV of `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn iv_frame_from_csv(
    data: *const u8,
    len: usize,
    region_id: *const c_char,
    out: *mut *mut IvFrame,
) -> IvStatus {
    guard(|| {
        if data.is_null() {
            return fail(IvStatus::NullArgument, "`data` is null");
        }
        let region = str_arg(region_id, "region_id")?;
        let raw = std::slice::from_raw_parts(data, len);
        let (_, frame) = ingest_upload(raw, region)?;
        out_arg(out, Box::into_raw(Box::new(IvFrame { inner: frame })))
    })
}

#[no_mangle]
pub unsafe extern "C" fn iv_frame_len(frame: *const IvFrame, out: *mut usize) -> IvStatus {
    guard(|| out_arg(out, ref_arg(frame, "frame")?.inner.len()))
}

#[no_mangle]
pub unsafe extern "C" fn iv_frame_free(frame: *mut IvFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

#[no_mangle]
pub unsafe extern "C" fn iv_config_default(out: *mut *mut IvConfig) -> IvStatus {
    guard(|| out_arg(out, Box::into_raw(Box::new(IvConfig { inner: RunConfig::default() }))))
}

/// Reads a `key = value` config file.
#[no_mangle]
pub unsafe extern "C" fn iv_config_load(path: *const c_char, out: *mut *mut IvConfig) -> IvStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let cfg = RunConfig::load(Path::new(path))?;
        out_arg(out, Box::into_raw(Box::new(IvConfig { inner: cfg })))
    })
}

#[no_mangle]
pub unsafe extern "C" fn iv_config_set(cfg: *mut IvConfig, key: *const c_char, value: *const c_char) -> IvStatus {
    guard(|| {
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        match cfg.as_mut() {
            Some(c) => Ok(c.inner.set(key, value)?),
            None => fail(IvStatus::NullArgument, "`cfg` is null"),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn iv_config_free(cfg: *mut IvConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Trains the cases and revenue ensembles. A NULL `cfg` uses defaults.
#[no_mangle]
pub unsafe extern "C" fn iv_models_train(
    frame: *const IvFrame,
    cfg: *const IvConfig,
    out: *mut *mut IvModels,
) -> IvStatus {
    guard(|| {
        let frame = ref_arg(frame, "frame")?;
        let default = RunConfig::default();
        let cfg = cfg.as_ref().map_or(&default, |c| &c.inner);
        let pair = train_pair(&frame.inner, &cfg.pipeline)?;
        out_arg(out, Box::into_raw(Box::new(IvModels { inner: pair })))
    })
}

fn pair_paths(dir: &str) -> (PathBuf, PathBuf) {
    let dir = Path::new(dir);
    (dir.join("cases.json"), dir.join("revenue.json"))
}

/// Writes `cases.json` and `revenue.json` into an existing directory.
#[no_mangle]
pub unsafe extern "C" fn iv_models_save(models: *const IvModels, dir: *const c_char) -> IvStatus {
    guard(|| {
        let models = ref_arg(models, "models")?;
        let (cases, revenue) = pair_paths(str_arg(dir, "dir")?);
        save_artifact(&models.inner.cases, &cases)?;
        save_artifact(&models.inner.revenue, &revenue)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn iv_models_load(dir: *const c_char, out: *mut *mut IvModels) -> IvStatus {
    guard(|| {
        let (cases, revenue) = pair_paths(str_arg(dir, "dir")?);
        let pair = ArtifactPair {
            cases: load_artifact(&cases)?,
            revenue: load_artifact(&revenue)?,
        };
        out_arg(out, Box::into_raw(Box::new(IvModels { inner: pair })))
    })
}

#[no_mangle]
pub unsafe extern "C" fn iv_models_free(models: *mut IvModels) {
    if !models.is_null() {
        drop(Box::from_raw(models));
    }
}

/// Baseline and scenario forecast as JSON. `scenario_json` is a scenario
/// object; NULL means the baseline over the default horizon.
#[no_mangle]
pub unsafe extern "C" fn iv_forecast_json(
    models: *const IvModels,
    frame: *const IvFrame,
    scenario_json: *const c_char,
    out: *mut *mut c_char,
) -> IvStatus {
    guard(|| {
        let models = ref_arg(models, "models")?;
        let frame = ref_arg(frame, "frame")?;
        let spec = if scenario_json.is_null() {
            ScenarioSpec::baseline(DEFAULT_HORIZON_DAYS)
        } else {
            match serde_json::from_str(str_arg(scenario_json, "scenario_json")?) {
                Ok(s) => s,
                Err(e) => return fail(IvStatus::Parse, &format!("scenario: {e}")),
            }
        };
        let result = forecast(&models.inner.cases, &models.inner.revenue, &frame.inner, &spec)?;
        json_out(&result, out)
    })
}

/// Out-of-time back-test report as JSON. A NULL `cfg` uses defaults.
#[no_mangle]
pub unsafe extern "C" fn iv_backtest_json(
    frame: *const IvFrame,
    cfg: *const IvConfig,
    out: *mut *mut c_char,
) -> IvStatus {
    guard(|| {
        let frame = ref_arg(frame, "frame")?;
        let default = RunConfig::default();
        let cfg = cfg.as_ref().map_or(&default, |c| &c.inner);
        let report = run_backtest(&frame.inner, &cfg.pipeline)?;
        json_out(&report, out)
    })
}

/// Applies vaccine protection to `n` forecast values in place of `out`.
/// `coverage` holds one cumulative coverage fraction per day.
#[no_mangle]
pub unsafe extern "C" fn iv_vaccine_adjust(
    cases: *const f64,
    coverage: *const f64,
    n: usize,
    efficacy: f64,
    generation_interval_days: f64,
    out: *mut f64,
) -> IvStatus {
    guard(|| {
        if n > 0 && (cases.is_null() || coverage.is_null() || out.is_null()) {
            return fail(IvStatus::NullArgument, "array argument is null");
        }
        if n == 0 {
            return Ok(());
        }
        let cases = std::slice::from_raw_parts(cases, n);
        let spec = VaccineSpec {
            coverage_path: std::slice::from_raw_parts(coverage, n).to_vec(),
            efficacy,
            generation_interval_days,
        };
        if let Err(e) = spec.check(n) {
            return Err(e.into());
        }
        let adjusted = vaccine_adjust(cases, &spec);
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&adjusted);
        Ok(())
    })
}

/// Sets `*out` to 1 when a model trained through `trained_through` is due
/// for retraining on `today`, else 0. Dates are `YYYY-MM-DD`.
#[no_mangle]
pub unsafe extern "C" fn iv_retrain_due(
    trained_through: *const c_char,
    today: *const c_char,
    out: *mut i32,
) -> IvStatus {
    guard(|| {
        let trained = date_arg(str_arg(trained_through, "trained_through")?)?;
        let today = date_arg(str_arg(today, "today")?)?;
        out_arg(out, retrain_due(trained, today)? as i32)
    })
}
