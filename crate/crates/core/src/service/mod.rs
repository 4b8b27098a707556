//! Persistence, configuration, region store, HTTP API, and CLI.

pub mod cli;
pub mod config;
pub mod http;
pub mod persist;
pub mod store;

pub use config::{RunConfig, CONFIG_ENV};
pub use persist::{artifact_from_str, artifact_to_string, load_artifact, save_artifact};
pub use store::{RegionStore, TrainingGuard};

use crate::error::Result;
use crate::ingest::{impute, merge_sources, parse_region_csv, validate, ImputationPolicy, SeriesFrame, ValidationReport};

/// Parses an uploaded CSV, merges any alternate sources, and imputes it.
/// The report describes the merged data before imputation.
pub fn ingest_upload(raw: &[u8], region: &str) -> Result<(ValidationReport, SeriesFrame)> {
    ingest_sources(raw, &[], region)
}

pub fn ingest_sources(primary: &[u8], alternates: &[Vec<u8>], region: &str) -> Result<(ValidationReport, SeriesFrame)> {
    let policy = ImputationPolicy::default();
    let frame = parse_region_csv(primary, region)?;
    let alts = alternates
        .iter()
        .enumerate()
        .map(|(i, raw)| Ok(parse_region_csv(raw, region)?.with_source(format!("alt{i}"))))
        .collect::<Result<Vec<_>>>()?;
    let merged = merge_sources(&frame, &alts, &policy)?;
    let report = validate(&merged);
    Ok((report, impute(&merged, &policy)?))
}
