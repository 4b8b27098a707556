//! Regional epidemic forecasting and intervention simulation.
//!
//! Pipeline: [`ingest`] CSV series → [`features`] lagged matrices →
//! [`models`] ensemble → [`backtest`] / [`simulate`] / [`explain`], all exposed
//! through [`service`] (HTTP, CLI, persistence).

pub mod backtest;
pub mod error;
pub mod explain;
pub mod features;
pub mod ingest;
pub mod matrix;
pub mod models;
pub mod pipeline;
pub mod service;
pub mod simulate;
pub mod synth;

pub use error::{Error, Result};
pub use pipeline::{train_pair, train_target, ArtifactPair, PipelineConfig};
