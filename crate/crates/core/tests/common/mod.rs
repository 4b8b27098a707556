#![allow(dead_code)]

use interveno::ingest::SeriesFrame;
use interveno::models::{Grids, TrainConfig};
use interveno::synth::{generate, SynthConfig};
use interveno::PipelineConfig;

pub fn fixture(region: &str, n_days: usize, seed: u64) -> SeriesFrame {
    generate(
        region,
        &SynthConfig {
            n_days,
            seed,
            ..Default::default()
        },
    )
}

/// One candidate per grid; trains in well under a second.
pub fn small_grids() -> Grids {
    Grids {
        ridge_lambda: vec![1.0],
        forest_n_trees: vec![20],
        forest_max_depth: vec![4],
        gbm_n_rounds: vec![30],
        gbm_learning_rate: vec![0.1],
        gbm_max_depth: vec![2],
    }
}

pub fn small_pipeline() -> PipelineConfig {
    PipelineConfig {
        train: TrainConfig {
            grids: small_grids(),
            ..Default::default()
        },
        ..Default::default()
    }
}

pub const SMALL_CONFIG: &str = "\
grid.ridge_lambda = 1
grid.forest_n_trees = 20
grid.forest_max_depth = 4
grid.gbm_n_rounds = 30
grid.gbm_learning_rate = 0.1
grid.gbm_max_depth = 2
";
pub mod service;
