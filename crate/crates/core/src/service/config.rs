//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! data_dir = ./data
//! listen = 127.0.0.1:8080
//! seed = 42
//! test_days = 14
//! horizon_days = 35
//! val_days = 14
//! grid.ridge_lambda = 0.01, 0.1, 1, 10
//! lags.new_cases = 1, 2, 3, 7, 14
//! current.policy_stay_at_home = true
//! lime.kernel_width = 0.75
//! ```

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::explain::LimeConfig;
use crate::pipeline::PipelineConfig;

pub const CONFIG_ENV: &str = "INTERVENO_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub listen: String,
    pub pipeline: PipelineConfig,
    pub lime: LimeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            listen: "127.0.0.1:8080".into(),
            pipeline: PipelineConfig::default(),
            lime: LimeConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v)).collect()
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.pipeline.train.seed
    }

    /// Applies one setting; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        let train = &mut self.pipeline.train;
        let grids = &mut train.grids;
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "listen" => self.listen = value.to_string(),
            "seed" => {
                train.seed = parse(key, value)?;
                self.lime.seed = train.seed;
            }
            "test_days" => self.pipeline.test_days = parse(key, value)?,
            "horizon" | "horizon_days" => self.pipeline.horizon_days = parse(key, value)?,
            "val_days" => train.val_days = parse(key, value)?,
            "min_samples_leaf" => train.min_samples_leaf = parse(key, value)?,
            "feature_subsample" => train.feature_subsample = parse(key, value)?,
            "grid.ridge_lambda" => grids.ridge_lambda = parse_list(key, value)?,
            "grid.forest_n_trees" => grids.forest_n_trees = parse_list(key, value)?,
            "grid.forest_max_depth" => grids.forest_max_depth = parse_list(key, value)?,
            "grid.gbm_n_rounds" => grids.gbm_n_rounds = parse_list(key, value)?,
            "grid.gbm_learning_rate" => grids.gbm_learning_rate = parse_list(key, value)?,
            "grid.gbm_max_depth" => grids.gbm_max_depth = parse_list(key, value)?,
            "lime.n_samples" => self.lime.n_samples = parse(key, value)?,
            "lime.kernel_width" => self.lime.kernel_width = parse(key, value)?,
            "lime.recency_halflife_days" => self.lime.recency_halflife_days = parse(key, value)?,
            "lime.case_weight_floor" => self.lime.case_weight_floor = parse(key, value)?,
            "lime.surrogate_ridge" => self.lime.surrogate_ridge = parse(key, value)?,
            _ => {
                if let Some(col) = key.strip_prefix("lags.") {
                    self.pipeline.lag_spec.set_lags(col, parse_list(key, value)?);
                } else if let Some(col) = key.strip_prefix("current.") {
                    self.pipeline.lag_spec.set_current(col, parse(key, value)?);
                } else {
                    return Err(Error::Config(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    /// Loads `explicit`, else the file named by `INTERVENO_CONFIG`, else
    /// defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(RunConfig::default()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.pipeline.test_days, 14);
        assert_eq!(c.pipeline.horizon_days, 35);
        assert_eq!(c.pipeline.train.val_days, 14);
    }

    #[test]
    fn parses_file_text() {
        let mut c = RunConfig::default();
        c.apply_str(
            "# demo\n\nseed = 9\ngrid.forest_n_trees = 10, 20\nlags.new_cases = 1,7\ncurrent.tests=true\nlime.n_samples=200\n",
        )
        .unwrap();
        assert_eq!(c.seed(), 9);
        assert_eq!(c.lime.seed, 9);
        assert_eq!(c.pipeline.train.grids.forest_n_trees, vec![10, 20]);
        assert_eq!(c.pipeline.lag_spec.entry("new_cases").unwrap().lags, vec![1, 7]);
        assert!(c.pipeline.lag_spec.entry("tests").unwrap().include_current);
        assert_eq!(c.lime.n_samples, 200);
    }

    #[test]
    fn rejects_bad_lines() {
        let mut c = RunConfig::default();
        assert!(c.apply_str("nonsense").is_err());
        assert!(c.apply_str("bogus = 1").is_err());
        assert!(c.apply_str("seed = x").is_err());
    }
}
