//! Per-region data, model pairs, and back-test history.
//!
//! On disk (when a data directory is set):
//!
//! ```text
//! <data_dir>/<region>/data.csv
//! <data_dir>/<region>/cases.json
//! <data_dir>/<region>/revenue.json
//! <data_dir>/<region>/archive/<target>-<timestamp>.json
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use crate::backtest::BacktestReport;
use crate::error::{Error, Result};
use crate::ingest::{parse_region_csv, SeriesFrame};
use crate::pipeline::ArtifactPair;

use super::persist::{load_artifact, save_artifact, write_atomic};

#[derive(Debug, Default, Clone)]
struct RegionEntry {
    frame: Option<Arc<SeriesFrame>>,
    models: Option<Arc<ArtifactPair>>,
    backtests: Vec<BacktestReport>,
}

#[derive(Debug, Default)]
pub struct RegionStore {
    dir: Option<PathBuf>,
    regions: RwLock<BTreeMap<String, RegionEntry>>,
    training: Mutex<HashSet<String>>,
}

/// Exclusive per-region training slot, released on drop.
#[derive(Debug)]
pub struct TrainingGuard {
    store: Arc<RegionStore>,
    region: String,
}

impl Drop for TrainingGuard {
    fn drop(&mut self) {
        self.store
            .training
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .remove(&self.region);
    }
}

pub fn check_region_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("invalid region id {id:?}")))
    }
}

impl RegionStore {
    /// In-memory store with no files.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a directory-backed store and loads every
    /// region found in it.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut regions = BTreeMap::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if !entry.file_type()?.is_dir() || check_region_id(&name).is_err() {
                continue;
            }
            let path = entry.path();
            let mut region = RegionEntry::default();
            let data = path.join("data.csv");
            if data.exists() {
                region.frame = Some(Arc::new(parse_region_csv(&fs::read(&data)?, &name)?));
            }
            let (cases, revenue) = (path.join("cases.json"), path.join("revenue.json"));
            if cases.exists() && revenue.exists() {
                region.models = Some(Arc::new(ArtifactPair {
                    cases: load_artifact(&cases)?,
                    revenue: load_artifact(&revenue)?,
                }));
            }
            regions.insert(name, region);
        }
        Ok(RegionStore {
            dir: Some(dir.to_path_buf()),
            regions: RwLock::new(regions),
            training: Mutex::new(HashSet::new()),
        })
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn region_dir(&self, region: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(region))
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, RegionEntry>> {
        self.regions.read().unwrap_or_else(|p| p.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, BTreeMap<String, RegionEntry>> {
        self.regions.write().unwrap_or_else(|p| p.into_inner())
    }

    pub fn region_ids(&self) -> Vec<String> {
        self.read().keys().cloned().collect()
    }

    pub fn put_frame(&self, region: &str, frame: SeriesFrame) -> Result<()> {
        check_region_id(region)?;
        if let Some(dir) = self.region_dir(region) {
            fs::create_dir_all(&dir)?;
            write_atomic(&dir.join("data.csv"), frame.to_csv().as_bytes())?;
        }
        self.write().entry(region.to_string()).or_default().frame = Some(Arc::new(frame));
        Ok(())
    }

    pub fn frame(&self, region: &str) -> Result<Arc<SeriesFrame>> {
        self.read()
            .get(region)
            .and_then(|r| r.frame.clone())
            .ok_or_else(|| Error::UnknownRegion(region.to_string()))
    }

    pub fn models(&self, region: &str) -> Result<Arc<ArtifactPair>> {
        let regions = self.read();
        let entry = regions
            .get(region)
            .ok_or_else(|| Error::UnknownRegion(region.to_string()))?;
        entry
            .models
            .clone()
            .ok_or_else(|| Error::NotTrained(region.to_string()))
    }

    /// Claims the region's training slot or fails with `TrainingInProgress`.
    pub fn try_begin_training(self: &Arc<Self>, region: &str) -> Result<TrainingGuard> {
        let mut busy = self.training.lock().unwrap_or_else(|p| p.into_inner());
        if !busy.insert(region.to_string()) {
            return Err(Error::TrainingInProgress(region.to_string()));
        }
        Ok(TrainingGuard {
            store: Arc::clone(self),
            region: region.to_string(),
        })
    }

    /// Swaps in a new model pair; readers see the old or the new pair, never
    /// a mix. Previous files are archived with a timestamp.
    pub fn install_models(&self, region: &str, pair: ArtifactPair) -> Result<()> {
        check_region_id(region)?;
        if let Some(dir) = self.region_dir(region) {
            let archive = dir.join("archive");
            fs::create_dir_all(&archive)?;
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.6fZ");
            for name in ["cases", "revenue"] {
                let current = dir.join(format!("{name}.json"));
                if current.exists() {
                    fs::rename(&current, archive.join(format!("{name}-{stamp}.json")))?;
                }
            }
            save_artifact(&pair.cases, &dir.join("cases.json"))?;
            save_artifact(&pair.revenue, &dir.join("revenue.json"))?;
        }
        self.write().entry(region.to_string()).or_default().models = Some(Arc::new(pair));
        Ok(())
    }

    pub fn record_backtest(&self, region: &str, report: BacktestReport) {
        self.write()
            .entry(region.to_string())
            .or_default()
            .backtests
            .push(report);
    }

    pub fn backtests(&self, region: &str) -> Vec<BacktestReport> {
        self.read()
            .get(region)
            .map(|r| r.backtests.clone())
            .unwrap_or_default()
    }
}
