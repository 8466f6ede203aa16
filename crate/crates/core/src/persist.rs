//! On-disk ensembles: `ens-<seed>/real-<k>.csv` with header
//! `cell_index,position,mass` and a `real-<k>.json` sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::MeasureSource;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::measure::{MeasureMeta, MeasureSample};

pub const CSV_HEADER: &str = "cell_index,position,mass";

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub grid: GridSpec,
    pub y_factor: f64,
    pub meta: MeasureMeta,
}

/// Serializes with sorted keys.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn ensemble_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("ens-{seed}"))
}

pub fn measure_csv(sample: &MeasureSample) -> String {
    let mut out = String::with_capacity(32 * sample.masses.len() + 32);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, m) in sample.masses.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", fmt_f64(sample.grid.position(i)), fmt_f64(*m)));
    }
    out
}

pub fn write_realization(dir: &Path, sample: &MeasureSample) -> Result<()> {
    fs::create_dir_all(dir)?;
    let k = sample.meta.realization;
    let mut f = fs::File::create(dir.join(format!("real-{k}.csv")))?;
    f.write_all(measure_csv(sample).as_bytes())?;
    let side = Sidecar { grid: sample.grid, y_factor: sample.y_factor, meta: sample.meta.clone() };
    fs::write(dir.join(format!("real-{k}.json")), to_sorted_json(&side)?)?;
    Ok(())
}

pub fn read_realization(dir: &Path, k: usize) -> Result<MeasureSample> {
    let side_text = fs::read_to_string(dir.join(format!("real-{k}.json")))?;
    let side: Sidecar = serde_json::from_str(&side_text).map_err(|e| Error::Io(format!("real-{k}.json: {e}")))?;
    let text = fs::read_to_string(dir.join(format!("real-{k}.csv")))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Io(format!("real-{k}.csv: missing header `{CSV_HEADER}`")));
    }
    let mut masses = Vec::with_capacity(side.grid.cells);
    for (row, line) in lines.enumerate() {
        let mass = line
            .rsplit(',')
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::Io(format!("real-{k}.csv: bad row {}", row + 2)))?;
        masses.push(mass);
    }
    if masses.len() != side.grid.cells {
        return Err(Error::Io(format!("real-{k}.csv: {} rows for {} cells", masses.len(), side.grid.cells)));
    }
    Ok(MeasureSample { masses, grid: side.grid, y_factor: side.y_factor, meta: side.meta })
}

/// An ensemble directory read back lazily.
#[derive(Debug, Clone)]
pub struct DiskEnsemble {
    pub dir: PathBuf,
    count: usize,
    grid: GridSpec,
}

impl DiskEnsemble {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let mut count = 0;
        while dir.join(format!("real-{count}.csv")).exists() {
            count += 1;
        }
        if count == 0 {
            return Err(Error::Io(format!("no realizations in {}", dir.display())));
        }
        let grid = read_realization(&dir, 0)?.grid;
        Ok(DiskEnsemble { dir, count, grid })
    }
}

impl MeasureSource for DiskEnsemble {
    fn len(&self) -> usize {
        self.count
    }

    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn realization(&self, index: usize) -> Result<MeasureSample> {
        read_realization(&self.dir, index)
    }
}
