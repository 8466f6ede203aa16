//! Per-realization summaries of window masses.
//!
//! Each realization is reduced to a [`RealizationRecord`]; the accumulator
//! keeps records keyed by realization index, so merging partial accumulators
//! gives the same state in any order or grouping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ensemble::{map_realizations, MeasureSource};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::measure::MeasureSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccumulatorConfig {
    /// Moment orders tracked at every dyadic window size.
    pub q_list: Vec<f64>,
    /// Mass thresholds for exceedance frequencies.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// Window width in cells for two-point products; 0 disables them.
    #[serde(default)]
    pub pair_window: usize,
    /// Start-to-start separations in cells; multiples of `pair_window`.
    #[serde(default)]
    pub separations: Vec<usize>,
}

impl AccumulatorConfig {
    pub fn moments(q_list: Vec<f64>) -> Self {
        AccumulatorConfig { q_list, thresholds: Vec::new(), pair_window: 0, separations: Vec::new() }
    }

    fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.q_list.iter().any(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(Error::InvalidArgument("moment orders must be positive".into()));
        }
        if !self.separations.is_empty() {
            let w = self.pair_window;
            if w == 0 {
                return Err(Error::InvalidArgument("separations need a positive pair window".into()));
            }
            for &s in &self.separations {
                if s % w != 0 {
                    return Err(Error::InvalidArgument(format!("separation {s} is not a multiple of the pair window {w}")));
                }
                if s + w > grid.cells {
                    return Err(Error::InvalidArgument(format!("separation {s} plus window {w} exceeds {} cells", grid.cells)));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn q_index(&self, q: f64) -> Result<usize> {
        self.q_list
            .iter()
            .position(|&x| (x - q).abs() <= 1e-12 * q.abs().max(1.0))
            .ok_or_else(|| Error::InvalidArgument(format!("moment order {q} was not accumulated")))
    }
}

/// Summary statistics of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: u64,
    pub y_factor: f64,
    /// `M([0, L)) / L`.
    pub y_hat: f64,
    /// `[level][q]`: mean over tiling windows of `2^level` cells of `M(I)^q`.
    pub power_means: Vec<Vec<f64>>,
    /// `[level][threshold]`: fraction of tiling windows with mass above the threshold.
    pub exceed: Vec<Vec<f64>>,
    /// `[separation]`: mean of `M(I) M(I + s)` over tiled window pairs.
    pub two_point: Vec<f64>,
}

impl RealizationRecord {
    pub fn compute(index: u64, sample: &MeasureSample, config: &AccumulatorConfig) -> Self {
        let grid = sample.grid;
        let mut level_masses = sample.masses.clone();
        let mut power_means = Vec::new();
        let mut exceed = Vec::new();
        while !level_masses.is_empty() {
            let n = level_masses.len() as f64;
            power_means.push(
                config
                    .q_list
                    .iter()
                    .map(|&q| {
                        if q == 1.0 {
                            level_masses.iter().sum::<f64>() / n
                        } else {
                            level_masses.iter().map(|m| m.powf(q)).sum::<f64>() / n
                        }
                    })
                    .collect(),
            );
            exceed.push(
                config
                    .thresholds
                    .iter()
                    .map(|&a| level_masses.iter().filter(|&&m| m > a).count() as f64 / n)
                    .collect(),
            );
            level_masses = level_masses.chunks_exact(2).map(|c| c[0] + c[1]).collect();
        }

        let two_point = if config.separations.is_empty() {
            Vec::new()
        } else {
            let w = config.pair_window;
            let tiles: Vec<f64> = sample.masses.chunks_exact(w).map(|c| c.iter().sum()).collect();
            config
                .separations
                .iter()
                .map(|&s| {
                    let lag = s / w;
                    let pairs = tiles.len() - lag;
                    (0..pairs).map(|i| tiles[i] * tiles[i + lag]).sum::<f64>() / pairs as f64
                })
                .collect()
        };

        RealizationRecord {
            index,
            y_factor: sample.y_factor,
            y_hat: sample.total_mass() / grid.length,
            power_means,
            exceed,
            two_point,
        }
    }
}

/// Mergeable collection of realization records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    pub config: AccumulatorConfig,
    pub grid: GridSpec,
    records: BTreeMap<u64, RealizationRecord>,
}

impl MomentAccumulator {
    pub fn new(config: AccumulatorConfig, grid: GridSpec) -> Result<Self> {
        config.validate(&grid)?;
        Ok(MomentAccumulator { config, grid, records: BTreeMap::new() })
    }

    /// Accumulates every realization of `source` on `workers` threads.
    pub fn from_source<S: MeasureSource + ?Sized>(source: &S, config: AccumulatorConfig, workers: usize) -> Result<Self> {
        let mut acc = MomentAccumulator::new(config, source.grid())?;
        let cfg = acc.config.clone();
        let records = map_realizations(source, workers, |i, m| RealizationRecord::compute(i as u64, m, &cfg))?;
        for r in records {
            acc.records.insert(r.index, r);
        }
        Ok(acc)
    }

    pub fn push(&mut self, index: u64, sample: &MeasureSample) -> Result<()> {
        if !sample.grid.matches(&self.grid) {
            return Err(Error::GridMismatch(format!("sample grid {:?} differs from {:?}", sample.grid, self.grid)));
        }
        self.records.insert(index, RealizationRecord::compute(index, sample, &self.config));
        Ok(())
    }

    /// Union of the two record sets.
    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if self.config != other.config || !self.grid.matches(&other.grid) {
            return Err(Error::GridMismatch("accumulators have different layouts".into()));
        }
        for (k, r) in &other.records {
            self.records.insert(*k, r.clone());
        }
        Ok(())
    }

    /// Copy restricted to the two-point columns at `separations` (in that order).
    pub fn select_pairs(&self, pair_window: usize, separations: &[usize]) -> Result<MomentAccumulator> {
        if pair_window != self.config.pair_window {
            return Err(Error::InvalidArgument(format!(
                "pair window {pair_window} was not accumulated (have {})",
                self.config.pair_window
            )));
        }
        let cols = separations
            .iter()
            .map(|s| {
                self.config
                    .separations
                    .iter()
                    .position(|x| x == s)
                    .ok_or_else(|| Error::InvalidArgument(format!("separation {s} was not accumulated")))
            })
            .collect::<Result<Vec<_>>>()?;
        let config = AccumulatorConfig { separations: separations.to_vec(), ..self.config.clone() };
        let records = self
            .records
            .iter()
            .map(|(k, r)| {
                let two_point = cols.iter().map(|&c| r.two_point[c]).collect();
                (*k, RealizationRecord { two_point, ..r.clone() })
            })
            .collect();
        Ok(MomentAccumulator { config, grid: self.grid, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in realization order.
    pub fn records(&self) -> Vec<&RealizationRecord> {
        self.records.values().collect()
    }

    /// Window width in cells at `level`.
    pub fn window_cells(level: usize) -> usize {
        1 << level
    }

    /// Dyadic level whose windows have physical length `t`.
    pub fn level_for(&self, t: f64) -> Result<usize> {
        let cells = self
            .grid
            .cells_for(t)
            .ok_or_else(|| Error::InvalidArgument(format!("length {t} is not a whole number of cells")))?;
        if !cells.is_power_of_two() || cells > self.grid.cells {
            return Err(Error::InvalidArgument(format!("length {t} is not a dyadic window of the grid")));
        }
        Ok(cells.trailing_zeros() as usize)
    }

    pub fn levels(&self) -> usize {
        (usize::BITS - self.grid.cells.leading_zeros()) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::MeasureMeta;

    fn sample(masses: Vec<f64>, length: f64) -> MeasureSample {
        let grid = GridSpec::new(length, masses.len()).unwrap();
        let meta = MeasureMeta { kernel: "test".into(), epsilon: 0.5, layers: 1, master_seed: 0, realization: 0 };
        MeasureSample { masses, grid, y_factor: 1.0, meta }
    }

    #[test]
    fn dyadic_levels_and_pairs() {
        let s = sample(vec![1.0, 2.0, 3.0, 4.0], 4.0);
        let cfg = AccumulatorConfig { q_list: vec![1.0, 2.0], thresholds: vec![2.5], pair_window: 1, separations: vec![1, 2] };
        let r = RealizationRecord::compute(0, &s, &cfg);
        assert_eq!(r.power_means.len(), 3);
        assert_eq!(r.power_means[0], vec![2.5, 7.5]);
        assert_eq!(r.power_means[1], vec![5.0, (9.0 + 49.0) / 2.0]);
        assert_eq!(r.power_means[2], vec![10.0, 100.0]);
        assert_eq!(r.exceed[0], vec![0.5]);
        assert_eq!(r.exceed[2], vec![1.0]);
        assert_eq!(r.two_point, vec![(2.0 + 6.0 + 12.0) / 3.0, (3.0 + 8.0) / 2.0]);
        assert_eq!(r.y_hat, 2.5);
    }

    #[test]
    fn rejects_misaligned_separation() {
        let grid = GridSpec::new(1.0, 16).unwrap();
        let cfg = AccumulatorConfig { q_list: vec![2.0], thresholds: vec![], pair_window: 2, separations: vec![3] };
        assert!(MomentAccumulator::new(cfg, grid).is_err());
    }

    #[test]
    fn merge_is_order_free() {
        let grid = GridSpec::new(1.0, 8).unwrap();
        let cfg = AccumulatorConfig::moments(vec![1.5]);
        let mk = |i: u64| sample((0..8).map(|j| 0.1 + (i * 8 + j) as f64 * 0.01).collect(), 1.0);
        let mut a = MomentAccumulator::new(cfg.clone(), grid).unwrap();
        let mut b = a.clone();
        let mut c = a.clone();
        for i in 0..3 {
            a.push(i, &mk(i)).unwrap();
        }
        for i in 3..6 {
            b.push(i, &mk(i)).unwrap();
        }
        for i in (0..6).rev() {
            c.push(i, &mk(i)).unwrap();
        }
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab, c);
    }
}
