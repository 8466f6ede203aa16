//! Nonparametric bootstrap over realizations.

use rand::Rng;

use crate::rng::substream;

/// Resamples used for every error bar.
pub const RESAMPLES: usize = 200;
const STREAM_BASE: u64 = 1 << 60;

/// Evaluates `stat` on `resamples` index resamples of `0..n` (with replacement).
/// Returns `[resample][output]`.
pub fn resample<F>(n: usize, resamples: usize, seed: u64, stat: F) -> Vec<Vec<f64>>
where
    F: Fn(&[usize]) -> Vec<f64>,
{
    let mut idx = vec![0usize; n];
    (0..resamples)
        .map(|b| {
            let mut rng = substream(seed, STREAM_BASE + b as u64);
            for slot in idx.iter_mut() {
                *slot = rng.random_range(0..n);
            }
            idx.sort_unstable();
            stat(&idx)
        })
        .collect()
}

/// Point estimate with bootstrap standard error and 95% percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Interval {
    pub estimate: f64,
    pub stderr: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn exact(estimate: f64) -> Self {
        Interval { estimate, stderr: 0.0, lo: estimate, hi: estimate }
    }

    pub fn from_draws(estimate: f64, draws: &[f64]) -> Self {
        let finite: Vec<f64> = draws.iter().copied().filter(|d| d.is_finite()).collect();
        if finite.len() < 2 {
            return Interval { estimate, stderr: f64::NAN, lo: f64::NAN, hi: f64::NAN };
        }
        if finite.iter().all(|&d| d == finite[0]) {
            return Interval { estimate, stderr: 0.0, lo: finite[0], hi: finite[0] };
        }
        let n = finite.len() as f64;
        let mean = finite.iter().sum::<f64>() / n;
        let var = finite.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        let mut sorted = finite;
        sorted.sort_by(f64::total_cmp);
        Interval { estimate, stderr: var.sqrt(), lo: quantile(&sorted, 0.025), hi: quantile(&sorted, 0.975) }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Column `j` of a `[resample][output]` table.
pub fn column(table: &[Vec<f64>], j: usize) -> Vec<f64> {
    table.iter().map(|row| row[j]).collect()
}
