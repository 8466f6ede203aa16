//! Estimators computed from a [`MomentAccumulator`].

use serde::{Deserialize, Serialize};

use super::accumulator::{MomentAccumulator, RealizationRecord};
use super::bootstrap::{column, resample, Interval, RESAMPLES};
use super::regression::ols;
use super::report::{Report, ReportRow};
use crate::error::{Error, Result};
use crate::kernel::{integrate_log, log_grid, moment_order_bound, structure_exponent, SeedKernel, DEFAULT_TOL};

/// Minimum ensemble size for scaling fits.
pub const MIN_REALIZATIONS: usize = 100;
/// Coarsest and finest dyadic scales left out of default fits.
pub const EDGE_SCALES: usize = 3;
/// Standard-error multiplier used by pass/fail rules.
pub const SIGMA_MULTIPLIER: f64 = 4.0;

const BOOTSTRAP_SEED: u64 = 0x00b0_07ed;

fn mean_by<F: Fn(&RealizationRecord) -> f64>(records: &[&RealizationRecord], idx: &[usize], f: F) -> f64 {
    idx.iter().map(|&i| f(records[i])).sum::<f64>() / idx.len() as f64
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Fitted moment scaling exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub q: f64,
    pub slope: f64,
    pub stderr: f64,
    pub fit_range: (f64, f64),
    pub r_squared: f64,
    pub scales: usize,
    /// `ξ(q)` of the generating kernel.
    pub expected: f64,
}

/// OLS of `ln Ê[M(I_t)^q]` on `ln t` over dyadic windows `t`.
///
/// Without `fit_range` the scales are `t_j = L 2^{-j}`, `j = 3..log2(n) − 3`.
pub fn estimate_xi(acc: &MomentAccumulator, q_list: &[f64], fit_range: Option<(f64, f64)>, k0: f64) -> Result<Vec<ScalingFit>> {
    let bound = 1.0 + moment_order_bound(k0)?;
    if let Some(&q) = q_list.iter().find(|&&q| q >= bound) {
        return Err(Error::MomentOutOfRange { order: q, bound });
    }
    if acc.len() < MIN_REALIZATIONS {
        return Err(Error::InsufficientSamples(format!("{} realizations, need {MIN_REALIZATIONS}", acc.len())));
    }
    let grid = acc.grid;
    let h = grid.spacing();
    let levels: Vec<usize> = (0..acc.levels())
        .filter(|&lv| {
            let cells = MomentAccumulator::window_cells(lv);
            let t = cells as f64 * h;
            match fit_range {
                Some((lo, hi)) => t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12),
                None => cells >= 1 << EDGE_SCALES && cells <= grid.cells >> EDGE_SCALES,
            }
        })
        .collect();
    if levels.len() < 4 {
        return Err(Error::InvalidArgument(format!("fit needs at least 4 dyadic scales, range has {}", levels.len())));
    }
    let ts: Vec<f64> = levels.iter().map(|&lv| (MomentAccumulator::window_cells(lv) as f64 * h).ln()).collect();
    let records = acc.records();
    let range = (
        MomentAccumulator::window_cells(levels[0]) as f64 * h,
        MomentAccumulator::window_cells(*levels.last().unwrap()) as f64 * h,
    );

    q_list
        .iter()
        .map(|&q| {
            let qi = acc.config.q_index(q)?;
            let fit_on = |idx: &[usize]| {
                let ys: Vec<f64> = levels.iter().map(|&lv| mean_by(&records, idx, |r| r.power_means[lv][qi]).ln()).collect();
                ols(&ts, &ys)
            };
            let point = fit_on(&all(records.len()));
            let draws = resample(records.len(), RESAMPLES, BOOTSTRAP_SEED, |idx| vec![fit_on(idx).slope]);
            let iv = Interval::from_draws(point.slope, &column(&draws, 0));
            Ok(ScalingFit {
                q,
                slope: point.slope,
                stderr: iv.stderr,
                fit_range: range,
                r_squared: point.r_squared,
                scales: levels.len(),
                expected: structure_exponent(k0, q),
            })
        })
        .collect()
}

/// How the ergodic factor is removed from two-point products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum YMode {
    /// Use the realized `Y` of each sample.
    Known,
    /// Use `M([0,L))/L`; realizations below `floor` are flagged and dropped.
    Estimated { floor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelEstimate {
    /// Start-to-start separation `s`.
    pub separation: f64,
    pub interval: Interval,
    /// `K(s)` of the generating kernel, when known.
    pub expected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub window: f64,
    pub rows: Vec<KernelEstimate>,
    /// Realizations dropped for a small estimated `Y`.
    pub flagged: Vec<u64>,
}

fn pair_ratios(acc: &MomentAccumulator, y_mode: YMode) -> Result<(Vec<Vec<f64>>, Vec<u64>)> {
    if acc.config.separations.is_empty() {
        return Err(Error::InvalidArgument("accumulator has no two-point separations".into()));
    }
    let mut flagged = Vec::new();
    let mut ratios = Vec::new();
    for r in acc.records() {
        let y = match y_mode {
            YMode::Known => r.y_factor,
            YMode::Estimated { floor } => {
                if !(r.y_hat >= floor) {
                    flagged.push(r.index);
                    continue;
                }
                r.y_hat
            }
        };
        ratios.push(r.two_point.iter().map(|p| p / (y * y)).collect());
    }
    if ratios.is_empty() {
        return Err(Error::InsufficientSamples("no realization above the Y floor".into()));
    }
    Ok((ratios, flagged))
}

/// `K̂(s) = ln(Ê[M(I) M(I+s)] / (Y² h²))` with bootstrap intervals.
///
/// `tolerance` bounds the interval half-width.
pub fn recover_kernel(acc: &MomentAccumulator, y_mode: YMode, tolerance: Option<f64>, kernel: Option<&SeedKernel>) -> Result<RecoveryReport> {
    let h = acc.config.pair_window as f64 * acc.grid.spacing();
    let seps: Vec<f64> = acc.config.separations.iter().map(|&s| s as f64 * acc.grid.spacing()).collect();
    let min_sep = seps.iter().copied().fold(f64::INFINITY, f64::min);
    if h > min_sep / 4.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("window {h} exceeds a quarter of the smallest separation {min_sep}")));
    }
    let (ratios, flagged) = pair_ratios(acc, y_mode)?;
    let stat = |idx: &[usize]| -> Vec<f64> {
        (0..seps.len())
            .map(|j| (idx.iter().map(|&i| ratios[i][j]).sum::<f64>() / idx.len() as f64 / (h * h)).ln())
            .collect()
    };
    let point = stat(&all(ratios.len()));
    let draws = resample(ratios.len(), RESAMPLES, BOOTSTRAP_SEED, stat);
    let rows: Vec<KernelEstimate> = seps
        .iter()
        .enumerate()
        .map(|(j, &s)| KernelEstimate {
            separation: s,
            interval: Interval::from_draws(point[j], &column(&draws, j)),
            expected: kernel.and_then(|k| integrate_log(k, s, DEFAULT_TOL).ok()),
        })
        .collect();
    if let Some(tol) = tolerance {
        if let Some(row) = rows.iter().find(|r| !(r.interval.half_width() <= tol)) {
            return Err(Error::InsufficientSamples(format!(
                "interval half-width {} at s={} exceeds {tol}",
                row.interval.half_width(),
                row.separation
            )));
        }
    }
    Ok(RecoveryReport { window: h, rows, flagged })
}

impl Report for RecoveryReport {
    fn test_name(&self) -> &'static str {
        "kernel_recovery"
    }

    fn rows(&self) -> Vec<ReportRow> {
        self.rows.iter().map(|r| ReportRow::new(r.separation, r.interval)).collect()
    }

    /// Every known `K(s)` lies in its interval, allowing the window-averaging bias.
    fn passed(&self) -> bool {
        self.rows.iter().all(|r| match r.expected {
            Some(k) => r.interval.contains(k) || (r.interval.estimate - k).abs() <= r.interval.half_width(),
            None => true,
        })
    }
}

/// `sup_{r ≥ d} |e^{K(r)} − 1|`, by a log-grid scan up to `10^4 d`.
pub fn mixing_bound(kernel: &SeedKernel, d: f64) -> Result<f64> {
    let mut best: f64 = 0.0;
    for r in log_grid(d, d * 1e4, 801) {
        best = best.max((integrate_log(kernel, r, DEFAULT_TOL)?.exp() - 1.0).abs());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingRow {
    pub distance: f64,
    /// Signed deviation `Ê[M(A)M(B)]/(Y²|A||B|) − 1`.
    pub interval: Interval,
    pub bound: f64,
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingReport {
    pub window: f64,
    pub rows: Vec<MixingRow>,
}

/// `Ê[M(A)M(B)]/(Y²|A||B|) − 1` for windows at gap `d`; a row is dominated when
/// its interval meets `[−b, b]` with `b = sup_{r≥d}|e^{K(r)} − 1|`.
///
/// The separation `d + h` must have been accumulated.
pub fn mixing_decay(acc: &MomentAccumulator, kernel: &SeedKernel, distances: &[f64]) -> Result<MixingReport> {
    let h_cells = acc.config.pair_window;
    let h = h_cells as f64 * acc.grid.spacing();
    let (ratios, _) = pair_ratios(acc, YMode::Known)?;
    let cols = distances
        .iter()
        .map(|&d| {
            let cells = acc
                .grid
                .cells_for(d)
                .ok_or_else(|| Error::InvalidArgument(format!("distance {d} is not a whole number of cells")))?;
            acc.config
                .separations
                .iter()
                .position(|&s| s == cells + h_cells)
                .ok_or_else(|| Error::InvalidArgument(format!("separation for distance {d} was not accumulated")))
        })
        .collect::<Result<Vec<_>>>()?;
    let stat = |idx: &[usize]| -> Vec<f64> {
        cols.iter().map(|&j| idx.iter().map(|&i| ratios[i][j]).sum::<f64>() / idx.len() as f64 / (h * h) - 1.0).collect()
    };
    let point = stat(&all(ratios.len()));
    let draws = resample(ratios.len(), RESAMPLES, BOOTSTRAP_SEED, stat);
    let rows = distances
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            let interval = Interval::from_draws(point[j], &column(&draws, j));
            let bound = mixing_bound(kernel, d)?;
            let slack = bound * 1e-9 + 1e-12;
            let (lo, hi) = if interval.lo.is_nan() { (interval.estimate, interval.estimate) } else { (interval.lo, interval.hi) };
            Ok(MixingRow { distance: d, interval, bound, dominated: lo <= bound + slack && hi >= -bound - slack })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MixingReport { window: h, rows })
}

impl Report for MixingReport {
    fn test_name(&self) -> &'static str {
        "mixing"
    }

    fn rows(&self) -> Vec<ReportRow> {
        self.rows.iter().map(|r| ReportRow::new(r.distance, r.interval)).collect()
    }

    fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.dominated)
    }
}

/// Allowed slope of the log table over its last decade.
pub const TREND_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallIntervalReport {
    pub gamma: f64,
    pub rho: f64,
    /// `(n, n^{1+ρ} Ê[M([0,1/n])^{1+γ}])`.
    pub rows: Vec<(usize, Interval)>,
    /// Log-log slope over the largest decade of `n`.
    pub trend: Interval,
    pub bounded: bool,
}

fn decade_slope(ns: &[usize], values: &[f64]) -> f64 {
    let top = *ns.iter().max().unwrap() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(values)
        .filter(|(&n, _)| n as f64 >= top / 10.0)
        .map(|(&n, &v)| ((n as f64).ln(), v.ln()))
        .unzip();
    if xs.len() < 2 {
        0.0
    } else {
        ols(&xs, &ys).slope
    }
}

/// Table `n ↦ n^{1+ρ} Ê[M([0,1/n])^{1+γ}]`, `ρ = γ − (γ² + γ)/(1 + δ)` with
/// `δ = 2/k(0) − 1`; bounded when its last-decade slope stays below
/// [`TREND_TOLERANCE`] plus two standard errors.
pub fn small_interval_moments(acc: &MomentAccumulator, gamma: f64, n_list: &[usize], k0: f64) -> Result<SmallIntervalReport> {
    let delta = moment_order_bound(k0)?;
    if !(gamma > 0.0) || gamma >= delta {
        return Err(Error::MomentOutOfRange { order: 1.0 + gamma, bound: 1.0 + delta });
    }
    let rho = if delta.is_infinite() { gamma } else { gamma - (gamma * gamma + gamma) / (1.0 + delta) };
    let qi = acc.config.q_index(1.0 + gamma)?;
    let levels = n_list.iter().map(|&n| acc.level_for(1.0 / n as f64)).collect::<Result<Vec<_>>>()?;
    let records = acc.records();
    if records.is_empty() {
        return Err(Error::InsufficientSamples("empty accumulator".into()));
    }
    let table = |idx: &[usize]| -> Vec<f64> {
        n_list
            .iter()
            .zip(&levels)
            .map(|(&n, &lv)| (n as f64).powf(1.0 + rho) * mean_by(&records, idx, |r| r.power_means[lv][qi]))
            .collect()
    };
    let with_trend = |idx: &[usize]| {
        let mut t = table(idx);
        t.push(decade_slope(n_list, &t));
        t
    };
    let point = with_trend(&all(records.len()));
    let draws = resample(records.len(), RESAMPLES, BOOTSTRAP_SEED, with_trend);
    let rows: Vec<(usize, Interval)> =
        n_list.iter().enumerate().map(|(j, &n)| (n, Interval::from_draws(point[j], &column(&draws, j)))).collect();
    let m = n_list.len();
    let trend = Interval::from_draws(point[m], &column(&draws, m));
    let bounded = trend.estimate <= TREND_TOLERANCE + 2.0 * trend.stderr.max(0.0);
    Ok(SmallIntervalReport { gamma, rho, rows, trend, bounded })
}

impl Report for SmallIntervalReport {
    fn test_name(&self) -> &'static str {
        "small_intervals"
    }

    fn rows(&self) -> Vec<ReportRow> {
        self.rows.iter().map(|(n, iv)| ReportRow::new(*n as f64, *iv)).collect()
    }

    fn passed(&self) -> bool {
        self.bounded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomTable {
    pub alpha: f64,
    /// `(n, n P̂(M([0,1/n]) > α))`.
    pub rows: Vec<(usize, Interval)>,
    pub decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AtomReport {
    pub tables: Vec<AtomTable>,
}

/// Tables `n ↦ n P̂(M(I) > α)` over windows of length `1/n`.
///
/// A table counts as decreasing when no step rises by more than 4 bootstrap
/// standard errors and its last entry is below its first (or all entries vanish).
pub fn atom_scan(acc: &MomentAccumulator, alpha_list: &[f64], n_list: &[usize]) -> Result<AtomReport> {
    let levels = n_list.iter().map(|&n| acc.level_for(1.0 / n as f64)).collect::<Result<Vec<_>>>()?;
    let records = acc.records();
    if records.is_empty() {
        return Err(Error::InsufficientSamples("empty accumulator".into()));
    }
    let tables = alpha_list
        .iter()
        .map(|&alpha| {
            let ai = acc
                .config
                .thresholds
                .iter()
                .position(|&a| (a - alpha).abs() <= 1e-12 * alpha.abs().max(1.0))
                .ok_or_else(|| Error::InvalidArgument(format!("threshold {alpha} was not accumulated")))?;
            let table = |idx: &[usize]| -> Vec<f64> {
                let t: Vec<f64> = n_list
                    .iter()
                    .zip(&levels)
                    .map(|(&n, &lv)| n as f64 * mean_by(&records, idx, |r| r.exceed[lv][ai]))
                    .collect();
                let steps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
                [t, steps].concat()
            };
            let point = table(&all(records.len()));
            let draws = resample(records.len(), RESAMPLES, BOOTSTRAP_SEED, table);
            let m = n_list.len();
            let rows: Vec<(usize, Interval)> =
                n_list.iter().enumerate().map(|(j, &n)| (n, Interval::from_draws(point[j], &column(&draws, j)))).collect();
            let steps_ok = (0..m.saturating_sub(1)).all(|j| {
                let iv = Interval::from_draws(point[m + j], &column(&draws, m + j));
                iv.estimate <= SIGMA_MULTIPLIER * iv.stderr.max(0.0)
            });
            let first = point[0];
            let last = point[m - 1];
            let all_zero = point[..m].iter().all(|&v| v == 0.0);
            Ok(AtomTable { alpha, rows, decreasing: steps_ok && (all_zero || last < first) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AtomReport { tables })
}

impl Report for AtomReport {
    fn test_name(&self) -> &'static str {
        "atoms"
    }

    fn rows(&self) -> Vec<ReportRow> {
        self.tables.iter().flat_map(|t| t.rows.iter().map(|(n, iv)| ReportRow::new(*n as f64, *iv))).collect()
    }

    fn passed(&self) -> bool {
        self.tables.iter().all(|t| t.decreasing)
    }
}

impl Report for ScalingFits {
    fn test_name(&self) -> &'static str {
        "structure_exponent"
    }

    fn rows(&self) -> Vec<ReportRow> {
        self.fits
            .iter()
            .map(|f| ReportRow { x: f.q, estimate: f.slope, stderr: f.stderr, ci_lo: f.slope - 2.0 * f.stderr, ci_hi: f.slope + 2.0 * f.stderr })
            .collect()
    }

    /// Each slope within `max(0.05, 2 stderr)` of `ξ(q)`; `q = 1` within one stderr.
    fn passed(&self) -> bool {
        self.fits.iter().all(|f| {
            if f.q == 1.0 {
                (f.slope - 1.0).abs() <= f.stderr + 1e-9
            } else {
                (f.slope - f.expected).abs() <= XI_TOLERANCE.max(2.0 * f.stderr)
            }
        })
    }
}

/// Absolute tolerance on fitted exponents.
pub const XI_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFits {
    pub fits: Vec<ScalingFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationReport {
    pub expected: f64,
    /// Mean total mass with its normal-theory standard error.
    pub mean: f64,
    pub stderr: f64,
    pub z: f64,
    pub pass: bool,
}

/// Mean of `M([0, L))` against `expected`, within 4 standard errors.
pub fn normalization(acc: &MomentAccumulator, expected: f64) -> Result<NormalizationReport> {
    let totals: Vec<f64> = acc.records().iter().map(|r| r.y_hat * acc.grid.length).collect();
    if totals.len() < 2 {
        return Err(Error::InsufficientSamples("normalization needs at least two realizations".into()));
    }
    let n = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let stderr = (totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let diff = (mean - expected).abs();
    let exact = diff <= 1e-12 * expected.abs().max(1.0);
    let z = if exact { 0.0 } else { diff / stderr };
    Ok(NormalizationReport { expected, mean, stderr, z, pass: exact || z <= SIGMA_MULTIPLIER })
}

impl Report for NormalizationReport {
    fn test_name(&self) -> &'static str {
        "normalization"
    }

    fn rows(&self) -> Vec<ReportRow> {
        vec![ReportRow {
            x: self.expected,
            estimate: self.mean,
            stderr: self.stderr,
            ci_lo: self.mean - 2.0 * self.stderr,
            ci_hi: self.mean + 2.0 * self.stderr,
        }]
    }

    fn passed(&self) -> bool {
        self.pass
    }
}
