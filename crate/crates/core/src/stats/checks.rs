//! Checks that need raw realizations rather than accumulated moments.

use serde::Serialize;

use super::bootstrap::{column, resample, Interval, RESAMPLES};
use super::estimators::SIGMA_MULTIPLIER;
use super::ks::{two_sample_ks, KsOutcome};
use super::report::{Report, ReportRow};
use crate::ensemble::{map_realizations, Ensemble, EnsembleSpec, MeasureSource, StarSide};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScaleLadder};
use crate::kernel::SeedKernel;
use crate::measure::YLaw;
use crate::rng::derive_seed;

const BOOTSTRAP_SEED: u64 = 0x00c0_44e1;

/// Minimum KS p-value for the star test.
pub const KS_LEVEL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarTestConfig {
    pub epsilon: f64,
    /// Ladder depth; `None` picks the automatic depth for the grid.
    pub layers: Option<u32>,
    /// ε of the lognormal factor on the composed side; `None` uses `epsilon`.
    pub factor_epsilon: Option<f64>,
    pub draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentComparison {
    /// Window length `a` of `M([0,a])`.
    pub window: f64,
    pub order: u32,
    pub direct: f64,
    pub composed: f64,
    pub stderr: f64,
    pub z: f64,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StarTestReport {
    pub layers: u32,
    pub draws: usize,
    pub moments: Vec<MomentComparison>,
    pub ks: KsOutcome,
    pub pass: bool,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Compares `[M([0,L/8]), M([0,L/4])]` samples from two sides.
pub fn compare_sides(a: &[[f64; 2]], b: &[[f64; 2]], grid: &GridSpec, layers: u32) -> StarTestReport {
    let windows = [grid.length / 8.0, grid.length / 4.0];
    let mut moments = Vec::new();
    for (w, &window) in windows.iter().enumerate() {
        for order in [1u32, 2] {
            let xa: Vec<f64> = a.iter().map(|x| x[w].powi(order as i32)).collect();
            let xb: Vec<f64> = b.iter().map(|x| x[w].powi(order as i32)).collect();
            let (ma, sa) = mean_se(&xa);
            let (mb, sb) = mean_se(&xb);
            let stderr = (sa * sa + sb * sb).sqrt();
            let diff = (ma - mb).abs();
            let exact = diff <= 1e-12 * ma.abs().max(mb.abs());
            let z = if exact { 0.0 } else { diff / stderr };
            moments.push(MomentComparison { window, order, direct: ma, composed: mb, stderr, z, agree: exact || z <= SIGMA_MULTIPLIER });
        }
    }
    let la: Vec<f64> = a.iter().map(|x| x[0].ln()).collect();
    let lb: Vec<f64> = b.iter().map(|x| x[0].ln()).collect();
    let ks = two_sample_ks(&la, &lb);
    let pass = moments.iter().all(|m| m.agree) && ks.p_value >= KS_LEVEL;
    StarTestReport { layers, draws: a.len().min(b.len()), moments, ks, pass }
}

/// Direct `N`-layer measures against `e^{ω_ε} · ε M'(·/ε)` built from
/// independent `(N−1)`-layer measures.
pub fn star_equation_test(kernel: &SeedKernel, grid: &GridSpec, cfg: &StarTestConfig, workers: usize) -> Result<StarTestReport> {
    let ladder = match cfg.layers {
        Some(n) => ScaleLadder::new(cfg.epsilon, n)?,
        None => ScaleLadder::auto(kernel, cfg.epsilon, grid)?,
    };
    let cells = [grid.cells / 8, grid.cells / 4];
    if cells[0] == 0 || grid.cells % 8 != 0 {
        return Err(Error::InvalidArgument(format!("star test needs a cell count divisible by 8, got {}", grid.cells)));
    }
    let spec = EnsembleSpec {
        kernel: kernel.clone(),
        ladder,
        grid: *grid,
        y_law: YLaw::Deterministic,
        realizations: cfg.draws,
        master_seed: derive_seed(cfg.seed, 1),
    };
    let direct = Ensemble::new(spec.clone())?;
    let composed = StarSide::new(&spec, cfg.factor_epsilon, derive_seed(cfg.seed, 2))?;
    let take = |_: usize, m: &crate::measure::MeasureSample| [m.prefix_mass(cells[0]), m.prefix_mass(cells[1])];
    let a = map_realizations(&direct, workers, take)?;
    let b = map_realizations(&composed, workers, take)?;
    Ok(compare_sides(&a, &b, grid, ladder.layers))
}

impl Report for StarTestReport {
    fn test_name(&self) -> &'static str {
        "star_equation"
    }

    fn rows(&self) -> Vec<ReportRow> {
        self.moments
            .iter()
            .map(|m| {
                let d = m.direct - m.composed;
                ReportRow { x: m.window, estimate: d, stderr: m.stderr, ci_lo: d - 2.0 * m.stderr, ci_hi: d + 2.0 * m.stderr }
            })
            .collect()
    }

    fn passed(&self) -> bool {
        self.pass
    }
}

/// Relative tolerance and required fraction for ergodic averages.
pub const ERGODIC_TOLERANCE: f64 = 0.2;
pub const ERGODIC_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicReport {
    pub windows: Vec<f64>,
    /// `[realization][window]` values of `M([0,T])/T`.
    pub averages: Vec<Vec<f64>>,
    /// Realized `Y` per realization.
    pub targets: Vec<f64>,
    /// Fraction of realizations within tolerance of `Y`, per window.
    pub within: Vec<f64>,
    pub pass: bool,
}

/// `(1/T) M([0,T])` per realization; passes when the largest window is within
/// 20% of the realization's `Y` for at least 90% of realizations.
pub fn ergodic_average<S: MeasureSource + ?Sized>(source: &S, windows: &[f64], workers: usize) -> Result<ErgodicReport> {
    let grid = source.grid();
    if windows.is_empty() {
        return Err(Error::InvalidArgument("no ergodic windows".into()));
    }
    let cells = windows
        .iter()
        .map(|&t| {
            grid.cells_for(t)
                .filter(|&c| c <= grid.cells)
                .ok_or_else(|| Error::InvalidArgument(format!("window {t} does not fit the grid")))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = map_realizations(source, workers, |_, m| {
        let avgs: Vec<f64> = windows.iter().zip(&cells).map(|(&t, &c)| m.prefix_mass(c) / t).collect();
        (avgs, m.y_factor)
    })?;
    if rows.is_empty() {
        return Err(Error::InsufficientSamples("empty ensemble".into()));
    }
    let (averages, targets): (Vec<Vec<f64>>, Vec<f64>) = rows.into_iter().unzip();
    let within: Vec<f64> = (0..windows.len())
        .map(|j| {
            let hits = averages.iter().zip(&targets).filter(|(a, &y)| (a[j] - y).abs() <= ERGODIC_TOLERANCE * y).count();
            hits as f64 / averages.len() as f64
        })
        .collect();
    let largest = windows.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(j, _)| j).unwrap();
    let pass = within[largest] >= ERGODIC_FRACTION;
    Ok(ErgodicReport { windows: windows.to_vec(), averages, targets, within, pass })
}

impl Report for ErgodicReport {
    fn test_name(&self) -> &'static str {
        "ergodic"
    }

    fn rows(&self) -> Vec<ReportRow> {
        self.windows
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let devs: Vec<f64> = self.averages.iter().zip(&self.targets).map(|(a, y)| a[j] / y - 1.0).collect();
                let n = devs.len() as f64;
                let mean = devs.iter().sum::<f64>() / n;
                let sd = if devs.len() > 1 {
                    (devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                let mut sorted = devs.clone();
                sorted.sort_by(f64::total_cmp);
                ReportRow {
                    x: t,
                    estimate: mean,
                    stderr: sd / n.sqrt(),
                    ci_lo: super::bootstrap::quantile(&sorted, 0.025),
                    ci_hi: super::bootstrap::quantile(&sorted, 0.975),
                }
            })
            .collect()
    }

    fn passed(&self) -> bool {
        self.pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    /// Gap at least the kernel support radius: masses independent.
    Independent,
    /// Gap inside the correlation range: correlation expected positive.
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffReport {
    pub distance: f64,
    pub block: f64,
    pub pairs: usize,
    pub correlation: Interval,
    pub expectation: Dependence,
    /// Masses had no variance; correlation undefined and reported as 0.
    pub degenerate: bool,
    pub pass: bool,
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(x, y), (a, b)| (x + a, y + b));
    let (ma, mb) = (ma / n, mb / n);
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (a, b) in pairs {
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
        sab += (a - ma) * (b - mb);
    }
    let denom = (saa * sbb).sqrt();
    (denom > 1e-300 * n && saa > 1e-24 * ma * ma * n && sbb > 1e-24 * mb * mb * n).then(|| sab / denom)
}

/// Pearson correlation of `M(A)` and `M(B)` for blocks of length `block`
/// separated by a gap of `distance`, pooled over realizations with a
/// bootstrap over realizations.
pub fn cutoff_independence<S: MeasureSource + ?Sized>(
    source: &S,
    kernel: &SeedKernel,
    distance: f64,
    block: f64,
    workers: usize,
) -> Result<CutoffReport> {
    let grid = source.grid();
    let w = grid
        .cells_for(block)
        .ok_or_else(|| Error::InvalidArgument(format!("block {block} is not a whole number of cells")))?;
    let gap = grid
        .cells_for(distance)
        .ok_or_else(|| Error::InvalidArgument(format!("distance {distance} is not a whole number of cells")))?;
    let stride = 2 * w + gap;
    if stride > grid.cells {
        return Err(Error::InvalidArgument("block pair does not fit the domain".into()));
    }
    // disjoint pairs [x, x+w), [x+w+gap, x+2w+gap), x = 0, stride, ...
    let per_real = map_realizations(source, workers, |_, m| {
        let mass = |start: usize| m.masses[start..start + w].iter().sum::<f64>();
        (0..=(grid.cells - stride) / stride).map(|i| i * stride).map(|x| (mass(x), mass(x + w + gap))).collect::<Vec<_>>()
    })?;
    let expectation = match kernel.support_radius() {
        Some(r) if distance >= r => Dependence::Independent,
        _ => Dependence::Positive,
    };
    let pooled = |idx: &[usize]| -> Vec<f64> {
        let pairs: Vec<(f64, f64)> = idx.iter().flat_map(|&i| per_real[i].iter().copied()).collect();
        vec![pearson(&pairs).unwrap_or(f64::NAN)]
    };
    let all: Vec<usize> = (0..per_real.len()).collect();
    let point = pooled(&all)[0];
    let pairs = per_real.iter().map(|p| p.len()).sum();
    if point.is_nan() {
        return Ok(CutoffReport {
            distance,
            block,
            pairs,
            correlation: Interval::exact(0.0),
            expectation,
            degenerate: true,
            pass: expectation == Dependence::Independent,
        });
    }
    let draws = resample(per_real.len(), RESAMPLES, BOOTSTRAP_SEED, pooled);
    let correlation = Interval::from_draws(point, &column(&draws, 0));
    let pass = match expectation {
        Dependence::Independent => point.abs() <= SIGMA_MULTIPLIER * correlation.stderr,
        Dependence::Positive => point > SIGMA_MULTIPLIER * correlation.stderr,
    };
    Ok(CutoffReport { distance, block, pairs, correlation, expectation, degenerate: false, pass })
}

impl Report for CutoffReport {
    fn test_name(&self) -> &'static str {
        "cutoff"
    }

    fn rows(&self) -> Vec<ReportRow> {
        vec![ReportRow::new(self.distance, self.correlation)]
    }

    fn passed(&self) -> bool {
        self.pass
    }
}
