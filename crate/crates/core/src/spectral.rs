//! Spectral-measure representation of seed kernels and direct synthesis of
//! the ε-layer field from the `(λ, y)` half-plane with intensity
//! `F(dλ) dy/y` on `y ∈ [1, 1/ε)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{check_epsilon, epsilon_kernel, KernelSpec, SeedKernel, DEFAULT_TOL};
use crate::quad;
use crate::rng::substream;

/// Relative spectral mass allowed outside the discretized frequency range.
pub const TRUNCATED_MASS: f64 = 1e-6;

type Density = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum SpectralKind {
    /// Absolutely continuous `F(dλ) = f(λ) dλ` with `f` even and decreasing in `|λ|`.
    Density {
        f: Density,
        /// `|λ|` beyond which at most [`TRUNCATED_MASS`] of the mass lies.
        cutoff: f64,
        /// Width of the bulk; frequency cells are uniform below it and geometric above.
        scale: f64,
    },
    /// Symmetric atoms `(λ_i, w_i)`.
    Atoms(Vec<(f64, f64)>),
}

/// Symmetric spectral measure `F` with `k(t) = ∫ e^{iλt} F(dλ)`.
#[derive(Clone)]
pub struct SpectralMeasure {
    pub kind: SpectralKind,
    pub total_mass: f64,
}

impl std::fmt::Debug for SpectralMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            SpectralKind::Density { cutoff, .. } => format!("density(cutoff={cutoff})"),
            SpectralKind::Atoms(a) => format!("atoms({a:?})"),
        };
        f.debug_struct("SpectralMeasure").field("kind", &kind).field("total_mass", &self.total_mass).finish()
    }
}

impl SpectralMeasure {
    pub fn atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(l, w) in &atoms {
            if !(w > 0.0) || !l.is_finite() {
                return Err(Error::InvalidArgument(format!("atom ({l}, {w}) needs finite location and positive mass")));
            }
            let mirrored = atoms.iter().any(|&(l2, w2)| l2 == -l && w2 == w);
            if !mirrored {
                return Err(Error::InvalidArgument(format!("atom at {l} has no symmetric partner")));
            }
        }
        let total_mass = atoms.iter().map(|a| a.1).sum();
        Ok(SpectralMeasure { kind: SpectralKind::Atoms(atoms), total_mass })
    }

    /// Registered spectral form of a catalog kernel.
    pub fn of_kernel(k: &SeedKernel) -> Result<Self> {
        match k.spec() {
            Some(KernelSpec::Cosine {}) => SpectralMeasure::atoms(vec![(-1.0, 0.5), (1.0, 0.5)]),
            Some(KernelSpec::Zero {}) => SpectralMeasure::atoms(Vec::new()),
            Some(KernelSpec::Gaussian { sigma }) => {
                // f(λ) = e^{−σ²λ²/2} / (2π); mass 1/(σ√(2π)) = k(0).
                // P(|Z| > 5) ≈ 5.7e-7 for a standard normal.
                Ok(SpectralMeasure {
                    kind: SpectralKind::Density {
                        f: Arc::new(move |l: f64| (-0.5 * sigma * sigma * l * l).exp() / (2.0 * PI)),
                        cutoff: 5.0 / sigma,
                        scale: 1.0 / sigma,
                    },
                    total_mass: 1.0 / (sigma * (2.0 * PI).sqrt()),
                })
            }
            Some(KernelSpec::Ou { sigma, theta }) => {
                // Lorentzian f(λ) = σ² / (2π(θ² + λ²)); mass σ²/(2θ) = k(0).
                // Mass beyond Λ is 1 − (2/π) atan(Λ/θ) of the total.
                let cutoff = theta * (0.5 * PI * (1.0 - TRUNCATED_MASS)).tan();
                Ok(SpectralMeasure {
                    kind: SpectralKind::Density {
                        f: Arc::new(move |l: f64| sigma * sigma / (2.0 * PI * (theta * theta + l * l))),
                        cutoff,
                        scale: theta,
                    },
                    total_mass: sigma * sigma / (2.0 * theta),
                })
            }
            _ => Err(Error::NoSpectralForm(k.name())),
        }
    }
}

/// `k(t) = ∫ cos(λt) F(dλ)`: a finite sum for atoms, quadrature for densities.
pub fn kernel_from_spectral(measure: &SpectralMeasure, t: f64, tol: f64) -> f64 {
    match &measure.kind {
        SpectralKind::Atoms(atoms) => atoms.iter().map(|&(l, w)| w * (l * t).cos()).sum(),
        SpectralKind::Density { f, cutoff, scale } => {
            let t = t.abs();
            // Far enough out that the remaining contribution is below tol:
            // the mass for t = 0, the integration-by-parts bound 2f(Λ)/t otherwise.
            let mut limit = cutoff.max(*scale);
            if t == 0.0 {
                while 2.0 * quad::integrate(&|l| f(l), limit, 2.0 * limit, tol) > tol * 1e-2 && limit < 1e12 {
                    limit *= 2.0;
                }
                limit *= 2.0;
            } else {
                while 4.0 * f(limit) / t > tol && limit < 1e12 {
                    limit *= 2.0;
                }
            }
            let g = |l: f64| f(l) * (l * t).cos();
            let half_period = if t > 0.0 { PI / t } else { f64::INFINITY };
            let mut total = 0.0;
            let mut lo = 0.0;
            let pieces = ((limit / half_period).ceil() + 64.0).max(1.0);
            let piece_tol = tol / (4.0 * pieces);
            while lo < limit {
                let width = half_period.min(scale.max(lo)).min(limit - lo);
                total += quad::integrate(&g, lo, lo + width, piece_tol);
                lo += width;
            }
            2.0 * total
        }
    }
}

/// One frequency cell: `F`-mass and mass centroid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LambdaCell {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
    pub centroid: f64,
}

/// One scale cell of `[1, 1/ε)` with weight `∫ dy/y` and centroid under `dy/y`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct YCell {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
    pub centroid: f64,
}

/// A product cell: representative frequency `λ_c y_c` and Gaussian variance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlaneCell {
    pub frequency: f64,
    pub variance: f64,
}

/// Finite partition of the `(λ, y)` plane standing in for the scattered measures.
#[derive(Debug, Clone, Serialize)]
pub struct PlaneDiscretization {
    pub epsilon: f64,
    pub lambda_cells: Vec<LambdaCell>,
    pub y_cells: Vec<YCell>,
    pub cells: Vec<PlaneCell>,
}

impl PlaneDiscretization {
    pub fn total_variance(&self) -> f64 {
        self.cells.iter().map(|c| c.variance).sum()
    }

    /// Exact covariance of the synthesized field at lag `tau`.
    pub fn covariance(&self, tau: f64) -> f64 {
        self.cells.iter().map(|c| c.variance * (c.frequency * tau).cos()).sum()
    }
}

pub fn discretize_plane(measure: &SpectralMeasure, epsilon: f64, lambda_cells: usize, y_cells: usize) -> Result<PlaneDiscretization> {
    check_epsilon(epsilon)?;
    if lambda_cells == 0 || y_cells == 0 {
        return Err(Error::InvalidArgument("cell counts must be at least 1".into()));
    }
    let lcells: Vec<LambdaCell> = match &measure.kind {
        SpectralKind::Atoms(atoms) => atoms
            .iter()
            .map(|&(l, w)| LambdaCell { lo: l, hi: l, mass: w, centroid: l })
            .collect(),
        SpectralKind::Density { f, cutoff, scale } => {
            let zmax = (cutoff / scale).asinh();
            let edge = |i: usize| scale * (-zmax + 2.0 * zmax * i as f64 / lambda_cells as f64).sinh();
            let mass_tol = measure.total_mass * 1e-13;
            (0..lambda_cells)
                .map(|i| {
                    let (lo, hi) = (edge(i), edge(i + 1));
                    let mass = quad::integrate(&|l| f(l), lo, hi, mass_tol);
                    let moment = quad::integrate(&|l| l * f(l), lo, hi, mass_tol);
                    let centroid = if mass > 0.0 { moment / mass } else { 0.5 * (lo + hi) };
                    LambdaCell { lo, hi, mass, centroid }
                })
                .collect()
        }
    };
    let ymax_log = (1.0 / epsilon).ln();
    let ycells: Vec<YCell> = (0..y_cells)
        .map(|j| {
            let lo = (ymax_log * j as f64 / y_cells as f64).exp();
            let hi = (ymax_log * (j + 1) as f64 / y_cells as f64).exp();
            let weight = (hi / lo).ln();
            YCell { lo, hi, weight, centroid: (hi - lo) / weight }
        })
        .collect();
    let cells = lcells
        .iter()
        .flat_map(|lc| ycells.iter().map(move |yc| PlaneCell { frequency: lc.centroid * yc.centroid, variance: lc.mass * yc.weight }))
        .collect();
    Ok(PlaneDiscretization { epsilon, lambda_cells: lcells, y_cells: ycells, cells })
}

/// `X(t) = Σ_c a_c cos(ω_c t) + b_c sin(ω_c t)` with independent `a_c, b_c ~ N(0, v_c)`.
pub fn synth_layer_field<R: Rng + ?Sized>(disc: &PlaneDiscretization, grid: &[f64], rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for cell in &disc.cells {
        let sd = cell.variance.sqrt();
        let a: f64 = sd * rng.sample::<f64, _>(StandardNormal);
        let b: f64 = sd * rng.sample::<f64, _>(StandardNormal);
        for (x, &t) in out.iter_mut().zip(grid) {
            let (s, c) = (cell.frequency * t).sin_cos();
            *x += a * c + b * s;
        }
    }
    out
}

/// Empirical versus exact covariance at one lag.
#[derive(Debug, Clone, Serialize)]
pub struct LagDeviation {
    pub lag: f64,
    pub empirical: f64,
    pub expected: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossCheckReport {
    pub epsilon: f64,
    pub draws: usize,
    pub lags: Vec<LagDeviation>,
    pub max_deviation: f64,
}

/// Default frequency and scale cell counts for the cross-check.
pub const DEFAULT_LAMBDA_CELLS: usize = 256;
pub const DEFAULT_Y_CELLS: usize = 32;
const DRAWS_PER_CHUNK: usize = 1000;

/// Synthesizes `draws` copies of `X_ε` at `0` and at each lag and compares the
/// empirical covariances with `k_ε`; deviations are in standard errors.
pub fn covariance_crosscheck(k: &SeedKernel, epsilon: f64, lags: &[f64], draws: usize, seed: u64) -> Result<CrossCheckReport> {
    covariance_crosscheck_with(k, epsilon, lags, draws, seed, DEFAULT_LAMBDA_CELLS, DEFAULT_Y_CELLS)
}

pub fn covariance_crosscheck_with(
    k: &SeedKernel,
    epsilon: f64,
    lags: &[f64],
    draws: usize,
    seed: u64,
    lambda_cells: usize,
    y_cells: usize,
) -> Result<CrossCheckReport> {
    let measure = SpectralMeasure::of_kernel(k)?;
    let disc = discretize_plane(&measure, epsilon, lambda_cells, y_cells)?;
    let mut positions = vec![0.0];
    positions.extend_from_slice(lags);
    let npos = positions.len();
    // cos/sin table per cell and position
    let table: Vec<(f64, f64, f64)> = disc
        .cells
        .iter()
        .flat_map(|c| {
            let sd = c.variance.sqrt();
            positions.iter().map(move |&t| {
                let (s, co) = (c.frequency * t).sin_cos();
                (sd, co, s)
            })
        })
        .collect();

    let chunks = draws.div_ceil(DRAWS_PER_CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = substream(seed, chunk as u64);
            let n = DRAWS_PER_CHUNK.min(draws - chunk * DRAWS_PER_CHUNK);
            let mut sum = vec![0.0; lags.len()];
            let mut sum_sq = vec![0.0; lags.len()];
            let mut x = vec![0.0; npos];
            for _ in 0..n {
                x.iter_mut().for_each(|v| *v = 0.0);
                for row in table.chunks_exact(npos) {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    let sd = row[0].0;
                    let (a, b) = (a * sd, b * sd);
                    for (xv, &(_, c, s)) in x.iter_mut().zip(row) {
                        *xv += a * c + b * s;
                    }
                }
                for (j, xv) in x[1..].iter().enumerate() {
                    let p = x[0] * xv;
                    sum[j] += p;
                    sum_sq[j] += p * p;
                }
            }
            (sum, sum_sq)
        })
        .collect();

    let mut sum = vec![0.0; lags.len()];
    let mut sum_sq = vec![0.0; lags.len()];
    for (s, q) in &partial {
        for j in 0..lags.len() {
            sum[j] += s[j];
            sum_sq[j] += q[j];
        }
    }
    let n = draws as f64;
    let mut out = Vec::with_capacity(lags.len());
    let mut max_deviation: f64 = 0.0;
    for (j, &lag) in lags.iter().enumerate() {
        let mean = sum[j] / n;
        let var = ((sum_sq[j] / n - mean * mean) * n / (n - 1.0)).max(0.0);
        let stderr = (var / n).sqrt();
        let expected = epsilon_kernel(k, epsilon, lag, DEFAULT_TOL);
        let diff = (mean - expected).abs();
        let z = if stderr > 0.0 { diff / stderr } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        max_deviation = max_deviation.max(z);
        out.push(LagDeviation { lag, empirical: mean, expected, stderr, z });
    }
    Ok(CrossCheckReport { epsilon, draws, lags: out, max_deviation })
}
