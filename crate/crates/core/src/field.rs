//! Stationary Gaussian vectors on grid midpoints by circulant embedding, with
//! a dense Cholesky fallback when the embedding is not positive semi-definite.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScaleLadder};
use crate::kernel::{epsilon_kernel, SeedKernel, DEFAULT_TOL};

/// Fraction of the circulant spectrum's absolute energy that may be clamped away.
pub const CLAMP_BUDGET: f64 = 1e-6;
/// Largest grid for which the dense fallback is attempted.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerIndex {
    Layer(u32),
    Aggregate,
    Custom,
}

/// One draw of a centered stationary field on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub variance: f64,
    pub layer: LayerIndex,
}

impl FieldSample {
    pub fn zeros(cells: usize) -> Self {
        FieldSample { values: vec![0.0; cells], variance: 0.0, layer: LayerIndex::Aggregate }
    }

    /// Pointwise sum of independent layers.
    pub fn aggregate(layers: &[FieldSample]) -> Option<FieldSample> {
        let n = layers.first()?.values.len();
        let mut values = vec![0.0; n];
        for l in layers {
            for (v, x) in values.iter_mut().zip(&l.values) {
                *v += x;
            }
        }
        Some(FieldSample { values, variance: layers.iter().map(|l| l.variance).sum(), layer: LayerIndex::Aggregate })
    }
}

#[derive(Clone)]
enum Path {
    Zero,
    Circulant { scaled_sqrt: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Dense { lower: Vec<f64> },
}

/// How a plan samples; exposed for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPath {
    Zero,
    Circulant { clamped_fraction: f64 },
    Dense,
}

/// Precomputed factorization of a stationary covariance on a grid.
#[derive(Clone)]
pub struct StationaryPlan {
    cells: usize,
    variance: f64,
    layer: LayerIndex,
    path: Path,
    info: SamplingPath,
}

impl std::fmt::Debug for StationaryPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StationaryPlan")
            .field("cells", &self.cells)
            .field("variance", &self.variance)
            .field("path", &self.info)
            .finish()
    }
}

impl StationaryPlan {
    /// `cov` maps a non-negative lag to the covariance.
    pub fn new<C: Fn(f64) -> f64>(cov: C, grid: &GridSpec) -> Result<Self> {
        let n = grid.cells;
        let h = grid.spacing();
        let row: Vec<f64> = (0..=n).map(|j| cov(j as f64 * h)).collect();
        if row.iter().any(|c| !c.is_finite()) {
            return Err(Error::NotPsd("covariance is not finite on the grid".into()));
        }
        let variance = row[0];
        if row.iter().all(|&c| c == 0.0) {
            return Ok(StationaryPlan { cells: n, variance, layer: LayerIndex::Custom, path: Path::Zero, info: SamplingPath::Zero });
        }

        // even extension onto a circle of 2n points
        let m = 2 * n;
        let mut buf: Vec<Complex64> = (0..m).map(|j| Complex64::new(row[j.min(m - j)], 0.0)).collect();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut buf);
        let eig: Vec<f64> = buf.iter().map(|c| c.re).collect();
        let total: f64 = eig.iter().map(|e| e.abs()).sum();
        let negative: f64 = eig.iter().filter(|&&e| e < 0.0).map(|e| -e).sum();
        let clamped_fraction = if total > 0.0 { negative / total } else { 0.0 };
        if clamped_fraction <= CLAMP_BUDGET {
            let scaled_sqrt = eig.iter().map(|&e| (e.max(0.0) / m as f64).sqrt()).collect();
            return Ok(StationaryPlan {
                cells: n,
                variance,
                layer: LayerIndex::Custom,
                path: Path::Circulant { scaled_sqrt, fft },
                info: SamplingPath::Circulant { clamped_fraction },
            });
        }
        if n > DENSE_LIMIT {
            return Err(Error::NotPsd(format!(
                "circulant embedding clamps {clamped_fraction:.3e} of the spectrum and the grid is too large for dense factorization"
            )));
        }
        let lower = cholesky_toeplitz(&row[..n])?;
        Ok(StationaryPlan { cells: n, variance, layer: LayerIndex::Custom, path: Path::Dense { lower }, info: SamplingPath::Dense })
    }

    pub fn with_layer(mut self, layer: LayerIndex) -> Self {
        self.layer = layer;
        self
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn path(&self) -> SamplingPath {
        self.info
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldSample {
        let mut values = vec![0.0; self.cells];
        self.add_sample(&mut values, rng);
        FieldSample { values, variance: self.variance, layer: self.layer }
    }

    /// Adds one draw into `acc`.
    pub fn add_sample<R: Rng + ?Sized>(&self, acc: &mut [f64], rng: &mut R) {
        match &self.path {
            Path::Zero => {}
            Path::Circulant { scaled_sqrt, fft } => {
                let mut buf: Vec<Complex64> = scaled_sqrt
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                for (a, c) in acc.iter_mut().zip(&buf) {
                    *a += c.re;
                }
            }
            Path::Dense { lower } => {
                let n = self.cells;
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                for i in 0..n {
                    let row = &lower[i * n..i * n + i + 1];
                    acc[i] += row.iter().zip(&z).map(|(l, z)| l * z).sum::<f64>();
                }
            }
        }
    }
}

fn cholesky_toeplitz(row: &[f64]) -> Result<Vec<f64>> {
    let n = row.len();
    let scale = row[0].abs().max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = row[i - j];
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if s < -1e-10 * scale {
                    return Err(Error::NotPsd(format!("dense factorization failed at pivot {i} ({s:.3e})")));
                }
                l[i * n + i] = s.max(0.0).sqrt();
            } else {
                let d = l[j * n + j];
                l[i * n + j] = if d > 0.0 { s / d } else { 0.0 };
            }
        }
    }
    Ok(l)
}

/// Draws a centered stationary Gaussian vector with `Cov[i, j] = cov(|i − j| h)`.
pub fn sample_stationary_field<C, R>(cov: C, grid: &GridSpec, rng: &mut R) -> Result<FieldSample>
where
    C: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    Ok(StationaryPlan::new(cov, grid)?.sample(rng))
}

/// Covariance of layer `n`: `k_ε(r / ε^n)`.
pub fn layer_covariance(kernel: &SeedKernel, epsilon: f64, layer: u32) -> impl Fn(f64) -> f64 + '_ {
    let stretch = epsilon.powi(layer as i32);
    move |r: f64| epsilon_kernel(kernel, epsilon, r / stretch, DEFAULT_TOL)
}

/// Plan for layer `layer` of the ladder on `grid`.
pub fn layer_plan(kernel: &SeedKernel, ladder: &ScaleLadder, layer: u32, grid: &GridSpec) -> Result<StationaryPlan> {
    if layer > ladder.layers {
        return Err(Error::InvalidArgument(format!("layer {layer} exceeds ladder depth {}", ladder.layers)));
    }
    ladder.check_grid(grid)?;
    let plan = StationaryPlan::new(layer_covariance(kernel, ladder.epsilon, layer), grid)?;
    Ok(plan.with_layer(LayerIndex::Layer(layer)))
}

/// One draw of layer `X^n`, a stationary field with covariance `k_ε(r/ε^n)`.
pub fn sample_layer<R: Rng + ?Sized>(
    kernel: &SeedKernel,
    ladder: &ScaleLadder,
    layer: u32,
    grid: &GridSpec,
    rng: &mut R,
) -> Result<FieldSample> {
    Ok(layer_plan(kernel, ladder, layer, grid)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn zero_covariance_gives_zero_field() {
        let g = GridSpec::new(4.0, 64).unwrap();
        let f = sample_stationary_field(|_| 0.0, &g, &mut substream(1, 0)).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_cell_grid_exact_covariance() {
        // lag-h correlation 0.9 with zero at 2h makes the 4-point circle indefinite
        let g = GridSpec::new(2.0, 2).unwrap();
        let cov = |r: f64| if r == 0.0 { 1.0 } else if (r - 1.0).abs() < 1e-12 { 0.9 } else { 0.0 };
        let plan = StationaryPlan::new(cov, &g).unwrap();
        assert_eq!(plan.path(), SamplingPath::Dense);
        let mut rng = substream(5, 0);
        let n = 200_000;
        let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let v = plan.sample(&mut rng).values;
            s00 += v[0] * v[0];
            s01 += v[0] * v[1];
            s11 += v[1] * v[1];
        }
        let n = n as f64;
        // standard errors: sqrt(2/n) for variances, sqrt((1+0.81)/n) for the cross term
        assert!((s00 / n - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
        assert!((s11 / n - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
        assert!((s01 / n - 0.9).abs() < 4.0 * (1.81 / n).sqrt());
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let g = GridSpec::new(3.0, 3).unwrap();
        let cov = |r: f64| if r == 0.0 { 1.0 } else if (r - 1.0).abs() < 1e-12 { 0.99 } else { -0.99 };
        assert!(matches!(StationaryPlan::new(cov, &g), Err(Error::NotPsd(_))));
    }

    #[test]
    fn cone_layers_use_exact_embedding() {
        let k = SeedKernel::cone(1.0, 1.0).unwrap();
        let g = GridSpec::new(8.0, 1024).unwrap();
        let ladder = ScaleLadder::new(0.5, 3).unwrap();
        for n in 0..=3 {
            let p = layer_plan(&k, &ladder, n, &g).unwrap();
            assert!(matches!(p.path(), SamplingPath::Circulant { .. }));
            assert!((p.variance() - 2f64.ln()).abs() < 1e-15);
        }
        // layer 3 support is T ε³ = 1/8
        let cov = layer_covariance(&k, 0.5, 3);
        assert!(cov(0.124) > 0.0);
        assert_eq!(cov(0.125), 0.0);
        assert_eq!(cov(0.5), 0.0);
    }

    #[test]
    fn layer_beyond_ladder_rejected() {
        let k = SeedKernel::cone(1.0, 1.0).unwrap();
        let g = GridSpec::new(8.0, 1024).unwrap();
        let ladder = ScaleLadder::new(0.5, 3).unwrap();
        assert!(layer_plan(&k, &ladder, 4, &g).is_err());
    }
}
