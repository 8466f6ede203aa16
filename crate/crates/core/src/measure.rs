//! Approximating chaos measures on a grid and the two operators of the star
//! equation: composition with an independent lognormal factor, and zooming.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldSample;
use crate::grid::GridSpec;

/// Law of the prefactor `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum YLaw {
    #[default]
    Deterministic,
    /// `Y = exp(s Z − s²/2)`, mean 1.
    Lognormal { s2: f64 },
    Constant { c: f64 },
}

impl YLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            YLaw::Deterministic => Ok(()),
            YLaw::Lognormal { s2 } if s2 >= 0.0 && s2.is_finite() => Ok(()),
            YLaw::Constant { c } if c >= 0.0 && c.is_finite() => Ok(()),
            other => Err(Error::InvalidArgument(format!("invalid Y law {other:?}"))),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            YLaw::Deterministic => 1.0,
            YLaw::Lognormal { s2 } => {
                let z: f64 = rng.sample(StandardNormal);
                (s2.sqrt() * z - 0.5 * s2).exp()
            }
            YLaw::Constant { c } => c,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            YLaw::Deterministic | YLaw::Lognormal { .. } => 1.0,
            YLaw::Constant { c } => c,
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, YLaw::Lognormal { s2 } if *s2 > 0.0)
    }
}

/// Provenance carried by every realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureMeta {
    pub kernel: String,
    pub epsilon: f64,
    pub layers: u32,
    pub master_seed: u64,
    pub realization: u64,
}

/// One realization: cell masses on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSample {
    pub masses: Vec<f64>,
    pub grid: GridSpec,
    pub y_factor: f64,
    pub meta: MeasureMeta,
}

impl MeasureSample {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mass of the first `cells` cells, i.e. `M([0, cells·h])`.
    pub fn prefix_mass(&self, cells: usize) -> f64 {
        self.masses[..cells.min(self.masses.len())].iter().sum()
    }

    /// Lebesgue measure on the grid, times `y`.
    pub fn lebesgue(grid: GridSpec, y: f64, meta: MeasureMeta) -> Self {
        MeasureSample { masses: vec![y * grid.spacing(); grid.cells], grid, y_factor: y, meta }
    }
}

/// `m_i = Y h exp(Σ_n X^n_i − ½ Σ_n Var X^n)`, with `Y` drawn from `y_law`.
pub fn build_measure<R: Rng + ?Sized>(
    layers: &[FieldSample],
    grid: &GridSpec,
    y_law: &YLaw,
    rng: &mut R,
    meta: MeasureMeta,
) -> Result<MeasureSample> {
    for l in layers {
        if l.values.len() != grid.cells {
            return Err(Error::GridMismatch(format!("layer has {} values, grid has {} cells", l.values.len(), grid.cells)));
        }
    }
    let y = y_law.draw(rng);
    let h = grid.spacing();
    let half_var: f64 = 0.5 * layers.iter().map(|l| l.variance).sum::<f64>();
    let mut log_density = vec![-half_var; grid.cells];
    for l in layers {
        for (acc, x) in log_density.iter_mut().zip(&l.values) {
            *acc += x;
        }
    }
    let masses = log_density.into_iter().map(|x| y * h * x.exp()).collect();
    Ok(MeasureSample { masses, grid: *grid, y_factor: y, meta })
}

/// `A ↦ ∫_A e^{ω_ε} dM^ε` with `ω_ε = X − ½ Var X` the normalized factor.
pub fn star_compose(omega: &FieldSample, zoomed: &MeasureSample, grid: &GridSpec) -> Result<MeasureSample> {
    if !zoomed.grid.matches(grid) {
        return Err(Error::GridMismatch(format!("measure grid {:?} differs from {:?}", zoomed.grid, grid)));
    }
    if omega.values.len() != grid.cells {
        return Err(Error::GridMismatch(format!("factor has {} values, grid has {} cells", omega.values.len(), grid.cells)));
    }
    let half_var = 0.5 * omega.variance;
    let masses = zoomed.masses.iter().zip(&omega.values).map(|(m, w)| m * (w - half_var).exp()).collect();
    Ok(MeasureSample { masses, grid: *grid, y_factor: zoomed.y_factor, meta: zoomed.meta.clone() })
}

/// The measure `B ↦ ε M(B/ε)` on `[0, εL)`: same cell count, spacing `εh`.
pub fn zoom_rescale(m: &MeasureSample, epsilon: f64) -> Result<MeasureSample> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::IncompatibleGrid(format!("zoom factor must lie in (0, 1], got {epsilon}")));
    }
    let grid = GridSpec::new(m.grid.length * epsilon, m.grid.cells)
        .map_err(|e| Error::IncompatibleGrid(e.to_string()))?;
    Ok(MeasureSample {
        masses: m.masses.iter().map(|x| epsilon * x).collect(),
        grid,
        y_factor: m.y_factor,
        meta: m.meta.clone(),
    })
}
