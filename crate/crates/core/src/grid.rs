use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{check_epsilon, SeedKernel};

/// Uniform grid of `cells` cells on `[0, length)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub length: f64,
    pub cells: usize,
}

impl GridSpec {
    pub fn new(length: f64, cells: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid length must be positive, got {length}")));
        }
        if cells < 2 {
            return Err(Error::InvalidArgument(format!("grid needs at least 2 cells, got {cells}")));
        }
        Ok(GridSpec { length, cells })
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.cells as f64
    }

    /// Cell midpoint of cell `i`.
    pub fn position(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.spacing()
    }

    /// Equal up to rounding in the length.
    pub fn matches(&self, other: &GridSpec) -> bool {
        self.cells == other.cells && (self.length - other.length).abs() <= 1e-12 * self.length.max(other.length)
    }

    /// Number of whole cells covering a length, if it is an integer multiple of the spacing.
    pub fn cells_for(&self, length: f64) -> Option<usize> {
        let c = length / self.spacing();
        let r = c.round();
        ((c - r).abs() <= 1e-9 * r.max(1.0) && r >= 1.0).then_some(r as usize)
    }
}

/// Scale ratio ε and depth `N`; layers `0..=N` carry kernels `k_ε(r/ε^n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleLadder {
    pub epsilon: f64,
    pub layers: u32,
}

impl ScaleLadder {
    pub fn new(epsilon: f64, layers: u32) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(ScaleLadder { epsilon, layers })
    }

    /// Depth whose finest layer correlation length `ℓ ε^N` reaches the grid
    /// spacing, where `ℓ` is the kernel's correlation length capped at the
    /// domain length; never deeper than the grid allows.
    pub fn auto(kernel: &SeedKernel, epsilon: f64, grid: &GridSpec) -> Result<Self> {
        check_epsilon(epsilon)?;
        let h = grid.spacing();
        let inv = (1.0 / epsilon).ln();
        let max_depth = ((grid.length / h).ln() / inv + 1e-9).floor().max(0.0);
        let depth = match kernel.correlation_length() {
            None => max_depth.min(1.0),
            Some(ell) => {
                let ell = ell.min(grid.length);
                ((ell / h).ln() / inv - 1e-9).ceil().max(1.0).min(max_depth)
            }
        };
        Ok(ScaleLadder { epsilon, layers: depth as u32 })
    }

    /// `ε^N`.
    pub fn small_scale(&self) -> f64 {
        self.epsilon.powi(self.layers as i32)
    }

    /// Fails when the finest layer is below the grid resolution `h/L`.
    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        let floor = grid.spacing() / grid.length;
        if self.small_scale() < floor * (1.0 - 1e-9) {
            return Err(Error::IncompatibleGrid(format!(
                "ladder depth {} with epsilon {} resolves {:.3e}, below the grid ratio {:.3e}",
                self.layers,
                self.epsilon,
                self.small_scale(),
                floor
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_times_cells_is_length() {
        let g = GridSpec::new(8.0, 1024).unwrap();
        assert_eq!(g.spacing() * g.cells as f64, g.length);
        assert!(GridSpec::new(8.0, 1).is_err());
        assert!(GridSpec::new(-1.0, 4).is_err());
    }

    #[test]
    fn auto_depth_matches_correlation_length() {
        let k = SeedKernel::cone(0.5, 1.0).unwrap();
        let g = GridSpec::new(8.0, 1 << 14).unwrap();
        let l = ScaleLadder::auto(&k, 0.5, &g).unwrap();
        assert_eq!(l.layers, 11);
        assert!(l.check_grid(&g).is_ok());
        let g = GridSpec::new(8.0, 1 << 16).unwrap();
        assert_eq!(ScaleLadder::auto(&k, 0.5, &g).unwrap().layers, 13);
    }

    #[test]
    fn auto_depth_never_outruns_grid() {
        let k = SeedKernel::custom("flat", |u: f64| (1.0 - u.abs()).max(0.0), Some(1.0), 1.0);
        for eps in [0.3, 0.5, 0.7, 0.9] {
            for cells in [2, 16, 1000, 4096] {
                let g = GridSpec::new(1.0, cells).unwrap();
                let l = ScaleLadder::auto(&k, eps, &g).unwrap();
                assert!(l.check_grid(&g).is_ok(), "eps={eps} cells={cells}");
            }
        }
        let g = GridSpec::new(8.0, 64).unwrap();
        assert!(ScaleLadder::new(0.5, 20).unwrap().check_grid(&g).is_err());
    }
}
