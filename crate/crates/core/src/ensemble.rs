//! Ensembles of independent realizations with deterministic per-realization
//! substreams, evaluated over a bounded worker pool.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{layer_plan, FieldSample, StationaryPlan};
use crate::grid::{GridSpec, ScaleLadder};
use crate::kernel::SeedKernel;
use crate::measure::{star_compose, zoom_rescale, MeasureMeta, MeasureSample, YLaw};
use crate::rng::{derive_seed, realization_stream, SLOTS_PER_REALIZATION, Y_SLOT};

/// Anything that can hand out realizations by index.
pub trait MeasureSource: Sync {
    fn len(&self) -> usize;
    fn grid(&self) -> GridSpec;
    fn realization(&self, index: usize) -> Result<MeasureSample>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Applies `f` to every realization on a pool of `workers` threads
/// (0 = rayon default) and returns the results in realization order.
pub fn map_realizations<S, T, F>(source: &S, workers: usize, f: F) -> Result<Vec<T>>
where
    S: MeasureSource + ?Sized,
    T: Send,
    F: Fn(usize, &MeasureSample) -> T + Sync + Send,
{
    let run = || -> Result<Vec<T>> {
        (0..source.len())
            .into_par_iter()
            .map(|i| source.realization(i).map(|m| f(i, &m)))
            .collect()
    };
    with_workers(workers, run)
}

/// Runs `job` inside a pool capped at `workers` threads.
pub fn with_workers<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return job();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub kernel: SeedKernel,
    pub ladder: ScaleLadder,
    pub grid: GridSpec,
    pub y_law: YLaw,
    pub realizations: usize,
    pub master_seed: u64,
}

impl EnsembleSpec {
    /// Spec with the automatic ladder depth for `grid`.
    pub fn auto(kernel: SeedKernel, epsilon: f64, grid: GridSpec, realizations: usize, master_seed: u64) -> Result<Self> {
        let ladder = ScaleLadder::auto(&kernel, epsilon, &grid)?;
        Ok(EnsembleSpec { kernel, ladder, grid, y_law: YLaw::Deterministic, realizations, master_seed })
    }
}

/// Generator for the direct `N`-layer construction.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub spec: EnsembleSpec,
    plans: Vec<StationaryPlan>,
}

impl Ensemble {
    pub fn new(spec: EnsembleSpec) -> Result<Self> {
        spec.y_law.validate()?;
        spec.ladder.check_grid(&spec.grid)?;
        if spec.ladder.layers as u64 >= Y_SLOT {
            return Err(Error::InvalidArgument("ladder too deep for the stream layout".into()));
        }
        let plans = (0..=spec.ladder.layers)
            .map(|n| layer_plan(&spec.kernel, &spec.ladder, n, &spec.grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(Ensemble { spec, plans })
    }

    pub fn plans(&self) -> &[StationaryPlan] {
        &self.plans
    }

    fn meta(&self, index: usize) -> MeasureMeta {
        MeasureMeta {
            kernel: self.spec.kernel.name(),
            epsilon: self.spec.ladder.epsilon,
            layers: self.spec.ladder.layers,
            master_seed: self.spec.master_seed,
            realization: index as u64,
        }
    }

    /// Layer fields of realization `index`, each from its own substream.
    pub fn layers(&self, index: usize) -> Vec<FieldSample> {
        self.plans
            .iter()
            .enumerate()
            .map(|(n, p)| p.sample(&mut realization_stream(self.spec.master_seed, index as u64, n as u64)))
            .collect()
    }

    /// Realization `index`; equal to [`crate::measure::build_measure`] applied
    /// to [`Ensemble::layers`] with the `Y` substream.
    pub fn realize(&self, index: usize) -> MeasureSample {
        let grid = self.spec.grid;
        let half_var: f64 = 0.5 * self.plans.iter().map(|p| p.variance()).sum::<f64>();
        let mut log_density = vec![-half_var; grid.cells];
        for (n, p) in self.plans.iter().enumerate() {
            p.add_sample(&mut log_density, &mut realization_stream(self.spec.master_seed, index as u64, n as u64));
        }
        let y = self.spec.y_law.draw(&mut realization_stream(self.spec.master_seed, index as u64, Y_SLOT));
        let h = grid.spacing();
        let masses = log_density.into_iter().map(|x| y * h * x.exp()).collect();
        MeasureSample { masses, grid, y_factor: y, meta: self.meta(index) }
    }

    /// Realizations `range`, generated on `workers` threads, in index order.
    pub fn realize_range(&self, range: std::ops::Range<usize>, workers: usize) -> Vec<MeasureSample> {
        with_workers(workers, || range.into_par_iter().map(|i| self.realize(i)).collect())
    }
}

impl MeasureSource for Ensemble {
    fn len(&self) -> usize {
        self.spec.realizations
    }

    fn grid(&self) -> GridSpec {
        self.spec.grid
    }

    fn realization(&self, index: usize) -> Result<MeasureSample> {
        Ok(self.realize(index))
    }
}

const OMEGA_SLOT: u64 = SLOTS_PER_REALIZATION - 2;

/// Right-hand side of the star equation: `e^{ω_ε} · ε M'(·/ε)` where `M'` is an
/// independent `(N−1)`-layer measure on `[0, L/ε)` and `ω_ε` has kernel `k_{ε'}`.
/// `ε' = ε` gives equality in law with the direct `N`-layer construction.
#[derive(Debug, Clone)]
pub struct StarSide {
    grid: GridSpec,
    epsilon: f64,
    omega: StationaryPlan,
    inner: Ensemble,
    seed: u64,
}

impl StarSide {
    /// Mirrors `direct`; `factor_epsilon` overrides the ε of the lognormal factor.
    pub fn new(direct: &EnsembleSpec, factor_epsilon: Option<f64>, seed: u64) -> Result<Self> {
        let eps = direct.ladder.epsilon;
        if direct.ladder.layers == 0 {
            return Err(Error::InvalidArgument("star side needs a ladder of depth at least 1".into()));
        }
        let factor_ladder = ScaleLadder::new(factor_epsilon.unwrap_or(eps), 0)?;
        let omega = layer_plan(&direct.kernel, &factor_ladder, 0, &direct.grid)?;
        let outer = GridSpec::new(direct.grid.length / eps, direct.grid.cells)?;
        let inner_spec = EnsembleSpec {
            kernel: direct.kernel.clone(),
            ladder: ScaleLadder::new(eps, direct.ladder.layers - 1)?,
            grid: outer,
            y_law: direct.y_law,
            realizations: direct.realizations,
            master_seed: derive_seed(seed, 0x5a),
        };
        Ok(StarSide { grid: direct.grid, epsilon: eps, omega, inner: Ensemble::new(inner_spec)?, seed })
    }
}

impl MeasureSource for StarSide {
    fn len(&self) -> usize {
        self.inner.spec.realizations
    }

    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn realization(&self, index: usize) -> Result<MeasureSample> {
        let omega = self.omega.sample(&mut realization_stream(self.seed, index as u64, OMEGA_SLOT));
        let outer = self.inner.realize(index);
        let mut zoomed = zoom_rescale(&outer, self.epsilon)?;
        // the zoomed grid equals the direct grid up to rounding of L/ε·ε
        zoomed.grid = self.grid;
        star_compose(&omega, &zoomed, &self.grid)
    }
}

/// In-memory collection of realizations.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub grid: GridSpec,
    pub samples: Vec<MeasureSample>,
}

impl MeasureSource for SampleSet {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn realization(&self, index: usize) -> Result<MeasureSample> {
        self.samples
            .get(index)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no realization {index}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::build_measure;

    fn small(seed: u64) -> Ensemble {
        let k = SeedKernel::cone(0.5, 1.0).unwrap();
        let grid = GridSpec::new(4.0, 256).unwrap();
        Ensemble::new(EnsembleSpec::auto(k, 0.5, grid, 8, seed).unwrap()).unwrap()
    }

    #[test]
    fn realize_matches_layer_route() {
        let e = small(9);
        let layers = e.layers(3);
        let mut yrng = realization_stream(9, 3, Y_SLOT);
        let direct = build_measure(&layers, &e.spec.grid, &e.spec.y_law, &mut yrng, e.meta(3)).unwrap();
        assert_eq!(direct, e.realize(3));
    }

    #[test]
    fn deterministic_regardless_of_workers() {
        let e = small(4);
        let a = map_realizations(&e, 1, |_, m| m.masses.clone()).unwrap();
        let b = map_realizations(&e, 3, |_, m| m.masses.clone()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn zero_kernel_realizations_are_lebesgue() {
        let grid = GridSpec::new(8.0, 64).unwrap();
        let e = Ensemble::new(EnsembleSpec::auto(SeedKernel::zero(), 0.5, grid, 3, 1).unwrap()).unwrap();
        for i in 0..3 {
            assert!(e.realize(i).masses.iter().all(|&m| m == 0.125));
        }
    }

    #[test]
    fn star_side_lives_on_direct_grid() {
        let e = small(2);
        let s = StarSide::new(&e.spec, None, 77).unwrap();
        let m = s.realization(0).unwrap();
        assert!(m.grid.matches(&e.spec.grid));
        assert!(m.masses.iter().all(|x| *x > 0.0));
    }
}
