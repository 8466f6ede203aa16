//! Estimators against the Lebesgue measure, where every answer is known exactly,
//! plus error paths and a few small stochastic checks.

use proptest::prelude::*;
use starscale::ensemble::{Ensemble, EnsembleSpec, MeasureSource};
use starscale::stats::{
    atom_scan, compare_sides, cutoff_independence, ergodic_average, estimate_xi, mixing_decay, recover_kernel,
    small_interval_moments, star_equation_test, AccumulatorConfig, MomentAccumulator, Report, StarTestConfig, YMode,
};
use starscale::{Error, GridSpec, SeedKernel, YLaw};

fn ensemble(kernel: SeedKernel, length: f64, cells: usize, realizations: usize, seed: u64) -> Ensemble {
    let grid = GridSpec::new(length, cells).unwrap();
    Ensemble::new(EnsembleSpec::auto(kernel, 0.5, grid, realizations, seed).unwrap()).unwrap()
}

fn lebesgue(length: f64, cells: usize, realizations: usize) -> Ensemble {
    ensemble(SeedKernel::zero(), length, cells, realizations, 1)
}

fn pair_config(grid: &GridSpec, window: f64, seps: &[f64]) -> AccumulatorConfig {
    AccumulatorConfig {
        q_list: vec![1.0],
        thresholds: vec![],
        pair_window: grid.cells_for(window).unwrap(),
        separations: seps.iter().map(|&s| grid.cells_for(s).unwrap()).collect(),
    }
}

#[test]
fn lebesgue_scaling_slopes_are_exact() {
    let leb = lebesgue(8.0, 1 << 10, 100);
    let qs = [0.5, 1.0, 2.0, 3.0];
    let acc = MomentAccumulator::from_source(&leb, AccumulatorConfig::moments(qs.to_vec()), 0).unwrap();
    for f in estimate_xi(&acc, &qs, None, 0.0).unwrap() {
        assert!((f.slope - f.q).abs() <= 1e-12, "q={} slope={}", f.q, f.slope);
        assert_eq!(f.stderr, 0.0);
    }
}

#[test]
fn lebesgue_kernel_and_mixing_vanish() {
    let leb = lebesgue(16.0, 512, 10);
    let grid = leb.grid();
    let acc = MomentAccumulator::from_source(&leb, pair_config(&grid, 0.125, &[0.5, 1.125, 2.125]), 1).unwrap();
    let rec = recover_kernel(&acc, YMode::Known, None, Some(&SeedKernel::zero())).unwrap();
    assert!(rec.rows.iter().all(|r| r.interval.estimate.abs() <= 1e-12 && r.expected == Some(0.0)));
    assert!(rec.passed());
    let mix = mixing_decay(&acc, &SeedKernel::zero(), &[1.0, 2.0]).unwrap();
    assert!(mix.rows.iter().all(|r| r.interval.estimate.abs() <= 1e-12 && r.bound == 0.0 && r.dominated));
}

#[test]
fn lebesgue_ergodic_average_is_one() {
    let leb = lebesgue(64.0, 1024, 5);
    let rep = ergodic_average(&leb, &[1.0, 4.0, 64.0], 1).unwrap();
    assert!(rep.pass);
    assert!(rep.within.iter().all(|&w| w == 1.0));
    assert!(rep.averages.iter().flatten().all(|&a| (a - 1.0).abs() <= 1e-12));
}

#[test]
fn lebesgue_small_windows() {
    let leb = lebesgue(8.0, 1024, 10);
    let cfg = AccumulatorConfig { q_list: vec![1.5], thresholds: vec![0.1], pair_window: 0, separations: vec![] };
    let acc = MomentAccumulator::from_source(&leb, cfg, 1).unwrap();
    let ns = [16, 32, 64, 128];
    let small = small_interval_moments(&acc, 0.5, &ns, 0.0).unwrap();
    assert_eq!(small.rho, 0.5);
    assert!(small.rows.iter().all(|(_, iv)| (iv.estimate - 1.0).abs() <= 1e-12));
    assert!(small.bounded);
    // a window of length 1/n carries mass 1/n, below 0.1 for n ≥ 16
    let atoms = atom_scan(&acc, &[0.1], &ns).unwrap();
    assert!(atoms.tables[0].rows.iter().all(|(_, iv)| iv.estimate == 0.0));
    assert!(atoms.passed());
}

#[test]
fn moment_orders_beyond_the_bound_are_rejected() {
    let ens = ensemble(SeedKernel::cone(1.0, 1.0).unwrap(), 8.0, 256, 100, 2);
    let acc = MomentAccumulator::from_source(&ens, AccumulatorConfig::moments(vec![1.0, 3.0]), 0).unwrap();
    // k(0) = 1 gives finite moments only below order 2
    assert!(matches!(estimate_xi(&acc, &[3.0], None, 1.0), Err(Error::MomentOutOfRange { .. })));
    assert!(matches!(small_interval_moments(&acc, 1.0, &[16, 32], 1.0), Err(Error::MomentOutOfRange { .. })));
    assert!(matches!(small_interval_moments(&acc, 2.0, &[16, 32], 1.0), Err(Error::MomentOutOfRange { .. })));
}

#[test]
fn too_few_realizations_are_rejected() {
    let leb = lebesgue(8.0, 1024, 99);
    let acc = MomentAccumulator::from_source(&leb, AccumulatorConfig::moments(vec![2.0]), 0).unwrap();
    assert!(matches!(estimate_xi(&acc, &[2.0], None, 0.0), Err(Error::InsufficientSamples(_))));
}

#[test]
fn merged_halves_equal_the_whole() {
    let ens = ensemble(SeedKernel::gaussian(0.5).unwrap(), 8.0, 256, 40, 3);
    let grid = ens.grid();
    let cfg = AccumulatorConfig {
        q_list: vec![0.5, 2.0],
        thresholds: vec![0.05],
        pair_window: 8,
        separations: vec![32, 64],
    };
    let whole = MomentAccumulator::from_source(&ens, cfg.clone(), 0).unwrap();
    let mut a = MomentAccumulator::new(cfg.clone(), grid).unwrap();
    let mut b = MomentAccumulator::new(cfg, grid).unwrap();
    for i in 0..40 {
        let m = ens.realize(i);
        if i % 3 == 0 {
            a.push(i as u64, &m).unwrap();
        } else {
            b.push(i as u64, &m).unwrap();
        }
    }
    b.merge(&a).unwrap();
    assert_eq!(b, whole);
}

#[test]
fn zero_kernel_passes_the_star_test() {
    let grid = GridSpec::new(8.0, 256).unwrap();
    let cfg = StarTestConfig { epsilon: 0.5, layers: Some(3), factor_epsilon: None, draws: 50, seed: 4 };
    let rep = star_equation_test(&SeedKernel::zero(), &grid, &cfg, 1).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.moments.iter().all(|m| m.z == 0.0));
}

#[test]
fn zero_kernel_cutoff_is_degenerate() {
    let leb = lebesgue(16.0, 256, 20);
    let rep = cutoff_independence(&leb, &SeedKernel::zero(), 1.0, 0.5, 1).unwrap();
    assert!(rep.degenerate);
    assert!(rep.pass);
}

#[test]
fn gaussian_mixing_is_dominated() {
    let ens = ensemble(SeedKernel::gaussian(0.5).unwrap(), 64.0, 1 << 11, 1000, 5);
    let grid = ens.grid();
    let ds = [1.0, 2.0, 4.0, 8.0];
    let seps: Vec<f64> = ds.iter().map(|d| d + 0.125).collect();
    let acc = MomentAccumulator::from_source(&ens, pair_config(&grid, 0.125, &seps), 0).unwrap();
    let rep = mixing_decay(&acc, &SeedKernel::gaussian(0.5).unwrap(), &ds).unwrap();
    assert!(rep.passed(), "{rep:?}");
    // bounds shrink with distance
    assert!(rep.rows.windows(2).all(|w| w[1].bound <= w[0].bound));
}

#[test]
fn ergodic_average_tracks_a_random_y() {
    let grid = GridSpec::new(256.0, 4096).unwrap();
    let mut spec = EnsembleSpec::auto(SeedKernel::cone(0.5, 1.0).unwrap(), 0.5, grid, 200, 6).unwrap();
    spec.y_law = YLaw::Lognormal { s2: 0.5 };
    let ens = Ensemble::new(spec).unwrap();
    let rep = ergodic_average(&ens, &[16.0, 256.0], 0).unwrap();
    assert!(rep.pass, "within {:?}", rep.within);
    // Y itself varies far more than 20%, so the comparison is against each realization's own Y
    let spread = rep.targets.iter().filter(|&&y| !(0.8..=1.2).contains(&y)).count();
    assert!(spread > 50);
}

#[test]
fn estimated_y_drops_small_realizations() {
    let grid = GridSpec::new(16.0, 256).unwrap();
    let mut spec = EnsembleSpec::auto(SeedKernel::cone(0.5, 1.0).unwrap(), 0.5, grid, 60, 7).unwrap();
    spec.y_law = YLaw::Lognormal { s2: 1.0 };
    let ens = Ensemble::new(spec).unwrap();
    let acc = MomentAccumulator::from_source(&ens, pair_config(&grid, 0.125, &[0.5]), 0).unwrap();
    let floor = 0.5;
    let expected: Vec<u64> = acc.records().iter().filter(|r| r.y_hat < floor).map(|r| r.index).collect();
    assert!(!expected.is_empty());
    let rep = recover_kernel(&acc, YMode::Estimated { floor }, None, None).unwrap();
    assert_eq!(rep.flagged, expected);
    assert!(matches!(
        recover_kernel(&acc, YMode::Estimated { floor: 1e9 }, None, None),
        Err(Error::InsufficientSamples(_))
    ));
}

#[test]
fn recovery_rejects_wide_windows() {
    let leb = lebesgue(16.0, 512, 4);
    let grid = leb.grid();
    let acc = MomentAccumulator::from_source(&leb, pair_config(&grid, 0.25, &[0.5]), 1).unwrap();
    assert!(matches!(recover_kernel(&acc, YMode::Known, None, None), Err(Error::InvalidArgument(_))));
}

proptest! {
    #[test]
    fn side_comparison_is_symmetric(
        a in prop::collection::vec((0.1f64..5.0, 0.1f64..5.0), 3..30),
        b in prop::collection::vec((0.1f64..5.0, 0.1f64..5.0), 3..30),
    ) {
        let grid = GridSpec::new(8.0, 64).unwrap();
        let a: Vec<[f64; 2]> = a.into_iter().map(|(x, y)| [x, y]).collect();
        let b: Vec<[f64; 2]> = b.into_iter().map(|(x, y)| [x, y]).collect();
        let ab = compare_sides(&a, &b, &grid, 1);
        let ba = compare_sides(&b, &a, &grid, 1);
        prop_assert_eq!(ab.pass, ba.pass);
        prop_assert_eq!(ab.ks.statistic, ba.ks.statistic);
        for (x, y) in ab.moments.iter().zip(&ba.moments) {
            prop_assert!((x.z - y.z).abs() <= 1e-9 * x.z.abs().max(1.0));
            prop_assert_eq!(x.direct, y.composed);
        }
    }
}
