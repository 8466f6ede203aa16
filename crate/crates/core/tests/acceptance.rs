//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line. Monte Carlo criteria use fixed seeds.
//!
//! Run with `cargo test -p starscale --test acceptance`.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use starscale::ensemble::{Ensemble, EnsembleSpec};
use starscale::kernel::{
    asymptote_check, goodness_check, integrate_log, log_grid, series_k, telescope_check, LogKernel, Verdict,
    DEFAULT_PROBE_BUDGET, DEFAULT_TOL,
};
use starscale::spectral::covariance_crosscheck;
use starscale::stats::{
    atom_scan, cutoff_independence, ergodic_average, estimate_xi, recover_kernel, star_equation_test, AccumulatorConfig,
    MomentAccumulator, Report, ScalingFits, StarTestConfig, YMode, SIGMA_MULTIPLIER,
};
use starscale::{Error, GridSpec, SeedKernel};

const SEED: u64 = 20_240_601;
/// Worker count for the reference runs; criterion 11 reruns with another.
const WORKERS: usize = 0;
const RERUN_WORKERS: usize = 3;

struct Outcome {
    pass: bool,
    detail: String,
    csv: String,
}

fn announce(criterion: u32, title: &str, outcome: &Outcome, started: Instant) {
    let tag = if outcome.pass { "PASS" } else { "FAIL" };
    // written to the raw handle so the line survives libtest's output capture
    let line = format!("{tag} criterion {criterion:>2} ({title}) [{:.1}s]: {}\n", started.elapsed().as_secs_f64(), outcome.detail);
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(outcome.pass, "criterion {criterion} failed: {}", outcome.detail);
}

fn cone(lambda2: f64) -> SeedKernel {
    SeedKernel::cone(lambda2, 1.0).unwrap()
}

fn ensemble(kernel: SeedKernel, length: f64, cells: usize, realizations: usize, seed: u64) -> Ensemble {
    let grid = GridSpec::new(length, cells).unwrap();
    Ensemble::new(EnsembleSpec::auto(kernel, 0.5, grid, realizations, seed).unwrap()).unwrap()
}

fn lebesgue(length: f64, cells: usize, realizations: usize) -> Ensemble {
    ensemble(SeedKernel::zero(), length, cells, realizations, SEED)
}

#[test]
fn criterion_01_kernel_identities() {
    let t0 = Instant::now();
    let k = cone(1.0);
    let k_half = integrate_log(&k, 0.5, DEFAULT_TOL).unwrap();
    let mut pass = (k_half - 0.193147180559945).abs() <= 1e-9;
    let lags = log_grid(1e-3, 10.0, 40);
    let mut worst_tel: f64 = 0.0;
    for eps in [0.3, 0.5, 0.9] {
        let rep = telescope_check(&k, eps, &lags, 1e-8).unwrap();
        worst_tel = worst_tel.max(rep.max_residual);
        pass &= rep.pass;
    }
    let mut worst_series: f64 = 0.0;
    for eps in [0.3f64, 0.5, 0.9] {
        for &r in &lags {
            // smallest depth with r / ε^{N+1} beyond the support
            let mut depth = 0u32;
            while r / eps.powi(depth as i32 + 1) <= 1.0 {
                depth += 1;
            }
            let s = series_k(&k, eps, r, depth).unwrap();
            worst_series = worst_series.max((s - integrate_log(&k, r, DEFAULT_TOL).unwrap()).abs());
        }
    }
    pass &= worst_series <= 1e-8;
    pass &= t0.elapsed().as_secs_f64() < 1.0;
    let out = Outcome {
        pass,
        detail: format!("K(0.5)={k_half:.15}, telescope max {worst_tel:.2e}, series max {worst_series:.2e}"),
        csv: String::new(),
    };
    announce(1, "kernel identities", &out, t0);
}

#[test]
fn criterion_02_goodness_verdicts() {
    let t0 = Instant::now();
    let v_cone = goodness_check(&cone(1.0), DEFAULT_PROBE_BUDGET).verdict;
    let v_cos = goodness_check(&SeedKernel::cosine(), DEFAULT_PROBE_BUDGET).verdict;
    let v_deg = goodness_check(&cone(3.0), DEFAULT_PROBE_BUDGET).verdict;
    let constant = LogKernel::new(SeedKernel::constant(1.0).unwrap()).eval(0.5);
    let pass = v_cone == Verdict::Good
        && v_cos == Verdict::NotGood
        && v_deg == Verdict::Degenerate
        && matches!(constant, Err(Error::DivergentTail { .. }))
        && t0.elapsed().as_secs_f64() < 1.0;
    let out = Outcome {
        pass,
        detail: format!("cone {v_cone:?}, cosine {v_cos:?}, cone(3) {v_deg:?}, constant {constant:?}"),
        csv: String::new(),
    };
    announce(2, "goodness verdicts", &out, t0);
}

#[test]
fn criterion_03_asymptote() {
    let t0 = Instant::now();
    let grid = log_grid(1e-6, 1e-2, 41);
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [cone(1.0), SeedKernel::gaussian(1.0).unwrap()] {
        let slope = asymptote_check(&k, &grid).unwrap();
        let rel = (slope / k.k0() - 1.0).abs();
        pass &= rel <= 0.01;
        detail.push(format!("{} slope {slope:.6} vs k(0) {:.6}", k.name(), k.k0()));
    }
    pass &= t0.elapsed().as_secs_f64() < 5.0;
    let out = Outcome { pass, detail: detail.join("; "), csv: String::new() };
    announce(3, "log asymptote", &out, t0);
}

#[test]
fn criterion_04_spectral_crosscheck() {
    let t0 = Instant::now();
    let lags = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75];
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [SeedKernel::cosine(), SeedKernel::gaussian(1.0).unwrap()] {
        let rep = covariance_crosscheck(&k, 0.5, &lags, 100_000, SEED).unwrap();
        pass &= rep.max_deviation <= SIGMA_MULTIPLIER;
        detail.push(format!("{} max |z| {:.2}", k.name(), rep.max_deviation));
    }
    pass &= t0.elapsed().as_secs_f64() < 60.0;
    let out = Outcome { pass, detail: detail.join("; "), csv: String::new() };
    announce(4, "spectral cross-check", &out, t0);
}

fn run_normalization(workers: usize) -> Outcome {
    let ens = ensemble(cone(0.5), 8.0, 1 << 14, 1000, SEED);
    let masses = starscale::ensemble::map_realizations(&ens, workers, |_, m| m.total_mass()).unwrap();
    let n = masses.len() as f64;
    let mean = masses.iter().sum::<f64>() / n;
    let se = (masses.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let csv = masses.iter().map(|m| format!("{m:?}\n")).collect();
    Outcome {
        pass: (mean - 8.0).abs() <= SIGMA_MULTIPLIER * se,
        detail: format!("mean total mass {mean:.4} (se {se:.4}, {} layers)", ens.spec.ladder.layers),
        csv,
    }
}

fn normalization() -> &'static Outcome {
    static CELL: OnceLock<Outcome> = OnceLock::new();
    CELL.get_or_init(|| run_normalization(WORKERS))
}

#[test]
fn criterion_05_normalization() {
    let t0 = Instant::now();
    announce(5, "normalization", normalization(), t0);
}

fn run_structure(workers: usize) -> Outcome {
    let ens = ensemble(cone(0.5), 8.0, 1 << 16, 1000, SEED);
    let acc = MomentAccumulator::from_source(&ens, AccumulatorConfig::moments(vec![1.0, 2.0]), workers).unwrap();
    let fits = ScalingFits { fits: estimate_xi(&acc, &[1.0, 2.0], None, 0.5).unwrap() };
    let xi1 = &fits.fits[0];
    let xi2 = &fits.fits[1];
    let ok1 = (xi1.slope - 1.0).abs() <= xi1.stderr + 1e-9;
    let ok2 = (xi2.slope - 1.5).abs() <= 0.05f64.max(2.0 * xi2.stderr);

    let leb = lebesgue(8.0, 1 << 10, 100);
    let qs = [0.5, 1.0, 2.0, 3.0];
    let leb_acc = MomentAccumulator::from_source(&leb, AccumulatorConfig::moments(qs.to_vec()), workers).unwrap();
    let leb_fits = estimate_xi(&leb_acc, &qs, None, 0.0).unwrap();
    let ok0 = leb_fits.iter().all(|f| (f.slope - f.q).abs() <= 1e-12 && f.stderr == 0.0);

    let mut csv = fits.csv();
    csv.push_str(&ScalingFits { fits: leb_fits }.csv());
    Outcome {
        pass: ok1 && ok2 && ok0,
        detail: format!(
            "xi(2)={:.4}±{:.4} over {} scales, xi(1)={:.12}±{:.1e}, lebesgue control exact={ok0}",
            xi2.slope, xi2.stderr, xi2.scales, xi1.slope, xi1.stderr
        ),
        csv,
    }
}

fn structure() -> &'static Outcome {
    static CELL: OnceLock<Outcome> = OnceLock::new();
    CELL.get_or_init(|| run_structure(WORKERS))
}

#[test]
fn criterion_06_structure_exponent() {
    let t0 = Instant::now();
    announce(6, "structure exponent", structure(), t0);
}

const RECOVERY_LENGTH: f64 = 64.0;
const RECOVERY_CELLS: usize = 1 << 11;
const RECOVERY_REALIZATIONS: usize = 100_000;

fn run_recovery(workers: usize) -> Outcome {
    let grid = GridSpec::new(RECOVERY_LENGTH, RECOVERY_CELLS).unwrap();
    let w = grid.cells_for(0.125).unwrap();
    let cfg = AccumulatorConfig {
        q_list: vec![1.0],
        thresholds: vec![],
        pair_window: w,
        separations: vec![grid.cells_for(0.5).unwrap(), grid.cells_for(2.0).unwrap()],
    };
    let k = cone(1.0);
    let ens = ensemble(k.clone(), RECOVERY_LENGTH, RECOVERY_CELLS, RECOVERY_REALIZATIONS, SEED);
    let acc = MomentAccumulator::from_source(&ens, cfg.clone(), workers).unwrap();
    let rep = recover_kernel(&acc, YMode::Known, None, Some(&k)).unwrap();
    let near = rep.rows[0].interval;
    let far = rep.rows[1].interval;
    let ok_near = (near.estimate - 0.193147180559945).abs() <= 0.03 && near.half_width() <= 0.03;
    let ok_far = far.contains(0.0);

    let leb = lebesgue(RECOVERY_LENGTH, RECOVERY_CELLS, 20);
    let leb_acc = MomentAccumulator::from_source(&leb, cfg, workers).unwrap();
    let leb_rep = recover_kernel(&leb_acc, YMode::Known, None, None).unwrap();
    let ok_leb = leb_rep.rows.iter().all(|r| r.interval.estimate == 0.0);

    let mut csv = rep.csv();
    csv.push_str(&leb_rep.csv());
    Outcome {
        pass: ok_near && ok_far && ok_leb,
        detail: format!(
            "K(0.5)={:.4} [{:.4},{:.4}], K(2)={:.4} [{:.4},{:.4}], lebesgue exact={ok_leb}",
            near.estimate, near.lo, near.hi, far.estimate, far.lo, far.hi
        ),
        csv,
    }
}

fn recovery() -> &'static Outcome {
    static CELL: OnceLock<Outcome> = OnceLock::new();
    CELL.get_or_init(|| run_recovery(WORKERS))
}

#[test]
fn criterion_07_kernel_recovery() {
    let t0 = Instant::now();
    announce(7, "kernel recovery", recovery(), t0);
}

fn run_star(workers: usize) -> Outcome {
    let grid = GridSpec::new(8.0, 1 << 10).unwrap();
    let k = cone(0.5);
    let matched = StarTestConfig { epsilon: 0.5, layers: None, factor_epsilon: None, draws: 10_000, seed: SEED };
    let mismatched = StarTestConfig { epsilon: 0.5, layers: Some(1), factor_epsilon: Some(0.25), draws: 10_000, seed: SEED };
    let good = star_equation_test(&k, &grid, &matched, workers).unwrap();
    let bad = star_equation_test(&k, &grid, &mismatched, workers).unwrap();
    let mut csv = good.csv();
    csv.push_str(&bad.csv());
    Outcome {
        pass: good.pass && !bad.pass,
        detail: format!(
            "matched: max z {:.2}, KS p {:.3}; mismatched: max z {:.2}, KS p {:.2e} (rejected={})",
            good.moments.iter().map(|m| m.z).fold(0.0, f64::max),
            good.ks.p_value,
            bad.moments.iter().map(|m| m.z).fold(0.0, f64::max),
            bad.ks.p_value,
            !bad.pass
        ),
        csv,
    }
}

fn star() -> &'static Outcome {
    static CELL: OnceLock<Outcome> = OnceLock::new();
    CELL.get_or_init(|| run_star(WORKERS))
}

#[test]
fn criterion_08_star_equation() {
    let t0 = Instant::now();
    announce(8, "star equation", star(), t0);
}

fn run_cutoff(workers: usize) -> Outcome {
    let cone_k = cone(0.5);
    let ens = ensemble(cone_k.clone(), 64.0, 1 << 12, 1000, SEED);
    let far = cutoff_independence(&ens, &cone_k, 2.0, 0.5, workers).unwrap();
    let gauss = SeedKernel::gaussian(1.0).unwrap();
    let ens = ensemble(gauss.clone(), 64.0, 1 << 12, 1000, SEED);
    let near = cutoff_independence(&ens, &gauss, 0.5, 0.5, workers).unwrap();
    let mut csv = far.csv();
    csv.push_str(&near.csv());
    Outcome {
        pass: far.pass && near.pass,
        detail: format!(
            "cone d=2: r={:.4}±{:.4}; gaussian d=0.5: r={:.4}±{:.4}",
            far.correlation.estimate, far.correlation.stderr, near.correlation.estimate, near.correlation.stderr
        ),
        csv,
    }
}

fn cutoff() -> &'static Outcome {
    static CELL: OnceLock<Outcome> = OnceLock::new();
    CELL.get_or_init(|| run_cutoff(WORKERS))
}

#[test]
fn criterion_09_cutoff() {
    let t0 = Instant::now();
    announce(9, "cut-off independence", cutoff(), t0);
}

fn run_ergodic_atoms(workers: usize) -> Outcome {
    let ens = ensemble(cone(0.5), 64.0, 1 << 16, 1000, SEED);
    let windows = [1.0, 4.0, 16.0, 64.0];
    let erg = ergodic_average(&ens, &windows, workers).unwrap();
    let ns: Vec<usize> = (4..=10).map(|j| 1 << j).collect();
    let cfg = AccumulatorConfig { q_list: vec![1.0], thresholds: vec![0.1], pair_window: 0, separations: vec![] };
    let acc = MomentAccumulator::from_source(&ens, cfg, workers).unwrap();
    let atoms = atom_scan(&acc, &[0.1], &ns).unwrap();
    let table: Vec<String> = atoms.tables[0].rows.iter().map(|(n, iv)| format!("{n}:{:.3}", iv.estimate)).collect();
    let mut csv = erg.csv();
    csv.push_str(&atoms.csv());
    Outcome {
        pass: erg.pass && atoms.passed(),
        detail: format!("within 0.2 at T=64: {:.3}; n·P(M>0.1): {}", erg.within[3], table.join(" ")),
        csv,
    }
}

fn ergodic_atoms() -> &'static Outcome {
    static CELL: OnceLock<Outcome> = OnceLock::new();
    CELL.get_or_init(|| run_ergodic_atoms(WORKERS))
}

#[test]
fn criterion_10_ergodicity_and_atoms() {
    let t0 = Instant::now();
    announce(10, "ergodicity and atoms", ergodic_atoms(), t0);
}

#[test]
fn criterion_11_determinism() {
    let t0 = Instant::now();
    let reference = [normalization(), structure(), recovery(), star(), cutoff(), ergodic_atoms()];
    let reruns = [
        run_normalization(RERUN_WORKERS),
        run_structure(RERUN_WORKERS),
        run_recovery(RERUN_WORKERS),
        run_star(RERUN_WORKERS),
        run_cutoff(RERUN_WORKERS),
        run_ergodic_atoms(RERUN_WORKERS),
    ];
    let differing: Vec<u32> =
        reference.iter().zip(&reruns).zip(5..).filter(|((a, b), _)| a.csv != b.csv).map(|(_, c)| c).collect();
    let out = Outcome {
        pass: differing.is_empty(),
        detail: format!("criteria 5-10 rerun on {RERUN_WORKERS} workers; differing CSVs: {differing:?}"),
        csv: String::new(),
    };
    announce(11, "determinism", &out, t0);
}
