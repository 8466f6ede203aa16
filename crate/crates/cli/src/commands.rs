use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use starscale::ensemble::{Ensemble, EnsembleSpec, MeasureSource};
use starscale::grid::GridSpec;
use starscale::kernel::{
    asymptote_check, epsilon_kernel, goodness_check, integrate_log, log_grid, series_k, structure_exponent,
    telescope_check, SeedKernel, Verdict, DEFAULT_PROBE_BUDGET, DEFAULT_TOL,
};
use starscale::persist::{ensemble_dir, fmt_f64, to_sorted_json, write_realization, DiskEnsemble};
use starscale::stats::{
    atom_scan, cutoff_independence, ergodic_average, estimate_xi, mixing_decay, normalization, recover_kernel,
    small_interval_moments, star_equation_test, AccumulatorConfig, MomentAccumulator, Report, ScalingFits,
    StarTestConfig, TestVerdict, YMode,
};

use crate::config::{ExperimentConfig, Layers, TestConfig};
use crate::{CliError, Common};

/// Realizations generated per batch before writing.
const WRITE_BATCH: usize = 32;
/// Name of the configuration echo written next to every output.
pub const META_FILE: &str = "experiment.json";

struct Run {
    config: ExperimentConfig,
    kernel: SeedKernel,
    out: PathBuf,
    seed: u64,
    workers: usize,
}

fn prepare(common: &Common) -> Result<Run, CliError> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.ensemble.master_seed = seed;
    }
    let kernel = config.seed_kernel()?;
    let out = common.out.clone().unwrap_or_else(|| config.output_dir.clone());
    let seed = config.ensemble.master_seed;
    // worker overrides change scheduling only, so the echoed config keeps the file's value
    let workers = common.workers.unwrap_or(config.ensemble.workers);
    Ok(Run { config, kernel, out, seed, workers })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn write_meta(dir: &Path, config: &ExperimentConfig) -> Result<(), CliError> {
    write(&dir.join(META_FILE), &to_sorted_json(config)?)
}

fn table_csv(header: &str, rows: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut out = format!("{header}\n");
    for (a, b) in rows {
        out.push_str(&format!("{},{}\n", fmt_f64(a), fmt_f64(b)));
    }
    out
}

fn check_good(kernel: &SeedKernel, force: bool) -> Result<(), CliError> {
    let report = goodness_check(kernel, DEFAULT_PROBE_BUDGET);
    if report.verdict != Verdict::Good && !force {
        return Err(CliError::Kernel(format!(
            "{} is {:?}; pass --force to sample it anyway",
            kernel.name(),
            report.verdict
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct Identities {
    telescope: starscale::kernel::TelescopeReport,
    /// `(r, |Σ_{n≤N} k_ε(r/ε^n) − K(r)|)` at the depth where `r/ε^{N+1}` leaves the support.
    series: Vec<(f64, f64)>,
    asymptote_slope: Option<f64>,
    k0: f64,
}

pub fn kernel(common: &Common) -> Result<(), CliError> {
    let run = prepare(common)?;
    let k = &run.kernel;
    let eps = run.config.epsilon;
    let dir = run.out.join("kernel");
    let scale = k.correlation_length().unwrap_or(1.0);
    let rs = log_grid(1e-4 * scale, 1e2 * scale, 121);

    let log_kernel = rs.iter().map(|&r| (r, integrate_log(k, r, DEFAULT_TOL).unwrap_or(f64::NAN)));
    write(&dir.join("log_kernel.csv"), &table_csv("r,K", log_kernel))?;
    let eps_kernel = rs.iter().map(|&r| (r, epsilon_kernel(k, eps, r, DEFAULT_TOL)));
    write(&dir.join("epsilon_kernel.csv"), &table_csv("r,k_epsilon", eps_kernel))?;
    let k0 = k.k0();
    let xi = (0..=40).map(|i| {
        let q = i as f64 * 0.1;
        (q, structure_exponent(k0, q))
    });
    write(&dir.join("xi.csv"), &table_csv("q,xi", xi))?;

    let goodness = goodness_check(k, DEFAULT_PROBE_BUDGET);
    write(&dir.join("goodness.json"), &to_sorted_json(&goodness)?)?;

    // identities need a finite K; a divergent tail is already reflected in the verdict
    if goodness.verdict != Verdict::NotGood || integrate_log(k, 1.0, DEFAULT_TOL).is_ok() {
        let probes = log_grid(1e-3 * scale, 10.0 * scale, 40);
        let telescope = telescope_check(k, eps, &probes, 1e-8)?;
        let support = k.support_radius();
        let series = match support {
            Some(radius) => probes
                .iter()
                .map(|&r| {
                    let mut depth = 0u32;
                    while r / eps.powi(depth as i32 + 1) <= radius {
                        depth += 1;
                    }
                    let s = series_k(k, eps, r, depth)?;
                    Ok((r, (s - integrate_log(k, r, DEFAULT_TOL)?).abs()))
                })
                .collect::<starscale::Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let asymptote_slope = asymptote_check(k, &log_grid(1e-6 * scale, 1e-2 * scale, 41)).ok();
        write(&dir.join("identities.json"), &to_sorted_json(&Identities { telescope, series, asymptote_slope, k0 })?)?;
    }
    write_meta(&dir, &run.config)?;
    if goodness.verdict != Verdict::Good {
        return Err(CliError::Kernel(format!("{} is {:?}", k.name(), goodness.verdict)));
    }
    Ok(())
}

fn ensemble_spec(run: &Run) -> Result<EnsembleSpec, CliError> {
    Ok(EnsembleSpec {
        kernel: run.kernel.clone(),
        ladder: run.config.ladder(&run.kernel)?,
        grid: run.config.grid_spec(),
        y_law: run.config.y_law,
        realizations: run.config.ensemble.realizations,
        master_seed: run.seed,
    })
}

pub fn sample(common: &Common) -> Result<(), CliError> {
    let run = prepare(common)?;
    check_good(&run.kernel, common.force)?;
    let ens = Ensemble::new(ensemble_spec(&run)?)?;
    let dir = ensemble_dir(&run.out, run.seed);
    fs::create_dir_all(&dir)?;
    // stale realizations from a larger earlier run would be picked up on reading
    let mut k = ens.len();
    while dir.join(format!("real-{k}.csv")).exists() {
        fs::remove_file(dir.join(format!("real-{k}.csv")))?;
        let _ = fs::remove_file(dir.join(format!("real-{k}.json")));
        k += 1;
    }
    for start in (0..ens.len()).step_by(WRITE_BATCH) {
        let end = (start + WRITE_BATCH).min(ens.len());
        for m in &ens.realize_range(start..end, run.workers) {
            write_realization(&dir, m)?;
        }
    }
    write_meta(&dir, &run.config)?;
    Ok(())
}

/// Accumulator layouts needed by the configured tests, keyed by pair window in cells.
fn accumulator_layouts(config: &ExperimentConfig, grid: &GridSpec) -> Result<BTreeMap<usize, AccumulatorConfig>, CliError> {
    let cells = |what: &str, x: f64| {
        grid.cells_for(x).ok_or_else(|| CliError::Config(format!("{what} {x} is not a whole number of grid cells")))
    };
    let mut q_list: Vec<f64> = Vec::new();
    let mut thresholds: Vec<f64> = Vec::new();
    let mut pairs: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let add = |list: &mut Vec<f64>, x: f64| {
        if !list.iter().any(|&y| y == x) {
            list.push(x);
        }
    };
    for t in &config.tests {
        match t {
            TestConfig::StructureExponent { q, .. } => q.iter().for_each(|&x| add(&mut q_list, x)),
            TestConfig::SmallIntervals { gamma, .. } => add(&mut q_list, 1.0 + gamma),
            TestConfig::Atoms { alpha, .. } => alpha.iter().for_each(|&a| add(&mut thresholds, a)),
            TestConfig::KernelRecovery { window, separations, .. } => {
                let w = cells("window", *window)?;
                for &s in separations {
                    pairs.entry(w).or_default().push(cells("separation", s)?);
                }
            }
            TestConfig::Mixing { window, distances } => {
                let w = cells("window", *window)?;
                for &d in distances {
                    pairs.entry(w).or_default().push(cells("distance", d)? + w);
                }
            }
            _ => {}
        }
    }
    if q_list.is_empty() {
        q_list.push(1.0);
    }
    let base = AccumulatorConfig { q_list, thresholds, pair_window: 0, separations: Vec::new() };
    let mut layouts = BTreeMap::new();
    if pairs.is_empty() {
        layouts.insert(0, base);
    } else {
        for (w, mut seps) in pairs {
            seps.sort_unstable();
            seps.dedup();
            layouts.insert(w, AccumulatorConfig { pair_window: w, separations: seps, ..base.clone() });
        }
    }
    Ok(layouts)
}

struct Outcome {
    verdict: TestVerdict,
    csv: String,
}

fn outcome<R: Report>(report: starscale::Result<R>, name: &str) -> Outcome {
    match report {
        Ok(r) => Outcome { verdict: r.verdict(), csv: r.csv() },
        Err(e) => Outcome {
            verdict: TestVerdict { test_name: name.to_string(), pass: false, details: serde_json::json!({ "error": e.to_string() }) },
            csv: starscale::stats::report_csv(&[]),
        },
    }
}

#[derive(Serialize)]
struct VerifySummary {
    pass: bool,
    verdicts: Vec<TestVerdict>,
}

pub fn verify(common: &Common, generate: bool) -> Result<(), CliError> {
    let run = prepare(common)?;
    let cfg = &run.config;
    let grid = cfg.grid_spec();
    let k = &run.kernel;
    let workers = run.workers;

    let needs_source = cfg.tests.iter().any(|t| !matches!(t, TestConfig::StarEquation { .. }));
    let source: Option<Box<dyn MeasureSource>> = if !needs_source {
        None
    } else if generate {
        check_good(k, common.force)?;
        Some(Box::new(Ensemble::new(ensemble_spec(&run)?)?))
    } else {
        let dir = ensemble_dir(&run.out, run.seed);
        let disk = DiskEnsemble::open(&dir).map_err(|_| {
            CliError::Config(format!("no ensemble at {}; run `starscale sample` first or pass --sample", dir.display()))
        })?;
        if !disk.grid().matches(&grid) {
            return Err(CliError::Config(format!("ensemble at {} was sampled on a different grid", dir.display())));
        }
        Some(Box::new(disk))
    };

    let mut accumulators: BTreeMap<usize, MomentAccumulator> = BTreeMap::new();
    if let Some(src) = &source {
        let needs_moments = cfg.tests.iter().any(|t| {
            !matches!(t, TestConfig::StarEquation { .. } | TestConfig::Ergodic { .. } | TestConfig::Cutoff { .. })
        });
        if needs_moments {
            for (w, layout) in accumulator_layouts(cfg, &grid)? {
                accumulators.insert(w, MomentAccumulator::from_source(src.as_ref(), layout, workers)?);
            }
        }
    }
    let acc_for = |window: Option<f64>| -> &MomentAccumulator {
        let key = window.and_then(|w| grid.cells_for(w)).unwrap_or(0);
        accumulators.get(&key).or_else(|| accumulators.values().next()).expect("accumulator for a moment test")
    };

    let mut outcomes = Vec::new();
    for t in &cfg.tests {
        let name = t.name();
        let o = match t {
            TestConfig::Normalization {} => outcome(normalization(acc_for(None), cfg.y_law.mean() * grid.length), name),
            TestConfig::StructureExponent { q, fit_range } => outcome(
                estimate_xi(acc_for(None), q, fit_range.map(|[a, b]| (a, b)), k.k0()).map(|fits| ScalingFits { fits }),
                name,
            ),
            TestConfig::KernelRecovery { window, y_mode, tolerance, separations } => {
                let acc = acc_for(Some(*window));
                outcome(
                    recover_kernel(&restrict(acc, *window, separations, &grid)?, y_mode.unwrap_or(YMode::Known), *tolerance, Some(k)),
                    name,
                )
            }
            TestConfig::Mixing { window, distances } => {
                let seps: Vec<f64> = distances.iter().map(|d| d + window).collect();
                outcome(mixing_decay(&restrict(acc_for(Some(*window)), *window, &seps, &grid)?, k, distances), name)
            }
            TestConfig::SmallIntervals { gamma, n } => outcome(small_interval_moments(acc_for(None), *gamma, n, k.k0()), name),
            TestConfig::Atoms { alpha, n } => outcome(atom_scan(acc_for(None), alpha, n), name),
            TestConfig::Ergodic { windows } => outcome(ergodic_average(source_ref(&source), windows, workers), name),
            TestConfig::Cutoff { distance, block } => {
                outcome(cutoff_independence(source_ref(&source), k, *distance, *block, workers), name)
            }
            TestConfig::StarEquation { draws, factor_epsilon } => {
                let star = StarTestConfig {
                    epsilon: cfg.epsilon,
                    layers: match cfg.layers {
                        Layers::Fixed(n) => Some(n),
                        Layers::Auto(_) => None,
                    },
                    factor_epsilon: *factor_epsilon,
                    draws: *draws,
                    seed: run.seed,
                };
                match star_equation_test(k, &grid, &star, workers) {
                    Err(starscale::Error::NotPsd(msg)) => return Err(CliError::Sampler(msg)),
                    r => outcome(r, name),
                }
            }
        };
        outcomes.push(o);
    }

    let dir = run.out.join(format!("verify-{}", run.seed));
    fs::create_dir_all(&dir)?;
    for (i, o) in outcomes.iter().enumerate() {
        write(&dir.join(format!("{i:02}-{}.csv", o.verdict.test_name)), &o.csv)?;
    }
    let verdicts: Vec<TestVerdict> = outcomes.into_iter().map(|o| o.verdict).collect();
    let failed: Vec<String> = verdicts.iter().filter(|v| !v.pass).map(|v| v.test_name.clone()).collect();
    write(&dir.join("verdicts.json"), &to_sorted_json(&VerifySummary { pass: failed.is_empty(), verdicts })?)?;
    write_meta(&dir, cfg)?;
    if !failed.is_empty() {
        return Err(CliError::Verification(failed));
    }
    Ok(())
}

fn source_ref(source: &Option<Box<dyn MeasureSource>>) -> &dyn MeasureSource {
    source.as_deref().expect("ensemble source for a realization test")
}

/// Copy of `acc` keeping only the two-point columns at `separations`.
fn restrict(acc: &MomentAccumulator, window: f64, separations: &[f64], grid: &GridSpec) -> Result<MomentAccumulator, CliError> {
    let w = grid.cells_for(window).ok_or_else(|| CliError::Config(format!("window {window} is not a whole number of cells")))?;
    let wanted = separations
        .iter()
        .map(|&s| grid.cells_for(s).ok_or_else(|| CliError::Config(format!("separation {s} is not a whole number of cells"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(acc.select_pairs(w, &wanted)?)
}
