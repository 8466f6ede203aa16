//! Estimators and hypothesis checks over ensembles of measures.

mod accumulator;
mod bootstrap;
mod checks;
mod estimators;
mod ks;
mod regression;
mod report;

pub use accumulator::{AccumulatorConfig, MomentAccumulator, RealizationRecord};
pub use bootstrap::{quantile, resample, Interval, RESAMPLES};
pub use checks::{
    compare_sides, cutoff_independence, ergodic_average, star_equation_test, CutoffReport, Dependence, ErgodicReport,
    MomentComparison, StarTestConfig, StarTestReport, ERGODIC_FRACTION, ERGODIC_TOLERANCE, KS_LEVEL,
};
pub use estimators::{
    atom_scan, estimate_xi, mixing_bound, mixing_decay, normalization, recover_kernel, small_interval_moments, AtomReport,
    AtomTable, NormalizationReport,
    KernelEstimate, MixingReport, MixingRow, RecoveryReport, ScalingFit, ScalingFits, SmallIntervalReport, YMode,
    EDGE_SCALES, MIN_REALIZATIONS, SIGMA_MULTIPLIER, TREND_TOLERANCE, XI_TOLERANCE,
};
pub use ks::{kolmogorov_q, ks_statistic, two_sample_ks, KsOutcome};
pub use regression::{ols, Ols};
pub use report::{report_csv, Report, ReportRow, TestVerdict, REPORT_HEADER};
