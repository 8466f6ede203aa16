//! Experiment configuration (TOML on disk, JSON in run metadata).
//!
//! Lengths are in units of the domain coordinate; the grid covers `[0, length)`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use starscale::grid::{GridSpec, ScaleLadder};
use starscale::kernel::{KernelSpec, SeedKernel};
use starscale::measure::YLaw;
use starscale::stats::YMode;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

/// `"auto"` or an explicit ladder depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Layers {
    Fixed(u32),
    Auto(Auto),
}

impl Default for Layers {
    fn default() -> Self {
        Layers::Auto(Auto::Auto)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub realizations: usize,
    pub master_seed: u64,
    /// Worker pool size; 0 lets the runtime decide.
    #[serde(default)]
    pub workers: usize,
}

/// One verification test and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestConfig {
    /// Mean total mass against `E[Y] L`.
    Normalization {},
    StructureExponent {
        #[serde(default = "default_q")]
        q: Vec<f64>,
        #[serde(default)]
        fit_range: Option<[f64; 2]>,
    },
    KernelRecovery {
        window: f64,
        separations: Vec<f64>,
        #[serde(default)]
        y_mode: Option<YMode>,
        #[serde(default)]
        tolerance: Option<f64>,
    },
    Mixing {
        window: f64,
        distances: Vec<f64>,
    },
    StarEquation {
        draws: usize,
        #[serde(default)]
        factor_epsilon: Option<f64>,
    },
    Ergodic {
        windows: Vec<f64>,
    },
    SmallIntervals {
        gamma: f64,
        n: Vec<usize>,
    },
    Atoms {
        alpha: Vec<f64>,
        n: Vec<usize>,
    },
    Cutoff {
        distance: f64,
        block: f64,
    },
}

fn default_q() -> Vec<f64> {
    vec![1.0, 2.0]
}

impl TestConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TestConfig::Normalization {} => "normalization",
            TestConfig::StructureExponent { .. } => "structure_exponent",
            TestConfig::KernelRecovery { .. } => "kernel_recovery",
            TestConfig::Mixing { .. } => "mixing",
            TestConfig::StarEquation { .. } => "star_equation",
            TestConfig::Ergodic { .. } => "ergodic",
            TestConfig::SmallIntervals { .. } => "small_intervals",
            TestConfig::Atoms { .. } => "atoms",
            TestConfig::Cutoff { .. } => "cutoff",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub epsilon: f64,
    #[serde(default)]
    pub layers: Layers,
    pub output_dir: PathBuf,
    pub kernel: KernelSpec,
    pub grid: GridSpec,
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub y_law: YLaw,
    #[serde(default)]
    pub tests: Vec<TestConfig>,
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn positive(field: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(field_error(field, format!("must be a positive number, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(field_error("epsilon", format!("must lie in (0, 1), got {}", self.epsilon)));
        }
        self.kernel.validate().map_err(|e| field_error("kernel", e))?;
        GridSpec::new(self.grid.length, self.grid.cells).map_err(|e| field_error("grid", e))?;
        if self.ensemble.realizations == 0 {
            return Err(field_error("ensemble.realizations", "must be at least 1"));
        }
        self.y_law.validate().map_err(|e| field_error("y_law", e))?;
        for (i, t) in self.tests.iter().enumerate() {
            let at = format!("tests[{i}] ({})", t.name());
            match t {
                TestConfig::Normalization {} => {}
                TestConfig::StructureExponent { q, fit_range } => {
                    for &x in q {
                        positive(&format!("{at}.q"), x)?;
                    }
                    if let Some([lo, hi]) = fit_range {
                        positive(&format!("{at}.fit_range"), *lo)?;
                        if hi <= lo {
                            return Err(field_error(&format!("{at}.fit_range"), "upper end must exceed lower end"));
                        }
                    }
                }
                TestConfig::KernelRecovery { window, separations, tolerance, .. } => {
                    positive(&format!("{at}.window"), *window)?;
                    if separations.is_empty() {
                        return Err(field_error(&format!("{at}.separations"), "must not be empty"));
                    }
                    for &s in separations {
                        positive(&format!("{at}.separations"), s)?;
                    }
                    if let Some(tol) = tolerance {
                        positive(&format!("{at}.tolerance"), *tol)?;
                    }
                }
                TestConfig::Mixing { window, distances } => {
                    positive(&format!("{at}.window"), *window)?;
                    for &d in distances {
                        positive(&format!("{at}.distances"), d)?;
                    }
                }
                TestConfig::StarEquation { draws, factor_epsilon } => {
                    if *draws < 2 {
                        return Err(field_error(&format!("{at}.draws"), "must be at least 2"));
                    }
                    if let Some(e) = factor_epsilon {
                        if !(*e > 0.0 && *e < 1.0) {
                            return Err(field_error(&format!("{at}.factor_epsilon"), format!("must lie in (0, 1), got {e}")));
                        }
                    }
                }
                TestConfig::Ergodic { windows } => {
                    if windows.is_empty() {
                        return Err(field_error(&format!("{at}.windows"), "must not be empty"));
                    }
                    for &w in windows {
                        positive(&format!("{at}.windows"), w)?;
                    }
                }
                TestConfig::SmallIntervals { gamma, n } => {
                    positive(&format!("{at}.gamma"), *gamma)?;
                    if n.is_empty() || n.contains(&0) {
                        return Err(field_error(&format!("{at}.n"), "must be a non-empty list of positive integers"));
                    }
                }
                TestConfig::Atoms { alpha, n } => {
                    for &a in alpha {
                        positive(&format!("{at}.alpha"), a)?;
                    }
                    if n.is_empty() || n.contains(&0) {
                        return Err(field_error(&format!("{at}.n"), "must be a non-empty list of positive integers"));
                    }
                }
                TestConfig::Cutoff { distance, block } => {
                    positive(&format!("{at}.distance"), *distance)?;
                    positive(&format!("{at}.block"), *block)?;
                }
            }
        }
        Ok(())
    }

    pub fn seed_kernel(&self) -> Result<SeedKernel, CliError> {
        self.kernel.build().map_err(|e| field_error("kernel", e))
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.grid
    }

    pub fn ladder(&self, kernel: &SeedKernel) -> Result<ScaleLadder, CliError> {
        let ladder = match self.layers {
            Layers::Fixed(n) => ScaleLadder::new(self.epsilon, n),
            Layers::Auto(_) => ScaleLadder::auto(kernel, self.epsilon, &self.grid),
        }
        .map_err(|e| field_error("layers", e))?;
        ladder.check_grid(&self.grid).map_err(|e| field_error("layers", e))?;
        Ok(ladder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
epsilon = 0.5
layers = "auto"
output_dir = "out"

[kernel]
name = "cone"
lambda2 = 0.5
T = 1.0

[grid]
length = 8.0
cells = 1024

[ensemble]
realizations = 10
master_seed = 7
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::parse(BASE).unwrap();
        assert_eq!(cfg.layers, Layers::Auto(Auto::Auto));
        assert_eq!(cfg.y_law, YLaw::Deterministic);
        assert_eq!(cfg.ensemble.workers, 0);
        assert!(cfg.tests.is_empty());
    }

    #[test]
    fn explicit_layers_and_tests() {
        let text = BASE.replace("layers = \"auto\"", "layers = 4")
            + "\n[[tests]]\nname = \"structure_exponent\"\nq = [2.0]\n\n[[tests]]\nname = \"cutoff\"\ndistance = 2.0\nblock = 0.5\n";
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg.layers, Layers::Fixed(4));
        assert_eq!(cfg.tests.len(), 2);
        assert_eq!(cfg.tests[1].name(), "cutoff");
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = BASE.replace("epsilon = 0.5", "epsilon = 0.5\nepsilom = 0.5");
        assert!(matches!(ExperimentConfig::parse(&text), Err(CliError::Config(_))));
        let text = BASE.replace("T = 1.0", "T = 1.0\nwidth = 2");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn rejects_out_of_range_values() {
        for (from, to) in [("T = 1.0", "T = -1.0"), ("epsilon = 0.5", "epsilon = 1.5"), ("cells = 1024", "cells = 1"), ("realizations = 10", "realizations = 0")] {
            let err = ExperimentConfig::parse(&BASE.replace(from, to)).unwrap_err();
            assert!(matches!(err, CliError::Config(_)), "{to}");
        }
    }

    #[test]
    fn json_round_trip() {
        let text = BASE.to_string() + "\n[y_law]\nkind = \"lognormal\"\ns2 = 0.1\n\n[[tests]]\nname = \"normalization\"\n";
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }
}
