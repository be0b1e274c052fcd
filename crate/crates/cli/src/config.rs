//! Resolved run configuration and presets.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use lsr_core::datagen::{SubspaceMode, SubspaceSpec};
use lsr_core::pipeline::{SegmentOptions, DEFAULT_LAMBDA};
use lsr_core::solvers::{ConstrainedOptions, Variant, FEASIBILITY_TOL};
use lsr_core::spectral::{NcutOptions, DEFAULT_RESTARTS, DEFAULT_SEED};
use lsr_core::matrix::DEFAULT_RANK_TOL;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Synth,
    #[default]
    Segment,
    Check,
    Bench,
    Solve,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Constrained,
    #[default]
    Lsr1,
    Lsr2,
}

impl SolverChoice {
    pub fn variant(self) -> Variant {
        match self {
            SolverChoice::Constrained => Variant::ConstrainedNoiseFree,
            SolverChoice::Lsr1 => Variant::Lsr1,
            SolverChoice::Lsr2 => Variant::Lsr2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Preset {
    HopkinsLsr1,
    HopkinsLsr2,
    Yale5Lsr1,
    Yale5Lsr2,
    Yale10Lsr1,
    Yale10Lsr2,
}

impl Preset {
    /// `(solver, λ, k, pca_dim)`; Hopkins sequences carry their own k.
    pub fn parameters(self) -> (SolverChoice, f64, Option<usize>, usize) {
        match self {
            Preset::HopkinsLsr1 => (SolverChoice::Lsr1, 4.8e-3, None, 12),
            Preset::HopkinsLsr2 => (SolverChoice::Lsr2, 4.6e-3, None, 12),
            Preset::Yale5Lsr1 => (SolverChoice::Lsr1, 0.4, Some(5), 30),
            Preset::Yale5Lsr2 => (SolverChoice::Lsr2, 0.4, Some(5), 30),
            Preset::Yale10Lsr1 => (SolverChoice::Lsr1, 4e-3, Some(10), 60),
            Preset::Yale10Lsr2 => (SolverChoice::Lsr2, 4e-3, Some(10), 60),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative residual for the noise-free solver.
    pub feasibility: f64,
    /// Relative singular-value cutoff.
    pub rank: f64,
    /// Closed form vs per-column solves, max-abs.
    pub oracle: f64,
    /// Off-block share for the noise-free solver on independent subspaces.
    pub block: f64,
    /// Off-block share for the ridge solvers on orthogonal subspaces.
    pub block_orthogonal: f64,
    /// Allowed negative slack on the grouping bound.
    pub grouping: f64,
    /// Coefficient gap for duplicated samples.
    pub duplicate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: FEASIBILITY_TOL,
            rank: DEFAULT_RANK_TOL,
            oracle: 1e-8,
            block: 1e-8,
            block_orthogonal: 1e-10,
            grouping: 1e-9,
            duplicate: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub subspace_dim: usize,
    pub ambient_dim: usize,
    pub samples: usize,
    pub noise: f64,
    pub mode: SubspaceMode,
    pub correlation: Option<f64>,
    /// Full spec file; overrides the fields above.
    pub spec: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subspace_dim: 2,
            ambient_dim: 10,
            samples: 20,
            noise: 0.0,
            mode: SubspaceMode::Independent,
            correlation: None,
            spec: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub ebd_trials: usize,
    pub oracle_instances: usize,
    pub grouping_instances: usize,
    pub block_specs: usize,
    /// Criteria expected to satisfy permutation invariance and diagonal
    /// dominance; empty means the built-in list.
    pub criteria: Vec<String>,
    /// Replace lsr1 with a copy that keeps the diagonal, to exercise the
    /// failure path.
    pub tamper_lsr1: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            ebd_trials: 200,
            oracle_instances: 100,
            grouping_instances: 1000,
            block_specs: 50,
            criteria: Vec::new(),
            tamper_lsr1: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub dim: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![50, 100, 200, 400],
            dim: 12,
            repetitions: 5,
        }
    }
}

/// Everything a run depends on, after defaults, presets, files, environment
/// and flags have been merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    pub solver: SolverChoice,
    pub lambda: f64,
    pub k: Option<usize>,
    pub pca_dim: Option<usize>,
    pub center: bool,
    pub normalize_columns: bool,
    pub zero_diag: bool,
    pub seed: u64,
    pub restarts: usize,
    pub preset: Option<Preset>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub tolerances: Tolerances,
    pub synth: SynthConfig,
    pub check: CheckConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: CommandKind::default(),
            solver: SolverChoice::default(),
            lambda: DEFAULT_LAMBDA,
            k: None,
            pca_dim: None,
            center: false,
            normalize_columns: false,
            zero_diag: false,
            seed: DEFAULT_SEED,
            restarts: DEFAULT_RESTARTS,
            preset: None,
            input: None,
            output: None,
            tolerances: Tolerances::default(),
            synth: SynthConfig::default(),
            check: CheckConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(lsr_core::Error::from)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Overwrites solver, λ, k and PCA dimension with the preset's values.
    pub fn apply_preset(&mut self, preset: Preset) {
        let (solver, lambda, k, pca_dim) = preset.parameters();
        self.preset = Some(preset);
        self.solver = solver;
        self.lambda = lambda;
        if k.is_some() {
            self.k = k;
        }
        self.pca_dim = Some(pca_dim);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.solver != SolverChoice::Constrained && !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive for {:?}, got {}", self.solver, self.lambda));
        }
        if self.k == Some(0) {
            return bad("k must be at least 1".into());
        }
        if self.pca_dim == Some(0) {
            return bad("pca_dim must be at least 1".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        if self.bench.repetitions == 0 {
            return bad("bench repetitions must be at least 1".into());
        }
        Ok(())
    }

    pub fn segment_options(&self) -> SegmentOptions {
        SegmentOptions {
            solver: self.solver.variant(),
            lambda: self.lambda,
            k: self.k,
            pca_dim: self.pca_dim,
            center: self.center,
            normalize_columns: self.normalize_columns,
            zero_diag: self.zero_diag,
            constrained: ConstrainedOptions {
                feasibility_tol: self.tolerances.feasibility,
                rank_tol: self.tolerances.rank,
            },
            ncut: NcutOptions {
                seed: self.seed,
                restarts: self.restarts,
            },
        }
    }

    /// Spec for `synth`, from the spec file when one is configured.
    pub fn subspace_spec(&self) -> Result<SubspaceSpec, CliError> {
        let spec = match &self.synth.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(lsr_core::Error::from)?;
                SubspaceSpec::from_toml_str(&text)?
            }
            None => {
                let k = self.k.unwrap_or(3);
                SubspaceSpec {
                    ambient_dim: self.synth.ambient_dim,
                    subspace_dims: vec![self.synth.subspace_dim; k],
                    samples_per_subspace: vec![self.synth.samples; k],
                    mode: self.synth.mode,
                    noise_sigma: self.synth.noise,
                    correlation: self.synth.correlation,
                    normalize_columns: self.normalize_columns,
                    seed: self.seed,
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.apply_preset(Preset::HopkinsLsr1);
        cfg.input = Some("in.csv".into());
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
        assert!(text.contains("seed = 0"));
    }

    #[test]
    fn presets() {
        let mut cfg = RunConfig::default();
        cfg.apply_preset(Preset::HopkinsLsr1);
        assert_eq!((cfg.solver, cfg.lambda, cfg.pca_dim), (SolverChoice::Lsr1, 4.8e-3, Some(12)));
        cfg.apply_preset(Preset::Yale10Lsr2);
        assert_eq!((cfg.solver, cfg.k, cfg.pca_dim), (SolverChoice::Lsr2, Some(10), Some(60)));
    }

    #[test]
    fn validation() {
        let cfg = RunConfig {
            lambda: 0.0,
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let cfg = RunConfig {
            lambda: 0.0,
            solver: SolverChoice::Constrained,
            ..RunConfig::default()
        };
        cfg.validate().unwrap();
        assert!(RunConfig::from_toml_str("lambda = 1.0\nunknown = 2\n").is_err());
    }
}
