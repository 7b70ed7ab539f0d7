//! JSON run configuration.

use std::path::{Path, PathBuf};

use riesz_core::data::{gen_covariate_shift_with, gen_synthetic_ate, ShiftDesign};
use riesz_core::estimators::Method;
use riesz_core::models::{BasisKind, BasisSpec, OutcomeSpec};
use riesz_core::{BranchRule, Dataset, FitConfig, Functional, LossSpec, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::benchmark::BenchmarkConfig;
use crate::error::CliError;
use crate::io::read_dataset;

/// Where the observations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// CSV with an outcome column `y`, an optional treatment column `d` and
    /// numeric regressors; `target` holds the unlabeled target sample.
    Csv {
        path: PathBuf,
        #[serde(default)]
        target: Option<PathBuf>,
    },
    /// Synthetic ATE design drawn with the run seed.
    SyntheticAte { n: usize },
    /// Gaussian mean-shift design drawn with the run seed.
    CovariateShift {
        n_source: usize,
        n_target: usize,
        #[serde(default)]
        design: ShiftDesign,
    },
}

impl DataSource {
    fn resolve(&mut self, base: &Path) {
        if let DataSource::Csv { path, target } = self {
            for p in core::iter::once(path).chain(target.as_mut()) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    pub fn load(&self, seed: u64) -> Result<Dataset, CliError> {
        match self {
            DataSource::Csv { path, target } => read_dataset(path, target.as_deref()),
            DataSource::SyntheticAte { n } => gen_synthetic_ate(seed, *n).map(|d| d.0).map_err(CliError::from_validation),
            DataSource::CovariateShift { n_source, n_target, design } => gen_covariate_shift_with(design, seed, *n_source, *n_target)
                .map(|d| d.0)
                .map_err(CliError::from_validation),
        }
    }
}

fn default_data() -> DataSource {
    DataSource::SyntheticAte { n: 1000 }
}

fn default_functional() -> Functional {
    Functional::Ate
}

fn default_fit() -> FitConfig {
    let basis = BasisSpec::new(BasisKind::Polynomial { degree: 2 });
    FitConfig::canonical(LossSpec::sq(0.0), BranchRule::AlwaysPositive, ModelSpec::Linear { basis }).expect("SQ has a canonical link")
}

fn default_outcome() -> OutcomeSpec {
    OutcomeSpec::Linear {
        basis: BasisSpec::new(BasisKind::Polynomial { degree: 2 }),
        ridge: 1e-6,
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_folds() -> usize {
    2
}

/// One configuration file drives every subcommand; each reads the keys it
/// needs. Command-line flags override `seed`, `out` and the benchmark
/// replication count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_data")]
    pub data: DataSource,
    #[serde(default = "default_functional")]
    pub functional: Functional,
    #[serde(default = "default_fit")]
    pub fit: FitConfig,
    #[serde(default = "default_outcome")]
    pub outcome: OutcomeSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Cross-fitting folds; 1 fits and evaluates on the full sample.
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all keys have defaults")
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub reps: Option<usize>,
}

impl RunConfig {
    /// Parses `path`; relative data paths are taken from the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.data.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
            self.benchmark.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(r) = o.reps {
            self.benchmark.replications = r;
        }
    }

    /// Checks the keys used by `fit` and `estimate`.
    pub fn validate(&self) -> Result<(), CliError> {
        self.fit.validate().map_err(CliError::from_validation)?;
        if self.folds == 0 {
            return Err(CliError::Config("folds must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Config("methods must not be empty".into()));
        }
        if let DataSource::Csv { path, target } = &self.data {
            for p in core::iter::once(path).chain(target) {
                if !p.is_file() {
                    return Err(CliError::Config(format!("data file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}
