//! Monte Carlo benchmark on the synthetic ATE design.

use std::collections::BTreeMap;

use rayon::prelude::*;
use riesz_core::data::gen_synthetic_ate;
use riesz_core::estimators::{crossfit_splits, EstimateReport, Evaluations, Method};
use riesz_core::fit::{fit_propensity_mle, fit_riesz, FitConfig, Penalty, RieszModel, SolverSettings};
use riesz_core::functionals::EvaluableFn;
use riesz_core::links::{BranchRule, LinkKind, LinkSpec};
use riesz_core::losses::LossSpec;
use riesz_core::models::{fit_outcome, BasisKind, BasisSpec, Model, ModelSpec, OutcomeSpec};
use riesz_core::rng::split;
use riesz_core::{Error, Functional, Result};
use serde::{Deserialize, Serialize};

/// How the representer is obtained in one benchmark column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Oracle representer and outcome regression.
    True,
    /// Squared loss, linear link, features of `(d, z)`.
    #[serde(rename = "SQ-Linear")]
    SqLinear,
    /// Squared loss, logistic propensity link, features of `z`.
    #[serde(rename = "SQ-Logit")]
    SqLogit,
    /// Unnormalized KL loss, treatment-branched log link, features of `z`.
    #[serde(rename = "UKL-Z")]
    UklZ,
    /// Unnormalized KL loss, treatment-branched log link, features of `(d, z)`.
    #[serde(rename = "UKL-X")]
    UklX,
    /// Logistic likelihood for the propensity, plugged into the representer.
    #[serde(rename = "BKL-MLE")]
    BklMle,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::True,
        Variant::SqLinear,
        Variant::SqLogit,
        Variant::UklZ,
        Variant::UklX,
        Variant::BklMle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::True => "True",
            Variant::SqLinear => "SQ-Linear",
            Variant::SqLogit => "SQ-Logit",
            Variant::UklZ => "UKL-Z",
            Variant::UklX => "UKL-X",
            Variant::BklMle => "BKL-MLE",
        }
    }
}

fn default_n() -> usize {
    3000
}

fn default_folds() -> usize {
    2
}

fn default_reps() -> usize {
    100
}

fn default_centers() -> usize {
    100
}

fn default_scale() -> f64 {
    1.0
}

fn default_lambda() -> f64 {
    1e-4
}

fn default_lambda_by_variant() -> BTreeMap<Variant, f64> {
    BTreeMap::from([(Variant::UklZ, 1e-3), (Variant::UklX, 1e-3)])
}

fn default_saturation() -> Option<f64> {
    Some(4.0)
}

fn default_outcome() -> OutcomeSpec {
    OutcomeSpec::Kernel {
        n_centers: 100,
        bandwidth: None,
        bandwidth_scale: 1.0,
        ridge: 1e-4,
    }
}

fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn default_methods() -> Vec<Method> {
    vec![Method::Dm, Method::Ipw, Method::Aipw]
}

/// Base model of the fitted representers and propensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LearnerModel {
    /// Gaussian RBF expansion with an RKHS penalty.
    Kernel {
        #[serde(default = "default_centers")]
        n_centers: usize,
        #[serde(default = "default_scale")]
        bandwidth_scale: f64,
    },
    /// Polynomial basis with a ridge penalty.
    Polynomial { degree: usize },
    /// ReLU network with a weight-decay penalty.
    Mlp { hidden: Vec<usize> },
}

impl Default for LearnerModel {
    fn default() -> Self {
        LearnerModel::Kernel {
            n_centers: default_centers(),
            bandwidth_scale: default_scale(),
        }
    }
}

impl LearnerModel {
    fn spec(&self, on_z_only: bool) -> ModelSpec {
        match self {
            LearnerModel::Kernel { n_centers, bandwidth_scale } => ModelSpec::Kernel {
                n_centers: *n_centers,
                bandwidth: None,
                bandwidth_scale: *bandwidth_scale,
                on_z_only,
            },
            LearnerModel::Polynomial { degree } => {
                let basis = BasisSpec::new(BasisKind::Polynomial { degree: *degree });
                ModelSpec::Linear {
                    basis: if on_z_only { basis.on_z() } else { basis },
                }
            }
            LearnerModel::Mlp { hidden } => ModelSpec::Mlp {
                hidden: hidden.clone(),
                on_z_only,
            },
        }
    }

    fn penalty(&self, lambda: f64) -> Penalty {
        match self {
            LearnerModel::Kernel { .. } => Penalty::rkhs(lambda),
            LearnerModel::Polynomial { .. } | LearnerModel::Mlp { .. } => Penalty::l2(lambda),
        }
    }
}

/// Representer learner settings, with optional per-variant replacements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSettings {
    #[serde(default)]
    pub model: LearnerModel,
    /// Penalty weight of the Riesz fits, and the ridge weight of the
    /// likelihood fit.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub max_iters: Option<usize>,
    /// Saturation bound of the logistic link index; the squared-loss
    /// objective with this link is unbounded below without it.
    #[serde(default = "default_saturation")]
    pub logit_saturation: Option<f64>,
    #[serde(default)]
    pub model_by_variant: BTreeMap<Variant, LearnerModel>,
    #[serde(default = "default_lambda_by_variant")]
    pub lambda_by_variant: BTreeMap<Variant, f64>,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        LearnerSettings {
            model: LearnerModel::default(),
            lambda: default_lambda(),
            max_iters: None,
            logit_saturation: default_saturation(),
            model_by_variant: BTreeMap::new(),
            lambda_by_variant: default_lambda_by_variant(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub learner: LearnerSettings,
    #[serde(default = "default_outcome")]
    pub outcome: OutcomeSpec,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            n: default_n(),
            folds: default_folds(),
            replications: default_reps(),
            seed: 0,
            variants: default_variants(),
            methods: default_methods(),
            learner: LearnerSettings::default(),
            outcome: default_outcome(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidSize {
                what: "replications",
                got: 0,
                min: 1,
            });
        }
        if self.folds < 2 {
            return Err(Error::InvalidFolds { k: self.folds, n: self.n });
        }
        if self.variants.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("at least one variant and one method are required".into()));
        }
        for lambda in core::iter::once(&self.learner.lambda).chain(self.learner.lambda_by_variant.values()) {
            if lambda.is_nan() || *lambda < 0.0 {
                return Err(Error::InvalidParameter {
                    name: "learner.lambda",
                    value: *lambda,
                    reason: "must be >= 0",
                });
            }
        }
        core::iter::once(&self.learner.model)
            .chain(self.learner.model_by_variant.values())
            .try_for_each(|m| m.spec(false).validate())
    }

    fn model(&self, variant: Variant) -> &LearnerModel {
        self.learner.model_by_variant.get(&variant).unwrap_or(&self.learner.model)
    }

    fn lambda(&self, variant: Variant) -> f64 {
        self.learner.lambda_by_variant.get(&variant).copied().unwrap_or(self.learner.lambda)
    }

    fn settings(&self) -> SolverSettings {
        SolverSettings {
            max_iters: self.learner.max_iters,
            ..Default::default()
        }
    }

    fn riesz_config(&self, variant: Variant, seed: u64) -> Result<Option<FitConfig>> {
        let (loss, link, on_z) = match variant {
            Variant::SqLinear => (LossSpec::sq(0.0), LinkSpec::new(LinkKind::LinearSq), false),
            Variant::SqLogit => {
                let mut link = LinkSpec::new(LinkKind::AtePropensityLogit).with_branch(BranchRule::TreatmentSign);
                link.saturation = self.learner.logit_saturation;
                (LossSpec::sq(0.0), link, true)
            }
            Variant::UklZ => (
                LossSpec::ukl(1.0),
                LinkSpec::new(LinkKind::LogBranch).with_c(1.0).with_branch(BranchRule::TreatmentSign),
                true,
            ),
            Variant::UklX => (
                LossSpec::ukl(1.0),
                LinkSpec::new(LinkKind::LogBranch).with_c(1.0).with_branch(BranchRule::TreatmentSign),
                false,
            ),
            Variant::True | Variant::BklMle => return Ok(None),
        };
        let mut cfg = FitConfig::new(loss, link, self.model(variant).spec(on_z))
            .with_penalty(self.model(variant).penalty(self.lambda(variant)))
            .with_seed(seed);
        cfg.optimizer = self.settings();
        cfg.validate()?;
        Ok(Some(cfg))
    }
}

/// Outcome of one variant in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub variant: Variant,
    pub estimates: Result<Vec<EstimateReport>>,
}

fn fit_alpha(config: &BenchmarkConfig, variant: Variant, train: &riesz_core::Dataset, seed: u64) -> Result<RieszModel> {
    match config.riesz_config(variant, seed)? {
        Some(cfg) => Ok(fit_riesz(&cfg, train, &Functional::Ate)?.model),
        None => fit_propensity_mle(&config.model(variant).spec(true), train, config.lambda(variant), &config.settings(), seed),
    }
}

/// All configured variants on replication `r`, using the data seed
/// `split(config.seed, r)`. The outcome regression is fitted once per fold
/// and shared across variants.
pub fn run_replication(config: &BenchmarkConfig, r: usize) -> Result<Vec<Replication>> {
    let seed = split(config.seed, r as u64);
    let (data, oracle) = gen_synthetic_ate(seed, config.n)?;
    let ate = Functional::Ate;
    let splits = crossfit_splits(&data, config.folds, split(seed, 1))?;
    let gammas: Vec<Result<Model>> = splits
        .iter()
        .enumerate()
        .map(|(f, (train, _))| fit_outcome(&config.outcome, train, split(seed, 100 + f as u64)))
        .collect();
    let mut out = Vec::with_capacity(config.variants.len());
    for &variant in &config.variants {
        let estimates = (|| -> Result<Vec<EstimateReport>> {
            let pooled = if variant == Variant::True {
                let alpha = |x: &[f64]| oracle.representer(x);
                let gamma = |x: &[f64]| oracle.outcome(x);
                Evaluations::compute(&data, &ate, Some(&alpha), Some(&gamma))?
            } else {
                let mut pooled = Evaluations::default();
                for (f, ((train, eval), gamma)) in splits.iter().zip(&gammas).enumerate() {
                    let wrap = |e: Error| Error::Fold { fold: f, source: Box::new(e) };
                    let gamma = gamma.as_ref().map_err(|e| wrap(e.clone()))?;
                    let alpha = fit_alpha(config, variant, train, split(seed, 200 + f as u64)).map_err(wrap)?;
                    let ev = Evaluations::compute(eval, &ate, Some(&alpha as &dyn EvaluableFn), Some(gamma as &dyn EvaluableFn)).map_err(wrap)?;
                    pooled.extend(ev);
                }
                pooled
            };
            let folds = if variant == Variant::True { 1 } else { config.folds };
            config.methods.iter().map(|&m| pooled.estimate(m, folds)).collect()
        })();
        out.push(Replication { variant, estimates });
    }
    Ok(out)
}

/// One CSV row of the benchmark report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub variant: String,
    pub method: String,
    pub mse: f64,
    pub coverage: f64,
    pub mean_ci_width: f64,
    pub replications: usize,
    pub failures: usize,
}

/// Aggregates per-replication results (in replication order) against `theta`.
pub fn aggregate(config: &BenchmarkConfig, runs: &[Result<Vec<Replication>>], theta: f64) -> Vec<BenchmarkRow> {
    let mut rows = Vec::new();
    for (vi, &variant) in config.variants.iter().enumerate() {
        for (mi, &method) in config.methods.iter().enumerate() {
            let (mut se2, mut cover, mut width, mut used, mut failed) = (0.0, 0usize, 0.0, 0usize, 0usize);
            for run in runs {
                let est = run.as_ref().ok().and_then(|reps| reps[vi].estimates.as_ref().ok()).map(|e| &e[mi]);
                match est {
                    Some(e) if e.theta.is_finite() && e.se.is_finite() => {
                        se2 += (e.theta - theta).powi(2);
                        cover += e.covers(theta) as usize;
                        width += e.ci_high - e.ci_low;
                        used += 1;
                    }
                    _ => failed += 1,
                }
            }
            let d = used.max(1) as f64;
            let nan_if_empty = |v: f64| if used == 0 { f64::NAN } else { v / d };
            rows.push(BenchmarkRow {
                variant: variant.as_str().to_string(),
                method: method.as_str().to_string(),
                mse: nan_if_empty(se2),
                coverage: nan_if_empty(cover as f64),
                mean_ci_width: nan_if_empty(width),
                replications: used,
                failures: failed,
            });
        }
    }
    rows
}

/// Runs every replication on the current rayon pool and aggregates them.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Vec<BenchmarkRow>> {
    config.validate()?;
    let runs: Vec<Result<Vec<Replication>>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let res = run_replication(config, r);
            match &res {
                Ok(reps) => {
                    for rep in reps {
                        if let Err(e) = &rep.estimates {
                            log::warn!("replication {r}, {}: {e}", rep.variant.as_str());
                        }
                    }
                }
                Err(e) => log::warn!("replication {r}: {e}"),
            }
            log::debug!("replication {r} done");
            res
        })
        .collect();
    Ok(aggregate(config, &runs, riesz_core::data::ATE_THETA))
}
