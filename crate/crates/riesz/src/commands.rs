//! The subcommands, returning the report printed on stdout.

use std::path::{Path, PathBuf};

use riesz_core::balancing::balance_residuals;
use riesz_core::estimators::{crossfit_estimate, EstimateReport, Evaluations};
use riesz_core::fit::{fit_riesz, FitResult, RieszModel};
use riesz_core::functionals::EvaluableFn;
use riesz_core::models::fit_outcome;
use riesz_core::verify::{run_all, OracleCheck};
use riesz_core::{Dataset, FitConfig, Functional};
use serde::{Deserialize, Serialize};

use crate::benchmark::{run_benchmark, BenchmarkRow};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{csv_string, write_file};

/// Contents of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub config: FitConfig,
    pub functional: Functional,
    pub model: RieszModel,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ModelArtifact {
    pub fn new(config: &FitConfig, functional: &Functional, fit: &FitResult) -> Self {
        ModelArtifact {
            config: config.clone(),
            functional: functional.clone(),
            model: fit.model.clone(),
            objective: fit.objective,
            grad_norm: fit.grad_norm,
            iterations: fit.iterations,
            converged: fit.converged,
        }
    }
}

/// One row of `balance.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub j: usize,
    pub residual: f64,
    pub bound: f64,
    pub satisfied: bool,
}

pub const BALANCE_HEADER: &str = "j,residual,bound,satisfied";
pub const ESTIMATE_HEADER: &str = "method,theta,se,ci_low,ci_high,n,folds";

fn load(cfg: &RunConfig) -> Result<Dataset, CliError> {
    cfg.validate()?;
    let data = cfg.data.load(cfg.seed)?;
    cfg.functional.validate(&data).map_err(CliError::from_validation)?;
    Ok(data)
}

/// Balance rows of a linear or kernel fit; empty for networks.
pub fn balance_rows(fit: &FitResult, data: &Dataset, functional: &Functional) -> Result<Vec<BalanceRow>, CliError> {
    let Some(basis) = fit.model.model.basis() else {
        log::warn!("no balance report for a network representer");
        return Ok(Vec::new());
    };
    let rep = balance_residuals(fit, data, functional, basis)?;
    Ok((0..rep.residuals.len())
        .map(|j| BalanceRow {
            j,
            residual: rep.residuals[j],
            bound: rep.bound[j],
            satisfied: rep.satisfied[j],
        })
        .collect())
}

/// Fits the representer and writes `model.json` and `balance.csv` under
/// the output directory (default `riesz-fit`). Returns the balance CSV.
pub fn run_fit(cfg: &RunConfig) -> Result<String, CliError> {
    let data = load(cfg)?;
    let fit_cfg = cfg.fit.clone().with_seed(cfg.seed);
    let fit = fit_riesz(&fit_cfg, &data, &cfg.functional)?;
    if !fit.converged {
        log::warn!("solver stopped after {} iterations with gradient norm {:.3e}", fit.iterations, fit.grad_norm);
    }
    let balance = csv_string(&balance_rows(&fit, &data, &cfg.functional)?, BALANCE_HEADER);
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("riesz-fit"));
    let artifact = ModelArtifact::new(&fit_cfg, &cfg.functional, &fit);
    let json = serde_json::to_string_pretty(&artifact).map_err(|e| CliError::Other(e.to_string()))?;
    write_file(&dir.join("model.json"), &(json + "\n"))?;
    write_file(&dir.join("balance.csv"), &balance)?;
    log::info!("wrote {}", dir.display());
    Ok(balance)
}

/// Estimates with cross-fitting, or on the full sample when `folds == 1`.
pub fn estimates(cfg: &RunConfig, data: &Dataset) -> Result<Vec<EstimateReport>, CliError> {
    if cfg.folds >= 2 {
        return Ok(crossfit_estimate(
            data,
            &cfg.fit,
            &cfg.outcome,
            &cfg.functional,
            cfg.folds,
            cfg.seed,
            &cfg.methods,
        )?);
    }
    let alpha = fit_riesz(&cfg.fit.clone().with_seed(cfg.seed), data, &cfg.functional)?.model;
    let gamma = fit_outcome(&cfg.outcome, data, cfg.seed)?;
    let ev = Evaluations::compute(data, &cfg.functional, Some(&alpha as &dyn EvaluableFn), Some(&gamma as &dyn EvaluableFn))?;
    Ok(cfg.methods.iter().map(|&m| ev.estimate(m, 1)).collect::<Result<_, _>>()?)
}

pub fn run_estimate(cfg: &RunConfig) -> Result<String, CliError> {
    let data = load(cfg)?;
    let text = csv_string(&estimates(cfg, &data)?, ESTIMATE_HEADER);
    write_out(cfg.out.as_deref(), &text)?;
    Ok(text)
}

/// Runs the benchmark on a pool of `jobs` workers (0 = all cores).
pub fn run_benchmark_command(cfg: &RunConfig, jobs: usize) -> Result<String, CliError> {
    cfg.benchmark.validate().map_err(CliError::from_validation)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    let rows: Vec<BenchmarkRow> = pool.install(|| run_benchmark(&cfg.benchmark))?;
    let text = csv_string(&rows, "variant,method,mse,coverage,mean_ci_width,replications,failures");
    write_out(cfg.out.as_deref(), &text)?;
    Ok(text)
}

/// The oracle checks as CSV, with the names of failed checks.
pub fn run_verify(cfg: &RunConfig) -> Result<(String, Vec<String>), CliError> {
    let checks: Vec<OracleCheck> = run_all(cfg.seed);
    let text = csv_string(&checks, "name,statistic,threshold,passed,anchor");
    write_out(cfg.out.as_deref(), &text)?;
    Ok((text, checks.into_iter().filter(|c| !c.passed).map(|c| c.name).collect()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text),
        None => Ok(()),
    }
}
