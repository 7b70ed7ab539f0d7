//! Plug-in, weighting, doubly robust and targeted estimators with Wald
//! intervals, and their cross-fitted versions.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{fold_assignment, Dataset};
use crate::error::{Error, Result};
use crate::fit::{fit_riesz, FitConfig};
use crate::functionals::{EvaluableFn, Functional};
use crate::models::{fit_outcome, OutcomeSpec};
use crate::rng::split;

/// Two-sided 95% normal critical value.
pub const Z_975: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Dm,
    Ipw,
    Aipw,
    Tmle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dm, Method::Ipw, Method::Aipw, Method::Tmle];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dm => "DM",
            Method::Ipw => "IPW",
            Method::Aipw => "AIPW",
            Method::Tmle => "TMLE",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Point estimate with a Wald interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub theta: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    /// 1 when no cross-fitting was used.
    pub folds: usize,
}

impl EstimateReport {
    pub fn new(method: Method, theta: f64, se: f64, n: usize, folds: usize) -> Self {
        EstimateReport {
            method,
            theta,
            se,
            ci_low: theta - Z_975 * se,
            ci_high: theta + Z_975 * se,
            n,
            folds,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }
}

/// Per-observation score values at `theta = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub method: Method,
    pub psi: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with the `n - 1` convention (zero for one value).
fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Nuisance values on an evaluation sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluations {
    pub y: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Terms whose average is `M(gamma)`: `m(W_i, gamma)` per row, or
    /// `gamma` on the target sample for covariate shift.
    pub m_gamma: Vec<f64>,
    /// The same for `alpha`.
    pub m_alpha: Vec<f64>,
    /// `m_gamma` is indexed by row (false for covariate shift).
    pub paired: bool,
}

impl Evaluations {
    /// Evaluates `alpha` and `gamma` on `data`; a missing nuisance is zero.
    pub fn compute(data: &Dataset, functional: &Functional, alpha: Option<&dyn EvaluableFn>, gamma: Option<&dyn EvaluableFn>) -> Result<Self> {
        functional.validate(data)?;
        let zero = |_: &[f64]| 0.0;
        let alpha = alpha.unwrap_or(&zero);
        let gamma = gamma.unwrap_or(&zero);
        let paired = !matches!(functional, Functional::CovariateShift);
        let (m_gamma, m_alpha) = if paired {
            (functional.per_row(data, gamma)?, functional.per_row(data, alpha)?)
        } else {
            (
                data.target_rows().map(|x| gamma.value(x)).collect(),
                data.target_rows().map(|x| alpha.value(x)).collect(),
            )
        };
        let ev = Evaluations {
            y: data.ys().to_vec(),
            alpha: data.rows().map(|x| alpha.value(x)).collect(),
            gamma: data.rows().map(|x| gamma.value(x)).collect(),
            m_gamma,
            m_alpha,
            paired,
        };
        ev.check()?;
        Ok(ev)
    }

    fn check(&self) -> Result<()> {
        let all = [&self.y, &self.alpha, &self.gamma, &self.m_gamma, &self.m_alpha];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("nuisance evaluations"));
        }
        if self.y.is_empty() || self.m_gamma.is_empty() {
            return Err(Error::InvalidSize {
                what: "evaluation sample",
                got: 0,
                min: 1,
            });
        }
        Ok(())
    }

    /// Appends another evaluation sample (fold results).
    pub fn extend(&mut self, other: Evaluations) {
        self.paired = other.paired;
        self.y.extend(other.y);
        self.alpha.extend(other.alpha);
        self.gamma.extend(other.gamma);
        self.m_gamma.extend(other.m_gamma);
        self.m_alpha.extend(other.m_alpha);
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn residual_terms(&self, gamma: &[f64]) -> Vec<f64> {
        self.alpha.iter().zip(&self.y).zip(gamma).map(|((a, y), g)| a * (y - g)).collect()
    }

    /// `theta` and `se` of `mean(m) + mean(r)`.
    fn orthogonal(&self, m: &[f64], r: &[f64]) -> (f64, f64) {
        let theta = mean(m) + mean(r);
        let se = if self.paired {
            let psi: Vec<f64> = m.iter().zip(r).map(|(a, b)| a + b).collect();
            libm::sqrt(variance(&psi) / psi.len() as f64)
        } else {
            libm::sqrt(variance(m) / m.len() as f64 + variance(r) / r.len() as f64)
        };
        (theta, se)
    }

    /// TMLE fluctuation `eps = sum alpha (y - gamma) / sum alpha^2`.
    pub fn fluctuation(&self) -> Result<f64> {
        let den: f64 = self.alpha.iter().map(|a| a * a).sum();
        if !(den > 0.0) {
            return Err(Error::DegenerateFluctuation);
        }
        Ok(self.residual_terms(&self.gamma).iter().sum::<f64>() / den)
    }

    /// Updated regression values `(gamma + eps alpha, m_gamma + eps m_alpha)`.
    pub fn updated(&self, eps: f64) -> (Vec<f64>, Vec<f64>) {
        let g = self.gamma.iter().zip(&self.alpha).map(|(g, a)| g + eps * a).collect();
        let m = self.m_gamma.iter().zip(&self.m_alpha).map(|(g, a)| g + eps * a).collect();
        (g, m)
    }

    pub fn estimate(&self, method: Method, folds: usize) -> Result<EstimateReport> {
        let n = self.n();
        let (theta, se) = match method {
            Method::Dm => (mean(&self.m_gamma), libm::sqrt(variance(&self.m_gamma) / self.m_gamma.len() as f64)),
            Method::Ipw => {
                let w: Vec<f64> = self.alpha.iter().zip(&self.y).map(|(a, y)| a * y).collect();
                (mean(&w), libm::sqrt(variance(&w) / n as f64))
            }
            Method::Aipw => self.orthogonal(&self.m_gamma, &self.residual_terms(&self.gamma)),
            Method::Tmle => {
                let eps = self.fluctuation()?;
                let (g1, m1) = self.updated(eps);
                let (_, se) = self.orthogonal(&m1, &self.residual_terms(&g1));
                (mean(&m1), se)
            }
        };
        Ok(EstimateReport::new(method, theta, se, n, folds))
    }

    pub fn scores(&self, method: Method) -> Result<ScoreSet> {
        if !self.paired {
            return Err(Error::Unsupported("per-observation scores need row-paired functionals"));
        }
        let psi = match method {
            Method::Dm => self.m_gamma.clone(),
            Method::Ipw => self.alpha.iter().zip(&self.y).map(|(a, y)| a * y).collect(),
            Method::Aipw => self.m_gamma.iter().zip(self.residual_terms(&self.gamma)).map(|(m, r)| m + r).collect(),
            Method::Tmle => {
                let (g1, m1) = self.updated(self.fluctuation()?);
                m1.iter().zip(self.residual_terms(&g1)).map(|(m, r)| m + r).collect()
            }
        };
        Ok(ScoreSet { method, psi })
    }
}

pub fn dm_estimate(data: &Dataset, gamma: &dyn EvaluableFn, functional: &Functional) -> Result<EstimateReport> {
    Evaluations::compute(data, functional, None, Some(gamma))?.estimate(Method::Dm, 1)
}

pub fn ipw_estimate(data: &Dataset, alpha: &dyn EvaluableFn, functional: &Functional) -> Result<EstimateReport> {
    Evaluations::compute(data, functional, Some(alpha), None)?.estimate(Method::Ipw, 1)
}

pub fn aipw_estimate(data: &Dataset, alpha: &dyn EvaluableFn, gamma: &dyn EvaluableFn, functional: &Functional) -> Result<EstimateReport> {
    Evaluations::compute(data, functional, Some(alpha), Some(gamma))?.estimate(Method::Aipw, 1)
}

pub fn tmle_estimate(data: &Dataset, alpha: &dyn EvaluableFn, gamma0: &dyn EvaluableFn, functional: &Functional) -> Result<EstimateReport> {
    Evaluations::compute(data, functional, Some(alpha), Some(gamma0))?.estimate(Method::Tmle, 1)
}

/// Result of the TMLE fluctuation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmleUpdate {
    pub epsilon: f64,
    /// `sum_i alpha(X_i) (Y_i - gamma1(X_i))` after the update.
    pub residual_sum: f64,
}

pub fn tmle_update(data: &Dataset, alpha: &dyn EvaluableFn, gamma0: &dyn EvaluableFn, functional: &Functional) -> Result<TmleUpdate> {
    let ev = Evaluations::compute(data, functional, Some(alpha), Some(gamma0))?;
    let epsilon = ev.fluctuation()?;
    let (g1, _) = ev.updated(epsilon);
    Ok(TmleUpdate {
        epsilon,
        residual_sum: ev.residual_terms(&g1).iter().sum(),
    })
}

/// The two parts of `NeymanError`: `(1/n) sum alpha (Y - gamma)` and
/// `(1/n) sum m(W, gamma) - m(W, gamma0)`.
pub fn neyman_components(
    data: &Dataset,
    alpha: &dyn EvaluableFn,
    gamma: &dyn EvaluableFn,
    oracle_gamma: &dyn EvaluableFn,
    functional: &Functional,
) -> Result<(f64, f64)> {
    let ev = Evaluations::compute(data, functional, Some(alpha), Some(gamma))?;
    let star = mean(&ev.residual_terms(&ev.gamma));
    let oracle = Evaluations::compute(data, functional, None, Some(oracle_gamma))?;
    Ok((star, mean(&ev.m_gamma) - mean(&oracle.m_gamma)))
}

/// `(1/n) sum_i alpha(X_i)(Y_i - gamma(X_i)) + m(W_i, gamma) - m(W_i, gamma0)`.
pub fn neyman_error(data: &Dataset, alpha: &dyn EvaluableFn, gamma: &dyn EvaluableFn, oracle_gamma: &dyn EvaluableFn, functional: &Functional) -> Result<f64> {
    let (a, b) = neyman_components(data, alpha, gamma, oracle_gamma, functional)?;
    Ok(a + b)
}

/// Fitted nuisances of one fold.
pub struct Nuisances {
    pub alpha: Box<dyn EvaluableFn + Send + Sync>,
    pub gamma: Box<dyn EvaluableFn + Send + Sync>,
}

/// Train/evaluation splits of source and target samples for `k` folds.
pub fn crossfit_splits(data: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let src = fold_assignment(data.n(), k, seed)?;
    let tgt = if data.target_len() > 0 {
        Some(fold_assignment(data.target_len(), k, split(seed, 1))?)
    } else {
        None
    };
    let pick = |assign: &[usize], f: usize, keep: bool| -> Vec<usize> { (0..assign.len()).filter(|&i| (assign[i] == f) == keep).collect() };
    Ok((0..k)
        .map(|f| match &tgt {
            Some(t) => (
                data.subset_with_target(&pick(&src, f, false), &pick(t, f, false)),
                data.subset_with_target(&pick(&src, f, true), &pick(t, f, true)),
            ),
            None => (data.subset(&pick(&src, f, false)), data.subset(&pick(&src, f, true))),
        })
        .collect())
}

/// Cross-fitted estimates with a custom learner called as
/// `learner(train, fold)`. Held-out evaluations are pooled in fold order; the
/// TMLE fluctuation is fitted on the pooled sample.
pub fn crossfit_with<F>(data: &Dataset, functional: &Functional, k: usize, seed: u64, methods: &[Method], mut learner: F) -> Result<Vec<EstimateReport>>
where
    F: FnMut(&Dataset, usize) -> Result<Nuisances>,
{
    let mut pooled = Evaluations::default();
    for (f, (train, eval)) in crossfit_splits(data, k, seed)?.into_iter().enumerate() {
        let wrap = |e: Error| Error::Fold { fold: f, source: Box::new(e) };
        let nu = learner(&train, f).map_err(wrap)?;
        let ev = Evaluations::compute(&eval, functional, Some(&*nu.alpha), Some(&*nu.gamma)).map_err(wrap)?;
        pooled.extend(ev);
    }
    methods.iter().map(|&m| pooled.estimate(m, k)).collect()
}

/// Cross-fitted estimates with `fit_riesz` for `alpha` and `fit_outcome` for
/// `gamma`; fold `f` uses seed `split(seed, f)` for both learners.
pub fn crossfit_estimate(
    data: &Dataset,
    fit_config: &FitConfig,
    gamma_spec: &OutcomeSpec,
    functional: &Functional,
    k: usize,
    seed: u64,
    methods: &[Method],
) -> Result<Vec<EstimateReport>> {
    crossfit_with(data, functional, k, seed, methods, |train, f| {
        let fold_seed = split(seed, f as u64);
        let cfg = fit_config.clone().with_seed(fold_seed);
        let alpha = fit_riesz(&cfg, train, functional)?.model;
        let gamma = fit_outcome(gamma_spec, train, fold_seed)?;
        Ok(Nuisances {
            alpha: Box::new(alpha),
            gamma: Box::new(gamma),
        })
    })
}
