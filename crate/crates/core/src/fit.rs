//! Empirical Bregman objective, its gradient, and the representer fitters.
//!
//! For a representer `alpha = link(xi, f)` the objective is
//!
//! ```text
//! (1/n) sum_i psi(alpha(X_i)) - M(g' o alpha) + lambda J(theta),
//! psi(a) = a g'(a) - g(a),
//! ```
//!
//! where `M(h)` is the sample analogue of `E[m(W, h)]`. The gradient uses
//! `psi'(a) = a g''(a)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Layout};
use crate::error::{Error, Result};
use crate::functionals::{EvaluableFn, Functional};
use crate::links::{BranchRule, LinkKind, LinkSpec};
use crate::losses::{LossKind, LossSpec};
use crate::models::{BasisSpec, Model, ModelSpec};
use crate::optim::{lbfgs, proximal_l1, OptimReport, OptimizerConfig, Problem};

/// Minimum distance to a loss-domain boundary accepted during fitting.
pub const FIT_DOMAIN_MARGIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    /// `lambda |theta|_1`.
    L1,
    /// `(lambda / 2) |theta|_2^2`.
    #[default]
    L2,
    /// `(lambda / 2) a' K a` for kernel models.
    Rkhs,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Penalty {
    #[serde(default)]
    pub kind: PenaltyKind,
    #[serde(default)]
    pub lambda: f64,
}

impl Penalty {
    pub fn none() -> Self {
        Penalty {
            kind: PenaltyKind::L2,
            lambda: 0.0,
        }
    }

    pub fn l1(lambda: f64) -> Self {
        Penalty { kind: PenaltyKind::L1, lambda }
    }

    pub fn l2(lambda: f64) -> Self {
        Penalty { kind: PenaltyKind::L2, lambda }
    }

    pub fn rkhs(lambda: f64) -> Self {
        Penalty {
            kind: PenaltyKind::Rkhs,
            lambda,
        }
    }

    /// Exponent `a` of `J = (1/a) |beta|_a^a`, if the penalty is of that form.
    pub fn order(&self) -> Option<f64> {
        match self.kind {
            PenaltyKind::L1 => Some(1.0),
            PenaltyKind::L2 => Some(2.0),
            PenaltyKind::Rkhs => None,
        }
    }
}

/// Solver settings; unset values take model-dependent defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Default 500, or 20000 for the proximal solver.
    pub max_iters: Option<usize>,
    /// Default `1e-8`; `1e-7` for the proximal solver and `1e-5` for networks.
    pub grad_tol: Option<f64>,
    pub record_trace: bool,
}

impl SolverSettings {
    pub fn resolve(&self, mlp: bool, l1: bool) -> OptimizerConfig {
        OptimizerConfig {
            max_iters: self.max_iters.unwrap_or(if l1 { 20_000 } else { 500 }),
            grad_tol: self.grad_tol.unwrap_or(if mlp {
                1e-5
            } else if l1 {
                1e-7
            } else {
                1e-8
            }),
            memory: 10,
            record_trace: self.record_trace,
        }
    }
}

fn default_nn_c() -> f64 {
    0.2
}

/// Everything needed to fit a representer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub loss: LossSpec,
    pub link: LinkSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub penalty: Penalty,
    #[serde(default)]
    pub optimizer: SolverSettings,
    /// Clamp the non-negative component of a density-ratio objective.
    #[serde(default)]
    pub nn_correction: bool,
    /// Weight `C` of the correction; should not exceed `1 / sup alpha0`.
    #[serde(default = "default_nn_c")]
    pub nn_c: f64,
    #[serde(default)]
    pub seed: u64,
}

impl FitConfig {
    pub fn new(loss: LossSpec, link: LinkSpec, model: ModelSpec) -> Self {
        FitConfig {
            loss,
            link,
            model,
            penalty: Penalty::none(),
            optimizer: SolverSettings::default(),
            nn_correction: false,
            nn_c: default_nn_c(),
            seed: 0,
        }
    }

    /// Canonical pairing for `loss` with the given branch rule.
    pub fn canonical(loss: LossSpec, branch: BranchRule, model: ModelSpec) -> Result<Self> {
        let link = crate::links::canonical_pair(&loss)?.with_branch(branch);
        Ok(Self::new(loss, link, model))
    }

    pub fn with_penalty(mut self, penalty: Penalty) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn with_grad_tol(mut self, tol: f64) -> Self {
        self.optimizer.grad_tol = Some(tol);
        self
    }

    pub fn with_max_iters(mut self, iters: usize) -> Self {
        self.optimizer.max_iters = Some(iters);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.link.validate()?;
        self.model.validate()?;
        let lam = self.penalty.lambda;
        if !(lam >= 0.0 && lam.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                value: lam,
                reason: "must be >= 0",
            });
        }
        if self.penalty.kind == PenaltyKind::L1 && self.model.is_mlp() {
            return Err(Error::Unsupported("l1 penalty on a network"));
        }
        if self.penalty.kind == PenaltyKind::Rkhs && !matches!(self.model, ModelSpec::Kernel { .. }) {
            return Err(Error::Unsupported("RKHS penalty needs a kernel model"));
        }
        if self.optimizer.max_iters == Some(0) {
            return Err(Error::InvalidParameter {
                name: "max_iters",
                value: 0.0,
                reason: "must be >= 1",
            });
        }
        if let Some(t) = self.optimizer.grad_tol {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "grad_tol",
                    value: t,
                    reason: "must be > 0",
                });
            }
        }
        if self.nn_correction {
            if psi_floor(&self.loss).is_none() {
                return Err(Error::Unsupported("non-negative correction needs SQ, or UKL/BP with c = 0"));
            }
            if !(self.nn_c >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "nn_c",
                    value: self.nn_c,
                    reason: "must be >= 0",
                });
            }
        }
        Ok(())
    }
}

/// `inf psi` over the loss domain, where finite.
pub fn psi_floor(loss: &LossSpec) -> Option<f64> {
    match loss.kind {
        LossKind::Sq => Some(-loss.c * loss.c),
        LossKind::Ukl | LossKind::Bp if loss.c == 0.0 => Some(0.0),
        _ => None,
    }
}

/// A base model composed with a link: `alpha(x) = link(xi(x), f(x) + offset)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszModel {
    pub model: Model,
    pub link: LinkSpec,
    #[serde(default)]
    pub offset: f64,
}

impl RieszModel {
    pub fn new(model: Model, link: LinkSpec) -> Self {
        RieszModel { model, link, offset: 0.0 }
    }

    pub fn alpha(&self, x: &[f64]) -> Result<f64> {
        let v = self.model.eval(x)? + self.offset;
        self.link.apply(self.link.branch_rule.xi(x), v)
    }

    /// `alpha(x)` for every row of `data`.
    pub fn alphas(&self, data: &Dataset) -> Result<Vec<f64>> {
        data.rows().map(|x| self.alpha(x)).collect()
    }
}

impl EvaluableFn for RieszModel {
    fn value(&self, x: &[f64]) -> f64 {
        self.alpha(x).unwrap_or(f64::NAN)
    }

    fn partial(&self, x: &[f64], j: usize) -> Option<f64> {
        if self.link.branch_rule == BranchRule::TreatmentSign && j == 0 {
            return None;
        }
        let v = self.model.eval(x).ok()? + self.offset;
        let d = self.link.deriv(self.link.branch_rule.xi(x), v).ok()?;
        Some(d * self.model.input_partial(x, j).ok()?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: RieszModel,
    pub loss: LossSpec,
    pub penalty: Penalty,
    /// Penalized objective at exit.
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_tol: f64,
    pub trace: Vec<f64>,
    /// Filled in by [`crate::balancing::balance_residuals`].
    pub balance_residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Entry {
    x: Vec<f64>,
    xi: bool,
    /// Weight of `psi(alpha)`.
    psi_w: f64,
    /// Weight of `g'(alpha)` in `M`.
    dg_w: f64,
    /// Weight of `d_j g'(alpha)` in `M` (derivative functionals).
    ddg_w: f64,
    /// Observation index reported on domain failures.
    obs: usize,
    /// Part of the target sample (non-negative correction).
    target: bool,
}

/// The empirical objective for one dataset, functional and model layout.
pub struct RieszObjective {
    loss: LossSpec,
    link: LinkSpec,
    model: Model,
    entries: Vec<Entry>,
    feats: Option<Vec<f64>>,
    dfeats: Option<Vec<f64>>,
    p: usize,
    smooth_penalty: SmoothPenalty,
    nn: Option<(f64, f64)>,
    margin: f64,
    state: Vec<(f64, f64, f64, f64)>,
    scratch: Vec<f64>,
}

enum SmoothPenalty {
    None,
    L2(f64),
    Rkhs(f64, DMatrix<f64>),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn entries_for(functional: &Functional, data: &Dataset, rule: BranchRule) -> Result<Vec<Entry>> {
    functional.validate(data)?;
    let n = data.n() as f64;
    let mk = |x: Vec<f64>, psi_w, dg_w, ddg_w, obs, target| Entry {
        xi: rule.xi(&x),
        x,
        psi_w,
        dg_w,
        ddg_w,
        obs,
        target,
    };
    let mut out = Vec::new();
    match functional {
        Functional::Ate => {
            for i in 0..data.n() {
                let d = if data.treatment(i) { 1.0 } else { 0.0 };
                let mut x = data.x(i).to_vec();
                x[0] = 1.0;
                out.push(mk(x.clone(), d / n, 1.0 / n, 0.0, i, false));
                x[0] = 0.0;
                out.push(mk(x, (1.0 - d) / n, -1.0 / n, 0.0, i, false));
            }
        }
        Functional::Ame { .. } => {
            for i in 0..data.n() {
                out.push(mk(data.x(i).to_vec(), 1.0 / n, 0.0, 1.0 / n, i, false));
            }
        }
        Functional::Ape { .. } | Functional::CovariateShift => {
            for i in 0..data.n() {
                out.push(mk(data.x(i).to_vec(), 1.0 / n, 0.0, 0.0, i, false));
            }
            for (k, (x, w)) in functional.measure_points(data)?.into_iter().enumerate() {
                out.push(mk(x, 0.0, w, 0.0, data.n() + k, true));
            }
        }
    }
    Ok(out)
}

impl RieszObjective {
    /// Builds the objective of `config` on `data` for a model with the layout
    /// of `model` (its parameters are ignored).
    pub fn new(config: &FitConfig, data: &Dataset, functional: &Functional, model: Model) -> Result<Self> {
        if config.link.branch_rule == BranchRule::TreatmentSign && data.layout() != Layout::TreatmentFirst {
            return Err(Error::Layout("treatment-sign branch needs the treatment-first layout"));
        }
        let ame = match functional {
            Functional::Ame { ame_coordinate } => {
                if !model.is_linear_in_params() {
                    return Err(Error::Unsupported("AME objective needs a linear-in-parameters model"));
                }
                if config.link.kind != LinkKind::Raw && config.link.branch_rule != BranchRule::AlwaysPositive {
                    return Err(Error::Unsupported("AME objective needs a Raw link or an always-positive branch"));
                }
                Some(*ame_coordinate)
            }
            _ => None,
        };
        if config.nn_correction && !matches!(functional, Functional::CovariateShift) {
            return Err(Error::Unsupported("non-negative correction applies to covariate shift only"));
        }
        let entries = entries_for(functional, data, config.link.branch_rule)?;
        let p = model.n_params();
        let (feats, dfeats) = match model.basis() {
            Some(b) => {
                let mut f = Vec::with_capacity(entries.len() * p);
                let mut row = Vec::with_capacity(p);
                for e in &entries {
                    b.eval_into(&e.x, &mut row)?;
                    f.extend_from_slice(&row);
                }
                let df = match ame {
                    Some(j) => {
                        let mut df = Vec::with_capacity(entries.len() * p);
                        for e in &entries {
                            df.extend_from_slice(&b.partial(&e.x, j)?);
                        }
                        Some(df)
                    }
                    None => None,
                };
                (Some(f), df)
            }
            None => (None, None),
        };
        let lam = config.penalty.lambda;
        let smooth_penalty = match config.penalty.kind {
            PenaltyKind::L2 if lam > 0.0 => SmoothPenalty::L2(lam),
            PenaltyKind::Rkhs if lam > 0.0 => match &model {
                Model::Kernel(k) => SmoothPenalty::Rkhs(lam, k.center_gram()),
                _ => return Err(Error::Unsupported("RKHS penalty needs a kernel model")),
            },
            _ => SmoothPenalty::None,
        };
        let nn = if config.nn_correction {
            let floor = psi_floor(&config.loss).ok_or(Error::Unsupported("non-negative correction for this loss"))?;
            Some((config.nn_c, floor))
        } else {
            None
        };
        let n_entries = entries.len();
        Ok(RieszObjective {
            loss: config.loss,
            link: config.link,
            model,
            entries,
            feats,
            dfeats,
            p,
            smooth_penalty,
            nn,
            margin: FIT_DOMAIN_MARGIN,
            state: vec![(0.0, 0.0, 0.0, 0.0); n_entries],
            scratch: vec![0.0; p],
        })
    }

    /// Accepts any point of the open domain instead of the fitting margin.
    pub fn with_domain_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    fn index(&mut self, k: usize, theta: &[f64]) -> Result<(f64, f64)> {
        match &self.feats {
            Some(f) => {
                let v = dot(&f[k * self.p..(k + 1) * self.p], theta);
                let s = match &self.dfeats {
                    Some(df) => dot(&df[k * self.p..(k + 1) * self.p], theta),
                    None => 0.0,
                };
                Ok((v, s))
            }
            None => Ok((self.model.eval(&self.entries[k].x)?, 0.0)),
        }
    }

    /// Unpenalized objective value; fills per-entry derivative coefficients
    /// `(d/dv, d/ds)` in `state` when `want_coefs`.
    fn data_term(&mut self, theta: &[f64], want_coefs: bool) -> Result<f64> {
        if self.feats.is_none() {
            self.model.set_params(theta);
        }
        let (loss, link) = (self.loss, self.link);
        let mut general = 0.0;
        let (mut s_src, mut t_tgt, mut g_tgt) = (0.0, 0.0, 0.0);
        let floor = self.nn.map_or(0.0, |(_, f)| f);
        for k in 0..self.entries.len() {
            let (v, s) = self.index(k, theta)?;
            let e = &self.entries[k];
            let fail = |value| Error::FitDomain { index: e.obs, value };
            let (a, l1, l2) = link.eval3(e.xi, v).map_err(|_| fail(f64::NAN))?;
            if loss.margin(a) < self.margin {
                return Err(fail(a));
            }
            let dg = loss.dg_unchecked(a);
            let d2g = loss.d2g_unchecked(a);
            let mut term = -e.dg_w * dg;
            let mut dv = -e.dg_w * d2g * l1;
            let mut ds = 0.0;
            if e.psi_w != 0.0 || self.nn.is_some() {
                let psi = loss.psi_unchecked(a);
                term += e.psi_w * psi;
                dv += e.psi_w * a * d2g * l1;
                if e.target {
                    t_tgt += e.dg_w * (psi - floor);
                    g_tgt += e.dg_w * dg;
                } else {
                    s_src += e.psi_w * (psi - floor);
                }
            }
            if e.ddg_w != 0.0 {
                let d3g = loss.d3g_unchecked(a);
                term -= e.ddg_w * d2g * l1 * s;
                dv -= e.ddg_w * (d3g * l1 * l1 * s + d2g * l2 * s);
                ds = -e.ddg_w * d2g * l1;
            }
            general += term;
            if want_coefs {
                self.state[k] = (dv, ds, a * d2g * l1, 0.0);
            }
        }
        let Some((c, floor)) = self.nn else {
            return Ok(general);
        };
        let active = s_src - c * t_tgt >= 0.0;
        if want_coefs && !active {
            // Clamp engaged: source psi terms drop out, target psi terms get weight C.
            for (k, e) in self.entries.iter().enumerate() {
                let (dv, ds, dpsi, _) = self.state[k];
                let adj = if e.target { c * e.dg_w * dpsi } else { -e.psi_w * dpsi };
                self.state[k] = (dv + adj, ds, dpsi, 0.0);
            }
        }
        Ok(if active { general } else { c * t_tgt - g_tgt + floor })
    }

    fn penalty_value(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        match &self.smooth_penalty {
            SmoothPenalty::None => 0.0,
            SmoothPenalty::L2(lam) => {
                if let Some(g) = grad {
                    g.iter_mut().zip(theta).for_each(|(gi, t)| *gi += lam * t);
                }
                0.5 * lam * dot(theta, theta)
            }
            SmoothPenalty::Rkhs(lam, k) => {
                let kt: Vec<f64> = (0..theta.len()).map(|i| (0..theta.len()).map(|j| k[(i, j)] * theta[j]).sum()).collect();
                if let Some(g) = grad {
                    g.iter_mut().zip(&kt).for_each(|(gi, t)| *gi += lam * t);
                }
                0.5 * lam * dot(theta, &kt)
            }
        }
    }

    /// Unpenalized objective.
    pub fn value(&mut self, theta: &[f64]) -> Result<f64> {
        self.data_term(theta, false)
    }

    /// Unpenalized objective and its gradient.
    pub fn value_grad(&mut self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        let f = self.data_term(theta, true)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for k in 0..self.entries.len() {
            let (dv, ds, _, _) = self.state[k];
            match &self.feats {
                Some(feats) => {
                    if dv != 0.0 {
                        let row = &feats[k * self.p..(k + 1) * self.p];
                        grad.iter_mut().zip(row).for_each(|(g, r)| *g += dv * r);
                    }
                    if let (Some(df), true) = (&self.dfeats, ds != 0.0) {
                        let row = &df[k * self.p..(k + 1) * self.p];
                        grad.iter_mut().zip(row).for_each(|(g, r)| *g += ds * r);
                    }
                }
                None => {
                    if dv != 0.0 {
                        self.model.eval_grad(&self.entries[k].x, &mut self.scratch)?;
                        grad.iter_mut().zip(&self.scratch).for_each(|(g, r)| *g += dv * r);
                    }
                }
            }
        }
        Ok(f)
    }

    pub fn n_params(&self) -> usize {
        self.p
    }

    /// Penalized smooth objective (the l1 part is handled by the solver).
    pub fn penalized(&mut self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        let f = self.value_grad(theta, grad)?;
        Ok(f + self.penalty_value(theta, Some(grad)))
    }

    pub fn into_model(mut self, theta: &[f64]) -> Model {
        self.model.set_params(theta);
        self.model
    }

    pub fn model(&self) -> &Model {
        &self.model
    }
}

impl Problem for RieszObjective {
    fn dim(&self) -> usize {
        self.p
    }

    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.penalized(x, grad)
    }
}

fn objective_for(config: &FitConfig, data: &Dataset, functional: &Functional, model: &RieszModel) -> Result<(RieszObjective, Vec<f64>)> {
    let mut cfg = config.clone();
    cfg.link = model.link;
    if model.offset != 0.0 {
        return Err(Error::Unsupported("objective evaluation for offset models"));
    }
    let theta = model.model.params().to_vec();
    let obj = RieszObjective::new(&cfg, data, functional, model.model.clone())?.with_domain_margin(crate::losses::DOMAIN_EPS);
    Ok((obj, theta))
}

/// The empirical Bregman objective (without penalty) of `model`.
pub fn empirical_bregman(config: &FitConfig, data: &Dataset, functional: &Functional, model: &RieszModel) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.nn_correction = false;
    let (mut obj, theta) = objective_for(&cfg, data, functional, model)?;
    obj.value(&theta)
}

/// Gradient of [`empirical_bregman`] with respect to the model parameters.
pub fn empirical_bregman_grad(config: &FitConfig, data: &Dataset, functional: &Functional, model: &RieszModel) -> Result<Vec<f64>> {
    let mut cfg = config.clone();
    cfg.nn_correction = false;
    let (mut obj, theta) = objective_for(&cfg, data, functional, model)?;
    let mut g = vec![0.0; theta.len()];
    obj.value_grad(&theta, &mut g)?;
    Ok(g)
}

/// The objective with its non-negative component clamped at zero.
pub fn nn_corrected_objective(config: &FitConfig, data: &Dataset, functional: &Functional, model: &RieszModel) -> Result<f64> {
    let mut cfg = config.clone();
    cfg.nn_correction = true;
    cfg.validate()?;
    let (mut obj, theta) = objective_for(&cfg, data, functional, model)?;
    obj.value(&theta)
}

/// `(1/n) sum_i alpha(X_i)^2 - 2 M(alpha)`, the squared-loss objective with
/// constants dropped. The general form equals this minus `C^2 - 2 C M(1)`.
pub fn sq_simplified_objective(data: &Dataset, functional: &Functional, alpha: &dyn EvaluableFn) -> Result<f64> {
    let sq: f64 = data
        .rows()
        .map(|x| {
            let a = alpha.value(x);
            a * a
        })
        .sum::<f64>()
        / data.n() as f64;
    Ok(sq - 2.0 * functional.mean(data, alpha)?)
}

fn shrink_until_feasible(obj: &mut RieszObjective, theta: &mut [f64], model: &Model) -> Result<()> {
    let mut g = vec![0.0; theta.len()];
    if obj.penalized(theta, &mut g).is_ok() {
        return Ok(());
    }
    let Model::Mlp(net) = model else {
        return Err(Error::Initialization("zero parameters map outside the loss domain"));
    };
    let range = net.output_layer_range();
    for _ in 0..60 {
        theta[range.clone()].iter_mut().for_each(|w| *w *= 0.5);
        if obj.penalized(theta, &mut g).is_ok() {
            return Ok(());
        }
    }
    theta[range].iter_mut().for_each(|w| *w = 0.0);
    obj.penalized(theta, &mut g)
        .map(|_| ())
        .map_err(|_| Error::Initialization("network output cannot be shrunk into the loss domain"))
}

/// Minimizes the penalized empirical Bregman objective.
pub fn fit_riesz(config: &FitConfig, data: &Dataset, functional: &Functional) -> Result<FitResult> {
    config.validate()?;
    functional.validate(data)?;
    let inputs: Vec<&[f64]> = data.rows().collect();
    let model = config.model.instantiate(&inputs, data.dim(), config.seed)?;
    let mut obj = RieszObjective::new(config, data, functional, model.clone())?;
    let mut theta = model.params().to_vec();
    shrink_until_feasible(&mut obj, &mut theta, &model)?;
    let l1 = config.penalty.kind == PenaltyKind::L1 && config.penalty.lambda > 0.0;
    let opt = config.optimizer.resolve(config.model.is_mlp(), l1);
    let report: OptimReport = if l1 {
        let lambda = vec![config.penalty.lambda; theta.len()];
        proximal_l1(&mut obj, &theta, &lambda, &opt)?
    } else {
        lbfgs(&mut obj, &theta, &opt)?
    };
    let fitted = obj.into_model(&report.x);
    Ok(FitResult {
        model: RieszModel::new(fitted, config.link),
        loss: config.loss,
        penalty: config.penalty,
        objective: report.value,
        grad_norm: report.grad_norm,
        iterations: report.iterations,
        converged: report.converged,
        grad_tol: opt.grad_tol,
        trace: report.trace,
        balance_residuals: Vec::new(),
    })
}

/// Closed-form least-squares importance fitting: minimizes
/// `(1/2) (1/n_de) sum r(x_de)^2 - (1/n_nu) sum r(x_nu) + (ridge/2) |beta|^2`
/// over `r = phi' beta`.
pub fn fit_lsif(basis: &BasisSpec, numerator: &[&[f64]], denominator: &[&[f64]], ridge: f64) -> Result<crate::models::LinearModel> {
    if numerator.is_empty() || denominator.is_empty() {
        return Err(Error::InvalidSize {
            what: "LSIF sample",
            got: 0,
            min: 1,
        });
    }
    let dim = denominator[0].len();
    let p = basis.n_features(dim);
    let mut h = DMatrix::<f64>::zeros(p, p);
    let mut row = Vec::with_capacity(p);
    for x in denominator {
        basis.eval_into(x, &mut row)?;
        for i in 0..p {
            for j in 0..p {
                h[(i, j)] += row[i] * row[j] / denominator.len() as f64;
            }
        }
    }
    for i in 0..p {
        h[(i, i)] += ridge;
    }
    let mut rhs = vec![0.0; p];
    for x in numerator {
        basis.eval_into(x, &mut row)?;
        rhs.iter_mut().zip(&row).for_each(|(r, v)| *r += v / numerator.len() as f64);
    }
    let beta = crate::linalg::solve_spd(h, &rhs)?;
    Ok(crate::models::LinearModel { basis: basis.clone(), beta })
}

struct Bernoulli<'a> {
    model: Model,
    inputs: Vec<&'a [f64]>,
    labels: Vec<bool>,
    l2: f64,
    scratch: Vec<f64>,
    /// Row-major features of a linear-in-parameters model.
    features: Option<Vec<f64>>,
}

impl Problem for Bernoulli<'_> {
    fn dim(&self) -> usize {
        self.model.n_params()
    }

    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.model.set_params(x);
        let n = self.inputs.len() as f64;
        grad.iter_mut().zip(x).for_each(|(g, p)| *g = self.l2 * p);
        let mut f = 0.5 * self.l2 * dot(x, x);
        let p = x.len();
        for (i, (xi, &yi)) in self.inputs.iter().zip(&self.labels).enumerate() {
            let v = match &self.features {
                Some(f) => {
                    self.scratch.copy_from_slice(&f[i * p..(i + 1) * p]);
                    dot(&self.scratch, x)
                }
                None => self.model.eval_grad(xi, &mut self.scratch)?,
            };
            // log(1 + e^v) - y v, computed stably.
            let softplus = if v > 0.0 { v + libm::log1p(libm::exp(-v)) } else { libm::log1p(libm::exp(v)) };
            let y = if yi { 1.0 } else { 0.0 };
            f += (softplus - y * v) / n;
            let p = 1.0 / (1.0 + libm::exp(-v));
            grad.iter_mut().zip(&self.scratch).for_each(|(g, s)| *g += (p - y) / n * s);
        }
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::NonFinite("Bernoulli likelihood"))
        }
    }
}

fn fit_bernoulli(
    spec: &ModelSpec,
    inputs: Vec<&[f64]>,
    labels: Vec<bool>,
    dim: usize,
    l2: f64,
    settings: &SolverSettings,
    seed: u64,
) -> Result<(Model, OptimReport)> {
    if !(l2 >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "l2",
            value: l2,
            reason: "must be >= 0",
        });
    }
    let model = spec.instantiate(&inputs, dim, seed)?;
    let x0 = model.params().to_vec();
    let p = model.n_params();
    let features = match model.basis() {
        Some(b) => {
            let mut f = Vec::with_capacity(inputs.len() * p);
            for x in &inputs {
                f.extend(b.eval(x)?);
            }
            Some(f)
        }
        None => None,
    };
    let mut prob = Bernoulli {
        model,
        inputs,
        labels,
        l2,
        scratch: vec![0.0; p],
        features,
    };
    let rep = lbfgs(&mut prob, &x0, &settings.resolve(spec.is_mlp(), false))?;
    prob.model.set_params(&rep.x);
    Ok((prob.model, rep))
}

/// Propensity score by penalized logistic likelihood, plugged into the ATE
/// representer `d / e - (1 - d) / (1 - e)`.
pub fn fit_propensity_mle(spec: &ModelSpec, data: &Dataset, l2: f64, settings: &SolverSettings, seed: u64) -> Result<RieszModel> {
    data.require_treatment_layout()?;
    let inputs: Vec<&[f64]> = data.rows().collect();
    let labels = (0..data.n()).map(|i| data.treatment(i)).collect();
    let (model, _) = fit_bernoulli(spec, inputs, labels, data.dim(), l2, settings, seed)?;
    let link = LinkSpec::new(LinkKind::AtePropensityLogit).with_branch(BranchRule::TreatmentSign);
    Ok(RieszModel::new(model, link))
}

/// Density ratio from a source-versus-target logistic classifier:
/// `alpha(x) = (n / m) exp(f(x))`.
pub fn fit_shift_classifier(spec: &ModelSpec, data: &Dataset, l2: f64, settings: &SolverSettings, seed: u64) -> Result<RieszModel> {
    Functional::CovariateShift.validate(data)?;
    let mut inputs: Vec<&[f64]> = data.rows().collect();
    let mut labels = vec![false; data.n()];
    inputs.extend(data.target_rows());
    labels.resize(inputs.len(), true);
    let (model, _) = fit_bernoulli(spec, inputs, labels, data.dim(), l2, settings, seed)?;
    let mut out = RieszModel::new(model, LinkSpec::new(LinkKind::Exponential));
    out.offset = libm::log(data.n() as f64 / data.target_len() as f64);
    Ok(out)
}
