//! Executable oracles: finite-difference gradients, a brute-force dual
//! solver for small instances, and closed-form reductions.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::balancing::{nn_lsif_equivalence, nn_matching_ate, nn_matching_ate_imputed};
use crate::data::{gen_covariate_shift, gen_covariate_shift_with, gen_synthetic_ate, Dataset, Layout, ShiftDesign};
use crate::error::{Error, Result};
use crate::estimators::{aipw_estimate, ipw_estimate};
use crate::fit::{empirical_bregman, fit_lsif, fit_riesz, FitConfig, Penalty, RieszModel, RieszObjective};
use crate::functionals::Functional;
use crate::links::{BranchRule, LinkKind, LinkSpec};
use crate::losses::{eval_dg, eval_g, LossDomain, LossKind, LossSpec};
use crate::models::{fit_least_squares, BasisKind, BasisSpec, BoxCell, Cell, Model, ModelSpec};
use crate::rng::{split, Stream};

/// One verification outcome; `passed` iff `statistic <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
    /// Short name of the identity being checked.
    pub anchor: String,
}

impl OracleCheck {
    pub fn new(name: impl Into<String>, statistic: f64, threshold: f64, anchor: &str) -> Self {
        OracleCheck {
            name: name.into(),
            statistic,
            threshold,
            passed: statistic <= threshold,
            anchor: anchor.into(),
        }
    }

    fn failed(name: impl Into<String>, threshold: f64, anchor: &str) -> Self {
        OracleCheck::new(name, f64::INFINITY, threshold, anchor)
    }
}

fn model_name(spec: &ModelSpec) -> String {
    match spec {
        ModelSpec::Linear { basis } => match basis.kind {
            BasisKind::Polynomial { degree } => format!("poly{degree}"),
            BasisKind::RawPlusIntercept => "raw".into(),
            BasisKind::GaussianRbf { .. } => "rbf".into(),
            BasisKind::Indicator { .. } => "indicator".into(),
        },
        ModelSpec::Kernel { .. } => "kernel".into(),
        ModelSpec::Mlp { .. } => "mlp".into(),
    }
}

/// Largest relative discrepancy `|fd - g|_inf / max(|g|_inf, 1)` between the
/// analytic gradient of the penalized objective and central differences,
/// over `points` random parameter vectors (infeasible draws are redrawn).
pub fn gradient_discrepancy(config: &FitConfig, data: &Dataset, functional: &Functional, points: usize, seed: u64) -> Result<f64> {
    let inputs: Vec<&[f64]> = data.rows().collect();
    let base = config.model.instantiate(&inputs, data.dim(), seed)?;
    let mut obj = RieszObjective::new(config, data, functional, base.clone())?;
    let p = obj.n_params();
    let mut rng = Stream::new(seed, "verify/gradients");
    let scale = match base {
        Model::Mlp(_) => 0.3,
        _ => 0.5 / libm::sqrt(p as f64),
    };
    let intercept = match (&config.loss.kind, &base) {
        (LossKind::Pu, Model::Linear(_)) => Some(-3.0),
        _ => None,
    };
    // Smaller steps make crossing a ReLU kink unlikely.
    let rel_step = if matches!(base, Model::Mlp(_)) { 1e-8 } else { 1e-6 };
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut g = vec![0.0; p];
    let mut scratch = vec![0.0; p];
    for _ in 0..50 * points {
        if done == points {
            break;
        }
        let mut theta: Vec<f64> = base.params().iter().map(|b| b + scale * rng.normal()).collect();
        if let Some(c) = intercept {
            theta[0] = c;
        }
        if obj.penalized(&theta, &mut g).is_err() {
            continue;
        }
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut ok = true;
        let mut err: f64 = 0.0;
        for j in 0..p {
            let h = rel_step * (1.0 + theta[j].abs());
            let mut t = theta.clone();
            t[j] += h;
            let up = obj.penalized(&t, &mut scratch);
            t[j] -= 2.0 * h;
            let down = obj.penalized(&t, &mut scratch);
            match (up, down) {
                (Ok(u), Ok(d)) => err = err.max(((u - d) / (2.0 * h) - g[j]).abs() / gmax),
                _ => ok = false,
            }
        }
        if ok {
            worst = worst.max(err);
            done += 1;
        }
    }
    if done < points {
        return Err(Error::Initialization("too few feasible parameter draws"));
    }
    Ok(worst)
}

/// Analytic versus finite-difference gradients for every loss/link pairing
/// with a non-empty feasible region, across linear, kernel and network
/// models; 20 parameter draws each.
pub fn check_gradients(seed: u64) -> Vec<OracleCheck> {
    let (ate, _) = match gen_synthetic_ate(seed, 60) {
        Ok(v) => v,
        Err(_) => return vec![OracleCheck::failed("gradients/data", 0.0, "objective gradient")],
    };
    let (cs, _) = match gen_covariate_shift(seed, 50, 40) {
        Ok(v) => v,
        Err(_) => return vec![OracleCheck::failed("gradients/data", 0.0, "objective gradient")],
    };
    let ts = BranchRule::TreatmentSign;
    let pairs: Vec<(&str, LossSpec, LinkSpec, Functional, &Dataset)> = vec![
        ("sq-raw-ate", LossSpec::sq(0.0), LinkSpec::new(LinkKind::Raw), Functional::Ate, &ate),
        (
            "sq-linearsq-ate",
            LossSpec::sq(0.5),
            LinkSpec::new(LinkKind::LinearSq).with_c(0.5),
            Functional::Ate,
            &ate,
        ),
        (
            "sq-raw-ame",
            LossSpec::sq(0.0),
            LinkSpec::new(LinkKind::Raw),
            Functional::Ame { ame_coordinate: 1 },
            &ate,
        ),
        ("sq-raw-cs", LossSpec::sq(0.0), LinkSpec::new(LinkKind::Raw), Functional::CovariateShift, &cs),
        (
            "ukl-log-ate",
            LossSpec::ukl(1.0),
            LinkSpec::new(LinkKind::LogBranch).with_c(1.0).with_branch(ts),
            Functional::Ate,
            &ate,
        ),
        (
            "ukl-logit-ate",
            LossSpec::ukl(1.0),
            LinkSpec::new(LinkKind::AtePropensityLogit).with_branch(ts),
            Functional::Ate,
            &ate,
        ),
        (
            "ukl-exp-cs",
            LossSpec::ukl(0.0),
            LinkSpec::new(LinkKind::Exponential),
            Functional::CovariateShift,
            &cs,
        ),
        (
            "ukl-log-ame",
            LossSpec::ukl(0.0),
            LinkSpec::new(LinkKind::LogBranch),
            Functional::Ame { ame_coordinate: 2 },
            &ate,
        ),
        (
            "bkl-log-cs",
            LossSpec::bkl(1.0),
            LinkSpec::new(LinkKind::LogBranch).with_c(1.0),
            Functional::CovariateShift,
            &cs,
        ),
        (
            "bkl-logit-ate",
            LossSpec::bkl(1.0),
            LinkSpec::new(LinkKind::AtePropensityLogit).with_branch(ts),
            Functional::Ate,
            &ate,
        ),
        (
            "bp-power-ate",
            LossSpec::bp(0.5, 0.5),
            LinkSpec::new(LinkKind::PowerBranch).with_c(0.5).with_delta(0.5).with_branch(ts),
            Functional::Ate,
            &ate,
        ),
        (
            "bp-exp-cs",
            LossSpec::bp(0.0, 2.0),
            LinkSpec::new(LinkKind::Exponential),
            Functional::CovariateShift,
            &cs,
        ),
        (
            "pu-exp-cs",
            LossSpec::pu(1.0),
            LinkSpec::new(LinkKind::Exponential),
            Functional::CovariateShift,
            &cs,
        ),
    ];
    let models = [
        ModelSpec::Linear {
            basis: BasisSpec::new(BasisKind::Polynomial { degree: 1 }),
        },
        ModelSpec::Linear {
            basis: BasisSpec::new(BasisKind::Polynomial { degree: 2 }),
        },
        ModelSpec::Kernel {
            n_centers: 15,
            bandwidth: None,
            bandwidth_scale: 1.0,
            on_z_only: false,
        },
        ModelSpec::Mlp {
            hidden: vec![8],
            on_z_only: false,
        },
    ];
    let mut out = Vec::new();
    for (k, (name, loss, link, functional, data)) in pairs.into_iter().enumerate() {
        for (mi, model) in models.iter().enumerate() {
            let linear_only = matches!(functional, Functional::Ame { .. }) || loss.kind == LossKind::Pu;
            if linear_only && !matches!(model, ModelSpec::Linear { .. }) {
                continue;
            }
            let threshold = if model.is_mlp() { 1e-4 } else { 1e-6 };
            let mut cfg = FitConfig::new(loss, link, model.clone());
            if mi == 1 {
                cfg.penalty = Penalty::l2(0.1);
            }
            if matches!(model, ModelSpec::Kernel { .. }) {
                cfg.penalty = Penalty::rkhs(0.1);
            }
            let label = format!("gradient/{name}/{}", model_name(model));
            let s = split(seed, (k * 8 + mi) as u64);
            out.push(match gradient_discrepancy(&cfg, data, &functional, 20, s) {
                Ok(v) => OracleCheck::new(label, v, threshold, "objective gradient"),
                Err(_) => OracleCheck::failed(label, threshold, "objective gradient"),
            });
        }
    }
    out
}

/// `a` with `g'(a) = s` on the branch selected by `xi`, by bisection.
fn invert_dg(loss: &LossSpec, xi: bool, s: f64) -> Result<f64> {
    let at = |t: f64| -> f64 {
        match loss.domain() {
            LossDomain::Real => t,
            LossDomain::AbsAbove(c) => {
                let u = c + libm::exp(t);
                if xi {
                    u
                } else {
                    -u
                }
            }
            LossDomain::UnitPunctured => 1.0 / (1.0 + libm::exp(-t)),
        }
    };
    // g' o at is increasing on the positive branch and decreasing otherwise.
    let increasing = xi || matches!(loss.domain(), LossDomain::Real | LossDomain::UnitPunctured);
    let (mut lo, mut hi) = match loss.domain() {
        LossDomain::Real => (-1e8, 1e8),
        _ => (-700.0, 700.0),
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = match eval_dg(loss, at(mid)) {
            Ok(v) => v,
            Err(_) => {
                // Only reachable at the extremes of the bracket.
                if mid < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                continue;
            }
        };
        if (v < s) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(0.5 * (lo + hi)))
}

/// Data term of the canonical objective as a function of the coefficients:
/// `(1/n) sum_i [a_i s_i - g(a_i)] - beta' M(phi) + lambda |beta|_1` with
/// `g'(a_i) = s_i = phi(X_i)' beta`.
struct DualInstance {
    loss: LossSpec,
    feats: Vec<Vec<f64>>,
    xi: Vec<bool>,
    moments: Vec<f64>,
    lambda: f64,
}

impl DualInstance {
    fn alphas(&self, beta: &[f64]) -> Result<Vec<f64>> {
        self.feats
            .iter()
            .zip(&self.xi)
            .map(|(f, &xi)| invert_dg(&self.loss, xi, f.iter().zip(beta).map(|(a, b)| a * b).sum()))
            .collect()
    }

    fn primal(&self, beta: &[f64]) -> f64 {
        let Ok(alphas) = self.alphas(beta) else {
            return f64::INFINITY;
        };
        let n = self.feats.len() as f64;
        let mut v = 0.0;
        for (f, a) in self.feats.iter().zip(&alphas) {
            let s: f64 = f.iter().zip(beta).map(|(x, b)| x * b).sum();
            match eval_g(&self.loss, *a) {
                Ok(g) => v += (a * s - g) / n,
                Err(_) => return f64::INFINITY,
            }
        }
        v - beta.iter().zip(&self.moments).map(|(b, m)| b * m).sum::<f64>() + self.lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }
}

/// Zooming grid search for the minimizer of a convex function on `R^p`.
fn grid_minimize(f: &dyn Fn(&[f64]) -> f64, p: usize, half_width: f64) -> Vec<f64> {
    const K: i64 = 4;
    let mut center = vec![0.0; p];
    let mut h = half_width;
    let mut best = f(&center);
    for _ in 0..400 {
        if h < 1e-10 {
            break;
        }
        let step = h / K as f64;
        let side = (2 * K + 1) as usize;
        let total = side.pow(p as u32);
        let mut arg = center.clone();
        let mut edge = false;
        for idx in 0..total {
            let mut rem = idx;
            let mut pt = center.clone();
            let mut on_edge = false;
            for v in pt.iter_mut() {
                let o = (rem % side) as i64 - K;
                rem /= side;
                *v += o as f64 * step;
                on_edge |= o.abs() == K;
            }
            let val = f(&pt);
            if val < best {
                best = val;
                arg = pt;
                edge = on_edge;
            }
        }
        center = arg;
        if !edge {
            h = 2.0 * step;
        }
    }
    center
}

fn dual_basis(p: usize) -> Result<BasisSpec> {
    match p {
        1 => Ok(BasisSpec::new(BasisKind::Polynomial { degree: 0 })),
        2 => Ok(BasisSpec::new(BasisKind::RawPlusIntercept).on_z()),
        3 => Ok(BasisSpec::new(BasisKind::Polynomial { degree: 1 })),
        _ => Err(Error::InvalidSize {
            what: "dual basis dimension (1..=3)",
            got: p,
            min: 1,
        }),
    }
}

/// Solves the balancing problem for a canonical SQ or UKL ATE fit by brute
/// force over the coefficients and reports the largest pointwise gap to the
/// `fit_riesz` solution (threshold `1e-3`).
pub fn check_dual_bruteforce(loss_kind: LossKind, n: usize, p: usize, lambda: f64, seed: u64) -> OracleCheck {
    let name = format!("dual/{loss_kind:?}/n{n}/p{p}/lambda{lambda}/seed{seed}");
    let anchor = "balancing dual";
    let run = || -> Result<f64> {
        if n > 30 {
            return Err(Error::InvalidSize {
                what: "n (at most 30)",
                got: n,
                min: 10,
            });
        }
        let (full, _) = gen_synthetic_ate(seed, n)?;
        let x: Vec<f64> = full.rows().flat_map(|r| [r[0], r[1]]).collect();
        let data = Dataset::new(x, full.ys().to_vec(), 2, Layout::TreatmentFirst)?;
        let basis = dual_basis(p)?;
        let (loss, branch) = match loss_kind {
            LossKind::Sq => (LossSpec::sq(0.0), BranchRule::AlwaysPositive),
            LossKind::Ukl => (LossSpec::ukl(1.0), BranchRule::TreatmentSign),
            _ => return Err(Error::Unsupported("brute-force dual covers SQ and UKL")),
        };
        let cfg = FitConfig::canonical(loss, branch, ModelSpec::Linear { basis: basis.clone() })?
            .with_penalty(if lambda > 0.0 { Penalty::l1(lambda) } else { Penalty::none() })
            .with_grad_tol(1e-11)
            .with_max_iters(100_000);
        let fit = fit_riesz(&cfg, &data, &Functional::Ate)?;
        let feats: Vec<Vec<f64>> = data.rows().map(|r| basis.eval(r)).collect::<Result<_>>()?;
        let moments: Vec<f64> = (0..feats[0].len())
            .map(|j| Functional::Ate.mean(&data, &crate::balancing::BasisFeature { basis: &basis, j }))
            .collect::<Result<_>>()?;
        let inst = DualInstance {
            loss,
            feats,
            xi: data.rows().map(|r| branch.xi(r)).collect(),
            moments,
            lambda,
        };
        let beta = grid_minimize(&|b| inst.primal(b), p, 64.0);
        let alphas = inst.alphas(&beta)?;
        let mut worst: f64 = 0.0;
        for (i, a) in alphas.iter().enumerate() {
            worst = worst.max((a - fit.model.alpha(data.x(i))?).abs());
        }
        Ok(worst)
    };
    match run() {
        Ok(v) => OracleCheck::new(name, v, 1e-3, anchor),
        Err(_) => OracleCheck::failed(name, 1e-3, anchor),
    }
}

fn quadrant_cells(dim: usize, coords: &[usize], cuts: &[f64], first: Option<(f64, f64)>) -> Vec<Cell> {
    let mut cells = Vec::new();
    let mut edges = vec![None];
    edges.extend(cuts.iter().map(|&c| Some(c)));
    edges.push(None);
    let per = edges.len() - 1;
    let total = per.pow(coords.len() as u32);
    for idx in 0..total {
        let mut lower = vec![None; dim];
        let mut upper = vec![None; dim];
        if let Some((lo, hi)) = first {
            lower[0] = Some(lo);
            upper[0] = Some(hi);
        }
        let mut rem = idx;
        for &c in coords {
            let k = rem % per;
            rem /= per;
            lower[c] = edges[k];
            upper[c] = edges[k + 1];
        }
        cells.push(Cell::Box(BoxCell { lower, upper }));
    }
    cells
}

/// BP with `delta = 1` against SQ on a positive density-ratio problem:
/// largest pointwise gap between the two fits.
pub fn bp_sq_bridge(seed: u64) -> Result<f64> {
    let (cs, _) = gen_covariate_shift(seed, 500, 500)?;
    let basis = BasisSpec::new(BasisKind::Indicator {
        cells: quadrant_cells(2, &[0, 1], &[-0.5, 0.5], None),
    });
    let model = ModelSpec::Linear { basis };
    let bp = FitConfig::canonical(LossSpec::bp(0.0, 1.0), BranchRule::AlwaysPositive, model.clone())?.with_grad_tol(1e-10);
    let sq = FitConfig::new(LossSpec::sq(0.0), LinkSpec::new(LinkKind::LinearSq).with_c(1.0), model).with_grad_tol(1e-10);
    let fb = fit_riesz(&bp, &cs, &Functional::CovariateShift)?;
    let fs = fit_riesz(&sq, &cs, &Functional::CovariateShift)?;
    let mut worst: f64 = 0.0;
    for x in cs.rows().chain(cs.target_rows()) {
        worst = worst.max((fb.model.alpha(x)? - fs.model.alpha(x)?).abs());
    }
    Ok(worst)
}

/// BP with `delta = 1e-3` against UKL: largest relative gap between the two
/// empirical objectives over a grid of log-linear ratio models.
pub fn bp_ukl_bridge(seed: u64) -> Result<f64> {
    let (cs, _) = gen_covariate_shift(seed, 400, 400)?;
    let basis = BasisSpec::new(BasisKind::RawPlusIntercept);
    let link = LinkSpec::new(LinkKind::Exponential);
    let bp = FitConfig::new(LossSpec::bp(0.0, 1e-3), link, ModelSpec::Linear { basis: basis.clone() });
    let ukl = FitConfig::new(LossSpec::ukl(0.0), link, ModelSpec::Linear { basis: basis.clone() });
    let grid = [-0.5, -0.25, 0.0, 0.25, 0.5];
    let mut worst: f64 = 0.0;
    for &b0 in &grid {
        for &b1 in &grid {
            for &b2 in &grid {
                let m = RieszModel::new(
                    Model::Linear(crate::models::LinearModel {
                        basis: basis.clone(),
                        beta: vec![b0, b1, b2],
                    }),
                    link,
                );
                let u = empirical_bregman(&ukl, &cs, &Functional::CovariateShift, &m)?;
                let b = empirical_bregman(&bp, &cs, &Functional::CovariateShift, &m)?;
                worst = worst.max((b - u).abs() / u.abs().max(1e-12));
            }
        }
    }
    Ok(worst)
}

/// `|AIPW - IPW|` for a canonical fit at `lambda = 0` and a least-squares
/// regression on the same basis, without cross-fitting.
pub fn aipw_ipw_gap(loss: LossSpec, seed: u64) -> Result<f64> {
    let (data, _) = gen_synthetic_ate(seed, 500)?;
    let basis = BasisSpec::new(BasisKind::Polynomial { degree: 1 });
    let branch = match loss.kind {
        LossKind::Sq => BranchRule::AlwaysPositive,
        _ => BranchRule::TreatmentSign,
    };
    let cfg = FitConfig::canonical(loss, branch, ModelSpec::Linear { basis: basis.clone() })?
        .with_grad_tol(1e-12)
        .with_max_iters(20_000);
    let fit = fit_riesz(&cfg, &data, &Functional::Ate)?;
    let gamma = Model::Linear(fit_least_squares(&basis, &data, 0.0)?);
    let a = aipw_estimate(&data, &fit.model, &gamma, &Functional::Ate)?.theta;
    let i = ipw_estimate(&data, &fit.model, &Functional::Ate)?.theta;
    Ok((a - i).abs())
}

/// SQ ATE fit on a treatment-separable indicator basis against two
/// independent LSIF fits of `r_1 = p(z) / p(z | d = 1)` and
/// `r_0 = p(z) / p(z | d = 0)`, rescaled by the arm shares.
pub fn two_lsif_split(seed: u64) -> Result<f64> {
    let (data, _) = gen_synthetic_ate(seed, 400)?;
    let cuts = [0.0];
    let mut cells = quadrant_cells(4, &[1, 2], &cuts, Some((0.5, f64::INFINITY)));
    cells.extend(quadrant_cells(4, &[1, 2], &cuts, Some((f64::NEG_INFINITY, 0.5))));
    let basis = BasisSpec::new(BasisKind::Indicator { cells });
    let cfg = FitConfig::new(LossSpec::sq(0.0), LinkSpec::new(LinkKind::Raw), ModelSpec::Linear { basis }).with_grad_tol(1e-12);
    let fit = fit_riesz(&cfg, &data, &Functional::Ate)?;
    let z_basis = BasisSpec::new(BasisKind::Indicator {
        cells: quadrant_cells(3, &[0, 1], &cuts, None),
    });
    let all: Vec<&[f64]> = (0..data.n()).map(|i| data.z(i)).collect();
    let arm = |d: bool| -> Vec<&[f64]> { (0..data.n()).filter(|&i| data.treatment(i) == d).map(|i| data.z(i)).collect() };
    let (g1, g0) = (arm(true), arm(false));
    let r1 = Model::Linear(fit_lsif(&z_basis, &all, &g1, 0.0)?);
    let r0 = Model::Linear(fit_lsif(&z_basis, &all, &g0, 0.0)?);
    let n = data.n() as f64;
    let (k1, k0) = (g1.len() as f64 / n, g0.len() as f64 / n);
    let mut worst: f64 = 0.0;
    for i in 0..data.n() {
        let z = data.z(i);
        let mut x = data.x(i).to_vec();
        x[0] = 1.0;
        worst = worst.max((fit.model.alpha(&x)? - r1.eval(z)? / k1).abs());
        x[0] = 0.0;
        worst = worst.max((fit.model.alpha(&x)? + r0.eval(z)? / k0).abs());
    }
    Ok(worst)
}

/// Random treatment-first instance with `n` units and `dim_z` covariates.
pub fn random_match_instance(seed: u64, n: usize, dim_z: usize) -> Result<Dataset> {
    let mut rng = Stream::new(seed, "verify/matching");
    let mut x = Vec::with_capacity(n * (dim_z + 1));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        // Alternate the first units so both arms are populated.
        let d = if i < 10 {
            (i % 2) as f64
        } else if rng.bernoulli(0.5) {
            1.0
        } else {
            0.0
        };
        x.push(d);
        for _ in 0..dim_z {
            x.push(rng.normal());
        }
        y.push(rng.normal() + d);
    }
    Dataset::new(x, y, dim_z + 1, Layout::TreatmentFirst)
}

/// The bridge, orthogonality, LSIF-split and matching identities.
pub fn check_identities(seed: u64) -> Vec<OracleCheck> {
    let wrap = |name: &str, r: Result<f64>, threshold: f64, anchor: &str| match r {
        Ok(v) => OracleCheck::new(name, v, threshold, anchor),
        Err(_) => OracleCheck::failed(name, threshold, anchor),
    };
    let mut out = vec![
        wrap("identity/bp-delta1-equals-sq", bp_sq_bridge(seed), 1e-4, "power bridge to squared loss"),
        wrap("identity/bp-delta-small-approaches-ukl", bp_ukl_bridge(seed), 1e-2, "power bridge to KL loss"),
        wrap(
            "identity/aipw-equals-ipw-sq",
            aipw_ipw_gap(LossSpec::sq(0.0), seed),
            1e-8,
            "automatic orthogonalization",
        ),
        wrap(
            "identity/aipw-equals-ipw-ukl",
            aipw_ipw_gap(LossSpec::ukl(1.0), seed),
            1e-8,
            "automatic orthogonalization",
        ),
        wrap("identity/two-lsif-split", two_lsif_split(seed), 1e-6, "ATE representer as two density ratios"),
    ];
    let matching = random_match_instance(seed, 40, 2);
    let forms = matching
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|d| Ok((nn_matching_ate(d, 2)? - nn_matching_ate_imputed(d, 2)?).abs()));
    out.push(wrap("identity/nn-matching-forms", forms, 1e-12, "matching estimator forms"));
    let lsif = matching.as_ref().map_err(Clone::clone).and_then(|d| nn_lsif_equivalence(d, 2));
    out.push(wrap("identity/nn-matching-equals-lsif", lsif, 1e-12, "matching as indicator LSIF"));
    out
}

/// Mean of `|alpha - 1|` for SQ and UKL ratio fits with no shift.
pub fn null_shift_ratio_error(loss: LossSpec, n: usize, seed: u64) -> Result<f64> {
    let design = ShiftDesign { dim: 2, shift: 0.0 };
    let (cs, _) = gen_covariate_shift_with(&design, seed, n, n)?;
    let basis = BasisSpec::new(BasisKind::Polynomial { degree: 1 });
    let cfg = match loss.kind {
        LossKind::Sq => FitConfig::new(loss, LinkSpec::new(LinkKind::LinearSq).with_c(1.0), ModelSpec::Linear { basis }),
        _ => FitConfig::canonical(loss, BranchRule::AlwaysPositive, ModelSpec::Linear { basis })?,
    };
    let fit = fit_riesz(&cfg, &cs, &Functional::CovariateShift)?;
    let mut s = 0.0;
    for x in cs.rows() {
        s += (fit.model.alpha(x)? - 1.0).abs();
    }
    Ok(s / cs.n() as f64)
}

/// The full suite: gradients, the brute-force dual on small instances, and
/// the identities.
pub fn run_all(seed: u64) -> Vec<OracleCheck> {
    let mut out = check_gradients(seed);
    for (kind, lambda) in [(LossKind::Sq, 0.0), (LossKind::Sq, 0.05), (LossKind::Ukl, 0.0), (LossKind::Ukl, 0.05)] {
        out.push(check_dual_bruteforce(kind, 20, 3, lambda, seed));
    }
    out.extend(check_identities(seed));
    out
}
