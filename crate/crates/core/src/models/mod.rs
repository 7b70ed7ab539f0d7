//! Base models `f`: linear-in-basis, Gaussian-kernel and ReLU networks, plus
//! the least-squares outcome regressions.

mod basis;
mod mlp;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub(crate) use basis::sq_dist;
pub use basis::{basis_eval, basis_partial, BasisKind, BasisSpec, BoxCell, Cell};
pub use mlp::MlpModel;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::functionals::EvaluableFn;
use crate::linalg::{median, ridge_solve};
use crate::optim::{lbfgs, OptimizerConfig, Problem};
use crate::rng::Stream;

/// `f(x) = phi(x)' beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub basis: BasisSpec,
    pub beta: Vec<f64>,
}

/// `f(x) = sum_k a_k exp(-|x - c_k|^2 / (2 s^2))`, penalized by the RKHS norm
/// `a' K a` where `K` is the kernel matrix of the centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub kernel: BasisSpec,
    pub alpha_coefs: Vec<f64>,
    pub ridge: f64,
}

impl KernelModel {
    /// Kernel matrix between the centers.
    pub fn center_gram(&self) -> DMatrix<f64> {
        let BasisKind::GaussianRbf { centers, bandwidth, .. } = &self.kernel.kind else {
            return DMatrix::zeros(0, 0);
        };
        let k = centers.len();
        let s = -0.5 / (bandwidth * bandwidth);
        DMatrix::from_fn(k, k, |i, j| libm::exp(s * basis::sq_dist(&centers[i], &centers[j])))
    }
}

/// A base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Model {
    Linear(LinearModel),
    Kernel(KernelModel),
    Mlp(MlpModel),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

impl Model {
    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Model::Linear(m) => &m.beta,
            Model::Kernel(m) => &m.alpha_coefs,
            Model::Mlp(m) => &m.params,
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        match self {
            Model::Linear(m) => m.beta.copy_from_slice(p),
            Model::Kernel(m) => m.alpha_coefs.copy_from_slice(p),
            Model::Mlp(m) => m.params.copy_from_slice(p),
        }
    }

    pub fn is_linear_in_params(&self) -> bool {
        !matches!(self, Model::Mlp(_))
    }

    /// The feature map of a linear-in-parameters model.
    pub fn basis(&self) -> Option<&BasisSpec> {
        match self {
            Model::Linear(m) => Some(&m.basis),
            Model::Kernel(m) => Some(&m.kernel),
            Model::Mlp(_) => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Mlp(m) => m.eval(x),
            _ => {
                let phi = self.basis().map(|b| b.eval(x)).transpose()?.unwrap_or_default();
                Ok(dot(&phi, self.params()))
            }
        }
    }

    /// `f(x)` and `grad_params f(x)`.
    pub fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        match self {
            Model::Mlp(m) => m.eval_grad(x, grad),
            _ => {
                let phi = self.basis().map(|b| b.eval(x)).transpose()?.unwrap_or_default();
                grad.copy_from_slice(&phi);
                Ok(dot(&phi, self.params()))
            }
        }
    }

    /// `d f(x) / d x_j`.
    pub fn input_partial(&self, x: &[f64], j: usize) -> Result<f64> {
        match self {
            Model::Mlp(m) => m.input_partial(x, j),
            _ => {
                let dphi = self.basis().map(|b| b.partial(x, j)).transpose()?.unwrap_or_default();
                Ok(dot(&dphi, self.params()))
            }
        }
    }
}

/// Parameter gradient of `f` at `x` (free function form).
pub fn model_param_grad(model: &Model, x: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; model.n_params()];
    model.eval_grad(x, &mut g)?;
    Ok(g)
}

/// `f(x)` (free function form).
pub fn model_eval(model: &Model, x: &[f64]) -> Result<f64> {
    model.eval(x)
}

impl EvaluableFn for Model {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).unwrap_or(f64::NAN)
    }

    fn partial(&self, x: &[f64], j: usize) -> Option<f64> {
        self.input_partial(x, j).ok()
    }
}

fn default_centers() -> usize {
    100
}

fn default_scale() -> f64 {
    1.0
}

fn default_hidden() -> Vec<usize> {
    vec![100]
}

/// Template from which a model is built once the training inputs are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ModelSpec {
    Linear {
        basis: BasisSpec,
    },
    /// Gaussian RBF expansion on a seeded subsample of the training inputs.
    /// Without an explicit bandwidth, the median pairwise distance between
    /// centers times `bandwidth_scale` is used.
    Kernel {
        #[serde(default = "default_centers")]
        n_centers: usize,
        #[serde(default)]
        bandwidth: Option<f64>,
        #[serde(default = "default_scale")]
        bandwidth_scale: f64,
        #[serde(default)]
        on_z_only: bool,
    },
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default)]
        on_z_only: bool,
    },
}

/// Seeded subsample of `inputs` (without replacement) of size `min(k, n)`,
/// with the treatment column dropped when `on_z_only`.
pub fn choose_centers(inputs: &[&[f64]], k: usize, on_z_only: bool, seed: u64) -> Vec<Vec<f64>> {
    let mut idx: Vec<usize> = (0..inputs.len()).collect();
    Stream::new(seed, "kernel/centers").shuffle(&mut idx);
    idx.truncate(k.min(inputs.len()));
    idx.sort_unstable();
    idx.iter()
        .map(|&i| if on_z_only { inputs[i][1..].to_vec() } else { inputs[i].to_vec() })
        .collect()
}

/// Median pairwise Euclidean distance.
pub fn median_distance(points: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in 0..i {
            d.push(libm::sqrt(basis::sq_dist(&points[i], &points[j])));
        }
    }
    let m = median(&mut d);
    if m.is_finite() && m > 0.0 {
        m
    } else {
        1.0
    }
}

fn rbf_basis(inputs: &[&[f64]], n_centers: usize, bandwidth: Option<f64>, scale: f64, on_z_only: bool, intercept: bool, seed: u64) -> Result<BasisSpec> {
    if inputs.is_empty() {
        return Err(Error::InvalidSize {
            what: "training inputs",
            got: 0,
            min: 1,
        });
    }
    let centers = choose_centers(inputs, n_centers, on_z_only, seed);
    let bw = match bandwidth {
        Some(b) => b,
        None => scale * median_distance(&centers),
    };
    let b = BasisSpec {
        kind: BasisKind::GaussianRbf {
            centers,
            bandwidth: bw,
            intercept,
        },
        on_z_only,
    };
    b.validate()?;
    Ok(b)
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Linear { basis } => basis.validate(),
            ModelSpec::Kernel {
                n_centers,
                bandwidth,
                bandwidth_scale,
                ..
            } => {
                if *n_centers == 0 {
                    return Err(Error::InvalidSize {
                        what: "n_centers",
                        got: 0,
                        min: 1,
                    });
                }
                let bw = bandwidth.unwrap_or(*bandwidth_scale);
                if !(bw > 0.0 && bw.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "bandwidth",
                        value: bw,
                        reason: "must be > 0",
                    });
                }
                Ok(())
            }
            ModelSpec::Mlp { hidden, .. } => {
                if hidden.contains(&0) {
                    Err(Error::InvalidSize {
                        what: "hidden width",
                        got: 0,
                        min: 1,
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Builds the model for inputs of width `dim`; parameters start at zero
    /// except for networks, which are He-initialized.
    pub fn instantiate(&self, inputs: &[&[f64]], dim: usize, seed: u64) -> Result<Model> {
        self.validate()?;
        Ok(match self {
            ModelSpec::Linear { basis } => {
                let p = basis.n_features(dim);
                if p == 0 {
                    return Err(Error::InvalidSize {
                        what: "basis dimension",
                        got: 0,
                        min: 1,
                    });
                }
                Model::Linear(LinearModel {
                    basis: basis.clone(),
                    beta: vec![0.0; p],
                })
            }
            ModelSpec::Kernel {
                n_centers,
                bandwidth,
                bandwidth_scale,
                on_z_only,
            } => {
                let kernel = rbf_basis(inputs, *n_centers, *bandwidth, *bandwidth_scale, *on_z_only, false, seed)?;
                let k = kernel.n_features(dim);
                Model::Kernel(KernelModel {
                    kernel,
                    alpha_coefs: vec![0.0; k],
                    ridge: 0.0,
                })
            }
            ModelSpec::Mlp { hidden, on_z_only } => Model::Mlp(MlpModel::new(dim, hidden, *on_z_only, seed)?),
        })
    }

    pub fn is_mlp(&self) -> bool {
        matches!(self, ModelSpec::Mlp { .. })
    }
}

/// Minimizes `sum_i (y_i - phi(x_i)' rho)^2 + ridge |rho|^2` by Cholesky on
/// the normal equations.
pub fn fit_least_squares(basis: &BasisSpec, data: &Dataset, ridge: f64) -> Result<LinearModel> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "ridge",
            value: ridge,
            reason: "must be >= 0",
        });
    }
    basis.validate()?;
    let p = basis.n_features(data.dim());
    let mut x = Vec::with_capacity(data.n() * p);
    let mut row = Vec::new();
    for r in data.rows() {
        basis.eval_into(r, &mut row)?;
        x.extend_from_slice(&row);
    }
    let beta = ridge_solve(&x, data.ys(), p, ridge)?;
    Ok(LinearModel { basis: basis.clone(), beta })
}

fn default_ridge() -> f64 {
    1e-6
}

fn default_l2() -> f64 {
    1e-4
}

fn default_mlp_iters() -> usize {
    500
}

/// How the outcome regression `gamma` is learned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum OutcomeSpec {
    /// Ridge least squares on a fixed basis.
    Linear {
        basis: BasisSpec,
        #[serde(default)]
        ridge: f64,
    },
    /// Ridge least squares on an intercept plus a Gaussian RBF expansion;
    /// the ridge term is scaled by `n`.
    Kernel {
        #[serde(default = "default_centers")]
        n_centers: usize,
        #[serde(default)]
        bandwidth: Option<f64>,
        #[serde(default = "default_scale")]
        bandwidth_scale: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    /// Network trained on mean squared error plus `(l2/2) |w|^2` by L-BFGS.
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_mlp_iters")]
        max_iters: usize,
    },
}

struct MseProblem<'a> {
    model: Model,
    data: &'a Dataset,
    l2: f64,
    scratch: Vec<f64>,
}

impl Problem for MseProblem<'_> {
    fn dim(&self) -> usize {
        self.model.n_params()
    }

    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.model.set_params(x);
        let n = self.data.n() as f64;
        grad.iter_mut().zip(x).for_each(|(g, p)| *g = self.l2 * p);
        let mut f = 0.5 * self.l2 * dot(x, x);
        for i in 0..self.data.n() {
            let v = self.model.eval_grad(self.data.x(i), &mut self.scratch)?;
            let r = v - self.data.y(i);
            f += r * r / n;
            for (g, s) in grad.iter_mut().zip(&self.scratch) {
                *g += 2.0 * r / n * s;
            }
        }
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::NonFinite("outcome loss"))
        }
    }
}

/// Fits `gamma` on `data` according to `spec`.
pub fn fit_outcome(spec: &OutcomeSpec, data: &Dataset, seed: u64) -> Result<Model> {
    match spec {
        OutcomeSpec::Linear { basis, ridge } => Ok(Model::Linear(fit_least_squares(basis, data, *ridge)?)),
        OutcomeSpec::Kernel {
            n_centers,
            bandwidth,
            bandwidth_scale,
            ridge,
        } => {
            let inputs: Vec<&[f64]> = data.rows().collect();
            let basis = rbf_basis(&inputs, *n_centers, *bandwidth, *bandwidth_scale, false, true, seed)?;
            let fit = fit_least_squares(&basis, data, ridge * data.n() as f64)?;
            Ok(Model::Linear(fit))
        }
        OutcomeSpec::Mlp { hidden, l2, max_iters } => {
            let net = MlpModel::new(data.dim(), hidden, false, seed)?;
            let p = net.n_params();
            let x0 = net.params.clone();
            let mut prob = MseProblem {
                model: Model::Mlp(net),
                data,
                l2: *l2,
                scratch: vec![0.0; p],
            };
            let cfg = OptimizerConfig {
                max_iters: *max_iters,
                grad_tol: 1e-5,
                ..Default::default()
            };
            let rep = lbfgs(&mut prob, &x0, &cfg)?;
            prob.model.set_params(&rep.x);
            Ok(prob.model)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Layout;

    #[test]
    fn linear_model_eval_and_grad() {
        let m = Model::Linear(LinearModel {
            basis: BasisSpec::new(BasisKind::Polynomial { degree: 1 }),
            beta: vec![1.0, 0.0, 0.0],
        });
        assert_eq!(model_eval(&m, &[4.0, 5.0]).unwrap(), 1.0);
        assert_eq!(model_param_grad(&m, &[4.0, 5.0]).unwrap(), [1.0, 4.0, 5.0]);
    }

    #[test]
    fn least_squares_examples() {
        let d = Dataset::new(vec![1.0, 3.0], vec![2.0, 4.0], 1, Layout::Generic).unwrap();
        let b = BasisSpec::new(BasisKind::Polynomial { degree: 1 });
        let fit = fit_least_squares(&b, &d, 0.0).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-12 && (fit.beta[1] - 1.0).abs() < 1e-12);
        let big = fit_least_squares(&b, &d, 1e12).unwrap();
        assert!(libm::sqrt(dot(&big.beta, &big.beta)) < 1e-6);
        let one = Dataset::new(vec![1.0], vec![2.0], 1, Layout::Generic).unwrap();
        assert_eq!(fit_least_squares(&b, &one, 0.0), Err(Error::Singular));
    }

    #[test]
    fn kernel_template_uses_median_bandwidth() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let inputs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let spec = ModelSpec::Kernel {
            n_centers: 4,
            bandwidth: None,
            bandwidth_scale: 1.0,
            on_z_only: false,
        };
        let Model::Kernel(k) = spec.instantiate(&inputs, 1, 3).unwrap() else {
            panic!()
        };
        let BasisKind::GaussianRbf { centers, bandwidth, .. } = &k.kernel.kind else {
            panic!()
        };
        assert_eq!(centers.len(), 4);
        assert_eq!(*bandwidth, median_distance(centers));
        assert_eq!(k.center_gram()[(1, 1)], 1.0);
    }

    #[test]
    fn mlp_outcome_fits_a_line() {
        let xs: Vec<f64> = (0..40).map(|i| -1.0 + i as f64 / 20.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let d = Dataset::new(xs, ys, 1, Layout::Generic).unwrap();
        let m = fit_outcome(
            &OutcomeSpec::Mlp {
                hidden: vec![16],
                l2: 0.0,
                max_iters: 2000,
            },
            &d,
            1,
        )
        .unwrap();
        assert!((m.eval(&[0.25]).unwrap() - 1.5).abs() < 0.05);
    }
}
