//! Smooth and composite minimizers with domain-aware line searches.
//!
//! An objective signals an infeasible point by returning an error; both
//! solvers respond by shortening the step. Accepted iterates never increase
//! the objective.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// A differentiable objective on `R^dim`.
pub trait Problem {
    fn dim(&self) -> usize;

    /// Value at `x`, writing the gradient into `grad`.
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Number of stored curvature pairs for L-BFGS.
    pub memory: usize,
    /// Keep the objective value of every accepted iterate.
    pub record_trace: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 500,
            grad_tol: 1e-8,
            memory: 10,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimReport {
    pub x: Vec<f64>,
    pub value: f64,
    /// Gradient norm (smooth) or gradient-mapping norm (composite) at `x`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

/// Limited-memory BFGS with backtracking Armijo search. Steps that leave the
/// objective's domain are halved.
pub fn lbfgs(problem: &mut dyn Problem, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptimReport> {
    let n = problem.dim();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = problem.eval(&x, &mut g)?;
    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(f);
    }
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut alpha = vec![0.0; cfg.memory.max(1)];
    let mut iterations = 0;
    let mut gnorm = norm(&g);
    while iterations < cfg.max_iters && gnorm > cfg.grad_tol {
        iterations += 1;
        // Two-loop recursion.
        d.copy_from_slice(&g);
        for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= alpha[k] * yi;
            }
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for (k, (s, y, rho)) in pairs.iter().enumerate() {
            let beta = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (alpha[k] - beta) * si;
            }
        }
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            pairs.clear();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            slope = -gnorm * gnorm;
        }
        let mut t = if pairs.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        while t > MIN_STEP {
            for i in 0..n {
                xt[i] = x[i] + t * d[i];
            }
            if let Ok(ft) = problem.eval(&xt, &mut gt) {
                let sufficient = ft <= f + ARMIJO * t * slope;
                let flat = ft <= f + 1e-14 * f.abs() && norm(&gt) < gnorm;
                if ft.is_finite() && (sufficient || flat) {
                    accepted = Some(ft);
                    break;
                }
            }
            t *= 0.5;
        }
        let Some(ft) = accepted else {
            if pairs.is_empty() {
                break;
            }
            pairs.clear();
            continue;
        };
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if pairs.len() == cfg.memory.max(1) {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        core::mem::swap(&mut x, &mut xt);
        core::mem::swap(&mut g, &mut gt);
        f = ft;
        gnorm = norm(&g);
        if cfg.record_trace {
            trace.push(f);
        }
    }
    Ok(OptimReport {
        x,
        value: f,
        grad_norm: gnorm,
        iterations,
        converged: gnorm <= cfg.grad_tol,
        trace,
    })
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Monotone FISTA for `F(x) + sum_j lambda_j |x_j|` with backtracking on the
/// local Lipschitz estimate. Convergence is declared when the gradient
/// mapping at the current iterate has norm at most `grad_tol`.
pub fn proximal_l1(problem: &mut dyn Problem, x0: &[f64], lambda: &[f64], cfg: &OptimizerConfig) -> Result<OptimReport> {
    let n = problem.dim();
    let l1 = |x: &[f64]| -> f64 { x.iter().zip(lambda).map(|(v, l)| l * v.abs()).sum() };
    let mut x = x0.to_vec();
    let mut gx = vec![0.0; n];
    let mut fx = problem.eval(&x, &mut gx)?;
    let mut obj = fx + l1(&x);
    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(obj);
    }
    let mut lip = 1.0;
    let mut mom = 1.0;
    let mut y = x.clone();
    let mut gy = gx.clone();
    let mut fy = fx;
    let mut z = vec![0.0; n];
    let mut gz = vec![0.0; n];
    let mapping = |x: &[f64], g: &[f64], lip: f64| -> f64 {
        let mut s = 0.0;
        for j in 0..x.len() {
            let p = soft_threshold(x[j] - g[j] / lip, lambda[j] / lip);
            s += {
                let r = lip * (x[j] - p);
                r * r
            };
        }
        libm::sqrt(s)
    };
    let mut gmap = mapping(&x, &gx, lip);
    let mut iterations = 0;
    while iterations < cfg.max_iters && gmap > cfg.grad_tol {
        iterations += 1;
        let mut found = None;
        while lip < 1e30 {
            for j in 0..n {
                z[j] = soft_threshold(y[j] - gy[j] / lip, lambda[j] / lip);
            }
            if let Ok(fz) = problem.eval(&z, &mut gz) {
                let diff: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b).collect();
                let model = fy + dot(&gy, &diff) + 0.5 * lip * dot(&diff, &diff);
                if fz.is_finite() && fz <= model + 1e-15 * fy.abs().max(1.0) {
                    found = Some(fz);
                    break;
                }
            }
            lip *= 2.0;
        }
        let Some(fz) = found else { break };
        let objz = fz + l1(&z);
        let mom_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * mom * mom));
        // A plain proximal step from the iterate descends up to rounding.
        let plain = y == x && objz <= obj + 1e-13 * obj.abs().max(1.0);
        if objz <= obj || plain {
            let prev = x.clone();
            x.copy_from_slice(&z);
            gx.copy_from_slice(&gz);
            fx = fz;
            obj = objz;
            for j in 0..n {
                y[j] = x[j] + (mom - 1.0) / mom_next * (x[j] - prev[j]);
            }
            mom = mom_next;
        } else {
            // Restart momentum from the current iterate.
            y.copy_from_slice(&x);
            mom = 1.0;
        }
        fy = if y == x {
            gy.copy_from_slice(&gx);
            fx
        } else {
            match problem.eval(&y, &mut gy) {
                Ok(v) if v.is_finite() => v,
                _ => {
                    y.copy_from_slice(&x);
                    gy.copy_from_slice(&gx);
                    mom = 1.0;
                    fx
                }
            }
        };
        gmap = mapping(&x, &gx, lip);
        if cfg.record_trace {
            trace.push(obj);
        }
        lip *= 0.9;
    }
    let _ = fx;
    Ok(OptimReport {
        x,
        value: obj,
        grad_norm: gmap,
        iterations,
        converged: gmap <= cfg.grad_tol,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    struct Rosenbrock;
    impl Problem for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&mut self, x: &[f64], g: &mut [f64]) -> Result<f64> {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            Ok((1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a))
        }
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let cfg = OptimizerConfig {
            max_iters: 1000,
            grad_tol: 1e-10,
            record_trace: true,
            ..Default::default()
        };
        let r = lbfgs(&mut Rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-8 && (r.x[1] - 1.0).abs() < 1e-8);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    /// `-log(x) + x^2`, infeasible for `x <= 0`.
    struct Barrier;
    impl Problem for Barrier {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&mut self, x: &[f64], g: &mut [f64]) -> Result<f64> {
            if x[0] <= 0.0 {
                return Err(Error::LinkDomain { value: x[0] });
            }
            g[0] = -1.0 / x[0] + 2.0 * x[0];
            Ok(-libm::log(x[0]) + x[0] * x[0])
        }
    }

    #[test]
    fn lbfgs_respects_domain() {
        let r = lbfgs(&mut Barrier, &[20.0], &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - libm::sqrt(0.5)).abs() < 1e-8);
    }

    struct Quadratic {
        a: [[f64; 3]; 3],
        b: [f64; 3],
    }
    impl Problem for Quadratic {
        fn dim(&self) -> usize {
            3
        }
        fn eval(&mut self, x: &[f64], g: &mut [f64]) -> Result<f64> {
            let mut f = 0.0;
            for i in 0..3 {
                g[i] = -self.b[i];
                for j in 0..3 {
                    g[i] += self.a[i][j] * x[j];
                }
                f += 0.5 * x[i] * (g[i] - self.b[i]);
            }
            Ok(f)
        }
    }

    #[test]
    fn lasso_kkt() {
        let mut q = Quadratic {
            a: [[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]],
            b: [1.0, -0.1, 2.0],
        };
        let lambda = [0.3, 0.3, 0.3];
        let cfg = OptimizerConfig {
            max_iters: 5000,
            grad_tol: 1e-10,
            record_trace: true,
            ..Default::default()
        };
        let r = proximal_l1(&mut q, &[0.0; 3], &lambda, &cfg).unwrap();
        assert!(r.converged);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0] + 1e-13 * w[0].abs().max(1.0)));
        let mut g = [0.0; 3];
        q.eval(&r.x, &mut g).unwrap();
        for j in 0..3 {
            if r.x[j] == 0.0 {
                assert!(g[j].abs() <= 0.3 + 1e-9);
            } else {
                assert!((g[j] + 0.3 * r.x[j].signum()).abs() < 1e-9);
            }
        }
    }
}
