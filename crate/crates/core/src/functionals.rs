//! Linear functionals `m(W, h)` of the target parameters.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Layout, OracleNuisance};
use crate::error::{Error, Result};

/// A function that can be evaluated pointwise, with an optional analytic
/// partial derivative.
pub trait EvaluableFn {
    fn value(&self, x: &[f64]) -> f64;

    fn partial(&self, _x: &[f64], _j: usize) -> Option<f64> {
        None
    }
}

impl<F: Fn(&[f64]) -> f64> EvaluableFn for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// `d h / d x_j`, analytic when available, otherwise a central difference
/// with step `1e-5 (1 + |x_j|)`.
pub fn partial_or_fd(h: &dyn EvaluableFn, x: &[f64], j: usize) -> f64 {
    if let Some(p) = h.partial(x, j) {
        return p;
    }
    let step = 1e-5 * (1.0 + x[j].abs());
    let mut xp = x.to_vec();
    xp[j] = x[j] + step;
    let up = h.value(&xp);
    xp[j] = x[j] - step;
    let down = h.value(&xp);
    (up - down) / (2.0 * step)
}

/// The target functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Functional {
    /// `h(1, z) - h(0, z)`.
    #[serde(rename = "ATE")]
    Ate,
    /// `d h / d x_j` at the observed point.
    #[serde(rename = "AME")]
    Ame { ame_coordinate: usize },
    /// Mean of `h` over draws from `P_1` minus mean over draws from `P_-1`.
    #[serde(rename = "APE")]
    Ape { p1: Vec<Vec<f64>>, p_minus1: Vec<Vec<f64>> },
    /// `h` averaged over the target sample.
    #[serde(rename = "CovariateShift")]
    CovariateShift,
}

impl Functional {
    /// Checks that `data` can carry this functional.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        match self {
            Functional::Ate => data.require_treatment_layout(),
            Functional::Ame { ame_coordinate } => {
                if *ame_coordinate >= data.dim() {
                    Err(Error::DimensionMismatch {
                        expected: data.dim(),
                        got: *ame_coordinate,
                    })
                } else if data.layout() == Layout::TreatmentFirst && *ame_coordinate == 0 {
                    Err(Error::Layout("AME coordinate cannot be the binary treatment"))
                } else {
                    Ok(())
                }
            }
            Functional::Ape { p1, p_minus1 } => {
                if p1.is_empty() || p_minus1.is_empty() {
                    return Err(Error::MissingWeights);
                }
                match p1.iter().chain(p_minus1).find(|r| r.len() != data.dim()) {
                    Some(r) => Err(Error::DimensionMismatch {
                        expected: data.dim(),
                        got: r.len(),
                    }),
                    None => Ok(()),
                }
            }
            Functional::CovariateShift => {
                if data.target_len() == 0 {
                    Err(Error::Layout("covariate shift needs a target sample"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Whether `E[m(W, h)]` is an integral of `h` against a signed measure
    /// of points (every functional except AME).
    pub fn is_point_measure(&self) -> bool {
        !matches!(self, Functional::Ame { .. })
    }

    /// Signed measure `{(x_k, w_k)}` with `sum_k w_k h(x_k)` the sample
    /// analogue of `E[m(W, h)]`. Empty for AME.
    pub fn measure_points(&self, data: &Dataset) -> Result<Vec<(Vec<f64>, f64)>> {
        self.validate(data)?;
        let n = data.n() as f64;
        Ok(match self {
            Functional::Ate => {
                let mut pts = Vec::with_capacity(2 * data.n());
                for i in 0..data.n() {
                    let mut x = data.x(i).to_vec();
                    x[0] = 1.0;
                    pts.push((x.clone(), 1.0 / n));
                    x[0] = 0.0;
                    pts.push((x, -1.0 / n));
                }
                pts
            }
            Functional::Ame { .. } => Vec::new(),
            Functional::Ape { p1, p_minus1 } => {
                let w1 = 1.0 / p1.len() as f64;
                let w0 = -1.0 / p_minus1.len() as f64;
                p1.iter().map(|x| (x.clone(), w1)).chain(p_minus1.iter().map(|x| (x.clone(), w0))).collect()
            }
            Functional::CovariateShift => {
                let w = 1.0 / data.target_len() as f64;
                data.target_rows().map(|x| (x.to_vec(), w)).collect()
            }
        })
    }

    /// Sample analogue of `E[m(W, h)]`: the mean of [`apply_m`] over rows,
    /// except for covariate shift where `h` is averaged over the whole
    /// target sample.
    pub fn mean(&self, data: &Dataset, h: &dyn EvaluableFn) -> Result<f64> {
        match self {
            Functional::CovariateShift => {
                self.validate(data)?;
                let s: f64 = data.target_rows().map(|x| h.value(x)).sum();
                Ok(s / data.target_len() as f64)
            }
            _ => {
                let v = self.per_row(data, h)?;
                Ok(v.iter().sum::<f64>() / v.len() as f64)
            }
        }
    }

    /// `m(W_i, h)` for every row.
    pub fn per_row(&self, data: &Dataset, h: &dyn EvaluableFn) -> Result<Vec<f64>> {
        self.validate(data)?;
        if let Functional::Ape { .. } = self {
            let v = apply_m(self, data, 0, h)?;
            return Ok(vec![v; data.n()]);
        }
        (0..data.n()).map(|i| apply_m(self, data, i, h)).collect()
    }
}

/// `m(W_i, h)`. Covariate shift pairs source row `i` with target row
/// `i mod m`.
pub fn apply_m(functional: &Functional, data: &Dataset, i: usize, h: &dyn EvaluableFn) -> Result<f64> {
    let x = data.x(i);
    match functional {
        Functional::Ate => {
            data.require_treatment_layout()?;
            let mut p = x.to_vec();
            p[0] = 1.0;
            let one = h.value(&p);
            p[0] = 0.0;
            Ok(one - h.value(&p))
        }
        Functional::Ame { ame_coordinate } => {
            if *ame_coordinate >= x.len() {
                return Err(Error::DimensionMismatch {
                    expected: x.len(),
                    got: *ame_coordinate,
                });
            }
            Ok(partial_or_fd(h, x, *ame_coordinate))
        }
        Functional::Ape { p1, p_minus1 } => {
            if p1.is_empty() || p_minus1.is_empty() {
                return Err(Error::MissingWeights);
            }
            let mean = |s: &Vec<Vec<f64>>| s.iter().map(|x| h.value(x)).sum::<f64>() / s.len() as f64;
            Ok(mean(p1) - mean(p_minus1))
        }
        Functional::CovariateShift => {
            let m = data.target_len();
            if m == 0 {
                return Err(Error::Layout("covariate shift needs a target sample"));
            }
            Ok(h.value(data.target(i % m).unwrap_or(x)))
        }
    }
}

/// `|mean m(W_i, h) - mean alpha0(X_i) h(X_i)|`, a Monte Carlo check of the
/// Riesz identity.
pub fn riesz_identity_check(functional: &Functional, oracle: &OracleNuisance, h: &dyn EvaluableFn, data: &Dataset) -> Result<f64> {
    let lhs = functional.mean(data, h)?;
    let rhs: f64 = data.rows().map(|x| oracle.representer(x) * h.value(x)).sum::<f64>() / data.n() as f64;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_covariate_shift_with, gen_synthetic_ate, ShiftDesign};

    fn tiny_ate() -> Dataset {
        Dataset::new(vec![1.0, 0.3, 0.0, -1.2], vec![3.0, 1.0], 2, Layout::TreatmentFirst).unwrap()
    }

    #[test]
    fn ate_examples() {
        let d = tiny_ate();
        let c = |_: &[f64]| 7.0;
        assert_eq!(apply_m(&Functional::Ate, &d, 0, &c).unwrap(), 0.0);
        let h = |x: &[f64]| x[0];
        assert_eq!(apply_m(&Functional::Ate, &d, 1, &h).unwrap(), 1.0);
        let g = Dataset::new(vec![1.0, 0.3], vec![1.0], 2, Layout::Generic).unwrap();
        assert!(matches!(apply_m(&Functional::Ate, &g, 0, &h), Err(Error::Layout(_))));
    }

    struct Square;
    impl EvaluableFn for Square {
        fn value(&self, x: &[f64]) -> f64 {
            x[0] * x[0]
        }
        fn partial(&self, x: &[f64], j: usize) -> Option<f64> {
            Some(if j == 0 { 2.0 * x[0] } else { 0.0 })
        }
    }

    #[test]
    fn ame_example_and_fallback() {
        let d = Dataset::new(vec![3.0], vec![0.0], 1, Layout::Generic).unwrap();
        let f = Functional::Ame { ame_coordinate: 0 };
        assert_eq!(apply_m(&f, &d, 0, &Square).unwrap(), 6.0);
        let cubic = |x: &[f64]| libm::sin(x[0]) * x[0] * x[0];
        let fd = apply_m(&f, &d, 0, &cubic).unwrap();
        let exact = libm::cos(3.0) * 9.0 + 2.0 * 3.0 * libm::sin(3.0);
        assert!((fd - exact).abs() <= 1e-4 * exact.abs());
    }

    #[test]
    fn ape_needs_both_samples() {
        let d = Dataset::new(vec![0.0], vec![0.0], 1, Layout::Generic).unwrap();
        let f = Functional::Ape {
            p1: vec![vec![1.0]],
            p_minus1: vec![],
        };
        assert_eq!(f.validate(&d), Err(Error::MissingWeights));
        let f = Functional::Ape {
            p1: vec![vec![1.0], vec![3.0]],
            p_minus1: vec![vec![0.0]],
        };
        let h = |x: &[f64]| x[0];
        assert_eq!(apply_m(&f, &d, 0, &h).unwrap(), 2.0);
    }

    #[test]
    fn covariate_shift_pairs_modulo() {
        let d = Dataset::new(vec![0.0, 0.0, 0.0], vec![0.0; 3], 1, Layout::Generic)
            .unwrap()
            .with_target(vec![5.0, 7.0])
            .unwrap();
        let h = |x: &[f64]| x[0];
        let v: Vec<f64> = (0..3).map(|i| apply_m(&Functional::CovariateShift, &d, i, &h).unwrap()).collect();
        assert_eq!(v, [5.0, 7.0, 5.0]);
        assert_eq!(Functional::CovariateShift.mean(&d, &h).unwrap(), 6.0);
    }

    #[test]
    fn riesz_identity_monte_carlo() {
        let (d, o) = gen_synthetic_ate(1, 50_000).unwrap();
        let h = |x: &[f64]| x[0];
        assert!(riesz_identity_check(&Functional::Ate, &o, &h, &d).unwrap() <= 0.05);
        let zero = |_: &[f64]| 0.0;
        assert_eq!(riesz_identity_check(&Functional::Ate, &o, &zero, &d).unwrap(), 0.0);

        let design = ShiftDesign { dim: 2, shift: 0.0 };
        let n = 20_000;
        let (d, o) = gen_covariate_shift_with(&design, 2, n, n).unwrap();
        let h = |x: &[f64]| x[0] + x[1] * x[1];
        let vals: Vec<f64> = d.rows().map(h).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sd = libm::sqrt(vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64);
        let stat = riesz_identity_check(&Functional::CovariateShift, &o, &h, &d).unwrap();
        assert!(stat <= 3.0 * sd * libm::sqrt(2.0 / n as f64), "{stat}");
    }

    #[test]
    fn measure_points_integrate_like_apply_m() {
        let (d, _) = gen_synthetic_ate(3, 40).unwrap();
        let h = |x: &[f64]| x[0] * x[1] + x[2] * x[2] - x[3];
        let pts = Functional::Ate.measure_points(&d).unwrap();
        let via_points: f64 = pts.iter().map(|(x, w)| w * h(x)).sum();
        let via_rows = Functional::Ate.mean(&d, &h).unwrap();
        assert!((via_points - via_rows).abs() < 1e-12);
    }
}
