//! Covariate-balance diagnostics, dual weights and nearest-neighbor matching.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fit::{FitResult, PenaltyKind};
use crate::functionals::{EvaluableFn, Functional};
use crate::models::{sq_dist, BasisSpec, Cell, Model};

/// Per-coordinate balance residuals against their penalty-implied bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub residuals: Vec<f64>,
    pub bound: Vec<f64>,
    pub satisfied: Vec<bool>,
    /// `max_j (|residual_j| - bound_j)`, floored at zero.
    pub max_violation: f64,
    pub tol: f64,
}

impl BalanceReport {
    pub fn all_satisfied(&self) -> bool {
        self.satisfied.iter().all(|&s| s)
    }
}

/// One coordinate of a basis as a function, with its analytic partials.
pub struct BasisFeature<'a> {
    pub basis: &'a BasisSpec,
    pub j: usize,
}

impl EvaluableFn for BasisFeature<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.basis.eval(x).map_or(f64::NAN, |v| v[self.j])
    }

    fn partial(&self, x: &[f64], k: usize) -> Option<f64> {
        self.basis.partial(x, k).ok().map(|v| v[self.j])
    }
}

/// `(1/n) sum_i alpha(X_i) phi_j(X_i) - M(phi_j)` for every basis coordinate.
pub fn raw_residuals(alpha: &dyn EvaluableFn, data: &Dataset, functional: &Functional, basis: &BasisSpec) -> Result<Vec<f64>> {
    let p = basis.n_features(data.dim());
    let mut lhs = vec![0.0; p];
    let mut row = Vec::with_capacity(p);
    for x in data.rows() {
        let a = alpha.value(x);
        basis.eval_into(x, &mut row)?;
        lhs.iter_mut().zip(&row).for_each(|(l, f)| *l += a * f);
    }
    let n = data.n() as f64;
    (0..p).map(|j| Ok(lhs[j] / n - functional.mean(data, &BasisFeature { basis, j })?)).collect()
}

/// Balance residuals of a fit with bounds `lambda |beta_j|^(a - 1)`
/// (`lambda |(K a)_j|` under the RKHS penalty) and tolerance
/// `10 * grad_tol`.
pub fn balance_residuals(fit: &FitResult, data: &Dataset, functional: &Functional, basis: &BasisSpec) -> Result<BalanceReport> {
    let (coefs, own_basis) = match &fit.model.model {
        Model::Linear(m) => (m.beta.as_slice(), &m.basis),
        Model::Kernel(k) => (k.alpha_coefs.as_slice(), &k.kernel),
        Model::Mlp(_) => return Err(Error::Unsupported("balance bound for a network")),
    };
    if own_basis != basis {
        return Err(Error::Config("balance basis differs from the fitted basis".into()));
    }
    let residuals = raw_residuals(&fit.model, data, functional, basis)?;
    if residuals.len() != coefs.len() {
        return Err(Error::DimensionMismatch {
            expected: coefs.len(),
            got: residuals.len(),
        });
    }
    let lam = fit.penalty.lambda;
    let bound: Vec<f64> = match fit.penalty.kind {
        PenaltyKind::L1 => vec![lam; coefs.len()],
        PenaltyKind::L2 => coefs.iter().map(|b| lam * b.abs()).collect(),
        PenaltyKind::Rkhs => {
            let Model::Kernel(k) = &fit.model.model else {
                return Err(Error::Unsupported("RKHS penalty needs a kernel model"));
            };
            let g = k.center_gram();
            (0..coefs.len())
                .map(|i| lam * (0..coefs.len()).map(|j| g[(i, j)] * coefs[j]).sum::<f64>().abs())
                .collect()
        }
    };
    let tol = 10.0 * fit.grad_tol;
    let satisfied = residuals.iter().zip(&bound).map(|(r, b)| r.abs() <= b + tol).collect();
    let max_violation = residuals.iter().zip(&bound).map(|(r, b)| r.abs() - b).fold(0.0, f64::max);
    Ok(BalanceReport {
        residuals,
        bound,
        satisfied,
        max_violation,
        tol,
    })
}

/// `w_i = alpha(X_i)` for treated and `-alpha(X_i)` for control units.
pub fn extract_dual_weights(alpha: &dyn EvaluableFn, data: &Dataset) -> Result<Vec<f64>> {
    data.require_treatment_layout()?;
    Ok((0..data.n())
        .map(|i| {
            let a = alpha.value(data.x(i));
            if data.treatment(i) {
                a
            } else {
                -a
            }
        })
        .collect())
}

/// Nearest-neighbor matches across treatment arms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchStructure {
    pub m_neighbors: usize,
    /// `J_M(i)`: the `M` nearest opposite-arm units of unit `i`.
    pub match_sets: Vec<Vec<usize>>,
    /// `K_M(i)`: how often unit `i` is matched by opposite-arm units.
    pub matched_counts: Vec<usize>,
}

/// Euclidean `M`-nearest-neighbor matching on the covariates `Z`, ties
/// broken by lower index.
pub fn nn_match(data: &Dataset, m: usize) -> Result<MatchStructure> {
    data.require_treatment_layout()?;
    if m == 0 {
        return Err(Error::InvalidSize { what: "M", got: 0, min: 1 });
    }
    let (n0, n1) = data.arm_sizes();
    for (arm, got) in [(1u8, n1), (0u8, n0)] {
        if got < m {
            return Err(Error::InsufficientArm { arm, got, min: m });
        }
    }
    let n = data.n();
    let mut match_sets = Vec::with_capacity(n);
    let mut matched_counts = vec![0; n];
    for i in 0..n {
        let zi = data.z(i);
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| data.treatment(j) != data.treatment(i))
            .map(|j| (sq_dist(zi, data.z(j)), j))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let set: Vec<usize> = cand[..m].iter().map(|&(_, j)| j).collect();
        for &j in &set {
            matched_counts[j] += 1;
        }
        match_sets.push(set);
    }
    Ok(MatchStructure {
        m_neighbors: m,
        match_sets,
        matched_counts,
    })
}

/// Matching estimator `(1/n) sum_i (2 D_i - 1) (1 + K_M(i) / M) Y_i`.
pub fn nn_matching_ate(data: &Dataset, m: usize) -> Result<f64> {
    let ms = nn_match(data, m)?;
    let mf = m as f64;
    let s: f64 = (0..data.n())
        .map(|i| {
            let sign = if data.treatment(i) { 1.0 } else { -1.0 };
            sign * (1.0 + ms.matched_counts[i] as f64 / mf) * data.y(i)
        })
        .sum();
    Ok(s / data.n() as f64)
}

/// Matching estimator as a difference of imputed potential-outcome means.
pub fn nn_matching_ate_imputed(data: &Dataset, m: usize) -> Result<f64> {
    let ms = nn_match(data, m)?;
    let mf = m as f64;
    let s: f64 = (0..data.n())
        .map(|i| {
            let own = data.y(i);
            let other = ms.match_sets[i].iter().map(|&j| data.y(j)).sum::<f64>() / mf;
            if data.treatment(i) {
                own - other
            } else {
                other - own
            }
        })
        .sum();
    Ok(s / data.n() as f64)
}

/// Indicator-basis LSIF ratio at each unit: the cell of unit `i` is its
/// catchment area against its own arm, the numerator moment counts the `M`
/// same-arm units of the cell and every opposite-arm unit inside it, and
/// the denominator moment is `M / n`.
pub fn nn_lsif_weights(data: &Dataset, m: usize) -> Result<Vec<f64>> {
    nn_match(data, m)?;
    let n = data.n();
    let nf = n as f64;
    let mf = m as f64;
    (0..n)
        .map(|i| {
            let arm = data.treatment(i);
            let reference: Vec<Vec<f64>> = (0..n).filter(|&j| data.treatment(j) == arm).map(|j| data.z(j).to_vec()).collect();
            let cell = Cell::Catchment {
                center: data.z(i).to_vec(),
                reference,
                m,
            };
            let mut inside = 0usize;
            for j in (0..n).filter(|&j| data.treatment(j) != arm) {
                if cell.contains(data.z(j))? {
                    inside += 1;
                }
            }
            let h_big = mf / nf;
            let h_small = (mf + inside as f64) / nf;
            Ok(h_small / h_big)
        })
        .collect()
}

/// `max_i |r_LSIF(i) - (1 + K_M(i) / M)|`.
pub fn nn_lsif_equivalence(data: &Dataset, m: usize) -> Result<f64> {
    let ms = nn_match(data, m)?;
    let w = nn_lsif_weights(data, m)?;
    Ok(w.iter()
        .zip(&ms.matched_counts)
        .map(|(r, &k)| (r - (1.0 + k as f64 / m as f64)).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Layout;
    use crate::fit::{Penalty, RieszModel};
    use crate::links::{LinkKind, LinkSpec};
    use crate::losses::LossSpec;
    use crate::models::{BasisKind, LinearModel};

    fn four_units() -> Dataset {
        let x = vec![1.0, 0.0, 1.0, 2.0, 0.0, 0.1, 0.0, 1.9];
        Dataset::new(x, vec![1.0, 3.0, 0.0, 2.0], 2, Layout::TreatmentFirst).unwrap()
    }

    #[test]
    fn hand_example_residual_and_weights() {
        let data = Dataset::new(vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0], 2, Layout::TreatmentFirst).unwrap();
        let alpha = |x: &[f64]| 2.0 * x[0];
        let d_basis = BasisSpec::new(BasisKind::Polynomial { degree: 1 });
        let r = raw_residuals(&alpha, &data, &Functional::Ate, &d_basis).unwrap();
        // Features (1, d, z); the d coordinate is balanced.
        assert_eq!(r[1], 0.0);
        let w = extract_dual_weights(&|x: &[f64]| if x[0] > 0.5 { 2.0 } else { -2.0 }, &data).unwrap();
        assert_eq!(w, vec![2.0, 2.0]);
    }

    #[test]
    fn report_uses_penalty_bound() {
        let data = four_units();
        let basis = BasisSpec::new(BasisKind::RawPlusIntercept);
        let model = Model::Linear(LinearModel {
            basis: basis.clone(),
            beta: vec![0.0, 1.0, 0.5],
        });
        let fit = FitResult {
            model: RieszModel::new(model, LinkSpec::new(LinkKind::Raw)),
            loss: LossSpec::sq(0.0),
            penalty: Penalty::l2(0.1),
            objective: 0.0,
            grad_norm: 0.0,
            iterations: 0,
            converged: true,
            grad_tol: 1e-8,
            trace: vec![],
            balance_residuals: vec![],
        };
        let rep = balance_residuals(&fit, &data, &Functional::Ate, &basis).unwrap();
        assert_eq!(rep.bound, vec![0.0, 0.1, 0.05]);
        let other = BasisSpec::new(BasisKind::Polynomial { degree: 2 });
        assert!(balance_residuals(&fit, &data, &Functional::Ate, &other).is_err());
    }

    #[test]
    fn four_unit_matching() {
        let data = four_units();
        let ms = nn_match(&data, 1).unwrap();
        assert_eq!(ms.matched_counts, vec![1, 1, 1, 1]);
        assert_eq!(ms.match_sets, vec![vec![2], vec![3], vec![0], vec![1]]);
        assert_eq!(nn_matching_ate(&data, 1).unwrap(), 1.0);
        assert_eq!(nn_matching_ate_imputed(&data, 1).unwrap(), 1.0);
        assert_eq!(nn_lsif_equivalence(&data, 1).unwrap(), 0.0);
        assert_eq!(nn_lsif_weights(&data, 1).unwrap(), vec![2.0; 4]);
        let flat = Dataset::new(data.rows().flatten().copied().collect(), vec![7.0; 4], 2, Layout::TreatmentFirst).unwrap();
        assert_eq!(nn_matching_ate(&flat, 1).unwrap(), 0.0);
    }

    #[test]
    fn exhaustive_and_tied_matching() {
        let data = four_units();
        let ms = nn_match(&data, 2).unwrap();
        assert!(ms.match_sets.iter().all(|s| s.len() == 2));
        assert_eq!(ms.matched_counts, vec![2; 4]);
        let tied = Dataset::new(vec![1.0, 0.0, 0.0, 1.0, 0.0, -1.0], vec![0.0; 3], 2, Layout::TreatmentFirst).unwrap();
        assert_eq!(nn_match(&tied, 1).unwrap().match_sets[0], vec![1]);
        assert!(matches!(nn_match(&tied, 2), Err(Error::InsufficientArm { arm: 1, .. })));
        let pair = Dataset::new(vec![1.0, 0.3, 0.0, 0.9], vec![4.0, 1.5], 2, Layout::TreatmentFirst).unwrap();
        assert_eq!(nn_matching_ate(&pair, 1).unwrap(), 2.5);
    }
}
