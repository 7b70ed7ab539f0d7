//! Observation containers, synthetic designs with oracle nuisances, and
//! fold splitting.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Column convention of the regressor vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    Generic,
    /// `x = (d, z)` with a binary treatment `d` in the first column.
    TreatmentFirst,
}

/// Observations `(x_i, y_i)` stored row-major, plus an optional target sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    dim: usize,
    layout: Layout,
    target: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from row-major regressors `x` of width `dim`.
    pub fn new(x: Vec<f64>, y: Vec<f64>, dim: usize, layout: Layout) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSize {
                what: "regressor dimension",
                got: 0,
                min: 1,
            });
        }
        if y.is_empty() {
            return Err(Error::InvalidSize {
                what: "observations",
                got: 0,
                min: 1,
            });
        }
        if x.len() != y.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: y.len() * dim,
                got: x.len(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite value in dataset".into()));
        }
        if layout == Layout::TreatmentFirst && x.chunks_exact(dim).any(|r| r[0] != 0.0 && r[0] != 1.0) {
            return Err(Error::Layout("treatment column must be 0 or 1"));
        }
        Ok(Dataset {
            x,
            y,
            dim,
            layout,
            target: None,
        })
    }

    /// Attaches a row-major target sample of the same width.
    pub fn with_target(mut self, target: Vec<f64>) -> Result<Self> {
        if target.is_empty() || !target.len().is_multiple_of(self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: target.len(),
            });
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite value in target sample".into()));
        }
        self.target = Some(target);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.dim)
    }

    /// Treatment indicator of row `i` (TreatmentFirst layout).
    pub fn treatment(&self, i: usize) -> bool {
        self.x(i)[0] == 1.0
    }

    /// Covariates `z` of row `i` (TreatmentFirst layout).
    pub fn z(&self, i: usize) -> &[f64] {
        &self.x(i)[1..]
    }

    pub fn target_len(&self) -> usize {
        self.target.as_ref().map_or(0, |t| t.len() / self.dim)
    }

    pub fn target(&self, j: usize) -> Option<&[f64]> {
        self.target.as_ref().map(|t| &t[j * self.dim..(j + 1) * self.dim])
    }

    pub fn target_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.target.iter().flat_map(move |t| t.chunks_exact(self.dim))
    }

    /// Rows `idx` of the source sample; the target sample is kept whole.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            x.extend_from_slice(self.x(i));
            y.push(self.y[i]);
        }
        Dataset {
            x,
            y,
            dim: self.dim,
            layout: self.layout,
            target: self.target.clone(),
        }
    }

    /// Rows `idx` of the source sample and rows `target_idx` of the target sample.
    pub fn subset_with_target(&self, idx: &[usize], target_idx: &[usize]) -> Dataset {
        let mut out = self.subset(idx);
        if let Some(t) = &self.target {
            let mut sel = Vec::with_capacity(target_idx.len() * self.dim);
            for &j in target_idx {
                sel.extend_from_slice(&t[j * self.dim..(j + 1) * self.dim]);
            }
            out.target = Some(sel);
        }
        out
    }

    pub fn require_treatment_layout(&self) -> Result<()> {
        if self.layout == Layout::TreatmentFirst {
            Ok(())
        } else {
            Err(Error::Layout("treatment-first layout required"))
        }
    }

    /// Sizes of the control and treated arms.
    pub fn arm_sizes(&self) -> (usize, usize) {
        let treated = (0..self.n()).filter(|&i| self.treatment(i)).count();
        (self.n() - treated, treated)
    }
}

pub const PROPENSITY_CLAMP: f64 = 1e-4;

/// Effect of the treatment in the synthetic ATE design.
pub const ATE_THETA: f64 = 5.0;

/// Coefficients of the synthetic ATE design, drawn once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteCoefficients {
    pub linear: [f64; 3],
    pub quadratic: [f64; 3],
    /// Interactions `z1 z2`, `z2 z3`, `z1 z3`.
    pub interaction: [f64; 3],
    pub outcome_linear: [f64; 3],
    pub outcome_sigmoid: [f64; 3],
}

/// Gaussian mean-shift covariate-shift design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftDesign {
    pub dim: usize,
    /// Common mean of every target coordinate.
    pub shift: f64,
}

impl Default for ShiftDesign {
    fn default() -> Self {
        ShiftDesign { dim: 2, shift: 0.5 }
    }
}

/// True nuisance functions of a synthetic design.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleNuisance {
    Ate(AteCoefficients),
    Shift(ShiftDesign),
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-t))
}

impl OracleNuisance {
    /// `e0(z)` for the ATE design (clamped), `None` otherwise.
    pub fn propensity(&self, z: &[f64]) -> Option<f64> {
        match self {
            OracleNuisance::Ate(c) => {
                let mut h = 0.0;
                for j in 0..3 {
                    h += c.linear[j] * z[j] + c.quadratic[j] * z[j] * z[j];
                }
                h += c.interaction[0] * z[0] * z[1] + c.interaction[1] * z[1] * z[2] + c.interaction[2] * z[0] * z[2];
                Some(sigmoid(h).clamp(PROPENSITY_CLAMP, 1.0 - PROPENSITY_CLAMP))
            }
            OracleNuisance::Shift(_) => None,
        }
    }

    /// `gamma0(x) = E[Y | X = x]`.
    pub fn outcome(&self, x: &[f64]) -> f64 {
        match self {
            OracleNuisance::Ate(c) => {
                let z = &x[1..];
                let lin: f64 = (0..3).map(|j| c.outcome_linear[j] * z[j]).sum();
                let sq: f64 = (0..3).map(|j| c.outcome_sigmoid[j] * z[j] * z[j]).sum();
                1.0 + lin * lin + sigmoid(sq) + ATE_THETA * x[0]
            }
            OracleNuisance::Shift(_) => 1.0 + x.iter().map(|v| v + 0.5 * v * v).sum::<f64>(),
        }
    }

    /// `alpha0(x)`: inverse-propensity contrast or density ratio.
    pub fn representer(&self, x: &[f64]) -> f64 {
        match self {
            OracleNuisance::Ate(_) => {
                let e = self.propensity(&x[1..]).unwrap_or(0.5);
                if x[0] == 1.0 {
                    1.0 / e
                } else {
                    -1.0 / (1.0 - e)
                }
            }
            OracleNuisance::Shift(d) => {
                let s: f64 = x.iter().sum();
                libm::exp(d.shift * s - 0.5 * d.dim as f64 * d.shift * d.shift)
            }
        }
    }

    pub fn theta(&self) -> f64 {
        match self {
            OracleNuisance::Ate(_) => ATE_THETA,
            OracleNuisance::Shift(d) => {
                let m = d.shift;
                1.0 + d.dim as f64 * (m + 0.5 * (1.0 + m * m))
            }
        }
    }
}

/// Synthetic ATE design: `z ~ N(0, I_3)`, logistic propensity in a
/// quadratic index with pairwise interactions, and
/// `y = 1 + (z'a)^2 + sigmoid(sum_j b_j z_j^2) + 5 d + N(0, 1)`.
/// All coefficients are `N(0, 0.5^2)` draws fixed by `seed`.
pub fn gen_synthetic_ate(seed: u64, n: usize) -> Result<(Dataset, OracleNuisance)> {
    if n < 10 {
        return Err(Error::InvalidSize { what: "n", got: n, min: 10 });
    }
    let mut coef = Stream::new(seed, "ate/coefficients");
    let mut draw3 = || -> [f64; 3] { core::array::from_fn(|_| 0.5 * coef.normal()) };
    let coefs = AteCoefficients {
        linear: draw3(),
        quadratic: draw3(),
        interaction: draw3(),
        outcome_linear: draw3(),
        outcome_sigmoid: draw3(),
    };
    let oracle = OracleNuisance::Ate(coefs);
    let mut cov = Stream::new(seed, "ate/covariates");
    let mut treat = Stream::new(seed, "ate/treatment");
    let mut noise = Stream::new(seed, "ate/noise");
    let mut x = Vec::with_capacity(4 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let z: [f64; 3] = core::array::from_fn(|_| cov.normal());
        let e = oracle.propensity(&z).unwrap_or(0.5);
        let d = if treat.bernoulli(e) { 1.0 } else { 0.0 };
        let row = [d, z[0], z[1], z[2]];
        y.push(oracle.outcome(&row) + noise.normal());
        x.extend_from_slice(&row);
    }
    Ok((Dataset::new(x, y, 4, Layout::TreatmentFirst)?, oracle))
}

/// Covariate-shift design with the default dimension and shift.
pub fn gen_covariate_shift(seed: u64, n_source: usize, n_target: usize) -> Result<(Dataset, OracleNuisance)> {
    gen_covariate_shift_with(&ShiftDesign::default(), seed, n_source, n_target)
}

/// Source `x ~ N(0, I)`, target `x ~ N(shift * 1, I)`,
/// `y = 1 + sum_j (x_j + x_j^2 / 2) + N(0, 1)`.
pub fn gen_covariate_shift_with(design: &ShiftDesign, seed: u64, n_source: usize, n_target: usize) -> Result<(Dataset, OracleNuisance)> {
    for (what, got) in [("n_source", n_source), ("n_target", n_target)] {
        if got < 10 {
            return Err(Error::InvalidSize { what, got, min: 10 });
        }
    }
    if design.dim == 0 || !design.shift.is_finite() {
        return Err(Error::Config("shift design needs dim >= 1 and a finite shift".into()));
    }
    let oracle = OracleNuisance::Shift(design.clone());
    let d = design.dim;
    let mut src = Stream::new(seed, "shift/source");
    let mut tgt = Stream::new(seed, "shift/target");
    let mut noise = Stream::new(seed, "shift/noise");
    let mut x = Vec::with_capacity(d * n_source);
    let mut y = Vec::with_capacity(n_source);
    for _ in 0..n_source {
        let start = x.len();
        x.extend((0..d).map(|_| src.normal()));
        y.push(oracle.outcome(&x[start..]) + noise.normal());
    }
    let target: Vec<f64> = (0..d * n_target).map(|_| design.shift + tgt.normal()).collect();
    Ok((Dataset::new(x, y, d, Layout::Generic)?.with_target(target)?, oracle))
}

/// Training and evaluation indices of one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

/// Fold assignment of `0..n`: a seeded shuffle, then position `j` goes to
/// fold `j mod k`.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::InvalidFolds { k, n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    Stream::new(seed, "folds").shuffle(&mut perm);
    let mut fold = alloc::vec![0; n];
    for (j, &i) in perm.iter().enumerate() {
        fold[i] = j % k;
    }
    Ok(fold)
}

/// Partition of `0..n` into `k` folds; indices within each set are sorted.
pub fn split_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let assign = fold_assignment(data.n(), k, seed)?;
    Ok((0..k)
        .map(|f| Fold {
            train: (0..data.n()).filter(|&i| assign[i] != f).collect(),
            eval: (0..data.n()).filter(|&i| assign[i] == f).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ate_shape_and_determinism() {
        let (d, _) = gen_synthetic_ate(1, 3000).unwrap();
        assert_eq!(d.dim(), 4);
        assert_eq!(d.layout(), Layout::TreatmentFirst);
        assert!(d.rows().all(|r| r[0] == 0.0 || r[0] == 1.0));
        let (a, _) = gen_synthetic_ate(1, 100).unwrap();
        let (b, _) = gen_synthetic_ate(1, 100).unwrap();
        assert_eq!(a, b);
        assert!(matches!(gen_synthetic_ate(1, 9), Err(Error::InvalidSize { .. })));
    }

    #[test]
    fn ate_contrast_is_five() {
        let (d, o) = gen_synthetic_ate(2, 50_000).unwrap();
        let mut s = 0.0;
        for i in 0..d.n() {
            let z = d.z(i);
            let x1 = [1.0, z[0], z[1], z[2]];
            let x0 = [0.0, z[0], z[1], z[2]];
            s += o.outcome(&x1) - o.outcome(&x0);
        }
        assert!((s / d.n() as f64 - 5.0).abs() < 0.1);
    }

    #[test]
    fn ate_noise_is_centred() {
        let n = 20_000;
        let (d, o) = gen_synthetic_ate(4, n).unwrap();
        let mean: f64 = (0..n).map(|i| d.y(i) - o.outcome(d.x(i))).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 / libm::sqrt(n as f64));
    }

    #[test]
    fn propensity_is_clamped() {
        let (d, o) = gen_synthetic_ate(5, 100_000).unwrap();
        for i in 0..d.n() {
            let e = o.propensity(d.z(i)).unwrap();
            assert!((PROPENSITY_CLAMP..=1.0 - PROPENSITY_CLAMP).contains(&e));
        }
    }

    #[test]
    fn shift_sizes_and_ratio_mean() {
        let (d, _) = gen_covariate_shift(1, 500, 500).unwrap();
        assert_eq!(d.target_len(), 500);
        let (d, o) = gen_covariate_shift(3, 10_000, 10_000).unwrap();
        let m: f64 = d.rows().map(|r| o.representer(r)).sum::<f64>() / d.n() as f64;
        assert!((m - 1.0).abs() < 0.05, "{m}");
        let flat = ShiftDesign { dim: 3, shift: 0.0 };
        let (d, o) = gen_covariate_shift_with(&flat, 1, 50, 50).unwrap();
        assert!(d.rows().all(|r| o.representer(r) == 1.0));
    }

    #[test]
    fn shift_theta_matches_target_average() {
        let (d, o) = gen_covariate_shift(8, 10, 200_000).unwrap();
        let m: f64 = d.target_rows().map(|r| o.outcome(r)).sum::<f64>() / d.target_len() as f64;
        assert!((m - o.theta()).abs() < 0.02, "{m} vs {}", o.theta());
    }

    #[test]
    fn folds_partition() {
        let (d, _) = gen_synthetic_ate(1, 10).unwrap();
        let f2 = split_folds(&d, 2, 3).unwrap();
        assert_eq!(f2.iter().map(|f| f.eval.len()).collect::<Vec<_>>(), [5, 5]);
        let f3 = split_folds(&d, 3, 3).unwrap();
        let mut sizes: Vec<_> = f3.iter().map(|f| f.eval.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [3, 3, 4]);
        let mut all: Vec<usize> = f3.iter().flat_map(|f| f.eval.iter().copied()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        for f in &f3 {
            assert_eq!(f.train.len() + f.eval.len(), 10);
        }
        assert!(matches!(split_folds(&d, 11, 0), Err(Error::InvalidFolds { k: 11, n: 10 })));
    }
}
