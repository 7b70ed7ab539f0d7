use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned box `lower <= x < upper`; missing bounds are unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCell {
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

/// A region of input space used by indicator bases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Cell {
    Box(BoxCell),
    /// Points `x` with `center` among the `m` nearest members of `reference`:
    /// `|center - x| <= d_m(x)`, where `d_m(x)` is the distance from `x` to
    /// its `m`-th nearest point of `reference`.
    Catchment {
        center: Vec<f64>,
        reference: Vec<Vec<f64>>,
        m: usize,
    },
}

impl Cell {
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        match self {
            Cell::Box(b) => {
                if b.lower.len() != x.len() || b.upper.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: b.lower.len(),
                        got: x.len(),
                    });
                }
                Ok(x.iter()
                    .zip(&b.lower)
                    .zip(&b.upper)
                    .all(|((&v, lo), hi)| lo.is_none_or(|lo| v >= lo) && hi.is_none_or(|hi| v < hi)))
            }
            Cell::Catchment { center, reference, m } => {
                if center.len() != x.len() {
                    return Err(Error::DimensionMismatch {
                        expected: center.len(),
                        got: x.len(),
                    });
                }
                if *m == 0 || *m > reference.len() {
                    return Err(Error::InvalidSize {
                        what: "catchment reference set",
                        got: reference.len(),
                        min: (*m).max(1),
                    });
                }
                let mut d: Vec<f64> = reference.iter().map(|r| sq_dist(r, x)).collect();
                d.sort_by(f64::total_cmp);
                Ok(sq_dist(center, x) <= d[*m - 1])
            }
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum BasisKind {
    /// `(1, x_1, ..., x_d)`.
    RawPlusIntercept,
    /// All monomials of total degree `<= degree`, graded then lexicographic.
    Polynomial { degree: usize },
    /// `exp(-|x - c_k|^2 / (2 bandwidth^2))` per center, optionally preceded by 1.
    GaussianRbf {
        centers: Vec<Vec<f64>>,
        bandwidth: f64,
        #[serde(default)]
        intercept: bool,
    },
    /// `1[x in cell_k]` per cell.
    Indicator { cells: Vec<Cell> },
}

/// A feature map `phi: R^d -> R^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// Drop the leading treatment coordinate before evaluation.
    #[serde(default)]
    pub on_z_only: bool,
}

/// Exponent multisets of all monomials up to `degree` in `d` variables,
/// each as a sorted list of variable indices.
fn monomials(d: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..degree {
        let mut next = Vec::new();
        for m in &layer {
            let start = m.last().copied().unwrap_or(0);
            for j in start..d {
                let mut t = m.clone();
                t.push(j);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

impl BasisSpec {
    pub fn new(kind: BasisKind) -> Self {
        BasisSpec { kind, on_z_only: false }
    }

    pub fn on_z(mut self) -> Self {
        self.on_z_only = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            BasisKind::GaussianRbf { centers, bandwidth, .. } => {
                if !(*bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "bandwidth",
                        value: *bandwidth,
                        reason: "must be > 0",
                    });
                }
                if centers.is_empty() {
                    return Err(Error::InvalidSize {
                        what: "RBF centers",
                        got: 0,
                        min: 1,
                    });
                }
                Ok(())
            }
            BasisKind::Indicator { cells } if cells.is_empty() => Err(Error::InvalidSize {
                what: "indicator cells",
                got: 0,
                min: 1,
            }),
            _ => Ok(()),
        }
    }

    fn input<'a>(&self, x: &'a [f64]) -> Result<&'a [f64]> {
        if self.on_z_only {
            if x.len() < 2 {
                return Err(Error::DimensionMismatch { expected: 2, got: x.len() });
            }
            Ok(&x[1..])
        } else {
            Ok(x)
        }
    }

    /// Output dimension `p` for inputs of width `dim`.
    pub fn n_features(&self, dim: usize) -> usize {
        let d = if self.on_z_only { dim.saturating_sub(1) } else { dim };
        match &self.kind {
            BasisKind::RawPlusIntercept => d + 1,
            BasisKind::Polynomial { degree } => monomials(d, *degree).len(),
            BasisKind::GaussianRbf { centers, intercept, .. } => centers.len() + usize::from(*intercept),
            BasisKind::Indicator { cells } => cells.len(),
        }
    }

    /// `phi(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        let z = self.input(x)?;
        match &self.kind {
            BasisKind::RawPlusIntercept => {
                out.push(1.0);
                out.extend_from_slice(z);
            }
            BasisKind::Polynomial { degree } => {
                for m in monomials(z.len(), *degree) {
                    out.push(m.iter().map(|&j| z[j]).product());
                }
            }
            BasisKind::GaussianRbf { centers, bandwidth, intercept } => {
                if *intercept {
                    out.push(1.0);
                }
                let s = -0.5 / (bandwidth * bandwidth);
                for c in centers {
                    if c.len() != z.len() {
                        return Err(Error::DimensionMismatch {
                            expected: c.len(),
                            got: z.len(),
                        });
                    }
                    out.push(libm::exp(s * sq_dist(c, z)));
                }
            }
            BasisKind::Indicator { cells } => {
                for c in cells {
                    out.push(if c.contains(z)? { 1.0 } else { 0.0 });
                }
            }
        }
        Ok(())
    }

    /// `d phi(x) / d x_j`, with `j` indexing the full input vector.
    pub fn partial(&self, x: &[f64], j: usize) -> Result<Vec<f64>> {
        if j >= x.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: j });
        }
        let p = self.n_features(x.len());
        if self.on_z_only && j == 0 {
            return match self.kind {
                BasisKind::Indicator { .. } => Err(Error::NotDifferentiable { coordinate: j }),
                _ => Ok(vec![0.0; p]),
            };
        }
        let z = self.input(x)?;
        let jz = if self.on_z_only { j - 1 } else { j };
        match &self.kind {
            BasisKind::RawPlusIntercept => {
                let mut out = vec![0.0; p];
                out[jz + 1] = 1.0;
                Ok(out)
            }
            BasisKind::Polynomial { degree } => Ok(monomials(z.len(), *degree)
                .iter()
                .map(|m| {
                    let e = m.iter().filter(|&&k| k == jz).count();
                    if e == 0 {
                        return 0.0;
                    }
                    let rest: f64 = m.iter().filter(|&&k| k != jz).map(|&k| z[k]).product();
                    e as f64 * libm::pow(z[jz], (e - 1) as f64) * rest
                })
                .collect()),
            BasisKind::GaussianRbf { centers, bandwidth, intercept } => {
                let s2 = bandwidth * bandwidth;
                let mut out = Vec::with_capacity(p);
                if *intercept {
                    out.push(0.0);
                }
                for c in centers {
                    let k = libm::exp(-0.5 * sq_dist(c, z) / s2);
                    out.push(-(z[jz] - c[jz]) / s2 * k);
                }
                Ok(out)
            }
            BasisKind::Indicator { .. } => Err(Error::NotDifferentiable { coordinate: j }),
        }
    }
}

/// `phi(x)`.
pub fn basis_eval(basis: &BasisSpec, x: &[f64]) -> Result<Vec<f64>> {
    basis.eval(x)
}

/// `d phi(x) / d x_j`.
pub fn basis_partial(basis: &BasisSpec, x: &[f64], j: usize) -> Result<Vec<f64>> {
    basis.partial(x, j)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_layout() {
        let b = BasisSpec::new(BasisKind::Polynomial { degree: 1 });
        assert_eq!(basis_eval(&b, &[2.0, 3.0]).unwrap(), [1.0, 2.0, 3.0]);
        let b2 = BasisSpec::new(BasisKind::Polynomial { degree: 2 });
        assert_eq!(basis_eval(&b2, &[2.0, 3.0]).unwrap(), [1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
        assert_eq!(b2.n_features(4), 15);
        assert_eq!(basis_partial(&b2, &[2.0], 0).unwrap(), [0.0, 1.0, 4.0]);
        assert_eq!(basis_partial(&b, &[5.0, -1.0, 2.0], 0).unwrap(), [0.0, 1.0, 0.0, 0.0]);
        let z = BasisSpec::new(BasisKind::RawPlusIntercept).on_z();
        assert_eq!(basis_eval(&z, &[1.0, 4.0, 5.0]).unwrap(), [1.0, 4.0, 5.0]);
        assert_eq!(basis_partial(&z, &[1.0, 4.0, 5.0], 0).unwrap(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn rbf_values_and_partials() {
        let c = vec![0.5, -1.0];
        let b = BasisSpec::new(BasisKind::GaussianRbf {
            centers: vec![c.clone(), vec![2.0, 2.0]],
            bandwidth: 0.8,
            intercept: true,
        });
        assert_eq!(basis_eval(&b, &c).unwrap()[1], 1.0);
        let x = [0.1, 0.4];
        for j in 0..2 {
            let an = basis_partial(&b, &x, j).unwrap();
            let h = 1e-6;
            let mut xp = x;
            xp[j] += h;
            let up = basis_eval(&b, &xp).unwrap();
            xp[j] -= 2.0 * h;
            let down = basis_eval(&b, &xp).unwrap();
            for k in 0..3 {
                let fd = (up[k] - down[k]) / (2.0 * h);
                assert!((fd - an[k]).abs() <= 1e-6 * (1.0 + an[k].abs()));
            }
        }
    }

    #[test]
    fn polynomial_partials_match_finite_differences() {
        let b = BasisSpec::new(BasisKind::Polynomial { degree: 3 });
        let x = [0.7, -1.3, 0.4];
        for j in 0..3 {
            let an = basis_partial(&b, &x, j).unwrap();
            let h = 1e-6;
            let mut xp = x;
            xp[j] += h;
            let up = basis_eval(&b, &xp).unwrap();
            xp[j] -= 2.0 * h;
            let down = basis_eval(&b, &xp).unwrap();
            for k in 0..an.len() {
                assert!(((up[k] - down[k]) / (2.0 * h) - an[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn indicator_cells() {
        let cells = vec![
            Cell::Box(BoxCell {
                lower: vec![None],
                upper: vec![Some(0.0)],
            }),
            Cell::Box(BoxCell {
                lower: vec![Some(0.0)],
                upper: vec![None],
            }),
        ];
        let b = BasisSpec::new(BasisKind::Indicator { cells });
        assert_eq!(basis_eval(&b, &[1.5]).unwrap(), [0.0, 1.0]);
        assert_eq!(basis_eval(&b, &[0.0]).unwrap(), [0.0, 1.0]);
        assert!(matches!(basis_partial(&b, &[1.0], 0), Err(Error::NotDifferentiable { .. })));
    }

    #[test]
    fn catchment_membership() {
        let reference = vec![vec![0.0], vec![1.0], vec![5.0]];
        let cell = Cell::Catchment {
            center: vec![1.0],
            reference,
            m: 1,
        };
        assert!(cell.contains(&[1.2]).unwrap());
        assert!(cell.contains(&[2.9]).unwrap());
        assert!(!cell.contains(&[3.1]).unwrap());
        assert!(!cell.contains(&[0.4]).unwrap());
    }
}
