//! Dense helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky.
pub fn solve_spd(a: DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let chol = a.cholesky().ok_or(Error::Singular)?;
    let x = chol.solve(&DVector::from_column_slice(b));
    if x.iter().all(|v| v.is_finite()) {
        Ok(x.iter().copied().collect())
    } else {
        Err(Error::Singular)
    }
}

/// Ridge normal equations `(X'X + ridge I) beta = X'y` for row-major `x`
/// with `p` columns.
pub fn ridge_solve(x: &[f64], y: &[f64], p: usize, ridge: f64) -> Result<Vec<f64>> {
    let n = y.len();
    let xm = DMatrix::from_row_slice(n, p, x);
    let mut a = xm.transpose() * &xm;
    for j in 0..p {
        a[(j, j)] += ridge;
    }
    let b = xm.transpose() * DVector::from_column_slice(y);
    solve_spd(a, b.as_slice())
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_solve_and_singularity() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let x = solve_spd(a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(solve_spd(s, &[1.0, 1.0]), Err(Error::Singular));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
