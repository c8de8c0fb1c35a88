//! Linear least squares with an intercept, minimum-norm when rank deficient.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Weights and bias minimizing the mean squared error of `w·x + b` against `y`.
///
/// Solved through an SVD of the design matrix `[X | 1]`; singular values
/// below `max_sv · max(m, n) · ε` are treated as zero, which yields the
/// minimum-norm solution for rank-deficient or underdetermined systems.
pub fn fit_linear(x: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    if x.is_empty() {
        return Err(Error::Empty("least-squares design matrix"));
    }
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} targets", x.len(), y.len())));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidInput("ragged design matrix".into()));
    }
    let m = x.len();
    let design = DMatrix::from_fn(m, dim + 1, |i, j| if j < dim { x[i][j] } else { 1.0 });
    let target = DVector::from_column_slice(y);

    let svd = design.svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * (m.max(dim + 1) as f64) * f64::EPSILON;
    let sol = svd
        .solve(&target, eps)
        .map_err(|e| Error::Training(format!("least squares failed: {e}")))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("least squares produced non-finite weights".into()));
    }
    let w = sol.rows(0, dim).iter().copied().collect();
    Ok((w, sol[dim]))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..5).map(|i| 2.0 * i as f64 + 1.0).collect();
        let (w, b) = fit_linear(&x, &y).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-12);
        assert!((b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_features_fit_the_mean() {
        let x = vec![vec![0.0, 0.0]; 3];
        let (w, b) = fit_linear(&x, &[4.0, 5.0, 6.0]).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-12), "{w:?}");
        assert!((b - 5.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_consistent_system_is_interpolated() {
        let x = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 2.0]];
        let y = [3.0, -2.0];
        let (w, b) = fit_linear(&x, &y).unwrap();
        for (r, t) in x.iter().zip(y) {
            assert!((dot(&w, r) + b - t).abs() < 1e-10);
        }
    }

    #[test]
    fn mismatched_lengths_error() {
        assert!(fit_linear(&[vec![1.0]], &[1.0, 2.0]).is_err());
        assert!(fit_linear(&[], &[]).is_err());
    }
}
