//! Small dense helpers over `nalgebra` for q x q statistic covariances.

use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue threshold below which a symmetric matrix is treated
/// as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-10;

/// Sample mean and covariance (divisor `N - 1`) of row vectors.
pub fn mean_and_covariance<R: AsRef<[f64]>>(rows: &[R]) -> (DVector<f64>, DMatrix<f64>) {
    let q = rows.first().map_or(0, |r| r.as_ref().len());
    let count = rows.len() as f64;
    let mut mean = DVector::zeros(q);
    for r in rows {
        mean += DVector::from_column_slice(r.as_ref());
    }
    mean /= count;
    let mut cov = DMatrix::zeros(q, q);
    for r in rows {
        let d = DVector::from_column_slice(r.as_ref()) - &mean;
        cov += &d * d.transpose();
    }
    if rows.len() > 1 {
        cov /= count - 1.0;
    }
    (mean, cov)
}

/// Weighted mean and covariance with weights summing to one.
pub fn weighted_moments<R: AsRef<[f64]>>(rows: &[R], weights: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let q = rows.first().map_or(0, |r| r.as_ref().len());
    let mut mean = DVector::zeros(q);
    for (r, &w) in rows.iter().zip(weights) {
        mean.axpy(w, &DVector::from_column_slice(r.as_ref()), 1.0);
    }
    let mut cov = DMatrix::zeros(q, q);
    for (r, &w) in rows.iter().zip(weights) {
        let d = DVector::from_column_slice(r.as_ref()) - &mean;
        cov.ger(w, &d, &d, 1.0);
    }
    (mean, cov)
}

/// Inverse of a symmetric positive definite matrix, `None` if it is not
/// numerically positive definite.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if is_singular(m) {
        return None;
    }
    m.clone().cholesky().map(|c| c.inverse())
}

/// Solves `m x = b` for symmetric positive definite `m`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if is_singular(m) {
        return None;
    }
    m.clone().cholesky().map(|c| c.solve(b))
}

pub fn is_singular(m: &DMatrix<f64>) -> bool {
    null_direction(m).is_some()
}

/// Eigenvector of the smallest eigenvalue when that eigenvalue is
/// negligible relative to the largest.
pub fn null_direction(m: &DMatrix<f64>) -> Option<DVector<f64>> {
    if m.nrows() == 0 {
        return None;
    }
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let (idx, min) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    if max == 0.0 || min <= SINGULAR_TOLERANCE * max {
        Some(eig.eigenvectors.column(idx).into_owned())
    } else {
        None
    }
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix.
pub fn symmetric_pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut inv = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > SINGULAR_TOLERANCE * max && lambda != 0.0 {
            let v = eig.eigenvectors.column(i);
            inv += (v * v.transpose()) / lambda;
        }
    }
    inv
}

/// `ln(sum(exp(x)))` without overflow.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_of_known_rows() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![5.0, 8.0]];
        let (mean, cov) = mean_and_covariance(&rows);
        assert_eq!(mean.as_slice(), &[3.0, 4.0]);
        assert!((cov[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((cov[(1, 1)] - 12.0).abs() < 1e-12);
        assert!((cov[(0, 1)] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_of_rank_one() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_inverse(&m).is_none());
        let p = symmetric_pseudo_inverse(&m);
        assert!((&m * &p * &m - &m).norm() < 1e-12);
        let v = null_direction(&m).unwrap();
        assert!((v[0] + v[1]).abs() < 1e-12);
    }

    #[test]
    fn lse() {
        assert!((log_sum_exp([1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
