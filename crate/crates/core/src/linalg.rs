//! Dense symmetric linear algebra used by the density kernels and classifiers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;
const SYMMETRY_TOL: f64 = 1e-9;

/// Replace `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Max-abs asymmetry relative to the largest entry (or 1 for tiny matrices).
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

fn check_square_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Domain(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = relative_asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(Error::Domain(format!(
            "matrix is not symmetric (relative asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, Dyn>> {
    check_square_symmetric(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))
}

/// Pseudo log-determinant and numerical rank of a symmetric PSD matrix.
///
/// Eigenvalues above `rank_tol * max(λ_max, 1)` count towards the rank and
/// their logs are summed; for a full-rank matrix this is the log-determinant.
pub fn log_det_and_rank(m: &DMatrix<f64>, rank_tol: f64) -> Result<(f64, usize)> {
    let eig = symmetric_eigen(m)?;
    Ok(pseudo_log_det_from_eigenvalues(eig.eigenvalues.as_slice(), rank_tol))
}

pub(crate) fn pseudo_log_det_from_eigenvalues(eigenvalues: &[f64], rank_tol: f64) -> (f64, usize) {
    let lambda_max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = rank_tol * lambda_max.max(1.0);
    eigenvalues
        .iter()
        .filter(|&&l| l > threshold)
        .fold((0.0, 0), |(acc, r), &l| (acc + l.ln(), r + 1))
}

/// Principal square root `V Λ^{1/2} Vᵀ` of a symmetric PSD matrix.
///
/// Slightly negative eigenvalues from round-off are clamped to zero.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen(m)?;
    let scale = eig.eigenvalues.amax().max(1.0);
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l < -1e-8 * scale) {
        return Err(Error::Domain(format!(
            "matrix is not positive semidefinite (eigenvalue {bad:.3e})"
        )));
    }
    let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&root) * v.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Cholesky factor of a symmetric positive definite matrix together with its
/// log-determinant. All `Σ⁻¹·x` products go through triangular solves.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl SpdFactor {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(sigma)?;
        let mut sym = sigma.clone();
        symmetrize(&mut sym);
        let chol = Cholesky::new(sym)
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::Numerical("covariance has a degenerate determinant".into()));
        }
        Ok(Self { chol, log_det })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `tr(Σ⁻¹ s)`.
    pub fn trace_solve(&self, s: &DMatrix<f64>) -> f64 {
        self.chol.solve(s).trace()
    }

    /// `L⁻¹ x` where `Σ = L Lᵀ`.
    pub fn whiten(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(x)
            .expect("cholesky factor has a non-zero diagonal")
    }

    /// `xᵀ Σ⁻¹ x`.
    pub fn mahalanobis_sq(&self, x: &DVector<f64>) -> f64 {
        self.whiten(x).norm_squared()
    }

    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// `log Σ exp(v)` with max shift; `-inf` for an empty or all `-inf` input.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Relative Frobenius distance `‖a − b‖ / ‖b‖`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_det_examples() {
        let (ld, r) = log_det_and_rank(&DMatrix::identity(3, 3), DEFAULT_RANK_TOL).unwrap();
        assert_abs_diff_eq!(ld, 0.0, epsilon = 1e-14);
        assert_eq!(r, 3);

        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let (ld, r) = log_det_and_rank(&m, DEFAULT_RANK_TOL).unwrap();
        assert_abs_diff_eq!(ld, 2f64.ln(), epsilon = 1e-14);
        assert_eq!(r, 1);

        // eigenvalues 1 and 3
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (ld, r) = log_det_and_rank(&m, DEFAULT_RANK_TOL).unwrap();
        assert_abs_diff_eq!(ld, 3f64.ln(), epsilon = 1e-13);
        assert_eq!(r, 2);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let (ld, r) = log_det_and_rank(&DMatrix::zeros(3, 3), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r, 0);
        assert_eq!(ld, 0.0);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(log_det_and_rank(&m, DEFAULT_RANK_TOL), Err(Error::Domain(_))));
    }

    #[test]
    fn sqrt_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_abs_diff_eq!(matrix_sqrt_psd(&id).unwrap(), id, epsilon = 1e-14);

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert_abs_diff_eq!(matrix_sqrt_psd(&d).unwrap(), expected, epsilon = 1e-14);

        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r3 = 3f64.sqrt();
        let expected =
            DMatrix::from_row_slice(2, 2, &[1.0 + r3, r3 - 1.0, r3 - 1.0, 1.0 + r3]) * 0.5;
        assert_abs_diff_eq!(matrix_sqrt_psd(&m).unwrap(), expected, epsilon = 1e-13);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matrix_sqrt_psd(&m).is_err());
    }

    #[test]
    fn spd_factor_traces() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let f = SpdFactor::new(&sigma).unwrap();
        assert_abs_diff_eq!(f.log_det(), 3f64.ln(), epsilon = 1e-13);
        // Σ⁻¹ = (1/3)[[2,-1],[-1,2]], tr(Σ⁻¹ I) = 4/3
        assert_abs_diff_eq!(f.trace_solve(&DMatrix::identity(2, 2)), 4.0 / 3.0, epsilon = 1e-13);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        assert_abs_diff_eq!(f.mahalanobis_sq(&x), 2.0 / 3.0, epsilon = 1e-13);
        assert!(SpdFactor::new(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn logsumexp_handles_extremes() {
        assert_abs_diff_eq!(logsumexp(&[0.0, 0.0]), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(logsumexp(&[-1000.0, -1000.0]), -1000.0 + 2f64.ln(), epsilon = 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY, 1.0]), 1.0);
    }
}
