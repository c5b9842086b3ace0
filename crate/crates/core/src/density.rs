//! Log-density kernels: multivariate gamma, Wishart, singular Wishart and the
//! normal likelihood of a class about its own sample mean.
//!
//! Everything is returned on the log scale. Terms involving `Σ⁻¹` go through a
//! Cholesky factor of `Σ`.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor, DEFAULT_RANK_TOL};
use crate::stats::ClassStats;

pub(crate) const LN_PI: f64 = 1.144_729_885_849_400_2;
pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log Γ_p(x) = p(p−1)/4 · log π + Σ_{l=1}^{p} log Γ(x − (l−1)/2)`.
pub fn log_multivariate_gamma(p: usize, x: f64) -> Result<f64> {
    let pf = p as f64;
    if !(x > (pf - 1.0) / 2.0) {
        return Err(Error::Domain(format!(
            "multivariate gamma of order {p} needs x > {}, got {x}",
            (pf - 1.0) / 2.0
        )));
    }
    let terms: f64 = (0..p).map(|l| ln_gamma(x - l as f64 / 2.0)).sum();
    Ok(pf * (pf - 1.0) / 4.0 * LN_PI + terms)
}

/// The part of a Wishart-type log density that depends on `Σ`:
/// `−(ν/2) log|Σ| − ½ tr(Σ⁻¹ s)`.
pub(crate) fn sigma_terms(factor: &SpdFactor, s: &DMatrix<f64>, nu: f64) -> f64 {
    -0.5 * nu * factor.log_det() - 0.5 * factor.trace_solve(s)
}

/// `Σ`-free part of the Wishart log density for a full-rank `s`.
pub(crate) fn wishart_constant(p: usize, nu: f64, log_det_s: f64) -> Result<f64> {
    let pf = p as f64;
    Ok(-0.5 * nu * pf * LN_2 - log_multivariate_gamma(p, nu / 2.0)?
        + 0.5 * (nu - pf - 1.0) * log_det_s)
}

/// `Σ`-free part of the singular Wishart log density for an `s` of rank `a`.
pub(crate) fn singular_wishart_constant(
    p: usize,
    rank: usize,
    nu: f64,
    pseudo_log_det_s: f64,
) -> Result<f64> {
    let pf = p as f64;
    Ok(-0.5 * nu * pf * LN_2 - log_multivariate_gamma(rank, nu / 2.0)?
        + 0.5 * (nu * nu - pf * nu) * LN_PI
        + 0.5 * (nu - pf - 1.0) * pseudo_log_det_s)
}

fn check_dims(s: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<usize> {
    let p = s.nrows();
    if s.ncols() != p || sigma.nrows() != p || sigma.ncols() != p {
        return Err(Error::Domain(format!(
            "dimension mismatch: s is {}x{}, sigma is {}x{}",
            s.nrows(),
            s.ncols(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    Ok(p)
}

/// Wishart log density of a full-rank scatter matrix `s` with centering
/// matrix `sigma` and `nu` degrees of freedom.
pub fn wishart_log_density(s: &DMatrix<f64>, sigma: &DMatrix<f64>, nu: f64) -> Result<f64> {
    let p = check_dims(s, sigma)?;
    let (log_det_s, rank) = linalg::log_det_and_rank(s, DEFAULT_RANK_TOL)?;
    if rank < p {
        return Err(Error::Rank {
            class_id: None,
            rank,
            p,
            expected: "full rank; use the singular Wishart density",
        });
    }
    let factor = SpdFactor::new(sigma)?;
    Ok(wishart_constant(p, nu, log_det_s)? + sigma_terms(&factor, s, nu))
}

/// Singular Wishart log density of a rank-deficient scatter matrix.
///
/// The determinant of `s` is replaced by the product of its non-zero
/// eigenvalues and the multivariate gamma has order `rank(s)`.
pub fn singular_wishart_log_density(
    s: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    nu: f64,
) -> Result<f64> {
    let p = check_dims(s, sigma)?;
    let (pseudo, rank) = linalg::log_det_and_rank(s, DEFAULT_RANK_TOL)?;
    if rank == p {
        return Err(Error::Rank {
            class_id: None,
            rank,
            p,
            expected: "rank below dimension; use the Wishart density",
        });
    }
    if rank == 0 {
        return Err(Error::Rank {
            class_id: None,
            rank,
            p,
            expected: "at least one non-zero eigenvalue",
        });
    }
    let factor = SpdFactor::new(sigma)?;
    Ok(singular_wishart_constant(p, rank, nu, pseudo)? + sigma_terms(&factor, s, nu))
}

/// Sum of normal log densities of a class's observations about its own
/// sample mean: `−(n p/2) log 2π − (n/2) log|Σ| − ½ tr(Σ⁻¹ s)`.
pub fn class_log_likelihood(stats: &ClassStats, sigma: &DMatrix<f64>) -> Result<f64> {
    check_dims(&stats.scatter, sigma)?;
    let factor = SpdFactor::new(sigma)?;
    Ok(class_log_likelihood_factored(stats, &factor))
}

pub(crate) fn class_log_likelihood_factored(stats: &ClassStats, factor: &SpdFactor) -> f64 {
    let n = stats.count as f64;
    let p = stats.dim() as f64;
    -0.5 * n * p * LN_2PI + sigma_terms(factor, &stats.scatter, n)
}

/// Multivariate normal log density `log φ(y; μ, Σ)` given a factor of `Σ`.
pub fn normal_log_density(y: &DVector<f64>, mean: &DVector<f64>, factor: &SpdFactor) -> f64 {
    let p = y.len() as f64;
    -0.5 * (p * LN_2PI + factor.log_det() + factor.mahalanobis_sq(&(y - mean)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn m(rows: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, rows, data)
    }

    #[test]
    fn constants() {
        assert_abs_diff_eq!(LN_PI, PI.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(LN_2PI, (2.0 * PI).ln(), epsilon = 1e-15);
    }

    #[test]
    fn multivariate_gamma_examples() {
        assert_abs_diff_eq!(log_multivariate_gamma(1, 2.0).unwrap(), 0.0, epsilon = 1e-14);
        // log(π/2) and log(π²/2), product formula oracle
        assert_abs_diff_eq!(
            log_multivariate_gamma(2, 1.5).unwrap(),
            0.451_582_705_289_454_8,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            log_multivariate_gamma(3, 2.0).unwrap(),
            1.596_312_591_138_855,
            epsilon = 1e-12
        );
        assert!(matches!(log_multivariate_gamma(3, 1.0), Err(Error::Domain(_))));
        assert!(log_multivariate_gamma(2, 0.5).is_err());
    }

    #[test]
    fn wishart_scalar_matches_chi_square() {
        let w = wishart_log_density(&m(1, &[2.0]), &m(1, &[1.0]), 2.0).unwrap();
        assert_abs_diff_eq!(w, -1.0 - 2f64.ln(), epsilon = 1e-12);
        let w = wishart_log_density(&m(1, &[1.0]), &m(1, &[1.0]), 1.0).unwrap();
        assert_abs_diff_eq!(w, -1.418_938_533_204_672_7, epsilon = 1e-12);
    }

    #[test]
    fn wishart_matches_scipy_p2() {
        let s = m(2, &[4.0, 1.0, 1.0, 3.0]);
        let sigma = m(2, &[2.0, 0.3, 0.3, 1.0]);
        let w = wishart_log_density(&s, &sigma, 5.0).unwrap();
        assert_abs_diff_eq!(w, -6.003_379_532_838_515, epsilon = 1e-10);
    }

    #[test]
    fn wishart_scaling_invariance() {
        // tr((cΣ)⁻¹ s) = tr(Σ⁻¹ (s/c)); only the determinant terms differ.
        let s = m(2, &[4.0, 1.0, 1.0, 3.0]);
        let sigma = m(2, &[2.0, 0.3, 0.3, 1.0]);
        let (c, nu, p) = (2.5_f64, 6.0_f64, 2.0_f64);
        let lhs = wishart_log_density(&s, &(&sigma * c), nu).unwrap();
        let rhs = wishart_log_density(&(&s / c), &sigma, nu).unwrap();
        let expected_gap = -0.5 * nu * p * c.ln() + 0.5 * (nu - p - 1.0) * p * c.ln();
        assert_abs_diff_eq!(lhs - rhs, expected_gap, epsilon = 1e-11);
    }

    #[test]
    fn wishart_rejects_singular_scatter() {
        let err = wishart_log_density(&m(2, &[1.0, 0.0, 0.0, 0.0]), &m(2, &[1.0, 0.0, 0.0, 1.0]), 3.0);
        assert!(matches!(err, Err(Error::Rank { rank: 1, p: 2, .. })));
        let err = wishart_log_density(&m(1, &[1.0]), &m(1, &[-1.0]), 3.0);
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn singular_wishart_examples() {
        let s = m(2, &[1.0, 0.0, 0.0, 0.0]);
        let v = singular_wishart_log_density(&s, &DMatrix::identity(2, 2), 1.0).unwrap();
        assert_abs_diff_eq!(v, -2.337_877_066_409_345_3, epsilon = 1e-12);

        let s3 = m(3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let sig = m(3, &[1.5, 0.2, 0.1, 0.2, 1.0, 0.0, 0.1, 0.0, 2.0]);
        let v = singular_wishart_log_density(&s3, &sig, 2.0).unwrap();
        assert_abs_diff_eq!(v, -8.112_986_270_859_013, epsilon = 1e-10);

        let full = singular_wishart_log_density(&m(2, &[1.0, 0.0, 0.0, 1.0]), &sig.view((0, 0), (2, 2)).into(), 2.0);
        assert!(matches!(full, Err(Error::Rank { .. })));
    }

    #[test]
    fn singular_wishart_relative_comparison() {
        let s = m(3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let s1 = m(3, &[1.5, 0.2, 0.1, 0.2, 1.0, 0.0, 0.1, 0.0, 2.0]);
        let s2 = m(3, &[0.7, -0.1, 0.0, -0.1, 3.0, 0.4, 0.0, 0.4, 1.2]);
        let nu = 2.0;
        let diff = singular_wishart_log_density(&s, &s1, nu).unwrap()
            - singular_wishart_log_density(&s, &s2, nu).unwrap();
        let f1 = SpdFactor::new(&s1).unwrap();
        let f2 = SpdFactor::new(&s2).unwrap();
        let expected = -(nu / 2.0) * (f1.log_det() - f2.log_det())
            - 0.5 * (f1.trace_solve(&s) - f2.trace_solve(&s));
        assert_abs_diff_eq!(diff, expected, epsilon = 1e-12);
    }

    fn stats_of(rows: usize, p: usize, data: &[f64]) -> ClassStats {
        ClassStats::from_observations("c", &DMatrix::from_row_slice(rows, p, data)).unwrap()
    }

    #[test]
    fn class_log_likelihood_examples() {
        let st = stats_of(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let v = class_log_likelihood(&st, &DMatrix::identity(3, 3)).unwrap();
        assert_abs_diff_eq!(v, -3.0 * (2.0 * PI).ln(), epsilon = 1e-12);

        // scatter of {0, 2} is 2
        let st = stats_of(2, 1, &[0.0, 2.0]);
        let v = class_log_likelihood(&st, &m(1, &[1.0])).unwrap();
        assert_abs_diff_eq!(v, -(2.0 * PI).ln() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn wishart_integrates_to_one_p1() {
        // composite Simpson on (0, 60], ν = 3, σ² = 1
        let sigma = m(1, &[1.0]);
        let n = 60_000;
        let (a, b) = (0.0_f64, 60.0_f64);
        let h = (b - a) / n as f64;
        let f = |x: f64| {
            if x <= 0.0 {
                0.0
            } else {
                wishart_log_density(&m(1, &[x]), &sigma, 3.0).unwrap().exp()
            }
        };
        let mut total = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            total += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        let integral = total * h / 3.0;
        assert!((integral - 1.0).abs() < 1e-4, "integral {integral}");
    }
}
