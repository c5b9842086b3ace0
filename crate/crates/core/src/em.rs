//! EM over class scatter matrices.
//!
//! Three class-conditional models share one loop:
//!
//! * `Wishart`: each scatter is Wishart with the component covariance,
//!   defined only for full-rank scatters.
//! * `SingularWishart`: the same for scatters of rank `a < p`.
//! * `Normal`: the product of normal densities of a class's observations about
//!   its sample mean; accepts any mix of ranks.
//!
//! The component covariance update is always a responsibility-weighted average
//! of scatters, `Σ_k = Σ_i τ_ik s_i / Σ_i τ_ik d_i`, with `d_i = n_i − 1` or
//! `d_i = n_i` depending on [`DfMode`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::density::{self, sigma_terms};
use crate::error::{Error, Result};
use crate::linalg::{self, DEFAULT_RANK_TOL};
use crate::stats::{ClassStats, MixtureParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Wishart,
    SingularWishart,
    Normal,
    /// Resolves to `Normal`, the only variant that accepts mixed ranks.
    Auto,
}

impl Variant {
    pub fn resolve(self) -> Variant {
        match self {
            Variant::Auto => Variant::Normal,
            v => v,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "wishart" => Ok(Variant::Wishart),
            "singular_wishart" => Ok(Variant::SingularWishart),
            "normal" => Ok(Variant::Normal),
            "auto" => Ok(Variant::Auto),
            other => Err(Error::Domain(format!("unknown variant `{other}`"))),
        }
    }
}

/// Degrees of freedom attached to class `i` in densities and in the
/// covariance update denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DfMode {
    NMinus1,
    N,
}

impl DfMode {
    pub fn df(self, count: usize) -> f64 {
        match self {
            DfMode::NMinus1 => count as f64 - 1.0,
            DfMode::N => count as f64,
        }
    }
}

impl std::str::FromStr for DfMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "n" => Ok(DfMode::N),
            "n_minus_1" | "n_minus1" => Ok(DfMode::NMinus1),
            other => Err(Error::Domain(format!("unknown df mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EMConfig {
    pub k: usize,
    /// Relative log-likelihood improvement below which iteration stops.
    pub epsilon: f64,
    pub max_iter: usize,
    pub variant: Variant,
    /// `None` picks the variant's default: `N` for the normal model,
    /// `NMinus1` for the Wishart models.
    pub df_mode: Option<DfMode>,
    /// Added to every covariance diagonal after each M-step.
    pub ridge: f64,
    pub seed: u64,
}

impl Default for EMConfig {
    fn default() -> Self {
        Self {
            k: 1,
            epsilon: 1e-8,
            max_iter: 500,
            variant: Variant::Auto,
            df_mode: None,
            ridge: 0.0,
            seed: 0,
        }
    }
}

impl EMConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Domain("k must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Domain(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::Domain(format!("ridge must be non-negative, got {}", self.ridge)));
        }
        Ok(())
    }

    pub fn resolved_variant(&self) -> Variant {
        self.variant.resolve()
    }

    pub fn resolved_df_mode(&self) -> DfMode {
        self.df_mode.unwrap_or(match self.resolved_variant() {
            Variant::Normal | Variant::Auto => DfMode::N,
            Variant::Wishart | Variant::SingularWishart => DfMode::NMinus1,
        })
    }
}

/// Posterior component memberships, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    /// Build from row-major values; every row must be a probability vector.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if n == 0 || k == 0 {
            return Err(Error::Domain("responsibilities must be non-empty".into()));
        }
        let mut data = Vec::with_capacity(n * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Domain(format!("row {i} has {} entries, expected {k}", row.len())));
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Domain(format!("row {i} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("row {i} sums to {sum}")));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, k, data })
    }

    /// Hard assignments as one-hot rows.
    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| {
                let mut r = vec![0.0; k];
                if l < k {
                    r[l] = 1.0;
                }
                r
            })
            .collect();
        Self::from_rows(&rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.k + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.k)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for row in self.rows() {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Max-abs entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn from_log_weights(n: usize, k: usize, log_w: &[f64]) -> (Self, f64) {
        let mut data = vec![0.0; n * k];
        let mut loglik = 0.0;
        for i in 0..n {
            let row = &log_w[i * k..(i + 1) * k];
            let lse = linalg::logsumexp(row);
            loglik += lse;
            let out = &mut data[i * k..(i + 1) * k];
            for (o, l) in out.iter_mut().zip(row) {
                *o = (l - lse).exp();
            }
            let s: f64 = out.iter().sum();
            out.iter_mut().for_each(|o| *o /= s);
        }
        (Self { n, k, data }, loglik)
    }
}

/// Everything a finished EM run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: MixtureParams,
    /// Bias-corrected covariances. Equal to `params.covariances()` when the fit
    /// already used `n_i − 1` denominators.
    pub adjusted_covariances: Vec<DMatrix<f64>>,
    pub tau: Responsibilities,
    pub loglik_trace: Vec<f64>,
    pub n_iter: usize,
    pub converged: bool,
    pub bic: Option<f64>,
    pub variant: Variant,
    pub df_mode: DfMode,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace holds at least the initial E-step")
    }

    pub fn labels(&self) -> Vec<usize> {
        map_assign(&self.tau)
    }
}

/// Per-class quantities that do not change across iterations.
struct ClassTerms {
    /// Σ-free additive constant of the class log density.
    constant: f64,
    /// Exponent ν in `−(ν/2) log|Σ|`.
    nu: f64,
}

fn class_terms(stats: &[ClassStats], variant: Variant, df: DfMode) -> Result<Vec<ClassTerms>> {
    let p = stats.first().map_or(0, ClassStats::dim);
    stats
        .iter()
        .map(|st| {
            let tag = |e: Error| e.with_class(&st.class_id);
            match variant.resolve() {
                Variant::Normal | Variant::Auto => Ok(ClassTerms {
                    constant: -0.5 * (st.count * p) as f64 * (2.0 * std::f64::consts::PI).ln(),
                    nu: st.count as f64,
                }),
                Variant::Wishart => {
                    let (log_det, rank) = linalg::log_det_and_rank(&st.scatter, DEFAULT_RANK_TOL)?;
                    if rank < p {
                        return Err(tag(Error::Rank {
                            class_id: None,
                            rank,
                            p,
                            expected: "full rank for the Wishart variant",
                        }));
                    }
                    let nu = df.df(st.count);
                    Ok(ClassTerms {
                        constant: density::wishart_constant(p, nu, log_det).map_err(tag)?,
                        nu,
                    })
                }
                Variant::SingularWishart => {
                    let (pseudo, rank) = linalg::log_det_and_rank(&st.scatter, DEFAULT_RANK_TOL)?;
                    if rank == p || rank == 0 {
                        return Err(tag(Error::Rank {
                            class_id: None,
                            rank,
                            p,
                            expected: "rank in 1..p for the singular Wishart variant",
                        }));
                    }
                    let nu = df.df(st.count);
                    Ok(ClassTerms {
                        constant: density::singular_wishart_constant(p, rank, nu, pseudo)
                            .map_err(tag)?,
                        nu,
                    })
                }
            }
        })
        .collect()
}

fn check_inputs(stats: &[ClassStats], params: &MixtureParams) -> Result<()> {
    if stats.is_empty() {
        return Err(Error::Domain("no classes".into()));
    }
    let p = params.dim();
    if let Some(st) = stats.iter().find(|s| s.dim() != p) {
        return Err(Error::Domain(format!(
            "class `{}` has dimension {}, parameters have {p}",
            st.class_id,
            st.dim()
        )));
    }
    Ok(())
}

fn e_step_with(
    stats: &[ClassStats],
    terms: &[ClassTerms],
    params: &MixtureParams,
) -> Result<(Responsibilities, f64)> {
    let factors = params.factors()?;
    let (n, k) = (stats.len(), params.k());
    let mut log_w = Vec::with_capacity(n * k);
    for (st, t) in stats.iter().zip(terms) {
        for (w, f) in params.weights().iter().zip(&factors) {
            log_w.push(w.ln() + t.constant + sigma_terms(f, &st.scatter, t.nu));
        }
    }
    Ok(Responsibilities::from_log_weights(n, k, &log_w))
}

/// Posterior responsibilities and the total log-likelihood under the
/// configured class-conditional model.
pub fn e_step(
    stats: &[ClassStats],
    params: &MixtureParams,
    config: &EMConfig,
) -> Result<(Responsibilities, f64)> {
    check_inputs(stats, params)?;
    let terms = class_terms(stats, config.variant, config.resolved_df_mode())?;
    e_step_with(stats, &terms, params)
}

/// Mass below which a component counts as collapsed.
pub fn collapse_tolerance(stats: &[ClassStats]) -> f64 {
    let p = stats.first().map_or(1, ClassStats::dim) as f64;
    let mean_count = stats.iter().map(|s| s.count as f64).sum::<f64>() / stats.len().max(1) as f64;
    (p / mean_count).max(1.0) * 1e-6
}

/// M-step covariances with `λ_min ≤ DEGENERACY_RATIO · λ_max` are rejected:
/// the likelihood is unbounded there and further iterates are rounding noise.
pub const DEGENERACY_RATIO: f64 = 1e-12;

fn m_step_at(
    stats: &[ClassStats],
    tau: &Responsibilities,
    config: &EMConfig,
    iteration: usize,
) -> Result<MixtureParams> {
    if tau.n() != stats.len() {
        return Err(Error::Domain(format!(
            "{} responsibility rows for {} classes",
            tau.n(),
            stats.len()
        )));
    }
    let df = config.resolved_df_mode();
    let n = stats.len() as f64;
    let p = stats[0].dim();
    let tol = collapse_tolerance(stats);
    let mass = tau.column_sums();
    let mut weights = Vec::with_capacity(tau.k());
    let mut covariances = Vec::with_capacity(tau.k());
    for (k, &m) in mass.iter().enumerate() {
        if m < tol {
            return Err(Error::ComponentCollapse {
                component: k,
                iteration,
                mass: m,
            });
        }
        let mut num = DMatrix::zeros(p, p);
        let mut den = 0.0;
        for (i, st) in stats.iter().enumerate() {
            let t = tau.get(i, k);
            if t > 0.0 {
                num += &st.scatter * t;
                den += t * df.df(st.count);
            }
        }
        if !(den > 0.0) {
            return Err(Error::ComponentCollapse {
                component: k,
                iteration,
                mass: m,
            });
        }
        let mut sigma = num / den;
        if config.ridge > 0.0 {
            for d in 0..p {
                sigma[(d, d)] += config.ridge;
            }
        }
        linalg::symmetrize(&mut sigma);
        let eig = sigma.symmetric_eigenvalues();
        if eig.min() <= DEGENERACY_RATIO * eig.max().abs() {
            return Err(Error::Numerical(format!(
                "iteration {iteration}: covariance {k} is degenerate (eigenvalue ratio {:.1e}); \
                 its classes do not span the space, consider a ridge or a smaller k",
                eig.min() / eig.max()
            )));
        }
        weights.push(m / n);
        covariances.push(sigma);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    MixtureParams::new(weights, covariances).map_err(|e| match e {
        Error::Numerical(msg) => Error::Numerical(format!("iteration {iteration}: {msg}")),
        other => other,
    })
}

/// Closed-form maximizer of the expected complete-data log-likelihood.
pub fn m_step(
    stats: &[ClassStats],
    tau: &Responsibilities,
    config: &EMConfig,
) -> Result<MixtureParams> {
    if stats.is_empty() {
        return Err(Error::Domain("no classes".into()));
    }
    m_step_at(stats, tau, config, 0)
}

/// Snapshot handed to an observer after every E-step.
pub struct Iteration<'a> {
    pub index: usize,
    pub params: &'a MixtureParams,
    pub tau: &'a Responsibilities,
    pub loglik: f64,
}

pub fn run_em(stats: &[ClassStats], init: &MixtureParams, config: &EMConfig) -> Result<FitResult> {
    run_em_observed(stats, init, config, |_| {})
}

/// [`run_em`] with a callback invoked after each E-step, including the
/// initial one (index 0).
pub fn run_em_observed<F>(
    stats: &[ClassStats],
    init: &MixtureParams,
    config: &EMConfig,
    mut observe: F,
) -> Result<FitResult>
where
    F: FnMut(&Iteration<'_>),
{
    config.validate()?;
    check_inputs(stats, init)?;
    if init.k() != config.k {
        return Err(Error::Domain(format!(
            "initial parameters have {} components, config asks for {}",
            init.k(),
            config.k
        )));
    }
    let variant = config.resolved_variant();
    let df_mode = config.resolved_df_mode();
    let terms = class_terms(stats, variant, df_mode)?;

    let mut params = init.clone();
    let (mut tau, mut loglik) = e_step_with(stats, &terms, &params)?;
    if !loglik.is_finite() {
        return Err(Error::NonFiniteLikelihood { iteration: 0 });
    }
    observe(&Iteration {
        index: 0,
        params: &params,
        tau: &tau,
        loglik,
    });
    let mut trace = vec![loglik];
    let mut converged = false;
    let mut n_iter = 0;

    while n_iter < config.max_iter {
        n_iter += 1;
        params = m_step_at(stats, &tau, config, n_iter)?;
        let (next_tau, next_loglik) = e_step_with(stats, &terms, &params)?;
        if !next_loglik.is_finite() {
            return Err(Error::NonFiniteLikelihood { iteration: n_iter });
        }
        observe(&Iteration {
            index: n_iter,
            params: &params,
            tau: &next_tau,
            loglik: next_loglik,
        });
        let improvement = (next_loglik - loglik) / loglik.abs().max(f64::MIN_POSITIVE);
        tau = next_tau;
        loglik = next_loglik;
        trace.push(loglik);
        if improvement < config.epsilon {
            converged = true;
            break;
        }
    }

    let counts: Vec<usize> = stats.iter().map(|s| s.count).collect();
    let adjusted_covariances = match df_mode {
        DfMode::N => adjust_covariances(&params, &tau, &counts)?,
        DfMode::NMinus1 => params.covariances().to_vec(),
    };
    Ok(FitResult {
        params,
        adjusted_covariances,
        tau,
        loglik_trace: trace,
        n_iter,
        converged,
        bic: None,
        variant,
        df_mode,
    })
}

/// Rescale maximum-likelihood covariances by
/// `Σ_i τ_ik n_i / Σ_i τ_ik (n_i − 1)` to remove the bias from estimating
/// one mean per class.
pub fn adjust_covariances(
    params: &MixtureParams,
    tau: &Responsibilities,
    counts: &[usize],
) -> Result<Vec<DMatrix<f64>>> {
    if let Some(bad) = counts.iter().find(|&&c| c < 2) {
        return Err(Error::Domain(format!("class count {bad} is below 2")));
    }
    if counts.len() != tau.n() || tau.k() != params.k() {
        return Err(Error::Domain("responsibilities do not match counts or parameters".into()));
    }
    Ok(params
        .covariances()
        .iter()
        .enumerate()
        .map(|(k, sigma)| {
            let (num, den) = counts.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, &c)| {
                let t = tau.get(i, k);
                (a + t * c as f64, b + t * (c as f64 - 1.0))
            });
            sigma * (num / den)
        })
        .collect())
}

/// Hard clustering by the largest responsibility; ties go to the lowest index.
pub fn map_assign(tau: &Responsibilities) -> Vec<usize> {
    tau.rows()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bk, bv), (k, &v)| if v > bv { (k, v) } else { (bk, bv) })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_stats(id: &str, scatter: f64, count: usize) -> ClassStats {
        ClassStats {
            class_id: id.into(),
            mean: nalgebra::DVector::zeros(1),
            scatter: DMatrix::from_element(1, 1, scatter),
            count,
            rank: usize::from(scatter > 0.0),
        }
    }

    fn scalar_params(weights: &[f64], vars: &[f64]) -> MixtureParams {
        MixtureParams::new(
            weights.to_vec(),
            vars.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_component_has_unit_responsibility() {
        let stats = vec![scalar_stats("a", 1.0, 3), scalar_stats("b", 4.0, 5)];
        let (tau, _) = e_step(&stats, &scalar_params(&[1.0], &[2.0]), &EMConfig::default()).unwrap();
        assert!(tau.rows().all(|r| r == [1.0]));
    }

    #[test]
    fn identical_components_split_evenly() {
        let stats = vec![scalar_stats("a", 1.0, 3), scalar_stats("b", 4.0, 5)];
        let params = scalar_params(&[0.5, 0.5], &[2.0, 2.0]);
        let (tau, _) = e_step(&stats, &params, &EMConfig::with_k(2)).unwrap();
        for r in tau.rows() {
            assert_eq!(r, [0.5, 0.5]);
        }
    }

    #[test]
    fn scalar_e_step_matches_formula_oracle() {
        let stats = vec![scalar_stats("a", 0.1, 3), scalar_stats("b", 10.0, 3)];
        let params = scalar_params(&[0.5, 0.5], &[0.1, 2.0]);
        let (tau, loglik) = e_step(&stats, &params, &EMConfig::with_k(2)).unwrap();
        assert_abs_diff_eq!(tau.get(0, 0), 0.982_339_360_274_758_7, epsilon = 1e-12);
        assert_abs_diff_eq!(tau.get(0, 1), 0.017_660_639_725_241_345, epsilon = 1e-12);
        assert_abs_diff_eq!(tau.get(1, 0), 2.101_634_083_665_101_2e-19, epsilon = 1e-30);
        assert!(tau.get(0, 0) > 0.9 && tau.get(1, 0) < 0.1);

        let direct: f64 = [0.1, 10.0]
            .iter()
            .map(|&s: &f64| {
                let l = |v: f64| {
                    0.5 * (-1.5 * (2.0 * std::f64::consts::PI).ln() - 1.5 * v.ln() - 0.5 * s / v).exp()
                };
                (l(0.1) + l(2.0)).ln()
            })
            .sum();
        assert_abs_diff_eq!(loglik, direct, epsilon = 1e-12);
    }

    #[test]
    fn m_step_single_component_is_pooled() {
        let stats = vec![scalar_stats("a", 1.0, 3), scalar_stats("b", 4.0, 5)];
        let tau = Responsibilities::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let cfg = EMConfig {
            df_mode: Some(DfMode::NMinus1),
            ..EMConfig::default()
        };
        let p = m_step(&stats, &tau, &cfg).unwrap();
        assert_abs_diff_eq!(p.covariances()[0][(0, 0)], 5.0 / 6.0, epsilon = 1e-15);
        assert_eq!(p.weights(), &[1.0]);
    }

    #[test]
    fn m_step_uniform_tau_equal_counts() {
        let stats = vec![scalar_stats("a", 1.0, 4), scalar_stats("b", 3.0, 4)];
        let tau = Responsibilities::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let p = m_step(&stats, &tau, &EMConfig::with_k(2)).unwrap();
        for c in p.covariances() {
            assert_abs_diff_eq!(c[(0, 0)], (1.0 + 3.0) / 8.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn m_step_hard_tau_matches_grouped_average() {
        let stats = vec![
            scalar_stats("a", 1.0, 2),
            scalar_stats("b", 2.0, 3),
            scalar_stats("c", 7.0, 4),
            scalar_stats("d", 9.0, 2),
        ];
        let tau = Responsibilities::from_labels(&[0, 1, 0, 1], 2).unwrap();
        let cfg = EMConfig {
            k: 2,
            df_mode: Some(DfMode::NMinus1),
            ..EMConfig::default()
        };
        let p = m_step(&stats, &tau, &cfg).unwrap();
        // grouped: {a, c} → 8 / (1 + 3), {b, d} → 11 / (2 + 1)
        assert_abs_diff_eq!(p.covariances()[0][(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.covariances()[1][(0, 0)], 11.0 / 3.0, epsilon = 1e-15);
        assert_eq!(p.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn m_step_reports_collapse() {
        let stats = vec![scalar_stats("a", 1.0, 2), scalar_stats("b", 2.0, 3)];
        let tau = Responsibilities::from_labels(&[0, 0], 2).unwrap();
        let err = m_step(&stats, &tau, &EMConfig::with_k(2)).unwrap_err();
        assert!(matches!(err, Error::ComponentCollapse { component: 1, .. }));
    }

    #[test]
    fn m_step_ridge_is_added() {
        let stats = vec![scalar_stats("a", 1.0, 3), scalar_stats("b", 4.0, 5)];
        let tau = Responsibilities::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let cfg = EMConfig {
            ridge: 0.25,
            ..EMConfig::default()
        };
        let p = m_step(&stats, &tau, &cfg).unwrap();
        assert_abs_diff_eq!(p.covariances()[0][(0, 0)], 5.0 / 8.0 + 0.25, epsilon = 1e-15);
    }

    #[test]
    fn adjust_factor_examples() {
        let params = scalar_params(&[0.5, 0.5], &[1.0, 3.0]);
        let tau = Responsibilities::from_rows(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let adj = adjust_covariances(&params, &tau, &[2, 2]).unwrap();
        assert_abs_diff_eq!(adj[0][(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(adj[1][(0, 0)], 6.0, epsilon = 1e-15);

        let adj = adjust_covariances(&params, &tau, &[5, 5]).unwrap();
        assert_abs_diff_eq!(adj[1][(0, 0)], 3.0 * 5.0 / 4.0, epsilon = 1e-14);

        // weighted-count ratios from the arithmetic oracle
        let tau = Responsibilities::from_rows(&[
            vec![0.9, 0.1],
            vec![0.3, 0.7],
            vec![0.5, 0.5],
            vec![0.2, 0.8],
        ])
        .unwrap();
        let adj = adjust_covariances(&params, &tau, &[2, 3, 4, 3]).unwrap();
        assert_abs_diff_eq!(adj[0][(0, 0)], 1.558_823_529_411_765, epsilon = 1e-14);
        assert_abs_diff_eq!(adj[1][(0, 0)], 3.0 * 1.456_521_739_130_435, epsilon = 1e-13);

        assert!(adjust_covariances(&params, &tau, &[2, 1, 4, 3]).is_err());
    }

    #[test]
    fn map_assign_examples() {
        let tau = Responsibilities::from_rows(&[vec![0.9, 0.1], vec![0.5, 0.5], vec![0.2, 0.8]])
            .unwrap();
        assert_eq!(map_assign(&tau), vec![0, 0, 1]);
    }

    #[test]
    fn responsibilities_validation() {
        assert!(Responsibilities::from_rows(&[vec![0.6, 0.6]]).is_err());
        assert!(Responsibilities::from_rows(&[vec![1.5, -0.5]]).is_err());
        assert!(Responsibilities::from_rows(&[]).is_err());
    }

    #[test]
    fn config_defaults_per_variant() {
        let mut cfg = EMConfig::default();
        assert_eq!(cfg.resolved_variant(), Variant::Normal);
        assert_eq!(cfg.resolved_df_mode(), DfMode::N);
        cfg.variant = Variant::Wishart;
        assert_eq!(cfg.resolved_df_mode(), DfMode::NMinus1);
        cfg.df_mode = Some(DfMode::N);
        assert_eq!(cfg.resolved_df_mode(), DfMode::N);
        assert!(EMConfig { epsilon: 0.0, ..EMConfig::default() }.validate().is_err());
        assert!(EMConfig { k: 0, ..EMConfig::default() }.validate().is_err());
        assert!(EMConfig { ridge: -1.0, ..EMConfig::default() }.validate().is_err());
    }

    #[test]
    fn wishart_variant_rejects_singular_classes() {
        let stats = vec![
            scalar_stats("full", 1.0, 3),
            ClassStats {
                class_id: "flat".into(),
                mean: nalgebra::DVector::zeros(1),
                scatter: DMatrix::zeros(1, 1),
                count: 3,
                rank: 0,
            },
        ];
        let cfg = EMConfig {
            variant: Variant::Wishart,
            ..EMConfig::default()
        };
        let err = e_step(&stats, &scalar_params(&[1.0], &[1.0]), &cfg).unwrap_err();
        assert!(matches!(err, Error::Rank { class_id: Some(ref c), .. } if c == "flat"));
        let cfg = EMConfig {
            variant: Variant::SingularWishart,
            ..EMConfig::default()
        };
        let err = e_step(&stats, &scalar_params(&[1.0], &[1.0]), &cfg).unwrap_err();
        assert!(matches!(err, Error::Rank { class_id: Some(ref c), .. } if c == "full"));
    }
}
