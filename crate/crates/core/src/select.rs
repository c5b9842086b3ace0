//! Choosing the number of latent covariances by BIC.

use std::ops::RangeInclusive;

use rayon::prelude::*;

use crate::em::{run_em, EMConfig, FitResult};
use crate::error::{Error, Result};
use crate::init::init_hierarchical;
use crate::stats::ClassStats;

/// Free parameters of a `k`-component model in dimension `p`: `k − 1`
/// weights plus `k` symmetric covariances. Class means are common to every
/// `k` and left out.
pub fn parameter_count(p: usize, k: usize) -> usize {
    (k - 1) + k * p * (p + 1) / 2
}

/// `m·ln(n) − 2·loglik` with `n` the number of classes.
pub fn bic_from_loglik(loglik: f64, n: usize, p: usize, k: usize) -> f64 {
    bic_with_sample_size(loglik, n as f64, p, k)
}

pub fn bic_with_sample_size(loglik: f64, sample_size: f64, p: usize, k: usize) -> f64 {
    parameter_count(p, k) as f64 * sample_size.ln() - 2.0 * loglik
}

pub fn bic(fit: &FitResult, n: usize, p: usize, k: usize) -> f64 {
    bic_from_loglik(fit.loglik(), n, p, k)
}

#[derive(Debug, Clone)]
pub struct KRecord {
    pub k: usize,
    /// `None` when the fit failed; its BIC is then `+∞`.
    pub fit: Option<FitResult>,
    pub bic: f64,
    pub error: Option<Error>,
}

#[derive(Debug, Clone)]
pub struct KGridResult {
    pub records: Vec<KRecord>,
    pub selected_k: usize,
}

impl KGridResult {
    pub fn selected(&self) -> &KRecord {
        self.records
            .iter()
            .find(|r| r.k == self.selected_k)
            .expect("selected k is on the grid")
    }

    pub fn selected_fit(&self) -> &FitResult {
        self.selected().fit.as_ref().expect("selected fit succeeded")
    }
}

/// Initialize, fit and score one `k`.
pub fn fit_k(stats: &[ClassStats], k: usize, config: &EMConfig) -> Result<FitResult> {
    let cfg = EMConfig {
        k,
        ..config.clone()
    };
    let init = init_hierarchical(stats, k)?;
    let mut fit = run_em(stats, &init, &cfg)?;
    fit.bic = Some(bic(&fit, stats.len(), stats[0].dim(), k));
    Ok(fit)
}

/// Fit every `k` in `k_range` and pick the BIC minimizer (ties go to the
/// smaller `k`). Failed fits stay on the grid with infinite BIC.
pub fn select_k(
    stats: &[ClassStats],
    k_range: RangeInclusive<usize>,
    config: &EMConfig,
) -> Result<KGridResult> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo == 0 || lo > hi {
        return Err(Error::Domain(format!("invalid k range {lo}..={hi}")));
    }
    if hi > stats.len() {
        return Err(Error::Domain(format!(
            "k range ends at {hi} but there are only {} classes",
            stats.len()
        )));
    }
    let records: Vec<KRecord> = k_range
        .into_par_iter()
        .map(|k| match fit_k(stats, k, config) {
            Ok(fit) => KRecord {
                k,
                bic: fit.bic.unwrap_or(f64::INFINITY),
                fit: Some(fit),
                error: None,
            },
            Err(e) => KRecord {
                k,
                fit: None,
                bic: f64::INFINITY,
                error: Some(e),
            },
        })
        .collect();
    let selected_k = records
        .iter()
        .filter(|r| r.fit.is_some() && r.bic.is_finite())
        .fold(None::<&KRecord>, |best, r| match best {
            Some(b) if b.bic <= r.bic => Some(b),
            _ => Some(r),
        })
        .map(|r| r.k)
        .ok_or(Error::SelectionFailed)?;
    Ok(KGridResult {
        records,
        selected_k,
    })
}
