//! Plug-in Bayes classifiers with equal class priors.
//!
//! * LCDA scores class `i` by `log Σ_k τ_ik φ(y; μ_i, Σ_k)`.
//! * LDA uses one pooled covariance `Σ_i s_i / Σ_i (n_i − 1)`.
//! * QDA uses `s_i / (n_i − 1)` per class.

mod eval;

pub use eval::{
    evaluate_heldout, evaluate_loocv, ClassRate, Fitter, HeldoutResult, LoocvResult, RefitMode,
};

use nalgebra::{DMatrix, DVector};

use crate::density::LN_2PI;
use crate::em::{run_em, DfMode, EMConfig, FitResult, Responsibilities};
use crate::error::{Error, Result};
use crate::init::init_hierarchical;
use crate::linalg::{self, SpdFactor};
use crate::stats::{compute_class_stats, ClassStats, LabeledDataset, MixtureParams};

/// Responsibilities below this are treated as exact zeros when scoring.
pub const TAU_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Lcda,
    Lda,
    Qda,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lcda => "lcda",
            ModelKind::Lda => "lda",
            ModelKind::Qda => "qda",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lcda" => Ok(ModelKind::Lcda),
            "lda" => Ok(ModelKind::Lda),
            "qda" => Ok(ModelKind::Qda),
            other => Err(Error::Domain(format!("unknown classifier `{other}`"))),
        }
    }
}

/// LCDA parameters as fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct LcdaParams {
    pub params: MixtureParams,
    pub adjusted_covariances: Vec<DMatrix<f64>>,
    pub tau: Responsibilities,
    pub use_adjusted: bool,
    pub df_mode: DfMode,
}

impl LcdaParams {
    /// Covariances plugged into the decision rule.
    pub fn scoring_covariances(&self) -> &[DMatrix<f64>] {
        if self.use_adjusted {
            &self.adjusted_covariances
        } else {
            self.params.covariances()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Lcda(LcdaParams),
    Lda { pooled: DMatrix<f64> },
    Qda { covariances: Vec<DMatrix<f64>> },
}

/// One covariance with the class means already whitened by its factor.
#[derive(Debug, Clone)]
struct Whitened {
    factor: SpdFactor,
    /// `−½ (p log 2π + log|Σ|)`.
    log_norm: f64,
    /// Column `i` is `L⁻¹ μ_i` for the classes this covariance serves.
    means: DMatrix<f64>,
}

impl Whitened {
    fn new(sigma: &DMatrix<f64>, means: &[&DVector<f64>]) -> Result<Self> {
        let factor = SpdFactor::new(sigma)?;
        let p = sigma.nrows();
        let mut w = DMatrix::zeros(p, means.len());
        for (i, m) in means.iter().enumerate() {
            w.set_column(i, &factor.whiten(m));
        }
        Ok(Self {
            log_norm: -0.5 * (p as f64 * LN_2PI + factor.log_det()),
            factor,
            means: w,
        })
    }

    fn log_density(&self, wy: &DVector<f64>, col: usize) -> f64 {
        let d = (wy - self.means.column(col)).norm_squared();
        self.log_norm - 0.5 * d
    }
}

#[derive(Debug, Clone)]
enum Scorer {
    Lcda { comps: Vec<Whitened>, log_tau: Vec<Vec<f64>> },
    Lda(Whitened),
    Qda(Vec<Whitened>),
}

/// A fitted classifier ready to score queries.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    class_ids: Vec<String>,
    means: Vec<DVector<f64>>,
    params: ModelParams,
    scorer: Scorer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Index into the model's class list.
    pub class_index: usize,
    pub class_id: String,
    /// Unnormalized log class scores, one per class.
    pub scores: Vec<f64>,
}

impl Prediction {
    /// Posterior class probabilities from the log scores.
    pub fn posterior(&self) -> Vec<f64> {
        posterior_from_scores(&self.scores)
    }

    /// Class indices ordered by decreasing score (ties keep class order).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }
}

pub fn posterior_from_scores(scores: &[f64]) -> Vec<f64> {
    let lse = linalg::logsumexp(scores);
    scores.iter().map(|s| (s - lse).exp()).collect()
}

fn argmax_first(scores: &[f64]) -> usize {
    scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

impl ClassifierModel {
    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Lcda(_) => ModelKind::Lcda,
            ModelParams::Lda { .. } => ModelKind::Lda,
            ModelParams::Qda { .. } => ModelKind::Qda,
        }
    }

    pub fn class_ids(&self) -> &[String] {
        &self.class_ids
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_ids.len()
    }

    fn check_parts(class_ids: &[String], means: &[DVector<f64>]) -> Result<usize> {
        if class_ids.is_empty() || class_ids.len() != means.len() {
            return Err(Error::Domain(format!(
                "{} class ids for {} means",
                class_ids.len(),
                means.len()
            )));
        }
        let p = means[0].len();
        if means.iter().any(|m| m.len() != p) {
            return Err(Error::Domain("class means have differing dimensions".into()));
        }
        Ok(p)
    }

    pub fn lcda_from_parts(
        class_ids: Vec<String>,
        means: Vec<DVector<f64>>,
        lcda: LcdaParams,
    ) -> Result<Self> {
        let p = Self::check_parts(&class_ids, &means)?;
        if lcda.tau.n() != class_ids.len() || lcda.tau.k() != lcda.params.k() {
            return Err(Error::Domain("responsibilities do not match classes or components".into()));
        }
        if lcda.params.dim() != p || lcda.adjusted_covariances.len() != lcda.params.k() {
            return Err(Error::Domain("mixture parameters do not match the class means".into()));
        }
        let refs: Vec<&DVector<f64>> = means.iter().collect();
        let comps = lcda
            .scoring_covariances()
            .iter()
            .map(|s| Whitened::new(s, &refs))
            .collect::<Result<Vec<_>>>()?;
        let log_tau = lcda
            .tau
            .rows()
            .map(|r| {
                r.iter()
                    .map(|&t| if t < TAU_FLOOR { f64::NEG_INFINITY } else { t.ln() })
                    .collect()
            })
            .collect();
        Ok(Self {
            class_ids,
            means,
            params: ModelParams::Lcda(lcda),
            scorer: Scorer::Lcda { comps, log_tau },
        })
    }

    pub fn lda_from_parts(
        class_ids: Vec<String>,
        means: Vec<DVector<f64>>,
        pooled: DMatrix<f64>,
    ) -> Result<Self> {
        let p = Self::check_parts(&class_ids, &means)?;
        if pooled.nrows() != p {
            return Err(Error::Domain("pooled covariance does not match the class means".into()));
        }
        let refs: Vec<&DVector<f64>> = means.iter().collect();
        let w = Whitened::new(&pooled, &refs).map_err(|e| {
            Error::Numerical(format!(
                "pooled covariance is singular ({e}); consider a ridge"
            ))
        })?;
        Ok(Self {
            class_ids,
            means,
            params: ModelParams::Lda { pooled },
            scorer: Scorer::Lda(w),
        })
    }

    pub fn qda_from_parts(
        class_ids: Vec<String>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let p = Self::check_parts(&class_ids, &means)?;
        if covariances.len() != means.len() || covariances.iter().any(|c| c.nrows() != p) {
            return Err(Error::Domain("QDA needs one p × p covariance per class".into()));
        }
        let mut comps = Vec::with_capacity(covariances.len());
        let mut bad = Vec::new();
        for ((id, m), c) in class_ids.iter().zip(&means).zip(&covariances) {
            match Whitened::new(c, &[m]) {
                Ok(w) => comps.push(w),
                Err(_) => bad.push(id.clone()),
            }
        }
        if !bad.is_empty() {
            return Err(Error::QdaInfeasible { classes: bad });
        }
        Ok(Self {
            class_ids,
            means,
            params: ModelParams::Qda { covariances },
            scorer: Scorer::Qda(comps),
        })
    }

    /// Log class scores under equal priors.
    pub fn scores(&self, y: &DVector<f64>) -> Result<Vec<f64>> {
        if y.len() != self.dim() {
            return Err(Error::Domain(format!(
                "query has dimension {}, model has {}",
                y.len(),
                self.dim()
            )));
        }
        let n = self.n_classes();
        Ok(match &self.scorer {
            Scorer::Lda(w) => {
                let wy = w.factor.whiten(y);
                (0..n).map(|i| w.log_density(&wy, i)).collect()
            }
            Scorer::Qda(ws) => ws
                .iter()
                .map(|w| w.log_density(&w.factor.whiten(y), 0))
                .collect(),
            Scorer::Lcda { comps, log_tau } => {
                let wys: Vec<DVector<f64>> = comps.iter().map(|c| c.factor.whiten(y)).collect();
                let mut terms = Vec::with_capacity(comps.len());
                (0..n)
                    .map(|i| {
                        terms.clear();
                        for (k, c) in comps.iter().enumerate() {
                            let lt = log_tau[i][k];
                            if lt > f64::NEG_INFINITY {
                                terms.push(lt + c.log_density(&wys[k], i));
                            }
                        }
                        linalg::logsumexp(&terms)
                    })
                    .collect()
            }
        })
    }

    pub fn predict(&self, y: &DVector<f64>) -> Result<Prediction> {
        let scores = self.scores(y)?;
        let class_index = argmax_first(&scores);
        Ok(Prediction {
            class_index,
            class_id: self.class_ids[class_index].clone(),
            scores,
        })
    }

    /// Prediction with explicit log class priors added to the scores.
    pub fn predict_with_log_priors(&self, y: &DVector<f64>, log_priors: &[f64]) -> Result<Prediction> {
        if log_priors.len() != self.n_classes() {
            return Err(Error::Domain(format!(
                "{} priors for {} classes",
                log_priors.len(),
                self.n_classes()
            )));
        }
        let scores: Vec<f64> = self.scores(y)?.iter().zip(log_priors).map(|(s, p)| s + p).collect();
        let class_index = argmax_first(&scores);
        Ok(Prediction {
            class_index,
            class_id: self.class_ids[class_index].clone(),
            scores,
        })
    }
}

fn ids_and_means(stats: &[ClassStats]) -> (Vec<String>, Vec<DVector<f64>>) {
    (
        stats.iter().map(|s| s.class_id.clone()).collect(),
        stats.iter().map(|s| s.mean.clone()).collect(),
    )
}

/// `Σ_i s_i / Σ_i (n_i − 1)`.
pub fn pooled_covariance(stats: &[ClassStats]) -> DMatrix<f64> {
    let p = stats[0].dim();
    let mut num = DMatrix::zeros(p, p);
    let mut den = 0.0;
    for s in stats {
        num += &s.scatter;
        den += s.count as f64 - 1.0;
    }
    let mut out = num / den;
    linalg::symmetrize(&mut out);
    out
}

/// Build an LCDA model from finished EM output.
pub fn lcda_from_fit(stats: &[ClassStats], fit: FitResult, use_adjusted: bool) -> Result<ClassifierModel> {
    let (ids, means) = ids_and_means(stats);
    ClassifierModel::lcda_from_parts(
        ids,
        means,
        LcdaParams {
            params: fit.params,
            adjusted_covariances: fit.adjusted_covariances,
            tau: fit.tau,
            use_adjusted,
            df_mode: fit.df_mode,
        },
    )
}

/// Fit LCDA from class statistics starting EM at `init`.
pub fn fit_lcda_from_stats(
    stats: &[ClassStats],
    init: &MixtureParams,
    config: &EMConfig,
    use_adjusted: bool,
) -> Result<(ClassifierModel, FitResult)> {
    let fit = run_em(stats, init, config)?;
    let model = lcda_from_fit(stats, fit.clone(), use_adjusted)?;
    Ok((model, fit))
}

/// Hierarchical initialization followed by EM with `k` components.
pub fn fit_lcda(
    dataset: &LabeledDataset,
    k: usize,
    config: &EMConfig,
    use_adjusted: bool,
) -> Result<ClassifierModel> {
    let stats = compute_class_stats(dataset)?;
    let cfg = EMConfig {
        k,
        ..config.clone()
    };
    let init = init_hierarchical(&stats, k)?;
    Ok(fit_lcda_from_stats(&stats, &init, &cfg, use_adjusted)?.0)
}

pub fn fit_lda_from_stats(stats: &[ClassStats]) -> Result<ClassifierModel> {
    let (ids, means) = ids_and_means(stats);
    ClassifierModel::lda_from_parts(ids, means, pooled_covariance(stats))
}

pub fn fit_lda(dataset: &LabeledDataset) -> Result<ClassifierModel> {
    fit_lda_from_stats(&compute_class_stats(dataset)?)
}

pub fn fit_qda_from_stats(stats: &[ClassStats]) -> Result<ClassifierModel> {
    let p = stats[0].dim();
    let short: Vec<String> = stats
        .iter()
        .filter(|s| s.count - 1 < p)
        .map(|s| s.class_id.clone())
        .collect();
    if !short.is_empty() {
        return Err(Error::QdaInfeasible { classes: short });
    }
    let covs = stats
        .iter()
        .map(|s| &s.scatter / (s.count as f64 - 1.0))
        .collect();
    let (ids, means) = ids_and_means(stats);
    ClassifierModel::qda_from_parts(ids, means, covs)
}

pub fn fit_qda(dataset: &LabeledDataset) -> Result<ClassifierModel> {
    fit_qda_from_stats(&compute_class_stats(dataset)?)
}
