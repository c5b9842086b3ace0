//! Latent covariance discriminant analysis.
//!
//! Each class contributes a scatter matrix; the class covariances are
//! modelled as a finite mixture of `k` shared latent covariances fitted by
//! EM. The fitted mixture drives a Bayes classifier (LCDA) that sits between
//! LDA (`k = 1`) and QDA (`k = n`).

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod density;
pub mod em;
pub mod error;
pub mod init;
pub mod linalg;
pub mod select;
pub mod sim;
pub mod stats;

pub use classify::{
    evaluate_heldout, evaluate_loocv, fit_lcda, fit_lda, fit_qda, ClassifierModel, Fitter,
    ModelKind, Prediction, RefitMode,
};
pub use density::{
    class_log_likelihood, log_multivariate_gamma, singular_wishart_log_density,
    wishart_log_density,
};
pub use em::{run_em, DfMode, EMConfig, FitResult, Responsibilities, Variant};
pub use error::{Error, Result};
pub use init::init_hierarchical;
pub use select::{select_k, KGridResult};
pub use stats::{compute_class_stats, ClassBlock, ClassStats, LabeledDataset, MixtureParams};
