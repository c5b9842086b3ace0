use std::fs;
use std::path::Path;

use lcda::classify::{LcdaParams, ModelParams};
use lcda::{ClassifierModel, DfMode, EMConfig, MixtureParams, ModelKind, Responsibilities, Variant};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub k: usize,
    pub loglik: f64,
    pub bic: Option<f64>,
    pub n_iter: usize,
    pub converged: bool,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub seed: u64,
    pub config: Option<EMConfig>,
    pub data_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_mean: Option<String>,
}

/// On-disk model. Matrices are row-major `p × p` arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub kind: String,
    pub p: usize,
    pub class_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
    pub means: Vec<Vec<f64>>,
    /// LCDA: latent covariances. LDA: the pooled covariance. QDA: one per class.
    pub covariances: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjusted_covariances: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df_mode: Option<DfMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub use_adjusted: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
    pub provenance: Provenance,
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Input(format!("invalid model file: {}", msg.into()))
}

fn matrix(v: &[f64], p: usize, what: &str) -> Result<DMatrix<f64>, CliError> {
    if v.len() != p * p {
        return Err(invalid(format!("{what} has {} entries, expected {}", v.len(), p * p)));
    }
    let m = DMatrix::from_row_slice(p, p, v);
    let scale = m.amax().max(1.0);
    if (&m - m.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(invalid(format!("{what} is not symmetric")));
    }
    Ok(m)
}

fn matrices(vs: &[Vec<f64>], p: usize, what: &str) -> Result<Vec<DMatrix<f64>>, CliError> {
    vs.iter()
        .enumerate()
        .map(|(i, v)| matrix(v, p, &format!("{what}[{i}]")))
        .collect()
}

impl ModelFile {
    pub fn from_model(model: &ClassifierModel, fit: Option<FitSummary>, provenance: Provenance) -> Self {
        let mut out = ModelFile {
            schema_version: SCHEMA_VERSION,
            kind: model.kind().as_str().to_string(),
            p: model.dim(),
            class_ids: model.class_ids().to_vec(),
            feature_names: None,
            means: model.means().iter().map(|m| m.as_slice().to_vec()).collect(),
            covariances: Vec::new(),
            weights: None,
            adjusted_covariances: None,
            tau: None,
            df_mode: None,
            use_adjusted: None,
            fit,
            provenance,
        };
        match model.params() {
            ModelParams::Lcda(l) => {
                out.covariances = l.params.covariances().iter().map(flat).collect();
                out.weights = Some(l.params.weights().to_vec());
                out.adjusted_covariances = Some(l.adjusted_covariances.iter().map(flat).collect());
                out.tau = Some(l.tau.to_rows());
                out.df_mode = Some(l.df_mode);
                out.use_adjusted = Some(l.use_adjusted);
            }
            ModelParams::Lda { pooled } => out.covariances = vec![flat(pooled)],
            ModelParams::Qda { covariances } => out.covariances = covariances.iter().map(flat).collect(),
        }
        out
    }

    pub fn to_model(&self) -> Result<ClassifierModel, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let p = self.p;
        if p == 0 || self.means.iter().any(|m| m.len() != p) {
            return Err(invalid("means do not match p"));
        }
        if self.means.len() != self.class_ids.len() {
            return Err(invalid("one mean per class id is required"));
        }
        let means: Vec<DVector<f64>> = self.means.iter().map(|m| DVector::from_column_slice(m)).collect();
        let ids = self.class_ids.clone();
        let kind: ModelKind = self.kind.parse().map_err(|e: lcda::Error| invalid(e.to_string()))?;
        let covs = matrices(&self.covariances, p, "covariances")?;
        let model = match kind {
            ModelKind::Lda => {
                let [pooled] = <[DMatrix<f64>; 1]>::try_from(covs)
                    .map_err(|_| invalid("an LDA model has exactly one covariance"))?;
                ClassifierModel::lda_from_parts(ids, means, pooled)?
            }
            ModelKind::Qda => ClassifierModel::qda_from_parts(ids, means, covs)?,
            ModelKind::Lcda => {
                let missing = |f: &str| invalid(format!("LCDA model lacks `{f}`"));
                let weights = self.weights.clone().ok_or_else(|| missing("weights"))?;
                let adjusted = matrices(
                    self.adjusted_covariances.as_ref().ok_or_else(|| missing("adjusted_covariances"))?,
                    p,
                    "adjusted_covariances",
                )?;
                let tau = Responsibilities::from_rows(self.tau.as_ref().ok_or_else(|| missing("tau"))?)
                    .map_err(|e| invalid(e.to_string()))?;
                let params = MixtureParams::new(weights, covs).map_err(|e| invalid(e.to_string()))?;
                ClassifierModel::lcda_from_parts(
                    ids,
                    means,
                    LcdaParams {
                        params,
                        adjusted_covariances: adjusted,
                        tau,
                        use_adjusted: self.use_adjusted.unwrap_or(false),
                        df_mode: self.df_mode.unwrap_or(DfMode::N),
                    },
                )?
            }
        };
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("model file serializes");
        fs::write(path, text + "\n").map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}
