use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("class `{class_id}`: {reason}")]
    InvalidClass { class_id: String, reason: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("rank error{}: scatter has rank {rank} in dimension {p} ({expected})",
        class_id.as_ref().map(|c| format!(" for class `{c}`")).unwrap_or_default())]
    Rank {
        class_id: Option<String>,
        rank: usize,
        p: usize,
        expected: &'static str,
    },

    #[error("component {component} collapsed at iteration {iteration} (total responsibility {mass:.3e})")]
    ComponentCollapse {
        component: usize,
        iteration: usize,
        mass: f64,
    },

    #[error("log-likelihood became non-finite at iteration {iteration}")]
    NonFiniteLikelihood { iteration: usize },

    #[error("model selection failed: every grid point collapsed")]
    SelectionFailed,

    #[error("QDA infeasible: singular covariance for classes {}", classes.join(", "))]
    QdaInfeasible { classes: Vec<String> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Attach a class id to a rank error raised by a density kernel.
    pub(crate) fn with_class(self, id: &str) -> Self {
        match self {
            Error::Rank { rank, p, expected, .. } => Error::Rank {
                class_id: Some(id.to_string()),
                rank,
                p,
                expected,
            },
            other => other,
        }
    }
}
