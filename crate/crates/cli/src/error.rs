use std::fmt;

/// Exit code 2 for bad input, 3 for numerical or EM failure.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<lcda::Error> for CliError {
    fn from(e: lcda::Error) -> Self {
        use lcda::Error::*;
        match e {
            InvalidClass { .. } | InvalidDataset(_) | Domain(_) | Rank { .. } => CliError::Input(e.to_string()),
            Numerical(_)
            | ComponentCollapse { .. }
            | NonFiniteLikelihood { .. }
            | SelectionFailed
            | QdaInfeasible { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
