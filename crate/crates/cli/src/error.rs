use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invariant checks failed: {0}")]
    Invariant(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for bad input or an unusable output location, 2 for numerical
    /// failures and violated invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Numerical(_) | CliError::Invariant(_) => 2,
        }
    }
}

impl From<porous_frac::Error> for CliError {
    fn from(e: porous_frac::Error) -> Self {
        use porous_frac::Error as E;
        match e {
            E::InvalidParams(_)
            | E::Domain(_)
            | E::KappaGate(_)
            | E::EmptyGrid { .. }
            | E::OutOfRange { .. } => CliError::Validation(e.to_string()),
            E::BranchCut { .. } | E::NoConvergence { .. } | E::Singular(_) => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
