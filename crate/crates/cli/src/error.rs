use std::path::Path;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration.
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or insufficient input data.
    #[error("{0}")]
    Data(String),
    /// Non-convergence or an unphysical result.
    #[error("{0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] photonbench::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use photonbench::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Core(e) => match e {
                E::InvalidParameter { .. } => 1,
                E::Degenerate(_) | E::Unphysical(_) => 3,
                _ => 2,
            },
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with the file it concerns, keeping the exit code.
    pub fn in_file(self, path: &Path) -> Self {
        let msg = format!("{}: {self}", path.display());
        match self.exit_code() {
            1 => CliError::Usage(msg),
            3 => CliError::Numerical(msg),
            _ => CliError::Data(msg),
        }
    }
}
