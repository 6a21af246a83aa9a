use thiserror::Error;

/// Failure of a CLI command, mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ifcausal::Error),
}

impl CliError {
    /// 2 for configuration errors, 3 for data errors, 4 for numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        use ifcausal::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Config(_) | E::Schema(_)) => 2,
            CliError::Core(E::Numerical(_)) => 4,
            CliError::Core(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "data",
            _ => "numerical",
        }
    }

    /// One-line machine-parseable report: `error kind=<kind> code=<n> message=<text>`.
    pub fn report_line(&self) -> String {
        let message = self.to_string().replace(['\n', '\r'], " ");
        format!("error kind={} code={} message={}", self.kind(), self.exit_code(), message)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
