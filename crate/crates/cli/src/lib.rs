//! Library side of the `tomo2d` command-line tool.

pub mod config;
pub mod run;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Rank deficiency found after the report was produced.
    #[error("numerical error: {message}")]
    Rank { message: String, report: String },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Rank { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<tomo2d::Error> for CliError {
    fn from(e: tomo2d::Error) -> Self {
        use tomo2d::Error as E;
        let m = e.to_string();
        match e {
            E::InvalidSystem(_)
            | E::InvalidLabel(_)
            | E::NonFiniteCoefficient { .. }
            | E::SpinOutOfRange { .. }
            | E::DegenerateTransitions(_)
            | E::Nyquist { .. }
            | E::InvalidAcquisition(_)
            | E::FrequencyOutOfRange { .. } => CliError::Config(m),
            E::Io(_) | E::Json(_) => CliError::Io(m),
            _ => CliError::Numerical(m),
        }
    }
}
