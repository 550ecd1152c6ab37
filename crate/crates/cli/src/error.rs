use audit_core::jsonl::LogError;
use audit_core::orchestrator::OrchestratorError;
use audit_core::report::ReportError;
use audit_core::scenario::ConfigError;
use audit_core::stats::StatsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("missing artifact {path}: {hint}")]
    MissingArtifact { path: String, hint: String },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("{path}: {source}")]
    Log { path: String, source: LogError },
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 config error, 3 missing artifact, 4 invariant violation, 1 other.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Orchestrator(OrchestratorError::Config(_)) => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::Invariant(_) | CliError::Stats(_) => 4,
            CliError::Log { source, .. } => match source {
                LogError::Io { .. } => 1,
                LogError::MalformedRecord { .. } | LogError::InvariantViolation { .. } => 4,
            },
            CliError::Report(ReportError::Conservation { .. } | ReportError::Stats(_)) => 4,
            CliError::Orchestrator(_) | CliError::Report(_) | CliError::Io { .. } => 1,
        }
    }
}
