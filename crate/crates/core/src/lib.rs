//! Tool amplification: hierarchical agent-composite tools built by a two-stage greedy
//! search, with a ReAct runtime, task metrics, multi-agent baselines and cost accounting.

pub mod agent;
pub mod amplifier;
pub mod composition;
pub mod config;
pub mod dataset;
pub mod hashing;
pub mod metrics;
pub mod report;
pub mod simenv;
pub mod toolkit;
pub mod topology;

use thiserror::Error;

/// Top-level error, grouped by process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("external tool failure: {0}")]
    External(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::External(_) => 4,
        }
    }
}

impl From<toolkit::ToolError> for Error {
    fn from(e: toolkit::ToolError) -> Self {
        if e.is_external() {
            Error::External(e.to_string())
        } else if matches!(e, toolkit::ToolError::Io { .. }) {
            Error::Data(e.to_string())
        } else {
            Error::Config(e.to_string())
        }
    }
}

impl From<dataset::DatasetError> for Error {
    fn from(e: dataset::DatasetError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<composition::CompositionError> for Error {
    fn from(e: composition::CompositionError) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<metrics::MetricsError> for Error {
    fn from(e: metrics::MetricsError) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<amplifier::AmpError> for Error {
    fn from(e: amplifier::AmpError) -> Self {
        use amplifier::AmpError;
        match e {
            AmpError::Tool(t) => t.into(),
            AmpError::Io { .. } => Error::Data(e.to_string()),
            AmpError::Config(_) | AmpError::Composition(_) | AmpError::Metrics(_) => Error::Config(e.to_string()),
        }
    }
}

impl From<simenv::SimEnvError> for Error {
    fn from(e: simenv::SimEnvError) -> Self {
        match e {
            simenv::SimEnvError::Tool(t) => t.into(),
            simenv::SimEnvError::Invalid(_) => Error::Config(e.to_string()),
        }
    }
}

impl From<topology::TopologyError> for Error {
    fn from(e: topology::TopologyError) -> Self {
        match e {
            topology::TopologyError::EmptyDataset => Error::Data(e.to_string()),
            _ => Error::Config(e.to_string()),
        }
    }
}
