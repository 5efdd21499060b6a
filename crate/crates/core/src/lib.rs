//! Single-node versus data-parallel training of a hashed-n-gram logistic regression
//! sentiment classifier, on an in-process cluster with a simulated star network, plus
//! an analytic cost model calibrated against the simulator.

pub mod cluster;
pub mod compute;
pub mod config;
pub mod costmodel;
pub mod ingest;
pub mod model;
pub mod phase;
pub mod report;
pub mod runner;
pub mod synth;

use thiserror::Error;

/// Top-level error, mapped onto process exit codes by [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    ConfigFile(#[from] config::ConfigError),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Cluster(#[from] cluster::ClusterError),
    #[error(transparent)]
    Cost(#[from] costmodel::CostError),
    #[error(transparent)]
    Report(#[from] report::ReportError),
    #[error("output: {0}")]
    Output(String),
}

impl Error {
    /// 2 for configuration, 3 for input data, 4 for contract violations, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use model::ModelError as M;
        match self {
            Error::Config(_) | Error::ConfigFile(_) => 2,
            Error::Data(_) | Error::Ingest(_) => 3,
            Error::Model(M::EmptyDataset | M::EmptyValidation { .. })
            | Error::Cluster(cluster::ClusterError::Model(M::EmptyDataset | M::EmptyValidation { .. })) => 3,
            Error::Model(_) | Error::Cluster(_) | Error::Cost(_) => 4,
            Error::Report(_) | Error::Output(_) => 1,
        }
    }
}
