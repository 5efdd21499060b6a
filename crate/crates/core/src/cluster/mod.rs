//! In-process master/worker cluster for data-parallel training.
//!
//! Workers are OS threads over read-only parameter snapshots and disjoint data
//! slices. Each synchronous step ends in a barrier at the master, which aggregates
//! gradients in worker-id order, applies one SGD step, and broadcasts parameters.
//! Network cost comes from [`NetworkModel`]; compute cost from the op-count
//! [`NodeSpec`] model.

mod network;
mod partition;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::{NodeSpec, DEFAULT_CORE_OPS_PER_SECOND};
use crate::model::ModelError;

pub use network::{simulate_transfer, NetworkModel, Topology};
pub use partition::{balanced_ranges, partition, Partition};
pub use trainer::{aggregate, train_distributed, worker_gradient, RESULT_MESSAGE_BYTES};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid cluster config: {0}")]
    InvalidConfig(String),
    #[error("{workers} workers but only {examples} training examples")]
    TooManyWorkers { workers: usize, examples: usize },
    #[error("no gradient updates to aggregate")]
    NoUpdates,
    #[error("gradient dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("worker {0} panicked")]
    WorkerPanicked(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyncMode {
    /// One global update per global mini-batch; matches single-node training.
    #[default]
    Synchronous,
    /// Each worker runs a full local epoch on its shard, then parameters are averaged.
    LocalEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub worker_count: usize,
    pub cores_per_worker: u32,
    pub ram_gb_per_worker: f64,
    pub master_cores: u32,
    pub master_ram_gb: f64,
    pub sync_mode: SyncMode,
    pub core_ops_per_second: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            worker_count: 4,
            cores_per_worker: 4,
            ram_gb_per_worker: 8.0,
            master_cores: 8,
            master_ram_gb: 16.0,
            sync_mode: SyncMode::Synchronous,
            core_ops_per_second: DEFAULT_CORE_OPS_PER_SECOND,
        }
    }
}

impl ClusterConfig {
    pub fn with_workers(worker_count: usize) -> Self {
        Self { worker_count, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: &str| Err(ClusterError::InvalidConfig(m.to_owned()));
        if self.worker_count == 0 {
            return bad("worker_count must be at least 1");
        }
        if self.cores_per_worker == 0 || self.master_cores == 0 {
            return bad("core counts must be positive");
        }
        if !(self.ram_gb_per_worker > 0.0 && self.master_ram_gb > 0.0) {
            return bad("RAM sizes must be positive");
        }
        if !(self.core_ops_per_second.is_finite() && self.core_ops_per_second > 0.0) {
            return bad("core_ops_per_second must be positive");
        }
        Ok(())
    }

    pub fn worker_node(&self) -> NodeSpec {
        NodeSpec::new(self.cores_per_worker, self.core_ops_per_second)
    }

    pub fn master_node(&self) -> NodeSpec {
        NodeSpec::new(self.master_cores, self.core_ops_per_second)
    }
}
