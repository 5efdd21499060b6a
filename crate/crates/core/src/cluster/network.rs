//! Star-topology link model. Every worker has one link to the master, and all
//! traffic crosses the master's port, so transfers are serialized there.

use serde::{Deserialize, Serialize};

use crate::phase::{NodeId, TransferPhase, TransferRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    #[default]
    Star,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub topology: Topology,
    pub link_bandwidth_gbps: f64,
    pub link_latency_us: f64,
    /// Bytes per distributed record; `float_bytes * (d + 1)` when unset.
    pub record_bytes: Option<u64>,
    pub float_bytes: u64,
}

impl Default for NetworkModel {
    fn default() -> Self {
        Self {
            topology: Topology::Star,
            link_bandwidth_gbps: 10.0,
            link_latency_us: 50.0,
            record_bytes: None,
            float_bytes: 8,
        }
    }
}

impl NetworkModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.link_bandwidth_gbps.is_finite() && self.link_bandwidth_gbps > 0.0) {
            return Err(format!("link bandwidth must be positive, got {}", self.link_bandwidth_gbps));
        }
        if !(self.link_latency_us.is_finite() && self.link_latency_us >= 0.0) {
            return Err(format!("link latency must be nonnegative, got {}", self.link_latency_us));
        }
        if self.record_bytes == Some(0) || self.float_bytes == 0 {
            return Err("record_bytes and float_bytes must be positive".into());
        }
        Ok(())
    }

    pub fn latency_seconds(&self) -> f64 {
        self.link_latency_us * 1e-6
    }

    pub fn record_bytes_for(&self, dimension: usize) -> u64 {
        self.record_bytes.unwrap_or(self.float_bytes * (dimension as u64 + 1))
    }

    /// Size of one gradient or parameter message: `d + 1` floats.
    pub fn param_message_bytes(&self, dimension: usize) -> u64 {
        self.float_bytes * (dimension as u64 + 1)
    }

    pub fn transfer(&self, phase: TransferPhase, source: NodeId, dest: NodeId, bytes: u64) -> TransferRecord {
        TransferRecord { phase, source, dest, bytes, simulated_seconds: simulate_transfer(bytes, self) }
    }
}

/// `latency + 8 * bytes / bandwidth`, in seconds.
pub fn simulate_transfer(bytes: u64, net: &NetworkModel) -> f64 {
    net.latency_seconds() + 8.0 * bytes as f64 / (net.link_bandwidth_gbps * 1e9)
}
