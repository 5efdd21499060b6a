//! Deterministic node compute model.
//!
//! Simulated compute time is `ops / (cores * core_ops_per_second)`, where `ops` is
//! counted from the work actually performed. Counting work instead of reading clocks
//! keeps simulated timings reproducible bit for bit.

use serde::{Deserialize, Serialize};

pub const DEFAULT_CORE_OPS_PER_SECOND: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub cores: u32,
    pub core_ops_per_second: f64,
}

impl NodeSpec {
    pub fn new(cores: u32, core_ops_per_second: f64) -> Self {
        Self { cores, core_ops_per_second }
    }

    pub fn seconds(&self, ops: u64) -> f64 {
        ops as f64 / (f64::from(self.cores) * self.core_ops_per_second)
    }
}

impl Default for NodeSpec {
    fn default() -> Self {
        Self::new(4, DEFAULT_CORE_OPS_PER_SECOND)
    }
}

pub mod ops {
    /// One op per byte scanned, plus one per document.
    pub fn preprocess(text_bytes: usize) -> u64 {
        text_bytes as u64 + 1
    }

    /// One accumulate per n-gram plus the norm and scale passes.
    pub fn embed(ngrams: usize, dimension: usize) -> u64 {
        (ngrams + 2 * dimension) as u64
    }

    /// Dot product and sigmoid, per example.
    pub fn forward(dimension: usize) -> u64 {
        2 * dimension as u64 + 1
    }

    /// Residual times input, per example.
    pub fn backward(dimension: usize) -> u64 {
        2 * dimension as u64 + 1
    }

    /// One SGD step on `d + 1` parameters.
    pub fn update(dimension: usize) -> u64 {
        2 * (dimension as u64 + 1)
    }

    /// Weighted sum of `updates` gradient vectors at the master.
    pub fn aggregate(updates: usize, dimension: usize) -> u64 {
        2 * updates as u64 * (dimension as u64 + 1)
    }
}
