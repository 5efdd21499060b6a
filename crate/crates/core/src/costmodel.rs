//! Analytic time model for single-node and distributed training and testing.
//!
//! Each asymptotic term becomes `unit_cost * operation_count` with constant factor 1.
//! Compute unit costs are calibrated from a measured or simulated run; network unit
//! costs come from the [`NetworkModel`]. `log` in the sync term is `log2`, with
//! `log2(1) = 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{simulate_transfer, NetworkModel};
use crate::phase::PhaseReport;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("invalid cost inputs: {0}")]
    Invalid(String),
    #[error("cannot calibrate {term}: zero operation count with {seconds} s measured")]
    Calibration { term: &'static str, seconds: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    /// Examples preprocessed and embedded.
    pub n: u64,
    /// Training-set size, the volume shipped to workers.
    pub n_train: u64,
    pub d: u64,
    pub k: u64,
    pub batch: u64,
    /// Total optimizer steps.
    pub iterations: u64,
    pub c_pre: f64,
    pub c_emb: f64,
    pub c_fwd: f64,
    pub c_bwd: f64,
    pub c_upd: f64,
    /// Seconds per synchronization message.
    pub c_net: f64,
    /// Seconds per distributed record, excluding latency.
    pub c_dist: f64,
    /// Per-message latency in seconds.
    pub latency: f64,
}

impl CostInputs {
    /// Shape with zero compute costs and network costs taken from `net`.
    pub fn shape(n: u64, n_train: u64, d: u64, k: u64, batch: u64, iterations: u64, net: &NetworkModel) -> Self {
        let record_bytes = net.record_bytes_for(d as usize);
        Self {
            n,
            n_train,
            d,
            k,
            batch,
            iterations,
            c_pre: 0.0,
            c_emb: 0.0,
            c_fwd: 0.0,
            c_bwd: 0.0,
            c_upd: 0.0,
            c_net: simulate_transfer(net.param_message_bytes(d as usize), net),
            c_dist: 8.0 * record_bytes as f64 / (net.link_bandwidth_gbps * 1e9),
            latency: net.latency_seconds(),
        }
    }

    pub fn with_workers(&self, k: u64) -> Self {
        Self { k, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), CostError> {
        for (name, v) in [
            ("c_pre", self.c_pre),
            ("c_emb", self.c_emb),
            ("c_fwd", self.c_fwd),
            ("c_bwd", self.c_bwd),
            ("c_upd", self.c_upd),
            ("c_net", self.c_net),
            ("c_dist", self.c_dist),
            ("latency", self.latency),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CostError::Invalid(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if self.k == 0 || self.d == 0 || self.batch == 0 {
            return Err(CostError::Invalid("k, d and batch must be at least 1".into()));
        }
        Ok(())
    }

    /// Examples pushed through forward and backward: `I * B`.
    fn examples_seen(&self) -> f64 {
        (self.iterations * self.batch) as f64
    }

    fn log2k(&self) -> f64 {
        (self.k as f64).log2()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateKind {
    TrainSingle,
    TrainDistributed,
    TestSingle,
    TestDistributed,
}

/// Predicted seconds per term. For distributed estimates `preprocess` through
/// `backward` are already divided by `k` and summed into `node_train`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub kind: EstimateKind,
    pub k: u64,
    pub preprocess: f64,
    pub embedding: f64,
    pub forward: f64,
    pub backward: f64,
    pub update: f64,
    /// Per-node receive time: `latency + c_dist * n_train / k`.
    pub distribution: f64,
    /// Total bytes through the master port: `k * latency + c_dist * n_train`.
    pub distribution_total: f64,
    pub node_train: f64,
    pub sync: f64,
    pub total: f64,
    /// Matching single-node total over this total.
    pub predicted_speedup: f64,
}

impl CostEstimate {
    /// The terms that sum to `total`.
    pub fn additive_terms(&self) -> Vec<(&'static str, f64)> {
        match self.kind {
            EstimateKind::TrainSingle => vec![
                ("preprocess", self.preprocess),
                ("embedding", self.embedding),
                ("forward", self.forward),
                ("backward", self.backward),
                ("update", self.update),
            ],
            EstimateKind::TestSingle => {
                vec![("preprocess", self.preprocess), ("embedding", self.embedding), ("forward", self.forward)]
            }
            EstimateKind::TrainDistributed => vec![
                ("distribution", self.distribution),
                ("node_train", self.node_train),
                ("update", self.update),
                ("sync", self.sync),
            ],
            EstimateKind::TestDistributed => vec![("distribution", self.distribution), ("node_train", self.node_train)],
        }
    }

    fn empty(kind: EstimateKind, k: u64) -> Self {
        Self {
            kind,
            k,
            preprocess: 0.0,
            embedding: 0.0,
            forward: 0.0,
            backward: 0.0,
            update: 0.0,
            distribution: 0.0,
            distribution_total: 0.0,
            node_train: 0.0,
            sync: 0.0,
            total: 0.0,
            predicted_speedup: 1.0,
        }
    }

    fn finish(mut self, single_total: f64) -> Self {
        self.total = self.additive_terms().iter().map(|t| t.1).sum();
        self.predicted_speedup = if self.total > 0.0 { single_total / self.total } else { 1.0 };
        self
    }
}

pub fn estimate_train_single(ci: &CostInputs) -> CostEstimate {
    let n = ci.n as f64;
    let d = ci.d as f64;
    let seen = ci.examples_seen();
    let mut e = CostEstimate::empty(EstimateKind::TrainSingle, 1);
    e.preprocess = ci.c_pre * n;
    e.embedding = ci.c_emb * n * d;
    e.forward = ci.c_fwd * d * seen;
    e.backward = ci.c_bwd * d * seen;
    e.update = ci.c_upd * d * ci.iterations as f64;
    let total = e.preprocess + e.embedding + e.forward + e.backward + e.update;
    e.finish(total)
}

fn distribution_terms(ci: &CostInputs, e: &mut CostEstimate) {
    let k = ci.k as f64;
    let records = ci.n_train as f64;
    e.distribution = ci.latency + ci.c_dist * records / k;
    e.distribution_total = k * ci.latency + ci.c_dist * records;
}

pub fn estimate_train_distributed(ci: &CostInputs) -> CostEstimate {
    let single = estimate_train_single(ci);
    let k = ci.k as f64;
    let mut e = CostEstimate::empty(EstimateKind::TrainDistributed, ci.k);
    e.preprocess = single.preprocess / k;
    e.embedding = single.embedding / k;
    e.forward = single.forward / k;
    e.backward = single.backward / k;
    e.node_train = e.preprocess + e.embedding + e.forward + e.backward;
    e.update = single.update;
    e.sync = ci.c_net * k * ci.log2k() * ci.iterations as f64;
    distribution_terms(ci, &mut e);
    e.finish(single.total)
}

pub fn estimate_test(ci: &CostInputs, distributed: bool) -> CostEstimate {
    let n = ci.n as f64;
    let d = ci.d as f64;
    let mut e = CostEstimate::empty(EstimateKind::TestSingle, 1);
    e.preprocess = ci.c_pre * n;
    e.embedding = ci.c_emb * n * d;
    e.forward = ci.c_fwd * n * d;
    let single_total = e.preprocess + e.embedding + e.forward;
    if !distributed {
        return e.finish(single_total);
    }
    let k = ci.k as f64;
    e.kind = EstimateKind::TestDistributed;
    e.k = ci.k;
    e.preprocess /= k;
    e.embedding /= k;
    e.forward /= k;
    e.node_train = e.preprocess + e.embedding + e.forward;
    distribution_terms(ci, &mut e);
    e.finish(single_total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverheadPhase {
    Train,
    Test,
}

/// Synchronization message units: `k * B * I` for training, `k` for testing.
pub fn comm_overhead(ci: &CostInputs, phase: OverheadPhase) -> u64 {
    match phase {
        OverheadPhase::Train => ci.k * ci.batch * ci.iterations,
        OverheadPhase::Test => ci.k,
    }
}

/// Per-phase compute seconds used for calibration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub preprocess: f64,
    pub embedding: f64,
    pub forward: f64,
    pub backward: f64,
    pub update: f64,
}

impl PhaseTimes {
    /// Simulated compute seconds (network time excluded).
    pub fn simulated(p: &PhaseReport) -> Self {
        Self {
            preprocess: p.preprocess.compute_seconds,
            embedding: p.embedding.compute_seconds,
            forward: p.forward.compute_seconds,
            backward: p.backward.compute_seconds,
            update: p.update.compute_seconds,
        }
    }

    /// Measured wall-clock seconds.
    pub fn wall(p: &PhaseReport) -> Self {
        Self {
            preprocess: p.preprocess.wall_seconds,
            embedding: p.embedding.wall_seconds,
            forward: p.forward.wall_seconds,
            backward: p.backward.wall_seconds,
            update: p.update.wall_seconds,
        }
    }
}

/// Solves each compute unit cost as phase seconds over its operation count. Network
/// costs in `shape` are kept.
pub fn calibrate(measured: &PhaseTimes, shape: &CostInputs) -> Result<CostInputs, CostError> {
    let n = shape.n as f64;
    let d = shape.d as f64;
    let seen = shape.examples_seen();
    let solve = |term: &'static str, seconds: f64, count: f64| {
        if !(seconds.is_finite() && seconds >= 0.0) {
            return Err(CostError::Invalid(format!("{term} time {seconds} is not a valid duration")));
        }
        match (count > 0.0, seconds > 0.0) {
            (true, _) => Ok(seconds / count),
            (false, false) => Ok(0.0),
            (false, true) => Err(CostError::Calibration { term, seconds }),
        }
    };
    Ok(CostInputs {
        c_pre: solve("preprocess", measured.preprocess, n)?,
        c_emb: solve("embedding", measured.embedding, n * d)?,
        c_fwd: solve("forward", measured.forward, d * seen)?,
        c_bwd: solve("backward", measured.backward, d * seen)?,
        c_upd: solve("update", measured.update, d * shape.iterations as f64)?,
        ..shape.clone()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KneeAnalysis {
    /// `(k, predicted total)` for every k scanned.
    pub curve: Vec<(u64, f64)>,
    /// First k attaining the minimum.
    pub argmin: u64,
    /// The minimizer lies below the largest k scanned and the curve never decreases after it.
    pub has_knee: bool,
}

/// Scans `estimate_train_distributed` over `k_values` (ascending).
pub fn knee(ci: &CostInputs, k_values: impl IntoIterator<Item = u64>) -> KneeAnalysis {
    let curve: Vec<(u64, f64)> =
        k_values.into_iter().map(|k| (k, estimate_train_distributed(&ci.with_workers(k)).total)).collect();
    let (mut best, mut best_t) = (0, f64::INFINITY);
    for (i, &(_, t)) in curve.iter().enumerate() {
        if t < best_t {
            best = i;
            best_t = t;
        }
    }
    let after_monotone = curve[best..].windows(2).all(|w| w[1].1 >= w[0].1);
    let has_knee = !curve.is_empty() && best + 1 < curve.len() && after_monotone;
    KneeAnalysis { argmin: curve.get(best).map_or(0, |c| c.0), curve, has_knee }
}
