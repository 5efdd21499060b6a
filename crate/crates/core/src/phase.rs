//! Per-phase timing and byte accounting shared by the single-node and cluster trainers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Preprocess,
    Embedding,
    Distribution,
    Forward,
    Backward,
    Update,
    Synchronization,
    Evaluate,
    Collection,
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::Preprocess,
        Phase::Embedding,
        Phase::Distribution,
        Phase::Forward,
        Phase::Backward,
        Phase::Update,
        Phase::Synchronization,
        Phase::Evaluate,
        Phase::Collection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Preprocess => "preprocess",
            Phase::Embedding => "embedding",
            Phase::Distribution => "distribution",
            Phase::Forward => "forward",
            Phase::Backward => "backward",
            Phase::Update => "update",
            Phase::Synchronization => "synchronization",
            Phase::Evaluate => "evaluate",
            Phase::Collection => "collection",
        }
    }

    /// Phases that make up training time (everything before evaluation).
    pub fn is_training(self) -> bool {
        !matches!(self, Phase::Evaluate | Phase::Collection)
    }
}

/// Network phases a transfer can belong to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TransferPhase {
    DataDistribution,
    ModelSynchronization,
    ResultCollection,
}

impl TransferPhase {
    pub const ALL: [TransferPhase; 3] =
        [TransferPhase::DataDistribution, TransferPhase::ModelSynchronization, TransferPhase::ResultCollection];

    pub fn name(self) -> &'static str {
        match self {
            TransferPhase::DataDistribution => "DataDistribution",
            TransferPhase::ModelSynchronization => "ModelSynchronization",
            TransferPhase::ResultCollection => "ResultCollection",
        }
    }

    pub fn phase(self) -> Phase {
        match self {
            TransferPhase::DataDistribution => Phase::Distribution,
            TransferPhase::ModelSynchronization => Phase::Synchronization,
            TransferPhase::ResultCollection => Phase::Collection,
        }
    }
}

impl fmt::Display for TransferPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Master,
    Worker(usize),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Master => f.write_str("master"),
            NodeId::Worker(i) => write!(f, "worker{i}"),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "master" {
            return Ok(NodeId::Master);
        }
        s.strip_prefix("worker")
            .and_then(|i| i.parse().ok())
            .map(NodeId::Worker)
            .ok_or_else(|| format!("bad node id {s:?}"))
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One message over a star link. `simulated_seconds = latency + 8 * bytes / bandwidth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub phase: TransferPhase,
    pub source: NodeId,
    pub dest: NodeId,
    pub bytes: u64,
    pub simulated_seconds: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    /// Measured on this host. Not reproducible.
    pub wall_seconds: f64,
    /// Modeled node compute on the critical path.
    pub compute_seconds: f64,
    /// Modeled network time on the master link.
    pub network_seconds: f64,
    pub bytes: u64,
    pub peak_tasks: usize,
}

impl PhaseTiming {
    pub fn simulated_seconds(&self) -> f64 {
        self.compute_seconds + self.network_seconds
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub preprocess: PhaseTiming,
    pub embedding: PhaseTiming,
    pub distribution: PhaseTiming,
    pub forward: PhaseTiming,
    pub backward: PhaseTiming,
    pub update: PhaseTiming,
    pub synchronization: PhaseTiming,
    pub evaluate: PhaseTiming,
    pub collection: PhaseTiming,
    /// Wall-clock of the whole optimization loop, including scheduling overhead not
    /// attributed to forward/backward/update.
    pub train_wall_seconds: f64,
    /// Optimizer steps taken (global steps, or averaging rounds in local-epochs mode).
    pub steps: u64,
    /// Synchronization message units: each sync charges `k` units per example it covers.
    pub sync_message_units: u64,
    /// Messages carrying evaluation results back to the master.
    pub result_messages: u64,
    pub transfers: Vec<TransferRecord>,
}

impl PhaseReport {
    pub fn get(&self, phase: Phase) -> &PhaseTiming {
        match phase {
            Phase::Preprocess => &self.preprocess,
            Phase::Embedding => &self.embedding,
            Phase::Distribution => &self.distribution,
            Phase::Forward => &self.forward,
            Phase::Backward => &self.backward,
            Phase::Update => &self.update,
            Phase::Synchronization => &self.synchronization,
            Phase::Evaluate => &self.evaluate,
            Phase::Collection => &self.collection,
        }
    }

    pub fn get_mut(&mut self, phase: Phase) -> &mut PhaseTiming {
        match phase {
            Phase::Preprocess => &mut self.preprocess,
            Phase::Embedding => &mut self.embedding,
            Phase::Distribution => &mut self.distribution,
            Phase::Forward => &mut self.forward,
            Phase::Backward => &mut self.backward,
            Phase::Update => &mut self.update,
            Phase::Synchronization => &mut self.synchronization,
            Phase::Evaluate => &mut self.evaluate,
            Phase::Collection => &mut self.collection,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Phase, &PhaseTiming)> {
        Phase::ALL.into_iter().map(move |p| (p, self.get(p)))
    }

    /// Appends a transfer and folds it into its phase's bytes and network time.
    pub fn record_transfer(&mut self, record: TransferRecord) {
        let timing = self.get_mut(record.phase.phase());
        timing.bytes += record.bytes;
        timing.network_seconds += record.simulated_seconds;
        self.transfers.push(record);
    }

    pub fn transfer_bytes(&self, phase: TransferPhase) -> u64 {
        self.transfers.iter().filter(|t| t.phase == phase).map(|t| t.bytes).sum()
    }

    pub fn simulated_train_seconds(&self) -> f64 {
        self.iter().filter(|(p, _)| p.is_training()).map(|(_, t)| t.simulated_seconds()).sum()
    }

    pub fn simulated_total_seconds(&self) -> f64 {
        self.iter().map(|(_, t)| t.simulated_seconds()).sum()
    }

    /// Preprocess + embedding + training loop, measured.
    pub fn embed_train_wall_seconds(&self) -> f64 {
        self.preprocess.wall_seconds + self.embedding.wall_seconds + self.train_wall_seconds
    }

    pub fn total_wall_seconds(&self) -> f64 {
        self.preprocess.wall_seconds
            + self.embedding.wall_seconds
            + self.distribution.wall_seconds
            + self.train_wall_seconds
            + self.evaluate.wall_seconds
            + self.collection.wall_seconds
    }

    /// Writes transfers as `phase,source,dest,bytes,sim_seconds`.
    pub fn write_transfers_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["phase", "source", "dest", "bytes", "sim_seconds"])?;
        for t in &self.transfers {
            w.write_record([
                t.phase.name().to_owned(),
                t.source.to_string(),
                t.dest.to_string(),
                t.bytes.to_string(),
                format!("{:.16e}", t.simulated_seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
