//! Run reports, single-vs-distributed comparison, bandwidth tables, and canonical
//! JSON serialization.
//!
//! Reports hold only deterministic quantities (simulated seconds, counts, bytes), so
//! identical configurations produce byte-identical files. Wall-clock timings are
//! printed separately.

mod json;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::{CostEstimate, CostInputs, KneeAnalysis};
use crate::model::{Metrics, ModelParams};
use crate::phase::{PhaseReport, TransferPhase, TransferRecord};

pub use json::{fingerprint, read_report, to_canonical_string, write_report};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report is missing {field}")]
    Missing { field: &'static str },
    #[error("no transfer records")]
    NoRecords,
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunMode {
    SingleNode,
    Distributed { workers: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: String,
    pub simulated_seconds: f64,
    pub compute_seconds: f64,
    pub network_seconds: f64,
    pub bytes: u64,
    pub peak_tasks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: RunMode,
    pub metrics: Option<Metrics>,
    /// Simulated end-to-end seconds.
    pub processing_seconds: Option<f64>,
    pub simulated_train_seconds: f64,
    pub phases: Vec<PhaseSummary>,
    pub steps: u64,
    pub sync_message_units: u64,
    pub result_messages: u64,
    pub transfer_count: usize,
    pub bandwidth: Vec<BandwidthRow>,
    /// FNV-1a 64 over the bit patterns of the trained parameters.
    pub params_checksum: Option<String>,
    pub cost_prediction: Option<CostEstimate>,
    pub fingerprint: String,
}

impl RunReport {
    pub fn from_run(
        mode: RunMode,
        params: &ModelParams,
        metrics: &Metrics,
        phases: &PhaseReport,
        fingerprint: String,
    ) -> Self {
        Self {
            mode,
            metrics: Some(*metrics),
            processing_seconds: Some(phases.simulated_total_seconds()),
            simulated_train_seconds: phases.simulated_train_seconds(),
            phases: phases
                .iter()
                .map(|(p, t)| PhaseSummary {
                    phase: p.name().to_owned(),
                    simulated_seconds: t.simulated_seconds(),
                    compute_seconds: t.compute_seconds,
                    network_seconds: t.network_seconds,
                    bytes: t.bytes,
                    peak_tasks: t.peak_tasks,
                })
                .collect(),
            steps: phases.steps,
            sync_message_units: phases.sync_message_units,
            result_messages: phases.result_messages,
            transfer_count: phases.transfers.len(),
            bandwidth: bandwidth_table(&phases.transfers).unwrap_or_default(),
            params_checksum: Some(params_checksum(params)),
            cost_prediction: None,
            fingerprint,
        }
    }

    /// A bare report carrying only headline numbers, e.g. published figures.
    pub fn headline(mode: RunMode, processing_seconds: f64, accuracy: f64) -> Self {
        Self {
            mode,
            metrics: Some(Metrics { accuracy, ..Metrics::default() }),
            processing_seconds: Some(processing_seconds),
            simulated_train_seconds: 0.0,
            phases: Vec::new(),
            steps: 0,
            sync_message_units: 0,
            result_messages: 0,
            transfer_count: 0,
            bandwidth: Vec::new(),
            params_checksum: None,
            cost_prediction: None,
            fingerprint: String::new(),
        }
    }
}

pub fn params_checksum(params: &ModelParams) -> String {
    let mut bytes = Vec::with_capacity(8 * (params.weights.len() + 1));
    for w in params.weights.iter().chain([&params.bias]) {
        bytes.extend_from_slice(&w.to_bits().to_le_bytes());
    }
    format!("{:016x}", json::fnv1a(&bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub single: f64,
    pub distributed: f64,
    /// Time: reduction relative to single. Accuracy: gain relative to single.
    pub improvement_percent: f64,
    /// Absolute difference in percentage points, for accuracy.
    pub points: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, name: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Fixed-width text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {:>12} {:>12}  improvement", "metric", "single", "distributed");
        for r in &self.rows {
            let line = match r.name.as_str() {
                "processing_time_s" => format!(
                    "{:<22} {:>12.3} {:>12.3}  {:.1}% reduction",
                    "processing time (s)", r.single, r.distributed, r.improvement_percent
                ),
                "accuracy" => format!(
                    "{:<22} {:>11.2}% {:>11.2}%  {:.2}% relative ({:+.2} pts)",
                    "accuracy",
                    100.0 * r.single,
                    100.0 * r.distributed,
                    r.improvement_percent,
                    r.points.unwrap_or(0.0)
                ),
                other => format!("{:<22} {:>12.3} {:>12.3}  {:.2}%", other, r.single, r.distributed, r.improvement_percent),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

fn relative(baseline: f64, delta: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        delta / baseline * 100.0
    }
}

/// Time improvement is `(t_single - t_dist) / t_single * 100`; accuracy improvement is
/// `(a_dist - a_single) / a_single * 100`.
pub fn compare(single: &RunReport, dist: &RunReport) -> Result<Comparison, ReportError> {
    let time = |r: &RunReport| r.processing_seconds.ok_or(ReportError::Missing { field: "processing_seconds" });
    let acc = |r: &RunReport| {
        r.metrics.as_ref().map(|m| m.accuracy).ok_or(ReportError::Missing { field: "metrics.accuracy" })
    };
    let (ts, td) = (time(single)?, time(dist)?);
    let (a_s, a_d) = (acc(single)?, acc(dist)?);
    Ok(Comparison {
        rows: vec![
            ComparisonRow {
                name: "processing_time_s".into(),
                single: ts,
                distributed: td,
                improvement_percent: relative(ts, ts - td),
                points: None,
            },
            ComparisonRow {
                name: "accuracy".into(),
                single: a_s,
                distributed: a_d,
                improvement_percent: relative(a_s, a_d - a_s),
                points: Some(100.0 * (a_d - a_s)),
            },
        ],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRow {
    pub phase: TransferPhase,
    pub bytes: u64,
    pub seconds: f64,
    pub records: usize,
    pub avg_gbps: f64,
    pub peak_gbps: f64,
}

/// Per transfer phase: average = total bits / total seconds, peak = highest single
/// record rate. Zero-duration records count toward bytes but not peak.
pub fn bandwidth_table(records: &[TransferRecord]) -> Result<Vec<BandwidthRow>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::NoRecords);
    }
    Ok(TransferPhase::ALL
        .into_iter()
        .filter_map(|phase| {
            let mut row = BandwidthRow { phase, bytes: 0, seconds: 0.0, records: 0, avg_gbps: 0.0, peak_gbps: 0.0 };
            for r in records.iter().filter(|r| r.phase == phase) {
                row.bytes += r.bytes;
                row.seconds += r.simulated_seconds;
                row.records += 1;
                if r.simulated_seconds > 0.0 {
                    row.peak_gbps = row.peak_gbps.max(8.0 * r.bytes as f64 / r.simulated_seconds / 1e9);
                }
            }
            if row.records == 0 {
                return None;
            }
            if row.seconds > 0.0 {
                row.avg_gbps = 8.0 * row.bytes as f64 / row.seconds / 1e9;
            }
            Some(row)
        })
        .collect())
}

pub fn bandwidth_text(rows: &[BandwidthRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<22} {:>14} {:>10} {:>12} {:>12}", "phase", "bytes", "records", "avg Gbps", "peak Gbps");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<22} {:>14} {:>10} {:>12.4} {:>12.4}",
            r.phase.name(),
            r.bytes,
            r.records,
            r.avg_gbps,
            r.peak_gbps
        );
    }
    out
}

/// Calibrate-then-predict summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub calibrated: CostInputs,
    pub calibration_source: String,
    pub train_single: CostEstimate,
    pub train_distributed: CostEstimate,
    pub test_single: CostEstimate,
    pub test_distributed: CostEstimate,
    pub comm_overhead_train: u64,
    pub comm_overhead_test: u64,
    /// Simulator's training seconds for the predicted configuration, when it was run.
    pub simulated_distributed_train_seconds: Option<f64>,
    pub relative_error: Option<f64>,
    /// Sync term as the simulator's star aggregation charges it: `2 k I` messages.
    pub sync_star_seconds: f64,
    /// Sync term as predicted: `k log2(k) I` messages.
    pub sync_klogk_seconds: f64,
    pub knee: KneeAnalysis,
}
