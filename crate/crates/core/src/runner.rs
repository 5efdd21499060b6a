//! Experiment runner: loads data, runs the requested modes, and writes reports.
//!
//! Everything is computed before the first file is written, so a failing run
//! leaves no partial reports behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cluster::{train_distributed, ClusterConfig};
use crate::compute::ops;
use crate::config::{CalibrationSource, ExperimentConfig, InputFormat};
use crate::costmodel::{
    calibrate, comm_overhead, estimate_test, estimate_train_distributed, estimate_train_single, knee, CostInputs,
    OverheadPhase, PhaseTimes,
};
use crate::ingest::{load_embeddings, read_csv, Document, LabeledExample, ReadCounts};
use crate::model::{train_len, train_single, write_checkpoint, DataSource, ModelParams, TrainOutcome};
use crate::phase::PhaseReport;
use crate::report::{
    bandwidth_text, compare, fingerprint, to_canonical_string, CostReport, RunMode, RunReport,
};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Single,
    Distributed,
    Both,
    CostOnly,
}

/// Loaded input, either raw documents or precomputed embeddings.
#[derive(Clone, Debug)]
pub enum Dataset {
    Documents(Vec<Document>),
    Embedded(Vec<LabeledExample>),
}

impl Dataset {
    pub fn source(&self) -> DataSource<'_> {
        match self {
            Dataset::Documents(d) => DataSource::Documents(d),
            Dataset::Embedded(e) => DataSource::Embedded(e),
        }
    }

    pub fn len(&self) -> usize {
        self.source().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads the configured input and applies the subsample (first `n` examples).
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Dataset, ReadCounts), Error> {
    let path = cfg.input.as_ref().ok_or_else(|| Error::Config("data.input is not set".into()))?;
    let (mut data, counts) = match cfg.input_format {
        InputFormat::Csv => {
            let (docs, counts) = read_csv(path, &cfg.schema)?.collect_all()?;
            (Dataset::Documents(docs), counts)
        }
        InputFormat::Embeddings => {
            let examples = load_embeddings(path, cfg.embedder.dimension)?.collect::<Result<Vec<_>, _>>()?;
            let counts = ReadCounts { retained: examples.len() as u64, ..Default::default() };
            (Dataset::Embedded(examples), counts)
        }
    };
    if let Some(n) = cfg.subsample {
        if n > data.len() {
            return Err(Error::Data(format!("subsample {n} exceeds the {} examples available", data.len())));
        }
        match &mut data {
            Dataset::Documents(d) => d.truncate(n),
            Dataset::Embedded(e) => e.truncate(n),
        }
    }
    if data.is_empty() {
        return Err(Error::Data(format!("{} holds no usable examples", path.display())));
    }
    Ok((data, counts))
}

/// Cost-model shape for a run over `n` examples with `k` workers.
pub fn cost_shape(cfg: &ExperimentConfig, n: u64, k: usize) -> CostInputs {
    let hp = &cfg.hyperparams;
    let n_train = train_len(n as usize, hp.train_fraction) as u64;
    CostInputs::shape(
        n,
        n_train,
        cfg.embedder.dimension as u64,
        k as u64,
        hp.batch_size as u64,
        hp.iterations(n_train as usize),
        &cfg.network,
    )
}

fn phase_times(phases: &PhaseReport, source: CalibrationSource) -> PhaseTimes {
    match source {
        CalibrationSource::Simulated => PhaseTimes::simulated(phases),
        CalibrationSource::Wall => PhaseTimes::wall(phases),
    }
}

/// Calibrates compute unit costs from a finished run over `n` examples.
pub fn calibrate_from_run(cfg: &ExperimentConfig, phases: &PhaseReport, n: u64) -> Result<CostInputs, Error> {
    Ok(calibrate(&phase_times(phases, cfg.cost.calibration), &cost_shape(cfg, n, 1))?)
}

/// Builds the calibrate-then-predict report for `k` workers.
pub fn cost_report(
    cfg: &ExperimentConfig,
    calibrated: &CostInputs,
    calibration_source: &str,
    k: usize,
    simulated_train_seconds: Option<f64>,
) -> CostReport {
    let ci = calibrated.with_workers(k as u64);
    let train_distributed = estimate_train_distributed(&ci);
    let test_ci = CostInputs { n: ci.n - ci.n_train, ..ci.clone() };
    CostReport {
        calibrated: ci.clone(),
        calibration_source: calibration_source.to_owned(),
        train_single: estimate_train_single(&ci),
        test_single: estimate_test(&test_ci, false),
        test_distributed: estimate_test(&test_ci, true),
        comm_overhead_train: comm_overhead(&ci, OverheadPhase::Train),
        comm_overhead_test: comm_overhead(&ci, OverheadPhase::Test),
        relative_error: simulated_train_seconds.map(|s| (train_distributed.total - s).abs() / s),
        simulated_distributed_train_seconds: simulated_train_seconds,
        sync_star_seconds: 2.0 * ci.k as f64 * ci.iterations as f64 * ci.c_net,
        sync_klogk_seconds: train_distributed.sync,
        knee: knee(&ci, 1..=cfg.cost.knee_max_workers),
        train_distributed,
    }
}

/// Unit costs for `cost-only` mode: configured values, or the worker node model
/// applied to nominal operation counts.
fn nominal_costs(cfg: &ExperimentConfig, shape: CostInputs) -> CostInputs {
    const NOMINAL_TWEET_BYTES: usize = 80;
    let node = cfg.cluster.worker_node();
    let per_op = node.seconds(1);
    let c = &cfg.cost;
    CostInputs {
        c_pre: c.c_pre.unwrap_or(node.seconds(ops::preprocess(NOMINAL_TWEET_BYTES))),
        c_emb: c.c_emb.unwrap_or(2.0 * per_op),
        c_fwd: c.c_fwd.unwrap_or(2.0 * per_op),
        c_bwd: c.c_bwd.unwrap_or(2.0 * per_op),
        c_upd: c.c_upd.unwrap_or(2.0 * per_op),
        ..shape
    }
}

/// A file to write, with its contents.
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

/// Everything a run produced.
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    /// Human-readable summary for standard output, including wall-clock timings.
    pub summary: String,
}

impl RunOutput {
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, Error> {
        fs::create_dir_all(dir).map_err(|e| Error::Output(format!("{}: {e}", dir.display())))?;
        self.artifacts
            .iter()
            .map(|a| {
                let path = dir.join(&a.name);
                fs::write(&path, &a.contents).map_err(|e| Error::Output(format!("{}: {e}", path.display())))?;
                Ok(path)
            })
            .collect()
    }
}

fn json_artifact<T: Serialize>(name: &str, value: &T) -> Result<Artifact, Error> {
    Ok(Artifact { name: name.to_owned(), contents: to_canonical_string(value)?.into_bytes() })
}

fn checkpoint_artifact(name: &str, params: &ModelParams) -> Result<Artifact, Error> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params)?;
    Ok(Artifact { name: name.to_owned(), contents: buf })
}

#[derive(Serialize)]
struct Timings<'a> {
    mode: &'a str,
    preprocess: f64,
    embedding: f64,
    train_loop: f64,
    evaluate: f64,
    embed_plus_train: f64,
    total: f64,
}

fn timings<'a>(mode: &'a str, p: &PhaseReport) -> Timings<'a> {
    Timings {
        mode,
        preprocess: p.preprocess.wall_seconds,
        embedding: p.embedding.wall_seconds,
        train_loop: p.train_wall_seconds,
        evaluate: p.evaluate.wall_seconds,
        embed_plus_train: p.embed_train_wall_seconds(),
        total: p.total_wall_seconds(),
    }
}

fn describe(out: &mut String, label: &str, run: &TrainOutcome) {
    let p = &run.phases;
    let _ = writeln!(
        out,
        "{label}: accuracy {:.4} ({}/{}), {} steps, simulated {:.6} s (train {:.6} s), wall {:.3} s (embed+train {:.3} s)",
        run.metrics.accuracy,
        run.metrics.correct,
        run.metrics.total,
        p.steps,
        p.simulated_total_seconds(),
        p.simulated_train_seconds(),
        p.total_wall_seconds(),
        p.embed_train_wall_seconds(),
    );
}

/// Runs `mode` and returns the files to write plus a printable summary.
pub fn run(cfg: &ExperimentConfig, mode: Mode) -> Result<RunOutput, Error> {
    let fp = fingerprint(cfg)?;
    let k = cfg.cluster.worker_count;
    let mut artifacts = Vec::new();
    let mut summary = String::new();
    let mut timing_rows = Vec::new();

    if mode == Mode::CostOnly {
        let n = cfg.cost.examples.ok_or_else(|| Error::Config("cost.examples is required for cost-only mode".into()))?;
        if n < 2 {
            return Err(Error::Config("cost.examples must be at least 2".into()));
        }
        let ci = nominal_costs(cfg, cost_shape(cfg, n, 1));
        let report = cost_report(cfg, &ci, "nominal", k, None);
        let _ = writeln!(
            summary,
            "cost-only: n={n} k={k} predicted single {:.6} s, distributed {:.6} s, speedup {:.4}",
            report.train_single.total, report.train_distributed.total, report.train_distributed.predicted_speedup
        );
        artifacts.push(json_artifact("cost.json", &report)?);
        return Ok(RunOutput { artifacts, summary });
    }

    let (data, counts) = load_dataset(cfg)?;
    let n = data.len() as u64;
    let _ = writeln!(
        summary,
        "input: {} examples ({} read, {} neutral dropped, {} malformed)",
        n,
        counts.total(),
        counts.dropped_neutral,
        counts.malformed
    );

    let single = match mode {
        Mode::Single | Mode::Both => {
            let run = train_single(data.source(), &cfg.hyperparams, &cfg.embedder, &cfg.cluster.worker_node())?;
            describe(&mut summary, "single", &run);
            Some(run)
        }
        _ => None,
    };
    let dist = match mode {
        Mode::Distributed | Mode::Both => {
            let run = train_distributed(data.source(), &cfg.hyperparams, &cfg.cluster, &cfg.network, &cfg.embedder)?;
            describe(&mut summary, &format!("distributed k={k}"), &run);
            Some(run)
        }
        _ => None,
    };

    let single_report = single
        .as_ref()
        .map(|r| RunReport::from_run(RunMode::SingleNode, &r.params, &r.metrics, &r.phases, fp.clone()));
    let mut dist_report = dist.as_ref().map(|r| {
        RunReport::from_run(RunMode::Distributed { workers: k }, &r.params, &r.metrics, &r.phases, fp.clone())
    });

    if let (Some(s), Some(d)) = (&single, &dist) {
        let calibrated = calibrate_from_run(cfg, &s.phases, n)?;
        let source = match cfg.cost.calibration {
            CalibrationSource::Simulated => "single-node simulated compute",
            CalibrationSource::Wall => "single-node wall clock",
        };
        let cost = cost_report(cfg, &calibrated, source, k, Some(d.phases.simulated_train_seconds()));
        let _ = writeln!(
            summary,
            "cost model: predicted distributed train {:.6} s vs simulated {:.6} s (sync k·log2k {:.6} s, star 2k {:.6} s)",
            cost.train_distributed.total,
            d.phases.simulated_train_seconds(),
            cost.sync_klogk_seconds,
            cost.sync_star_seconds
        );
        if let Some(r) = dist_report.as_mut() {
            r.cost_prediction = Some(cost.train_distributed.clone());
        }
        let comparison = compare(single_report.as_ref().expect("single ran"), dist_report.as_ref().expect("dist ran"))?;
        summary.push_str(&comparison.to_table());
        artifacts.push(json_artifact("comparison.json", &comparison)?);
        artifacts.push(json_artifact("cost.json", &cost)?);
    }

    if let (Some(run), Some(report)) = (&single, &single_report) {
        artifacts.push(json_artifact("single.json", report)?);
        if cfg.output.checkpoints {
            artifacts.push(checkpoint_artifact("single.model", &run.params)?);
        }
        timing_rows.push(timings("single", &run.phases));
    }
    if let (Some(run), Some(report)) = (&dist, &dist_report) {
        artifacts.push(json_artifact("distributed.json", report)?);
        if cfg.output.checkpoints {
            artifacts.push(checkpoint_artifact("distributed.model", &run.params)?);
        }
        if cfg.output.transfers {
            let mut buf = Vec::new();
            run.phases.write_transfers_csv(&mut buf).map_err(|e| Error::Output(e.to_string()))?;
            artifacts.push(Artifact { name: "transfers.csv".into(), contents: buf });
        }
        summary.push_str(&bandwidth_text(&report.bandwidth));
        timing_rows.push(timings("distributed", &run.phases));
    }
    for t in &timing_rows {
        let _ = writeln!(
            summary,
            "wall {}: preprocess {:.3} s, embedding {:.3} s, train loop {:.3} s, evaluate {:.3} s",
            t.mode, t.preprocess, t.embedding, t.train_loop, t.evaluate
        );
    }
    if cfg.output.timings {
        artifacts.push(json_artifact("timings.json", &timing_rows)?);
    }
    Ok(RunOutput { artifacts, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub wall_seconds: f64,
    pub sim_seconds: f64,
    pub predicted_seconds: f64,
    pub accuracy: f64,
}

/// Distributed runs for each `k`, with predictions calibrated from a one-worker run.
pub fn sweep(cfg: &ExperimentConfig, k_values: &[usize]) -> Result<Vec<SweepRow>, Error> {
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(Error::Config("sweep needs one or more worker counts, each at least 1".into()));
    }
    let (data, _) = load_dataset(cfg)?;
    let n = data.len() as u64;
    let run_k = |k: usize| {
        let cc = ClusterConfig { worker_count: k, ..cfg.cluster.clone() };
        train_distributed(data.source(), &cfg.hyperparams, &cc, &cfg.network, &cfg.embedder)
    };
    let mut runs: Vec<(usize, TrainOutcome)> = Vec::with_capacity(k_values.len());
    for &k in k_values {
        runs.push((k, run_k(k)?));
    }
    let base = match runs.iter().find(|(k, _)| *k == 1) {
        Some((_, r)) => calibrate_from_run(cfg, &r.phases, n)?,
        None => calibrate_from_run(cfg, &run_k(1)?.phases, n)?,
    };
    Ok(runs
        .iter()
        .map(|(k, r)| SweepRow {
            k: *k,
            wall_seconds: r.phases.embed_train_wall_seconds(),
            sim_seconds: r.phases.simulated_train_seconds(),
            predicted_seconds: estimate_train_distributed(&base.with_workers(*k as u64)).total,
            accuracy: r.metrics.accuracy,
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k,wall_seconds,sim_seconds,predicted_seconds,accuracy\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.16e},{:.16e},{:.6}",
            r.k, r.wall_seconds, r.sim_seconds, r.predicted_seconds, r.accuracy
        );
    }
    out
}
