//! Acceptance suite. Prints one line per criterion and exits nonzero if any fails.
//!
//! Run with `cargo test --test acceptance`. Criterion 4 needs four or more cores and
//! reports SKIP (with the measured ratio) on smaller hosts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sentidist::cluster::{train_distributed, ClusterConfig, NetworkModel};
use sentidist::config::ExperimentConfig;
use sentidist::costmodel::{calibrate, estimate_train_distributed, knee, PhaseTimes};
use sentidist::ingest::{read_csv, CsvSchema, Document, EmbedderConfig, LabeledExample};
use sentidist::model::{batch_gradient, train_single, DataSource, Hyperparams, ModelParams};
use sentidist::phase::TransferPhase;
use sentidist::report::{compare, RunMode, RunReport};
use sentidist::runner::cost_shape;
use sentidist::synth::{generate, SynthConfig};

const EQUIVALENCE_TOL: f64 = 1e-9;
const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-6;
/// Floor on the finite-difference denominator, so coordinates whose true gradient is
/// zero are judged on absolute error.
const FD_FLOOR: f64 = 1e-3;
const FD_DRAWS: usize = 50;
const MIN_ACCURACY: f64 = 0.99;
const MAX_WALL_RATIO: f64 = 0.6;
const MIN_CORES: usize = 4;
const COST_TOL: f64 = 0.30;
const KNEE_MAX_K: u64 = 64;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn sample_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample.csv")
}

fn sample_docs() -> Vec<Document> {
    read_csv(sample_path(), &CsvSchema::sentiment140()).unwrap().collect_all().unwrap().0
}

fn synth(examples: usize, seed: u64) -> Vec<Document> {
    generate(&SynthConfig { examples, seed, ..Default::default() })
}

fn embedder(d: usize) -> EmbedderConfig {
    EmbedderConfig { dimension: d, ..Default::default() }
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn c1_equivalence() -> Outcome {
    let docs = synth(10_000, 1);
    let hp = Hyperparams { epochs: 2, batch_size: 32, ..Default::default() };
    let emb = embedder(64);
    let net = NetworkModel::default();
    let single = train_single(DataSource::Documents(&docs), &hp, &emb, &ClusterConfig::default().worker_node()).unwrap();
    let mut worst = 0.0f64;
    for k in [1, 2, 4] {
        let dist = train_distributed(DataSource::Documents(&docs), &hp, &ClusterConfig::with_workers(k), &net, &emb).unwrap();
        worst = worst.max(single.params.max_relative_diff(&dist.params));
    }
    verdict(worst <= EQUIVALENCE_TOL, format!("max relative parameter difference {worst:.3e} (tol {EQUIVALENCE_TOL:e})"))
}

/// Mean cross-entropy plus ridge term, written out per example.
fn scalar_loss(w: &[f64], b: f64, batch: &[LabeledExample], l2: f64) -> f64 {
    let mut total = 0.0;
    for ex in batch {
        let z: f64 = w.iter().zip(ex.x()).map(|(w, x)| w * x).sum::<f64>() + b;
        // log(1 + e^z) - y z, stable for either sign of z
        let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        total += softplus - ex.y() * z;
    }
    total / batch.len() as f64 + 0.5 * l2 * w.iter().map(|w| w * w).sum::<f64>()
}

fn c2_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..FD_DRAWS {
        let d = rng.random_range(1..=24);
        let m = rng.random_range(1..=16);
        let l2 = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.5) };
        let batch: Vec<LabeledExample> = (0..m)
            .map(|_| {
                let x = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                LabeledExample::new(x, rng.random_range(0..=1)).unwrap()
            })
            .collect();
        let params = ModelParams {
            weights: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
            bias: rng.random_range(-1.0..1.0),
        };
        let g = batch_gradient(&params, &batch, l2).unwrap();
        for j in 0..=d {
            let bump = |delta: f64| {
                let mut w = params.weights.clone();
                let mut b = params.bias;
                if j < d {
                    w[j] += delta;
                } else {
                    b += delta;
                }
                scalar_loss(&w, b, &batch, l2)
            };
            let fd = (bump(FD_STEP) - bump(-FD_STEP)) / (2.0 * FD_STEP);
            let analytic = if j < d { g.d_weights[j] } else { g.d_bias };
            let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(FD_FLOOR);
            worst = worst.max(err);
        }
    }
    verdict(worst < FD_TOL, format!("{FD_DRAWS} draws, worst relative error {worst:.3e} (tol {FD_TOL:e})"))
}

fn c3_accuracy() -> Outcome {
    let docs = sample_docs();
    let hp = Hyperparams::default();
    let run = train_single(DataSource::Documents(&docs), &hp, &EmbedderConfig::default(), &ClusterConfig::default().worker_node())
        .unwrap();
    let acc = run.metrics.accuracy;
    verdict(
        acc >= MIN_ACCURACY,
        format!("validation accuracy {acc:.4} on {} examples, {} epochs, lr {}", docs.len(), hp.epochs, hp.learning_rate),
    )
}

fn c4_speedup() -> Outcome {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let docs = synth(100_000, 4);
    let hp = Hyperparams::default();
    let emb = embedder(256);
    let cc = ClusterConfig::with_workers(4);
    let single = train_single(DataSource::Documents(&docs), &hp, &emb, &cc.worker_node()).unwrap();
    let dist = train_distributed(DataSource::Documents(&docs), &hp, &cc, &NetworkModel::default(), &emb).unwrap();
    let (s, d) = (single.phases.embed_train_wall_seconds(), dist.phases.embed_train_wall_seconds());
    let ratio = d / s;
    let split = |p: &sentidist::phase::PhaseReport| {
        format!("{:.2}+{:.2}+{:.2}", p.preprocess.wall_seconds, p.embedding.wall_seconds, p.train_wall_seconds)
    };
    let detail = format!(
        "embed+train wall {d:.3} s vs {s:.3} s (pre+emb+train {} vs {}), ratio {ratio:.3} (limit {MAX_WALL_RATIO}), {cores} cores",
        split(&dist.phases),
        split(&single.phases)
    );
    if cores < MIN_CORES {
        return Outcome::Skip(format!("needs {MIN_CORES} cores; {detail}"));
    }
    verdict(ratio <= MAX_WALL_RATIO, detail)
}

fn c5_cost_fidelity() -> Outcome {
    let docs = sample_docs();
    let cfg = ExperimentConfig::default();
    let run = |k| {
        let cc = ClusterConfig::with_workers(k);
        train_distributed(DataSource::Documents(&docs), &cfg.hyperparams, &cc, &cfg.network, &cfg.embedder).unwrap()
    };
    let base = run(1);
    let target = run(4);
    let ci = calibrate(&PhaseTimes::simulated(&base.phases), &cost_shape(&cfg, docs.len() as u64, 1)).unwrap();
    let predicted = estimate_train_distributed(&ci.with_workers(4));
    let simulated = target.phases.simulated_train_seconds();
    let err = (predicted.total - simulated).abs() / simulated;
    let speedup_ok = (1..=KNEE_MAX_K).all(|k| estimate_train_distributed(&ci.with_workers(k)).predicted_speedup <= k as f64);
    verdict(
        err <= COST_TOL && predicted.predicted_speedup <= 4.0 && speedup_ok,
        format!(
            "predicted {:.4} s vs simulated {simulated:.4} s, error {:.1}% (tol {:.0}%), speedup {:.3}",
            predicted.total,
            100.0 * err,
            100.0 * COST_TOL,
            predicted.predicted_speedup
        ),
    )
}

fn c6_message_counts() -> Outcome {
    let docs = synth(32_000, 6);
    let hp = Hyperparams { epochs: 2, batch_size: 32, train_fraction: 0.5, ..Default::default() };
    let run = train_distributed(DataSource::Documents(&docs), &hp, &ClusterConfig::with_workers(4), &NetworkModel::default(), &embedder(16))
        .unwrap();
    let p = &run.phases;
    let (k, b, i) = (4u64, 32u64, 1_000u64);
    verdict(
        p.steps == i && p.sync_message_units == k * b * i && p.result_messages == k,
        format!("I={} sync units {} (expected {}), test messages {} (expected {k})", p.steps, p.sync_message_units, k * b * i, p.result_messages),
    )
}

fn c7_byte_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut details = Vec::new();
    let mut ok = true;
    for _ in 0..3 {
        let n = rng.random_range(200..2_000);
        let d = rng.random_range(4..64);
        let k = rng.random_range(1..=8);
        let hp = Hyperparams {
            epochs: rng.random_range(1..=3),
            batch_size: rng.random_range(1..=64),
            train_fraction: rng.random_range(0.5..0.8),
            shuffle_seed: rng.random(),
            ..Default::default()
        };
        let net = NetworkModel::default();
        let docs = synth(n, rng.random());
        let run = train_distributed(DataSource::Documents(&docs), &hp, &ClusterConfig::with_workers(k), &net, &embedder(d)).unwrap();
        let p = &run.phases;
        let n_train = sentidist::model::train_len(n, hp.train_fraction) as u64;
        let dist_ok = p.transfer_bytes(TransferPhase::DataDistribution) == n_train * net.record_bytes_for(d);
        let sync_ok = p.transfer_bytes(TransferPhase::ModelSynchronization) == p.steps * k as u64 * 2 * (d as u64 + 1) * 8;
        ok &= dist_ok && sync_ok;
        details.push(format!("n={n} d={d} k={k} B={} {}", hp.batch_size, if dist_ok && sync_ok { "ok" } else { "MISMATCH" }));
    }
    verdict(ok, details.join("; "))
}

fn c8_table() -> Outcome {
    let single = RunReport::headline(RunMode::SingleNode, 179.0, 0.852);
    let dist = RunReport::headline(RunMode::Distributed { workers: 4 }, 46.0, 0.881);
    let table = compare(&single, &dist).unwrap().to_table();
    let ok = table.contains("74.3% reduction") && table.contains("3.40% relative");
    let lines: Vec<&str> = table.lines().filter(|l| l.contains('%')).map(str::trim).collect();
    verdict(ok, lines.join(" | "))
}

fn c9_knee() -> Outcome {
    let docs = sample_docs();
    let cfg = ExperimentConfig::default();
    let run = train_distributed(DataSource::Documents(&docs), &cfg.hyperparams, &ClusterConfig::with_workers(1), &cfg.network, &cfg.embedder)
        .unwrap();
    let ci = calibrate(&PhaseTimes::simulated(&run.phases), &cost_shape(&cfg, docs.len() as u64, 1)).unwrap();
    let analysis = knee(&ci, 1..=KNEE_MAX_K);
    verdict(
        ci.latency > 0.0 && analysis.has_knee && analysis.argmin < KNEE_MAX_K,
        format!("latency {:.0} us, minimizer k={} over 1..={KNEE_MAX_K}", ci.latency * 1e6, analysis.argmin),
    )
}

fn c10_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_sentidist"))
            .args(["--mode", "both", "--subsample", "4000", "--input"])
            .arg(sample_path())
            .arg("--out")
            .arg(&out)
            .env_remove("SENTIDIST_CONFIG")
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let mut files: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.into_iter().map(|p| (p.file_name().unwrap().to_owned(), fs::read(&p).unwrap())).collect::<Vec<_>>()
    };
    let (a, b) = (run("a"), run("b"));
    let differing: Vec<String> =
        a.iter().zip(&b).filter(|(x, y)| x != y).map(|(x, _)| x.0.to_string_lossy().into_owned()).collect();
    let names: Vec<String> = a.iter().map(|f| f.0.to_string_lossy().into_owned()).collect();
    verdict(
        a.len() == b.len() && a.len() >= 4 && differing.is_empty(),
        format!("{} files compared ({}), differing: {differing:?}", a.len(), names.join(", ")),
    )
}

fn main() {
    let criteria: [(&str, Duration, Check); 10] = [
        ("C1 synchronous equivalence", Duration::from_secs(30), c1_equivalence),
        ("C2 gradient correctness", Duration::from_secs(5), c2_gradient),
        ("C3 separable-data accuracy", Duration::from_secs(20), c3_accuracy),
        ("C4 desk-scale speedup", Duration::from_secs(300), c4_speedup),
        ("C5 cost-model fidelity", Duration::MAX, c5_cost_fidelity),
        ("C6 communication counts", Duration::MAX, c6_message_counts),
        ("C7 byte conservation", Duration::MAX, c7_byte_conservation),
        ("C8 table reproduction", Duration::MAX, c8_table),
        ("C9 sync-cost knee", Duration::MAX, c9_knee),
        ("C10 determinism", Duration::MAX, c10_determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let t0 = Instant::now();
        let outcome = check();
        let elapsed = t0.elapsed();
        let over = elapsed > budget;
        let (tag, detail) = match outcome {
            Outcome::Pass(d) if over => ("FAIL", format!("{d}; took {:.1} s, budget {} s", elapsed.as_secs_f64(), budget.as_secs())),
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} {name}: {detail} [{:.2} s]", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
