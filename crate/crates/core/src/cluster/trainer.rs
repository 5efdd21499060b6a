//! Data-parallel training over in-process workers.

use std::ops::Range;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use super::{balanced_ranges, partition, ClusterConfig, ClusterError, NetworkModel, SyncMode};
use crate::compute::ops;
use crate::ingest::{Document, EmbedderConfig, LabeledExample};
use crate::model::{
    accumulate_gradient, batch_gradient, confusion, embed_shard, prepare, preprocess_shard, residuals,
    sgd_step_in_place, BatchSchedule, Confusion, DataSource, GradientVector, Hyperparams, Metrics, ModelError,
    ModelParams, TrainOutcome,
};
use crate::phase::{NodeId, PhaseReport, PhaseTiming, TransferPhase};

/// One confusion matrix: four `u64` counts.
pub const RESULT_MESSAGE_BYTES: u64 = 32;

/// Gradient of one worker's slice. Same contract as [`batch_gradient`].
pub fn worker_gradient(
    slice: &[LabeledExample],
    params: &ModelParams,
    l2: f64,
) -> Result<GradientVector, ClusterError> {
    Ok(batch_gradient(params, slice, l2)?)
}

/// Example-count-weighted mean of `updates`, summed in the given (worker-id) order.
pub fn aggregate(updates: &[GradientVector]) -> Result<GradientVector, ClusterError> {
    let first = updates.first().ok_or(ClusterError::NoUpdates)?;
    let d = first.dimension();
    let total: usize = updates.iter().map(|u| u.example_count).sum();
    if total == 0 {
        return Err(ClusterError::NoUpdates);
    }
    let mut d_weights = vec![0.0; d];
    let mut d_bias = 0.0;
    for u in updates {
        if u.dimension() != d {
            return Err(ClusterError::DimensionMismatch { expected: d, found: u.dimension() });
        }
        let c = u.example_count as f64;
        for (acc, g) in d_weights.iter_mut().zip(&u.d_weights) {
            *acc += c * g;
        }
        d_bias += c * u.d_bias;
    }
    let inv = 1.0 / total as f64;
    for w in &mut d_weights {
        *w *= inv;
    }
    Ok(GradientVector { d_weights, d_bias: d_bias * inv, example_count: total })
}

/// Distributed pipeline: sharded preprocessing and embedding, split, partition of the
/// training set, data-parallel training, then sharded evaluation.
pub fn train_distributed(
    source: DataSource<'_>,
    hp: &Hyperparams,
    cc: &ClusterConfig,
    net: &NetworkModel,
    embedder: &EmbedderConfig,
) -> Result<TrainOutcome, ClusterError> {
    cc.validate()?;
    net.validate().map_err(ClusterError::InvalidConfig)?;
    let mut phases = PhaseReport::default();
    let (train, validation) = prepare(source, hp, embedder, |docs| embed_parallel(docs, embedder, cc, &mut phases))?;

    let d = embedder.dimension;
    let record_bytes = net.record_bytes_for(d);
    for part in partition(&train, cc.worker_count)? {
        phases.record_transfer(part.distribution_record(net, record_bytes));
    }
    phases.distribution.peak_tasks = 1;

    let params = match cc.sync_mode {
        SyncMode::Synchronous => train_synchronous(&train, hp, cc, net, &mut phases)?,
        SyncMode::LocalEpochs => train_local_epochs(&train, hp, cc, net, &mut phases)?,
    };
    let metrics = evaluate_distributed(&params, &validation, cc, net, &mut phases)?;
    Ok(TrainOutcome { params, metrics, phases })
}

/// Runs `f` once per input on its own scoped thread; results come back in input order.
fn run_workers<T: Send, R: Send>(inputs: Vec<T>, f: impl Fn(T) -> R + Sync) -> Vec<R> {
    thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = inputs.into_iter().map(|x| s.spawn(move || f(x))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|e| std::panic::resume_unwind(e)))
            .collect()
    })
}

fn embed_parallel(
    docs: &[Document],
    embedder: &EmbedderConfig,
    cc: &ClusterConfig,
    phases: &mut PhaseReport,
) -> Vec<LabeledExample> {
    let node = cc.worker_node();
    let shards: Vec<&[Document]> = balanced_ranges(docs.len(), cc.worker_count)
        .into_iter()
        .map(|r| &docs[r])
        .collect();
    let active = shards.iter().filter(|s| !s.is_empty()).count();

    let t0 = Instant::now();
    let pre = run_workers(shards.clone(), preprocess_shard);
    phases.preprocess.wall_seconds += t0.elapsed().as_secs_f64();
    phases.preprocess.compute_seconds += node.seconds(pre.iter().map(|p| p.1).max().unwrap_or(0));
    phases.preprocess.peak_tasks = phases.preprocess.peak_tasks.max(active);

    let t1 = Instant::now();
    let jobs: Vec<_> = pre.into_iter().map(|p| p.0).zip(shards).collect();
    let embedded = run_workers(jobs, |(tokens, shard)| embed_shard(&tokens, shard, embedder));
    phases.embedding.wall_seconds += t1.elapsed().as_secs_f64();
    phases.embedding.compute_seconds += node.seconds(embedded.iter().map(|e| e.1).max().unwrap_or(0));
    phases.embedding.peak_tasks = phases.embedding.peak_tasks.max(active);

    embedded.into_iter().flat_map(|e| e.0).collect()
}

fn record_sync_round(phases: &mut PhaseReport, net: &NetworkModel, k: usize, bytes: u64) {
    for w in 0..k {
        phases.record_transfer(net.transfer(TransferPhase::ModelSynchronization, NodeId::Worker(w), NodeId::Master, bytes));
    }
    for w in 0..k {
        phases.record_transfer(net.transfer(TransferPhase::ModelSynchronization, NodeId::Master, NodeId::Worker(w), bytes));
    }
}

/// One global step as published to the workers.
struct StepJob {
    params: ModelParams,
    chunk: Vec<usize>,
}

struct WorkerStep {
    grad: GradientVector,
    forward_wall: f64,
    backward_wall: f64,
}

type Reply = Result<Option<WorkerStep>, ModelError>;

const NO_PANIC: usize = usize::MAX;

/// Step barrier shared by the master and the workers. The master publishes a job and
/// bumps `generation`; each worker computes its slice, fills its slot, and bumps
/// `finished`. Waits spin briefly and then yield, since a step is only microseconds
/// of work and a sleeping wakeup would cost more than the step itself.
struct StepBarrier {
    generation: AtomicU64,
    finished: AtomicUsize,
    stop: AtomicBool,
    panicked: AtomicUsize,
    job: Mutex<Option<Arc<StepJob>>>,
    spin_limit: u32,
    slots: Vec<Mutex<Option<Reply>>>,
}

fn wait_until(spin_limit: u32, mut ready: impl FnMut() -> bool) {
    let mut spins = 0u32;
    while !ready() {
        if spins < spin_limit {
            std::hint::spin_loop();
            spins += 1;
        } else {
            thread::yield_now();
        }
    }
}

/// Spin only when every thread of the step can hold its own core; otherwise spinning
/// steals the core from the thread being waited on.
fn spin_limit(threads: usize) -> u32 {
    let cores = thread::available_parallelism().map_or(1, |n| n.get());
    if cores >= threads {
        2000
    } else {
        0
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Flags the barrier if its worker unwinds, so the master stops waiting.
struct PanicFlag<'a> {
    barrier: &'a StepBarrier,
    worker: usize,
}

/// Releases the workers when the master leaves the step loop, including by unwinding.
struct StopOnDrop<'a>(&'a AtomicBool);

impl Drop for StopOnDrop<'_> {
    fn drop(&mut self) {
        self.0.store(true, Ordering::Release);
    }
}

impl Drop for PanicFlag<'_> {
    fn drop(&mut self) {
        if thread::panicking() {
            let _ = self.barrier.panicked.compare_exchange(NO_PANIC, self.worker, Ordering::AcqRel, Ordering::Acquire);
        }
    }
}

/// Computes worker `worker`'s slice of the published step.
fn slice_gradient<'a>(
    job: &StepJob,
    worker: usize,
    k: usize,
    train: &'a [LabeledExample],
    l2: f64,
    batch: &mut Vec<&'a LabeledExample>,
    resid: &mut Vec<f64>,
) -> Reply {
    let range = balanced_ranges(job.chunk.len(), k).swap_remove(worker);
    if range.is_empty() {
        return Ok(None);
    }
    batch.clear();
    batch.extend(job.chunk[range].iter().map(|&i| &train[i]));
    let t0 = Instant::now();
    residuals(&job.params, batch, resid)?;
    let t1 = Instant::now();
    let grad = accumulate_gradient(&job.params, batch, resid, l2);
    Ok(Some(WorkerStep { grad, forward_wall: (t1 - t0).as_secs_f64(), backward_wall: t1.elapsed().as_secs_f64() }))
}

fn worker_loop(barrier: &StepBarrier, worker: usize, k: usize, train: &[LabeledExample], l2: f64) {
    let _flag = PanicFlag { barrier, worker };
    let mut batch = Vec::new();
    let mut resid = Vec::new();
    let mut seen = 0;
    loop {
        wait_until(barrier.spin_limit, || {
            barrier.generation.load(Ordering::Acquire) != seen || barrier.stop.load(Ordering::Acquire)
        });
        if barrier.stop.load(Ordering::Acquire) {
            return;
        }
        seen = barrier.generation.load(Ordering::Acquire);
        let job = lock(&barrier.job).clone().expect("job published before generation bump");
        let reply = slice_gradient(&job, worker, k, train, l2, &mut batch, &mut resid);
        *lock(&barrier.slots[worker]) = Some(reply);
        barrier.finished.fetch_add(1, Ordering::AcqRel);
    }
}

/// One global update per global mini-batch. The batch is split evenly across the
/// workers, who compute slice gradients concurrently; the master waits for all `k`
/// replies, aggregates in worker-id order, and steps. Worker 0 runs on the calling
/// thread, so a step occupies exactly `k` threads.
fn train_synchronous(
    train: &[LabeledExample],
    hp: &Hyperparams,
    cc: &ClusterConfig,
    net: &NetworkModel,
    phases: &mut PhaseReport,
) -> Result<ModelParams, ClusterError> {
    let k = cc.worker_count;
    let d = train[0].x().len();
    let message = net.param_message_bytes(d);
    let (worker_node, master_node) = (cc.worker_node(), cc.master_node());

    let mut params = ModelParams::zeros(d);
    let mut schedule = BatchSchedule::new(train.len(), hp.shuffle_seed);
    let (mut fwd_ops, mut bwd_ops, mut upd_ops) = (0u64, 0u64, 0u64);
    let (mut fwd_wall, mut bwd_wall, mut upd_wall) = (0.0, 0.0, 0.0);
    let mut peak = 0;

    let barrier = StepBarrier {
        generation: AtomicU64::new(0),
        finished: AtomicUsize::new(0),
        stop: AtomicBool::new(false),
        panicked: AtomicUsize::new(NO_PANIC),
        job: Mutex::new(None),
        spin_limit: spin_limit(k),
        slots: (0..k).map(|_| Mutex::new(None)).collect(),
    };

    let loop_start = Instant::now();
    let result = thread::scope(|s| {
        let barrier = &barrier;
        let handles: Vec<_> =
            (1..k).map(|w| s.spawn(move || worker_loop(barrier, w, k, train, hp.l2))).collect();

        let mut run = || -> Result<(), ClusterError> {
            let mut updates = Vec::with_capacity(k);
            let (mut batch, mut resid) = (Vec::new(), Vec::new());
            for _ in 0..hp.epochs {
                for chunk in schedule.next_epoch().chunks(hp.batch_size) {
                    let job = Arc::new(StepJob { params: params.clone(), chunk: chunk.to_vec() });
                    *lock(&barrier.job) = Some(Arc::clone(&job));
                    barrier.finished.store(0, Ordering::Release);
                    barrier.generation.fetch_add(1, Ordering::AcqRel);
                    let own = slice_gradient(&job, 0, k, train, hp.l2, &mut batch, &mut resid);
                    *lock(&barrier.slots[0]) = Some(own);
                    wait_until(barrier.spin_limit, || {
                        barrier.finished.load(Ordering::Acquire) == k - 1
                            || barrier.panicked.load(Ordering::Acquire) != NO_PANIC
                    });
                    let panicked = barrier.panicked.load(Ordering::Acquire);
                    if panicked != NO_PANIC {
                        return Err(ClusterError::WorkerPanicked(panicked));
                    }

                    updates.clear();
                    let (mut step_fwd, mut step_bwd) = (0.0f64, 0.0f64);
                    for slot in &barrier.slots {
                        let reply = lock(slot).take().expect("every worker replied");
                        if let Some(step) = reply? {
                            step_fwd = step_fwd.max(step.forward_wall);
                            step_bwd = step_bwd.max(step.backward_wall);
                            updates.push(step.grad);
                        }
                    }

                    let t0 = Instant::now();
                    let grad = aggregate(&updates)?;
                    sgd_step_in_place(&mut params, &grad, hp.learning_rate)?;
                    upd_wall += t0.elapsed().as_secs_f64();
                    fwd_wall += step_fwd;
                    bwd_wall += step_bwd;

                    let widest = chunk.len().div_ceil(k) as u64;
                    fwd_ops += widest * ops::forward(d);
                    bwd_ops += widest * ops::backward(d);
                    upd_ops += ops::aggregate(updates.len(), d) + ops::update(d);
                    peak = peak.max(updates.len());
                    record_sync_round(phases, net, k, message);
                    phases.sync_message_units += (k * chunk.len()) as u64;
                    phases.steps += 1;
                }
            }
            Ok(())
        };
        let result = {
            let _stop = StopOnDrop(&barrier.stop);
            run()
        };
        for h in handles {
            // A panicked worker has already been reported through the barrier.
            let _ = h.join();
        }
        result
    });
    let train_wall = loop_start.elapsed().as_secs_f64();
    result?;

    phases.train_wall_seconds += train_wall;
    add_compute(&mut phases.forward, fwd_wall, worker_node.seconds(fwd_ops), peak);
    add_compute(&mut phases.backward, bwd_wall, worker_node.seconds(bwd_ops), peak);
    add_compute(&mut phases.update, upd_wall, master_node.seconds(upd_ops), 1);
    phases.synchronization.wall_seconds += (train_wall - fwd_wall - bwd_wall - upd_wall).max(0.0);
    phases.synchronization.peak_tasks = phases.synchronization.peak_tasks.max(k);
    Ok(params)
}

fn add_compute(timing: &mut PhaseTiming, wall: f64, compute: f64, tasks: usize) {
    timing.wall_seconds += wall;
    timing.compute_seconds += compute;
    timing.peak_tasks = timing.peak_tasks.max(tasks);
}

fn local_seed(seed: u64, worker: usize) -> u64 {
    seed ^ (worker as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

struct LocalRound {
    params: ModelParams,
    fwd_ops: u64,
    bwd_ops: u64,
    upd_ops: u64,
    fwd_wall: f64,
    bwd_wall: f64,
    upd_wall: f64,
}

fn local_epoch(
    shard: &[LabeledExample],
    start: &ModelParams,
    schedule: &mut BatchSchedule,
    hp: &Hyperparams,
) -> Result<LocalRound, ModelError> {
    let d = start.dimension();
    let mut round = LocalRound {
        params: start.clone(),
        fwd_ops: 0,
        bwd_ops: 0,
        upd_ops: 0,
        fwd_wall: 0.0,
        bwd_wall: 0.0,
        upd_wall: 0.0,
    };
    let mut batch: Vec<&LabeledExample> = Vec::with_capacity(hp.batch_size);
    let mut resid = Vec::with_capacity(hp.batch_size);
    for chunk in schedule.next_epoch().chunks(hp.batch_size) {
        batch.clear();
        batch.extend(chunk.iter().map(|&i| &shard[i]));
        let t0 = Instant::now();
        residuals(&round.params, &batch, &mut resid)?;
        let t1 = Instant::now();
        let grad = accumulate_gradient(&round.params, &batch, &resid, hp.l2);
        let t2 = Instant::now();
        sgd_step_in_place(&mut round.params, &grad, hp.learning_rate)?;
        round.fwd_wall += (t1 - t0).as_secs_f64();
        round.bwd_wall += (t2 - t1).as_secs_f64();
        round.upd_wall += t2.elapsed().as_secs_f64();
        round.fwd_ops += batch.len() as u64 * ops::forward(d);
        round.bwd_ops += batch.len() as u64 * ops::backward(d);
        round.upd_ops += ops::update(d);
    }
    Ok(round)
}

/// Each round, every worker runs one local epoch of SGD over its own shard, then the
/// master averages the resulting parameters weighted by shard size. Not equivalent
/// to single-node training.
fn train_local_epochs(
    train: &[LabeledExample],
    hp: &Hyperparams,
    cc: &ClusterConfig,
    net: &NetworkModel,
    phases: &mut PhaseReport,
) -> Result<ModelParams, ClusterError> {
    let k = cc.worker_count;
    let d = train[0].x().len();
    let message = net.param_message_bytes(d);
    let (worker_node, master_node) = (cc.worker_node(), cc.master_node());
    let ranges: Vec<Range<usize>> = balanced_ranges(train.len(), k);
    let mut schedules: Vec<BatchSchedule> = ranges
        .iter()
        .enumerate()
        .map(|(w, r)| BatchSchedule::new(r.len(), local_seed(hp.shuffle_seed, w)))
        .collect();
    let mut params = ModelParams::zeros(d);

    let loop_start = Instant::now();
    for _ in 0..hp.epochs {
        let start = &params;
        let jobs: Vec<_> = ranges.iter().cloned().zip(schedules.iter_mut()).collect();
        let rounds = run_workers(jobs, |(r, schedule)| local_epoch(&train[r], start, schedule, hp));
        let rounds = rounds.into_iter().collect::<Result<Vec<_>, _>>()?;

        let t0 = Instant::now();
        let mut weights = vec![0.0; d];
        let mut bias = 0.0;
        for (round, r) in rounds.iter().zip(&ranges) {
            let c = r.len() as f64;
            for (acc, w) in weights.iter_mut().zip(&round.params.weights) {
                *acc += c * w;
            }
            bias += c * round.params.bias;
        }
        let inv = 1.0 / train.len() as f64;
        weights.iter_mut().for_each(|w| *w *= inv);
        params = ModelParams { weights, bias: bias * inv };
        let avg_wall = t0.elapsed().as_secs_f64();

        let max = |f: fn(&LocalRound) -> u64| rounds.iter().map(f).max().unwrap_or(0);
        let maxf = |f: fn(&LocalRound) -> f64| rounds.iter().map(f).fold(0.0, f64::max);
        add_compute(&mut phases.forward, maxf(|r| r.fwd_wall), worker_node.seconds(max(|r| r.fwd_ops)), k);
        add_compute(&mut phases.backward, maxf(|r| r.bwd_wall), worker_node.seconds(max(|r| r.bwd_ops)), k);
        add_compute(
            &mut phases.update,
            maxf(|r| r.upd_wall) + avg_wall,
            worker_node.seconds(max(|r| r.upd_ops)) + master_node.seconds(ops::aggregate(k, d)),
            k,
        );
        record_sync_round(phases, net, k, message);
        phases.sync_message_units += (k * train.len()) as u64;
        phases.steps += 1;
    }
    phases.train_wall_seconds += loop_start.elapsed().as_secs_f64();
    phases.synchronization.peak_tasks = phases.synchronization.peak_tasks.max(k);
    Ok(params)
}

/// Each worker scores a contiguous slice of the validation set and sends its
/// confusion counts to the master in one message.
fn evaluate_distributed(
    params: &ModelParams,
    validation: &[LabeledExample],
    cc: &ClusterConfig,
    net: &NetworkModel,
    phases: &mut PhaseReport,
) -> Result<Metrics, ClusterError> {
    let k = cc.worker_count;
    let d = params.dimension();
    let ranges = balanced_ranges(validation.len(), k);
    let widest = ranges[0].len() as u64;

    let t0 = Instant::now();
    let parts = run_workers(ranges, |r| confusion(params, &validation[r]));
    phases.evaluate.wall_seconds += t0.elapsed().as_secs_f64();
    phases.evaluate.compute_seconds += cc.worker_node().seconds(widest * ops::forward(d));
    phases.evaluate.peak_tasks = phases.evaluate.peak_tasks.max(k);

    let mut total = Confusion::default();
    for (w, part) in parts.into_iter().enumerate() {
        total.merge(&part?);
        phases.record_transfer(net.transfer(
            TransferPhase::ResultCollection,
            NodeId::Worker(w),
            NodeId::Master,
            RESULT_MESSAGE_BYTES,
        ));
        phases.result_messages += 1;
    }
    phases.collection.peak_tasks = phases.collection.peak_tasks.max(1);
    Ok(Metrics::from_confusion(total))
}
