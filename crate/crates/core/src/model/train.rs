//! Mini-batch SGD training loop and the single-node pipeline.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    accumulate_gradient, confusion, residuals, sgd_step_in_place, split, Metrics, ModelError, ModelParams, Result,
};
use crate::compute::{ops, NodeSpec};
use crate::ingest::{embed, preprocess, Document, EmbedderConfig, LabeledExample, TokenList};
use crate::phase::PhaseReport;

/// Stream constant separating the epoch-shuffle RNG from the split RNG.
const EPOCH_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_fraction: f64,
    pub l2: f64,
    pub shuffle_seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { learning_rate: 0.01, batch_size: 32, epochs: 10, train_fraction: 0.7, l2: 0.0, shuffle_seed: 42 }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidHyperparams(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must be in (0, 1), got {}", self.train_fraction));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad(format!("l2 must be nonnegative, got {}", self.l2));
        }
        Ok(())
    }

    /// Optimizer steps for `n_train` examples: `epochs * ceil(n_train / batch_size)`.
    pub fn iterations(&self, n_train: usize) -> u64 {
        (self.epochs * n_train.div_ceil(self.batch_size)) as u64
    }
}

/// Per-epoch example order. Single-node and synchronous distributed training draw
/// the same sequence, which is what makes their results comparable step for step.
pub struct BatchSchedule {
    order: Vec<usize>,
    rng: ChaCha8Rng,
}

impl BatchSchedule {
    pub fn new(n_train: usize, seed: u64) -> Self {
        Self { order: (0..n_train).collect(), rng: ChaCha8Rng::seed_from_u64(seed ^ EPOCH_STREAM) }
    }

    pub fn next_epoch(&mut self) -> &[usize] {
        self.order.shuffle(&mut self.rng);
        &self.order
    }
}

/// Input to a training pipeline: raw documents, or examples embedded elsewhere.
#[derive(Clone, Copy, Debug)]
pub enum DataSource<'a> {
    Documents(&'a [Document]),
    Embedded(&'a [LabeledExample]),
}

impl DataSource<'_> {
    pub fn len(&self) -> usize {
        match self {
            DataSource::Documents(d) => d.len(),
            DataSource::Embedded(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub metrics: Metrics,
    pub phases: PhaseReport,
}

/// Preprocesses one shard, returning tokens, op count, and wall seconds.
pub(crate) fn preprocess_shard(docs: &[Document]) -> (Vec<TokenList>, u64, f64) {
    let t0 = Instant::now();
    let tokens: Vec<_> = docs.iter().map(|d| preprocess(&d.raw_text)).collect();
    let wall = t0.elapsed().as_secs_f64();
    let count = docs.iter().map(|d| ops::preprocess(d.raw_text.len())).sum();
    (tokens, count, wall)
}

/// Embeds one preprocessed shard, returning examples, op count, and wall seconds.
pub(crate) fn embed_shard(
    tokens: &[TokenList],
    docs: &[Document],
    config: &EmbedderConfig,
) -> (Vec<LabeledExample>, u64, f64) {
    let t0 = Instant::now();
    let examples: Vec<_> = tokens
        .iter()
        .zip(docs)
        .map(|(t, d)| LabeledExample { embedding: embed(t, config), label: d.label.as_label() })
        .collect();
    let wall = t0.elapsed().as_secs_f64();
    let count = tokens.iter().map(|t| ops::embed(config.ngram_count(t.len()), config.dimension)).sum();
    (examples, count, wall)
}

/// Embeds on one node, filling the preprocess and embedding phases.
pub fn embed_sequential(
    docs: &[Document],
    config: &EmbedderConfig,
    node: &NodeSpec,
    phases: &mut PhaseReport,
) -> Vec<LabeledExample> {
    let (tokens, pre_ops, pre_wall) = preprocess_shard(docs);
    let (examples, emb_ops, emb_wall) = embed_shard(&tokens, docs, config);
    phases.preprocess.wall_seconds += pre_wall;
    phases.preprocess.compute_seconds += node.seconds(pre_ops);
    phases.preprocess.peak_tasks = phases.preprocess.peak_tasks.max(1);
    phases.embedding.wall_seconds += emb_wall;
    phases.embedding.compute_seconds += node.seconds(emb_ops);
    phases.embedding.peak_tasks = phases.embedding.peak_tasks.max(1);
    examples
}

/// Checks all examples share `dimension`.
pub(crate) fn check_dimensions(examples: &[LabeledExample], dimension: usize) -> Result<()> {
    match examples.iter().find(|e| e.x().len() != dimension) {
        Some(e) => Err(ModelError::DimensionMismatch { expected: dimension, found: e.x().len() }),
        None => Ok(()),
    }
}

/// Turns a data source into embedded examples, then the train/validation split.
pub(crate) fn prepare(
    source: DataSource<'_>,
    hp: &Hyperparams,
    embedder: &EmbedderConfig,
    embed_docs: impl FnOnce(&[Document]) -> Vec<LabeledExample>,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>)> {
    hp.validate()?;
    if source.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let examples = match source {
        DataSource::Documents(docs) => embed_docs(docs),
        DataSource::Embedded(ex) => {
            check_dimensions(ex, embedder.dimension)?;
            ex.to_vec()
        }
    };
    let total = examples.len();
    let (train, validation) = split(examples, hp.train_fraction, hp.shuffle_seed)?;
    if validation.is_empty() {
        return Err(ModelError::EmptyValidation { total, fraction: hp.train_fraction });
    }
    Ok((train, validation))
}

/// Runs `hp.epochs` passes of shuffled mini-batch SGD from zero initialization.
///
/// The last partial batch of each epoch is kept and averaged over its true size.
/// `on_epoch` sees the parameters after every epoch.
pub fn fit(
    train: &[LabeledExample],
    hp: &Hyperparams,
    node: &NodeSpec,
    phases: &mut PhaseReport,
    mut on_epoch: impl FnMut(usize, &ModelParams),
) -> Result<ModelParams> {
    hp.validate()?;
    let d = train.first().ok_or(ModelError::EmptyDataset)?.x().len();
    check_dimensions(train, d)?;
    let mut params = ModelParams::zeros(d);
    let mut schedule = BatchSchedule::new(train.len(), hp.shuffle_seed);
    let mut batch: Vec<&LabeledExample> = Vec::with_capacity(hp.batch_size);
    let mut resid = Vec::with_capacity(hp.batch_size);
    let (mut fwd_ops, mut bwd_ops, mut upd_ops) = (0u64, 0u64, 0u64);
    let (mut fwd_wall, mut bwd_wall, mut upd_wall) = (0.0, 0.0, 0.0);

    let loop_start = Instant::now();
    for epoch in 0..hp.epochs {
        let order = schedule.next_epoch();
        for chunk in order.chunks(hp.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &train[i]));

            let t0 = Instant::now();
            residuals(&params, &batch, &mut resid)?;
            let t1 = Instant::now();
            let grad = accumulate_gradient(&params, &batch, &resid, hp.l2);
            let t2 = Instant::now();
            sgd_step_in_place(&mut params, &grad, hp.learning_rate)?;
            let t3 = Instant::now();

            fwd_wall += (t1 - t0).as_secs_f64();
            bwd_wall += (t2 - t1).as_secs_f64();
            upd_wall += (t3 - t2).as_secs_f64();
            fwd_ops += batch.len() as u64 * ops::forward(d);
            bwd_ops += batch.len() as u64 * ops::backward(d);
            upd_ops += ops::update(d);
            phases.steps += 1;
        }
        on_epoch(epoch, &params);
    }
    phases.train_wall_seconds += loop_start.elapsed().as_secs_f64();

    for (timing, wall, count) in [
        (&mut phases.forward, fwd_wall, fwd_ops),
        (&mut phases.backward, bwd_wall, bwd_ops),
        (&mut phases.update, upd_wall, upd_ops),
    ] {
        timing.wall_seconds += wall;
        timing.compute_seconds += node.seconds(count);
        timing.peak_tasks = timing.peak_tasks.max(1);
    }
    Ok(params)
}

/// Single-node pipeline: preprocess, embed, split, train, evaluate on the validation split.
pub fn train_single(
    source: DataSource<'_>,
    hp: &Hyperparams,
    embedder: &EmbedderConfig,
    node: &NodeSpec,
) -> Result<TrainOutcome> {
    let mut phases = PhaseReport::default();
    let (train, validation) =
        prepare(source, hp, embedder, |docs| embed_sequential(docs, embedder, node, &mut phases))?;
    let params = fit(&train, hp, node, &mut phases, |_, _| {})?;

    let t0 = Instant::now();
    let metrics = Metrics::from_confusion(confusion(&params, &validation)?);
    phases.evaluate.wall_seconds = t0.elapsed().as_secs_f64();
    phases.evaluate.compute_seconds = node.seconds(validation.len() as u64 * ops::forward(params.dimension()));
    phases.evaluate.peak_tasks = 1;
    Ok(TrainOutcome { params, metrics, phases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::batch_loss;

    fn blobs(n: usize, d: usize, seed: u64) -> Vec<LabeledExample> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let y = (i % 2) as u8;
                let center = if y == 1 { 0.5 } else { -0.5 };
                let x = (0..d).map(|_| center + rng.random_range(-0.3..0.3)).collect();
                LabeledExample::new(x, y).unwrap()
            })
            .collect()
    }

    #[test]
    fn hyperparam_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        for hp in [
            Hyperparams { learning_rate: 0.0, ..Default::default() },
            Hyperparams { batch_size: 0, ..Default::default() },
            Hyperparams { train_fraction: 1.0, ..Default::default() },
            Hyperparams { l2: -1.0, ..Default::default() },
        ] {
            assert!(hp.validate().is_err(), "{hp:?}");
        }
    }

    #[test]
    fn iterations_count_partial_batches() {
        let hp = Hyperparams { batch_size: 32, epochs: 10, ..Default::default() };
        assert_eq!(hp.iterations(70), 30);
        assert_eq!(hp.iterations(64), 20);
    }

    #[test]
    fn zero_epochs_leave_initialization() {
        let data = blobs(50, 4, 1);
        let hp = Hyperparams { epochs: 0, ..Default::default() };
        let out = train_single(DataSource::Embedded(&data), &hp, &EmbedderConfig { dimension: 4, ..Default::default() }, &NodeSpec::default())
            .unwrap();
        assert_eq!(out.params, ModelParams::zeros(4));
        assert_eq!(out.phases.steps, 0);
        assert!(out.phases.train_wall_seconds < 1e-3);
        assert_eq!(out.phases.forward.compute_seconds, 0.0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let data = blobs(300, 6, 2);
        let emb = EmbedderConfig { dimension: 6, ..Default::default() };
        let hp = Hyperparams { epochs: 3, ..Default::default() };
        let a = train_single(DataSource::Embedded(&data), &hp, &emb, &NodeSpec::default()).unwrap();
        let b = train_single(DataSource::Embedded(&data), &hp, &emb, &NodeSpec::default()).unwrap();
        assert_eq!(a.params, b.params);
        let c = train_single(DataSource::Embedded(&data), &Hyperparams { shuffle_seed: 7, ..hp }, &emb, &NodeSpec::default())
            .unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn separable_blobs_converge() {
        let data = blobs(2000, 16, 3);
        let emb = EmbedderConfig { dimension: 16, ..Default::default() };
        let out = train_single(DataSource::Embedded(&data), &Hyperparams::default(), &emb, &NodeSpec::default()).unwrap();
        assert!(out.metrics.accuracy >= 0.99, "{}", out.metrics.accuracy);
        assert_eq!(out.metrics.total, 600);
        assert_eq!(out.phases.steps, Hyperparams::default().iterations(1400));
    }

    #[test]
    fn epoch_loss_non_increasing() {
        let data = blobs(2000, 16, 4);
        let mut losses = Vec::new();
        let mut phases = PhaseReport::default();
        fit(&data, &Hyperparams::default(), &NodeSpec::default(), &mut phases, |_, p| {
            losses.push(batch_loss(p, &data, 0.0).unwrap());
        })
        .unwrap();
        assert_eq!(losses.len(), 10);
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{losses:?}");
        }
    }

    #[test]
    fn embedded_dimension_must_match_embedder() {
        let data = blobs(10, 3, 5);
        let err = train_single(DataSource::Embedded(&data), &Hyperparams::default(), &EmbedderConfig::default(), &NodeSpec::default())
            .unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { expected: 256, found: 3 }));
    }

    #[test]
    fn tiny_dataset_has_no_validation() {
        let data = blobs(1, 2, 6);
        let emb = EmbedderConfig { dimension: 2, ..Default::default() };
        assert!(matches!(
            train_single(DataSource::Embedded(&data), &Hyperparams::default(), &emb, &NodeSpec::default()),
            Err(ModelError::EmptyValidation { .. })
        ));
    }
}
