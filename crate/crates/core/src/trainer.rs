//! Negative sampling, losses, SGD training and rank evaluation for
//! link-prediction embeddings.
//!
//! Each epoch visits every observation once in shuffled order, so a triple
//! observed twice is trained on twice. Every positive `r(s, o)` is paired with
//! a fixed number of corruptions `r(s', o')`, with `(s', o')` drawn uniformly
//! from `A × A`. Accidental true triples among the corruptions are kept.
//!
//! Updates follow plain SGD, `Θ ← Θ - η ∂L(B)/∂Θ`, applied sparsely to the
//! rows a batch touches.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ArgumentId, Corpus, RelationId, Triple};
use crate::error::{Error, Result};
use crate::linkpred::{phi, phi_grad, EmbeddingState, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// `Σ log(1 + exp(-y φ))`
    BinaryCrossEntropy,
    /// `Σ max(0, margin + φ(neg) - φ(pos))`
    PairwiseMargin(f64),
    /// `Σ |φ(neg) - φ(pos)|`
    PairwiseAbsolute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub negatives_per_positive: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop once the largest absolute parameter change over an epoch falls
    /// below this value.
    pub convergence_threshold: Option<f64>,
    pub seed: u64,
    /// Number of batch-producer threads. Values above 1 trade bit-exact
    /// reproducibility for throughput.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::PairwiseMargin(1.0),
            negatives_per_positive: 2,
            learning_rate: 0.01,
            batch_size: 128,
            epochs: 100,
            convergence_threshold: Some(1e-5),
            seed: 0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return bad(format!("learning rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if let LossKind::PairwiseMargin(m) = self.loss {
            if !m.is_finite() {
                return bad("margin must be finite".into());
            }
        }
        if let Some(t) = self.convergence_threshold {
            if t.is_nan() || t < 0.0 {
                return bad("convergence threshold must be non-negative".into());
            }
        }
        Ok(())
    }
}

/// Positives with their corruptions. The corruptions of positive `i` are
/// `negatives[i * k .. (i + 1) * k]` for `k` negatives per positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainBatch {
    pub positives: Vec<Triple>,
    pub negatives: Vec<Triple>,
    pub negatives_per_positive: usize,
}

impl TrainBatch {
    pub fn negatives_of(&self, i: usize) -> &[Triple] {
        let k = self.negatives_per_positive;
        &self.negatives[i * k..(i + 1) * k]
    }

    /// Every proposition with its label, `+1` for positives and `-1` for
    /// corruptions.
    pub fn labelled(&self) -> impl Iterator<Item = (Triple, f64)> + '_ {
        self.positives
            .iter()
            .map(|t| (*t, 1.0))
            .chain(self.negatives.iter().map(|t| (*t, -1.0)))
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }
}

/// Produces batches epoch by epoch from a shuffled order over observations.
struct BatchGenerator<'a> {
    observations: &'a [Triple],
    num_arguments: u32,
    negatives_per_positive: usize,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl<'a> BatchGenerator<'a> {
    fn new(corpus: &'a Corpus, config: &TrainConfig, rng: ChaCha8Rng) -> Self {
        let observations = corpus.base_observations();
        BatchGenerator {
            observations,
            num_arguments: corpus.num_arguments() as u32,
            negatives_per_positive: config.negatives_per_positive,
            batch_size: config.batch_size,
            order: (0..observations.len()).collect(),
            cursor: observations.len(),
            rng,
        }
    }

    fn batches_per_epoch(&self) -> usize {
        self.observations.len().div_ceil(self.batch_size)
    }

    /// The next batch of the current epoch; the final batch of an epoch may be
    /// short.
    fn next_batch(&mut self) -> TrainBatch {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let positives: Vec<Triple> = self.order[self.cursor..end]
            .iter()
            .map(|&i| self.observations[i])
            .collect();
        self.cursor = end;
        let negatives = corrupt(&positives, self.negatives_per_positive, self.num_arguments, &mut self.rng);
        TrainBatch {
            positives,
            negatives,
            negatives_per_positive: self.negatives_per_positive,
        }
    }
}

fn corrupt<R: Rng>(positives: &[Triple], k: usize, num_arguments: u32, rng: &mut R) -> Vec<Triple> {
    let mut negatives = Vec::with_capacity(positives.len() * k);
    for p in positives {
        for _ in 0..k {
            let s = ArgumentId(rng.gen_range(0..num_arguments));
            let o = ArgumentId(rng.gen_range(0..num_arguments));
            negatives.push(Triple::new(p.relation, s, o));
        }
    }
    negatives
}

/// Draws one batch: `batch_size` positives taken from successive shuffles of
/// the observation multiset, each with its uniform corruptions.
pub fn sample_batch<R: Rng>(corpus: &Corpus, config: &TrainConfig, rng: &mut R) -> Result<TrainBatch> {
    let observations = corpus.base_observations();
    if observations.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if config.negatives_per_positive == 0 || config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size and negatives_per_positive must be positive".into()));
    }
    let mut positives = Vec::with_capacity(config.batch_size);
    let mut order: Vec<usize> = (0..observations.len()).collect();
    while positives.len() < config.batch_size {
        order.shuffle(rng);
        let take = (config.batch_size - positives.len()).min(order.len());
        positives.extend(order[..take].iter().map(|&i| observations[i]));
    }
    let negatives = corrupt(&positives, config.negatives_per_positive, corpus.num_arguments() as u32, rng);
    Ok(TrainBatch {
        positives,
        negatives,
        negatives_per_positive: config.negatives_per_positive,
    })
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn score_triple(state: &EmbeddingState, t: &Triple) -> f64 {
    state.score_unchecked(t.relation, t.subject, t.object)
}

pub fn loss_bce(state: &EmbeddingState, batch: &TrainBatch) -> f64 {
    batch
        .labelled()
        .map(|(t, y)| softplus(-y * score_triple(state, &t)))
        .sum()
}

pub fn loss_pairwise(state: &EmbeddingState, batch: &TrainBatch, loss: LossKind) -> f64 {
    let mut total = 0.0;
    for (i, pos) in batch.positives.iter().enumerate() {
        let sp = score_triple(state, pos);
        for neg in batch.negatives_of(i) {
            let sn = score_triple(state, neg);
            total += match loss {
                LossKind::PairwiseAbsolute => (sn - sp).abs(),
                LossKind::PairwiseMargin(m) => (m + sn - sp).max(0.0),
                LossKind::BinaryCrossEntropy => unreachable!("not a pairwise loss"),
            };
        }
    }
    total
}

pub fn batch_loss(state: &EmbeddingState, batch: &TrainBatch, loss: LossKind) -> f64 {
    match loss {
        LossKind::BinaryCrossEntropy => loss_bce(state, batch),
        _ => loss_pairwise(state, batch, loss),
    }
}

/// Gradient restricted to the rows a batch reads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseGradient {
    pub relations: BTreeMap<u32, Vec<f64>>,
    pub arguments: BTreeMap<u32, Vec<f64>>,
}

impl SparseGradient {
    pub fn is_finite(&self) -> bool {
        self.relations
            .values()
            .chain(self.arguments.values())
            .all(|row| row.iter().all(|v| v.is_finite()))
    }

    /// Applies `Θ ← Θ - η g` and returns the largest absolute change.
    pub fn apply(&self, state: &mut EmbeddingState, learning_rate: f64) -> f64 {
        let mut max_change: f64 = 0.0;
        for (&r, g) in &self.relations {
            for (v, gi) in state.relation_mut(RelationId(r)).iter_mut().zip(g) {
                let step = learning_rate * gi;
                *v -= step;
                max_change = max_change.max(step.abs());
            }
        }
        for (&a, g) in &self.arguments {
            for (v, gi) in state.argument_mut(ArgumentId(a)).iter_mut().zip(g) {
                let step = learning_rate * gi;
                *v -= step;
                max_change = max_change.max(step.abs());
            }
        }
        max_change
    }

    fn accumulate(&mut self, state: &EmbeddingState, t: &Triple, upstream: f64) {
        if upstream == 0.0 {
            return;
        }
        let width = state.width();
        let kind: ModelKind = state.kind();
        let mut gw = vec![0.0; width];
        let mut gs = vec![0.0; width];
        let mut go = vec![0.0; width];
        phi_grad(
            kind,
            state.relation(t.relation),
            state.argument(t.subject),
            state.argument(t.object),
            upstream,
            &mut gw,
            &mut gs,
            &mut go,
        );
        add_row(&mut self.relations, t.relation.0, &gw);
        add_row(&mut self.arguments, t.subject.0, &gs);
        add_row(&mut self.arguments, t.object.0, &go);
    }
}

fn add_row(map: &mut BTreeMap<u32, Vec<f64>>, key: u32, g: &[f64]) {
    let row = map.entry(key).or_insert_with(|| vec![0.0; g.len()]);
    for (a, b) in row.iter_mut().zip(g) {
        *a += b;
    }
}

/// Batch loss together with its gradient with respect to every touched row.
///
/// Kinks (the hinge at 0, `|x|` at 0, TransE-L1 coordinates at 0) take
/// subgradient 0.
pub fn loss_and_gradient(state: &EmbeddingState, batch: &TrainBatch, loss: LossKind) -> (f64, SparseGradient) {
    let mut grad = SparseGradient::default();
    let mut total = 0.0;
    match loss {
        LossKind::BinaryCrossEntropy => {
            for (t, y) in batch.labelled() {
                let z = score_triple(state, &t);
                total += softplus(-y * z);
                // d/dz log(1 + e^{-yz}) = -y σ(-yz)
                grad.accumulate(state, &t, -y * sigmoid(-y * z));
            }
        }
        LossKind::PairwiseAbsolute | LossKind::PairwiseMargin(_) => {
            for (i, pos) in batch.positives.iter().enumerate() {
                let sp = score_triple(state, pos);
                for neg in batch.negatives_of(i) {
                    let sn = score_triple(state, neg);
                    let slope = match loss {
                        LossKind::PairwiseAbsolute => {
                            total += (sn - sp).abs();
                            if sn > sp {
                                1.0
                            } else if sn < sp {
                                -1.0
                            } else {
                                0.0
                            }
                        }
                        LossKind::PairwiseMargin(m) => {
                            let h = m + sn - sp;
                            if h > 0.0 {
                                total += h;
                                1.0
                            } else {
                                0.0
                            }
                        }
                        LossKind::BinaryCrossEntropy => unreachable!(),
                    };
                    grad.accumulate(state, neg, slope);
                    grad.accumulate(state, pos, -slope);
                }
            }
        }
    }
    (total, grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Epoch loss divided by the number of positives seen.
    pub mean_loss: f64,
    /// Largest absolute parameter change over the epoch.
    pub max_change: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub state: EmbeddingState,
    pub history: Vec<EpochStats>,
    pub converged: bool,
}

/// Trains a fresh state over the input (non-reversed) relations of `corpus`.
pub fn train(corpus: &Corpus, kind: ModelKind, dim: usize, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let state = EmbeddingState::init_random(
        kind,
        dim,
        corpus.num_base_relations(),
        corpus.num_arguments(),
        config.seed,
    )?;
    train_state(state, corpus, config, |_| {})
}

/// Continues training `state`, calling `on_epoch` after every epoch.
pub fn train_state<F>(mut state: EmbeddingState, corpus: &Corpus, config: &TrainConfig, mut on_epoch: F) -> Result<TrainReport>
where
    F: FnMut(&EpochStats),
{
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if state.num_relations() < corpus.num_base_relations() || state.num_arguments() < corpus.num_arguments() {
        return Err(Error::VocabularyMismatch {
            state_relations: state.num_relations(),
            state_arguments: state.num_arguments(),
            corpus_relations: corpus.num_base_relations(),
            corpus_arguments: corpus.num_arguments(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut generator = BatchGenerator::new(corpus, config, rng);
    let batches_per_epoch = generator.batches_per_epoch();

    let mut history = Vec::with_capacity(config.epochs);
    let mut converged = false;

    let mut run_epochs = |next: &mut dyn FnMut() -> TrainBatch, state: &mut EmbeddingState| -> Result<()> {
        for epoch in 0..config.epochs {
            let started = Instant::now();
            let before = (state.relation_table().to_vec(), state.argument_table().to_vec());
            let mut epoch_loss = 0.0;
            let mut positives = 0usize;
            for b in 0..batches_per_epoch {
                let batch = next();
                let (loss, grad) = loss_and_gradient(state, &batch, config.loss);
                if !loss.is_finite() {
                    return Err(Error::NonFinite { what: "loss", epoch, batch: b });
                }
                if !grad.is_finite() {
                    return Err(Error::NonFinite { what: "gradient", epoch, batch: b });
                }
                grad.apply(state, config.learning_rate);
                epoch_loss += loss;
                positives += batch.positives.len();
            }
            let max_change = state
                .relation_table()
                .iter()
                .zip(&before.0)
                .chain(state.argument_table().iter().zip(&before.1))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if !max_change.is_finite() {
                return Err(Error::NonFinite { what: "parameters", epoch, batch: batches_per_epoch });
            }
            let stats = EpochStats {
                epoch,
                mean_loss: epoch_loss / positives.max(1) as f64,
                max_change,
                wall_ms: started.elapsed().as_millis(),
            };
            on_epoch(&stats);
            history.push(stats);
            if config.convergence_threshold.is_some_and(|t| max_change < t) {
                converged = true;
                break;
            }
        }
        Ok(())
    };

    if config.workers <= 1 {
        run_epochs(&mut || generator.next_batch(), &mut state)?;
    } else {
        // Producers each own an independent stream; the consumer applies
        // updates in arrival order.
        let (tx, rx) = mpsc::sync_channel::<TrainBatch>(4 * config.workers);
        thread::scope(|scope| -> Result<()> {
            for w in 0..config.workers {
                let tx = tx.clone();
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(2 + w as u64);
                let mut producer = BatchGenerator::new(corpus, config, rng);
                scope.spawn(move || {
                    while tx.send(producer.next_batch()).is_ok() {}
                });
            }
            drop(tx);
            let result = run_epochs(&mut || rx.recv().expect("producers outlive the consumer"), &mut state);
            drop(rx);
            result
        })?;
    }

    Ok(TrainReport {
        state,
        history,
        converged,
    })
}

/// Mean reciprocal rank of `test` triples under `state`.
pub fn mrr(state: &EmbeddingState, test: &[Triple], corpus: &Corpus, filtered: bool) -> Result<f64> {
    for t in test {
        state.score(t.relation, t.subject, t.object)?;
    }
    mrr_with(
        |r, s, o| state.score_unchecked(r, s, o),
        state.num_arguments(),
        test,
        corpus,
        filtered,
    )
}

/// Mean reciprocal rank under an arbitrary scorer.
///
/// Each test triple `r(s, o)` is ranked against `r(s', o)` and `r(s, o')`
/// for every argument. Corruptions scoring equal to the true triple rank
/// above it. The filtered variant drops corruptions observed in `corpus`.
pub fn mrr_with<F>(score: F, num_arguments: usize, test: &[Triple], corpus: &Corpus, filtered: bool) -> Result<f64>
where
    F: Fn(RelationId, ArgumentId, ArgumentId) -> f64,
{
    if test.is_empty() {
        return Err(Error::EmptyInput("MRR needs at least one test triple"));
    }
    let mut total = 0.0;
    for t in test {
        let truth = score(t.relation, t.subject, t.object);
        let mut rank = 1usize;
        for a in (0..num_arguments as u32).map(ArgumentId) {
            if a != t.subject {
                let c = crate::corpus::Tuple::new(a, t.object);
                if !(filtered && corpus.contains(t.relation, c)) && score(t.relation, a, t.object) >= truth {
                    rank += 1;
                }
            }
            if a != t.object {
                let c = crate::corpus::Tuple::new(t.subject, a);
                if !(filtered && corpus.contains(t.relation, c)) && score(t.relation, t.subject, a) >= truth {
                    rank += 1;
                }
            }
        }
        total += 1.0 / rank as f64;
    }
    Ok(total / test.len() as f64)
}

/// Mean `σ(φ)` over a set of triples.
pub fn mean_probability(state: &EmbeddingState, triples: &[Triple]) -> f64 {
    let kind = state.kind();
    triples
        .iter()
        .map(|t| {
            sigmoid(phi(
                kind,
                state.relation(t.relation),
                state.argument(t.subject),
                state.argument(t.object),
            ))
        })
        .sum::<f64>()
        / triples.len().max(1) as f64
}
