//! Reinforce training over mini-batches of games, optionally interleaved
//! with supervised concept labeling on the sender's shared layers.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{init_agents, AgentDims, Arch, Receiver, Sender, SenderAction, Vocabulary};
use crate::error::{Error, Result};
use crate::game::{evaluate, play_round, RoundRecord};
use crate::nn::{sgd_apply, GibbsConfig, GibbsExponent, Optimizer, OptimizerKind, Parameters};
use crate::scalar::Scalar;
use crate::worldgen::{make_test_set, sample_game, GameMode, World};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Plain Reinforce: advantage equals the reward.
    None,
    /// Exponential moving average of batch rewards.
    #[default]
    RunningMean,
}

/// Supervised name of a concept: the symbol it should be labeled with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub concept: usize,
    pub symbol: usize,
}

/// Injective concept -> symbol map used for grounding.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(Vec<LabelEntry>);

impl LabelSet {
    pub fn new(entries: Vec<LabelEntry>) -> Self {
        LabelSet(entries)
    }

    /// Concept `i` labeled with symbol `i` for the first `min(K, n_concepts)` concepts.
    pub fn identity(n_concepts: usize, vocab_size: usize) -> Self {
        LabelSet(
            (0..n_concepts.min(vocab_size))
                .map(|i| LabelEntry { concept: i, symbol: i })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbol_for(&self, concept: usize) -> Option<usize> {
        self.0.iter().find(|e| e.concept == concept).map(|e| e.symbol)
    }

    pub fn contains_symbol(&self, symbol: usize) -> bool {
        self.0.iter().any(|e| e.symbol == symbol)
    }

    pub fn concept_to_symbol(&self) -> BTreeMap<usize, usize> {
        self.0.iter().map(|e| (e.concept, e.symbol)).collect()
    }

    pub fn validate(&self, n_concepts: usize, vocab_size: usize) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::config("label_set", "must not be empty when grounding"));
        }
        if self.0.len() > vocab_size {
            return Err(Error::config(
                "label_set",
                format!("{} labels exceed vocabulary of {vocab_size}", self.0.len()),
            ));
        }
        let mut concepts = BTreeSet::new();
        let mut symbols = BTreeSet::new();
        for e in &self.0 {
            if e.concept >= n_concepts {
                return Err(Error::config("label_set", format!("concept {} not in world", e.concept)));
            }
            if e.symbol >= vocab_size {
                return Err(Error::config("label_set", format!("symbol {} outside vocabulary", e.symbol)));
            }
            if !concepts.insert(e.concept) || !symbols.insert(e.symbol) {
                return Err(Error::config("label_set", "concept -> symbol map must be injective"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: Arch,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub n_filters: usize,
    pub tau: f64,
    pub gibbs_exponent: GibbsExponent,
    pub batch_size: usize,
    /// Number of parameter updates; each consumes one mini-batch.
    pub n_iterations: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Weight of the sender's symbol entropy added to the ascent objective.
    pub entropy_coef: f64,
    pub baseline: BaselineKind,
    pub baseline_decay: f64,
    pub mode: GameMode,
    pub grounding: bool,
    /// Defaults to concept `i` -> symbol `i` when grounding.
    pub label_set: Option<LabelSet>,
    pub log_interval: usize,
    /// Size of the held-out game set scored at every log interval.
    pub eval_games: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: Arch::Informed,
            vocab_size: 100,
            embed_dim: 50,
            n_filters: 20,
            tau: 10.0,
            gibbs_exponent: GibbsExponent::Multiply,
            batch_size: 32,
            n_iterations: 10_000,
            lr: 2e-4,
            optimizer: OptimizerKind::Adam,
            entropy_coef: 0.03,
            baseline: BaselineKind::RunningMean,
            baseline_decay: 0.99,
            mode: GameMode::InstanceLevel,
            grounding: false,
            label_set: None,
            log_interval: 100,
            eval_games: 1_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn gibbs(&self) -> GibbsConfig {
        GibbsConfig {
            tau: self.tau,
            exponent: self.gibbs_exponent,
        }
    }

    pub fn dims(&self, feature_dim: usize) -> Result<AgentDims> {
        Ok(AgentDims {
            feature_dim,
            embed_dim: self.embed_dim,
            n_filters: self.n_filters,
            vocab: Vocabulary::new(self.vocab_size)?,
        })
    }

    /// Checks everything that does not depend on a world.
    pub fn validate(&self) -> Result<()> {
        Vocabulary::new(self.vocab_size)?;
        self.gibbs().validate()?;
        let positive = [
            ("embed_dim", self.embed_dim),
            ("n_filters", self.n_filters),
            ("batch_size", self.batch_size),
            ("n_iterations", self.n_iterations),
            ("log_interval", self.log_interval),
            ("eval_games", self.eval_games),
        ];
        for (field, v) in positive {
            if v < 1 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", format!("must be finite and >= 0, got {}", self.lr)));
        }
        if !(self.entropy_coef >= 0.0 && self.entropy_coef.is_finite()) {
            return Err(Error::config("entropy_coef", "must be finite and >= 0"));
        }
        if !(self.baseline_decay > 0.0 && self.baseline_decay < 1.0) {
            return Err(Error::config("baseline_decay", "must lie in (0, 1)"));
        }
        if self.grounding && self.arch != Arch::Informed {
            return Err(Error::config("grounding", "requires the informed sender"));
        }
        if let Some(labels) = &self.label_set {
            if labels.is_empty() {
                return Err(Error::config("label_set", "must not be empty"));
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, world_concepts: usize) -> Result<()> {
        self.validate()?;
        if world_concepts < 2 {
            return Err(Error::config("world", "needs at least 2 concepts"));
        }
        if self.grounding {
            self.effective_label_set(world_concepts)
                .validate(world_concepts, self.vocab_size)?;
        }
        Ok(())
    }

    pub fn effective_label_set(&self, n_concepts: usize) -> LabelSet {
        self.label_set
            .clone()
            .unwrap_or_else(|| LabelSet::identity(n_concepts, self.vocab_size))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub kind: BaselineKind,
    pub mean: f64,
    pub decay: f64,
}

impl BaselineState {
    pub fn new(kind: BaselineKind, decay: f64) -> Self {
        BaselineState { kind, mean: 0.5, decay }
    }

    pub fn none() -> Self {
        Self::new(BaselineKind::None, 0.99)
    }

    /// Value subtracted from rewards.
    pub fn value(&self) -> f64 {
        match self.kind {
            BaselineKind::None => 0.0,
            BaselineKind::RunningMean => self.mean,
        }
    }

    pub fn update(&mut self, batch_mean_reward: f64) {
        self.mean = self.decay * self.mean + (1.0 - self.decay) * batch_mean_reward;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub mean_reward: f64,
    pub baseline_used: f64,
}

/// Expected-reward ascent on both agents from one batch of played rounds.
///
/// Every record contributes `(reward - baseline) * grad log pi` for the
/// sender's symbol and the receiver's pick; contributions are averaged over
/// the batch. The baseline is updated after it has been used.
pub fn reinforce_batch_update<F: Scalar>(
    sender: &mut Sender<F>,
    receiver: &mut Receiver<F>,
    records: &[RoundRecord<F>],
    lr: F,
    baseline: &mut BaselineState,
) -> Result<BatchStats> {
    let b = baseline.value();
    let (g_sender, g_receiver) = reinforce_gradient(sender, receiver, records, b)?;
    // ascent on E[R] is descent along the negated estimate
    sgd_apply(sender, &g_sender, -lr);
    sgd_apply(receiver, &g_receiver, -lr);
    let mean_reward = records.iter().map(|r| f64::from(r.reward)).sum::<f64>() / records.len() as f64;
    baseline.update(mean_reward);
    Ok(BatchStats {
        mean_reward,
        baseline_used: b,
    })
}

/// Batch-averaged Reinforce estimate of the gradient of expected reward,
/// `mean((reward - baseline) * grad log pi)`, for both agents.
pub fn reinforce_gradient<F: Scalar>(
    sender: &Sender<F>,
    receiver: &Receiver<F>,
    records: &[RoundRecord<F>],
    baseline: f64,
) -> Result<(Sender<F>, Receiver<F>)> {
    if records.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let n = records.len() as f64;
    let mut g_sender = sender.zeros_like();
    let mut g_receiver = receiver.zeros_like();
    for r in records {
        let advantage = f64::from(r.reward) - baseline;
        if advantage == 0.0 {
            continue;
        }
        let scale = F::of(advantage / n);
        sender.accumulate_log_prob_grad(&r.sender_action, scale, &mut g_sender)?;
        receiver.accumulate_log_prob_grad(&r.receiver_action, scale, &mut g_receiver)?;
    }
    Ok((g_sender, g_receiver))
}

/// Adds `coef * mean grad H(pi_sender)` over the batch to `g_sender`.
pub fn add_sender_entropy_grad<F: Scalar>(
    sender: &Sender<F>,
    records: &[RoundRecord<F>],
    coef: f64,
    g_sender: &mut Sender<F>,
) -> Result<()> {
    if coef == 0.0 || records.is_empty() {
        return Ok(());
    }
    let scale = F::of(coef / records.len() as f64);
    for r in records {
        sender.accumulate_entropy_grad(&r.sender_action.policy, scale, g_sender)?;
    }
    Ok(())
}

/// Single-round Reinforce step on the sender alone.
pub fn reinforce_sender_update<F: Scalar>(
    sender: &mut Sender<F>,
    action: &SenderAction<F>,
    reward: u8,
    lr: F,
    baseline: &mut BaselineState,
) -> Result<()> {
    let advantage = f64::from(reward) - baseline.value();
    let mut g = sender.zeros_like();
    sender.accumulate_log_prob_grad(action, F::of(-advantage), &mut g)?;
    sgd_apply(sender, &g, lr);
    baseline.update(f64::from(reward));
    Ok(())
}

/// One cross-entropy step on a single labeled image. Returns the loss
/// before the update.
pub fn supervised_update<F: Scalar>(
    sender: &mut Sender<F>,
    features: &[F],
    gold_symbol: usize,
    labels: &LabelSet,
    lr: F,
) -> Result<F> {
    supervised_batch_update(sender, &[(features, gold_symbol)], labels, lr)
}

/// Averaged cross-entropy step over labeled images; returns the mean loss
/// before the update.
pub fn supervised_batch_update<F: Scalar>(
    sender: &mut Sender<F>,
    batch: &[(&[F], usize)],
    labels: &LabelSet,
    lr: F,
) -> Result<F> {
    let (grads, loss) = supervised_gradient(sender, batch, labels)?;
    sgd_apply(sender, &grads, lr);
    Ok(loss)
}

/// Gradient of the mean cross-entropy over labeled images, with the loss.
pub fn supervised_gradient<F: Scalar>(
    sender: &Sender<F>,
    batch: &[(&[F], usize)],
    labels: &LabelSet,
) -> Result<(Sender<F>, F)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty supervised batch".into()));
    }
    let scale = F::one() / F::of(batch.len() as f64);
    let mut grads = sender.zeros_like();
    let mut loss = F::zero();
    for &(x, gold) in batch {
        if !labels.contains_symbol(gold) {
            return Err(Error::Domain(format!("gold symbol {gold} is not in the label set")));
        }
        loss += sender.accumulate_label_loss_grad(x, gold, scale, &mut grads)? * scale;
    }
    Ok((grads, loss))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub mode: GameMode,
    /// Mean game reward over the batches of the last interval.
    pub train_reward_ma: f64,
    pub eval_success: f64,
    pub used_symbols: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<F> {
    pub sender: Sender<F>,
    pub receiver: Receiver<F>,
    pub baseline: BaselineState,
    pub metrics: Vec<MetricsRecord>,
    pub iterations: usize,
    pub rng: RngDescriptor,
}

/// Enough to reconstruct the training stream's position.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngDescriptor {
    pub algorithm: String,
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngDescriptor {
    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        RngDescriptor {
            algorithm: "chacha8".into(),
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        if self.algorithm != "chacha8" {
            return Err(Error::Corrupt(format!("unknown rng algorithm `{}`", self.algorithm)));
        }
        let mut rng = stream_rng(self.seed, self.stream);
        rng.set_word_pos(self.word_pos);
        Ok(rng)
    }
}

pub(crate) const INIT_STREAM: u64 = 0;
pub(crate) const TRAIN_STREAM: u64 = 1;
pub(crate) const HELDOUT_STREAM: u64 = 2;
pub(crate) const EVAL_STREAM: u64 = 3;

/// Independent deterministic stream `stream` of the master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Game,
    Supervised,
}

/// Step-wise training loop; [`train`] drives it to completion.
pub struct Trainer<'w, F> {
    config: TrainConfig,
    world: &'w World<F>,
    gibbs: GibbsConfig,
    labels: Option<LabelSet>,
    sender: Sender<F>,
    receiver: Receiver<F>,
    baseline: BaselineState,
    sender_opt: Optimizer,
    receiver_opt: Optimizer,
    rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
    heldout: Vec<crate::worldgen::GamePair>,
    iteration: usize,
    metrics: Vec<MetricsRecord>,
    interval_reward: f64,
    interval_batches: usize,
}

impl<'w, F: Scalar> Trainer<'w, F> {
    pub fn new(config: TrainConfig, world: &'w World<F>) -> Result<Self> {
        config.validate_for(world.n_concepts())?;
        let dims = config.dims(world.feature_dim())?;
        let (sender, receiver) = init_agents(config.arch, &dims, &mut stream_rng(config.seed, INIT_STREAM))?;
        Self::with_agents(config, world, sender, receiver)
    }

    /// Starts from given parameters instead of a fresh initialization.
    pub fn with_agents(config: TrainConfig, world: &'w World<F>, sender: Sender<F>, receiver: Receiver<F>) -> Result<Self> {
        config.validate_for(world.n_concepts())?;
        let dims = config.dims(world.feature_dim())?;
        if sender.arch() != config.arch || sender.dims().embed_dim != dims.embed_dim
            || sender.vocab_size() != dims.vocab.size() || receiver.vocab_size() != dims.vocab.size()
            || sender.embed_layer().in_dim() != dims.feature_dim
        {
            return Err(Error::config("agents", "parameters do not match the training configuration"));
        }
        let labels = config
            .grounding
            .then(|| config.effective_label_set(world.n_concepts()));
        let heldout = make_test_set(
            world,
            config.mode,
            config.eval_games,
            &mut stream_rng(config.seed, HELDOUT_STREAM),
        )?;
        Ok(Trainer {
            gibbs: config.gibbs(),
            baseline: BaselineState::new(config.baseline, config.baseline_decay),
            rng: stream_rng(config.seed, TRAIN_STREAM),
            eval_rng: stream_rng(config.seed, EVAL_STREAM),
            labels,
            sender_opt: Optimizer::new(config.optimizer, &sender),
            receiver_opt: Optimizer::new(config.optimizer, &receiver),
            sender,
            receiver,
            heldout,
            iteration: 0,
            metrics: Vec::new(),
            interval_reward: 0.0,
            interval_batches: 0,
            world,
            config,
        })
    }

    pub fn sender(&self) -> &Sender<F> {
        &self.sender
    }

    pub fn receiver(&self) -> &Receiver<F> {
        &self.receiver
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn metrics(&self) -> &[MetricsRecord] {
        &self.metrics
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.n_iterations
    }

    /// One parameter update: a game batch, or under grounding a fair coin
    /// between a game batch and a supervised batch.
    pub fn step(&mut self) -> Result<StepKind> {
        let lr = F::of(self.config.lr);
        let kind = match &self.labels {
            Some(_) if self.rng.random::<bool>() => StepKind::Supervised,
            _ => StepKind::Game,
        };
        match kind {
            StepKind::Game => {
                let records = (0..self.config.batch_size)
                    .map(|_| {
                        let pair = sample_game(self.world, self.config.mode, &mut self.rng)?;
                        play_round(&self.sender, &self.receiver, self.world, &pair, &self.gibbs, &mut self.rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (mut g_sender, g_receiver) =
                    reinforce_gradient(&self.sender, &self.receiver, &records, self.baseline.value())?;
                add_sender_entropy_grad(&self.sender, &records, self.config.entropy_coef, &mut g_sender)?;
                self.sender_opt.apply(&mut self.sender, &g_sender, -lr);
                self.receiver_opt.apply(&mut self.receiver, &g_receiver, -lr);
                let mean_reward = records.iter().map(|r| f64::from(r.reward)).sum::<f64>() / records.len() as f64;
                self.baseline.update(mean_reward);
                self.interval_reward += mean_reward;
                self.interval_batches += 1;
            }
            StepKind::Supervised => {
                let labels = self.labels.as_ref().expect("grounding enabled");
                let mut batch = Vec::with_capacity(self.config.batch_size);
                for _ in 0..self.config.batch_size {
                    let entry = labels.entries().choose(&mut self.rng).expect("nonempty label set");
                    let inst = self
                        .world
                        .instances_of(entry.concept)
                        .choose(&mut self.rng)
                        .expect("concepts have instances");
                    batch.push((inst.features.as_slice(), entry.symbol));
                }
                let (grads, _) = supervised_gradient(&self.sender, &batch, labels)?;
                self.sender_opt.apply(&mut self.sender, &grads, lr);
            }
        }
        self.iteration += 1;
        if self.iteration.is_multiple_of(self.config.log_interval) || self.is_done() {
            self.log()?;
        }
        Ok(kind)
    }

    fn log(&mut self) -> Result<()> {
        let report = evaluate(&self.sender, &self.receiver, self.world, &self.heldout, &self.gibbs, &mut self.eval_rng)?;
        let train_reward_ma = if self.interval_batches > 0 {
            self.interval_reward / self.interval_batches as f64
        } else {
            0.0
        };
        self.metrics.push(MetricsRecord {
            iteration: self.iteration,
            mode: self.config.mode,
            train_reward_ma,
            eval_success: report.comm_success,
            used_symbols: report.used_symbols,
        });
        self.interval_reward = 0.0;
        self.interval_batches = 0;
        Ok(())
    }

    pub fn run(mut self) -> Result<TrainOutcome<F>> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> TrainOutcome<F> {
        TrainOutcome {
            rng: RngDescriptor::capture(self.config.seed, &self.rng),
            sender: self.sender,
            receiver: self.receiver,
            baseline: self.baseline,
            metrics: self.metrics,
            iterations: self.iteration,
        }
    }
}

pub fn train<F: Scalar>(config: &TrainConfig, world: &World<F>) -> Result<TrainOutcome<F>> {
    Trainer::new(config.clone(), world)?.run()
}
