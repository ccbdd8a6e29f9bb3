//! Sender and receiver networks.
//!
//! Senders always receive the target first and the distractor second; the
//! receiver gets the two images in whatever order the game engine chose.
//! Every forward pass keeps the activations needed to differentiate the log
//! probability of the sampled action with respect to all parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    argmax, entropy_score_grad, gibbs, log_prob_score_grad, prefixed, sample_categorical, sigmoid, softmax, Dense,
    DenseCache, GibbsConfig, PairConv, PairConvCache, Parameters, TensorView,
};
use crate::scalar::Scalar;

/// Multiplies the Glorot draw of the pair-conv filters and combiner.
pub const PAIRCONV_INIT_GAIN: f64 = 3.0;
/// Multiplies the Glorot draw of the sender's symbol head, keeping the
/// initial symbol distribution close to uniform at high inverse temperature.
pub const HEAD_INIT_GAIN: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// Concatenated embeddings into a fully connected vocabulary head.
    Agnostic,
    /// Dimension-wise 2x1 filters over the embeddings, then an fx1 combiner.
    #[default]
    Informed,
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agnostic" => Ok(Arch::Agnostic),
            "informed" => Ok(Arch::Informed),
            other => Err(Error::config("arch", format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Vocabulary(usize);

impl Vocabulary {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::config("vocab_size", format!("must be at least 2, got {size}")));
        }
        Ok(Vocabulary(size))
    }

    pub fn size(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for Vocabulary {
    type Error = Error;

    fn try_from(v: usize) -> Result<Self> {
        Vocabulary::new(v)
    }
}

impl From<Vocabulary> for usize {
    fn from(v: Vocabulary) -> usize {
        v.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDims {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub n_filters: usize,
    pub vocab: Vocabulary,
}

impl AgentDims {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::config("feature_dim", "must be at least 1"));
        }
        if self.embed_dim == 0 {
            return Err(Error::config("embed_dim", "must be at least 1"));
        }
        if self.n_filters == 0 {
            return Err(Error::config("n_filters", "must be at least 1"));
        }
        Ok(())
    }
}

/// Dense layer followed by a sigmoid, with the cache for both.
#[derive(Clone, Debug)]
pub struct EmbedCache<F> {
    pub input: DenseCache<F>,
    pub activation: Vec<F>,
}

fn embed<F: Scalar>(layer: &Dense<F>, x: &[F]) -> Result<EmbedCache<F>> {
    let (z, input) = layer.forward(x)?;
    let activation = z.into_iter().map(sigmoid).collect();
    Ok(EmbedCache { input, activation })
}

fn embed_backward<F: Scalar>(
    layer: &Dense<F>,
    cache: &EmbedCache<F>,
    upstream: &[F],
    scale: F,
    grads: &mut Dense<F>,
) -> Result<()> {
    let pre: Vec<F> = upstream
        .iter()
        .zip(&cache.activation)
        .map(|(&u, &y)| u * y * (F::one() - y))
        .collect();
    layer.backward_into(&cache.input, &pre, scale, grads, None)
}

/// Action distribution plus the forward cache that produced it.
#[derive(Clone, Debug)]
pub struct Policy<C, F> {
    pub probs: Vec<F>,
    /// Inverse temperature used by the Gibbs layer.
    pub beta: F,
    pub cache: C,
}

impl<C, F: Scalar> Policy<C, F> {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> Result<Action<C, F>> {
        let index = sample_categorical(&self.probs, rng)?;
        Ok(Action { index, policy: self })
    }

    pub fn greedy(self) -> Action<C, F> {
        let index = argmax(&self.probs);
        Action { index, policy: self }
    }

    /// Pins the action to `index`; used for exhaustive enumeration.
    pub fn with_action(self, index: usize) -> Result<Action<C, F>> {
        if index >= self.probs.len() {
            return Err(Error::shape("action index bound", self.probs.len(), index));
        }
        Ok(Action { index, policy: self })
    }
}

#[derive(Clone, Debug)]
pub struct Action<C, F> {
    pub index: usize,
    pub policy: Policy<C, F>,
}

impl<C, F: Scalar> Action<C, F> {
    pub fn prob(&self) -> F {
        self.policy.probs[self.index]
    }

    fn score_grad(&self) -> Vec<F> {
        log_prob_score_grad(&self.policy.probs, self.index, self.policy.beta)
    }
}

#[derive(Clone, Debug)]
pub enum SenderCache<F> {
    Agnostic {
        target: EmbedCache<F>,
        distractor: EmbedCache<F>,
        head: DenseCache<F>,
    },
    Informed {
        target: EmbedCache<F>,
        distractor: EmbedCache<F>,
        conv: PairConvCache<F>,
        head: DenseCache<F>,
    },
}

#[derive(Clone, Debug)]
pub struct ReceiverCache<F> {
    pub left: EmbedCache<F>,
    pub right: EmbedCache<F>,
    pub symbol: usize,
    pub symbol_embedding: Vec<F>,
}

pub type SenderAction<F> = Action<SenderCache<F>, F>;
pub type ReceiverAction<F> = Action<ReceiverCache<F>, F>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgnosticSender<F> {
    /// `embed_dim x feature_dim`
    pub embed: Dense<F>,
    /// `K x 2*embed_dim`
    pub out: Dense<F>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformedSender<F> {
    /// `embed_dim x feature_dim`
    pub embed: Dense<F>,
    pub pairconv: PairConv<F>,
    /// `K x embed_dim`
    pub out: Dense<F>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum Sender<F> {
    Agnostic(AgnosticSender<F>),
    Informed(InformedSender<F>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Receiver<F> {
    /// `embed_dim x feature_dim`
    pub img_embed: Dense<F>,
    /// `embed_dim x K`, applied to a one-hot symbol
    pub sym_embed: Dense<F>,
}

impl<F: Scalar> Sender<F> {
    pub fn zeros(arch: Arch, dims: &AgentDims) -> Self {
        let (d, k) = (dims.embed_dim, dims.vocab.size());
        match arch {
            Arch::Agnostic => Sender::Agnostic(AgnosticSender {
                embed: Dense::zeros(d, dims.feature_dim),
                out: Dense::zeros(k, 2 * d),
            }),
            Arch::Informed => Sender::Informed(InformedSender {
                embed: Dense::zeros(d, dims.feature_dim),
                pairconv: PairConv::zeros(dims.n_filters),
                out: Dense::zeros(k, d),
            }),
        }
    }

    pub fn init<R: Rng + ?Sized>(arch: Arch, dims: &AgentDims, rng: &mut R) -> Self {
        let (d, k) = (dims.embed_dim, dims.vocab.size());
        let gain = |g: f64| F::of(g);
        match arch {
            Arch::Agnostic => {
                let embed = Dense::init(d, dims.feature_dim, rng);
                let mut out = Dense::init(k, 2 * d, rng);
                out.scale(gain(HEAD_INIT_GAIN));
                Sender::Agnostic(AgnosticSender { embed, out })
            }
            Arch::Informed => {
                let embed = Dense::init(d, dims.feature_dim, rng);
                let mut pairconv = PairConv::init(dims.n_filters, rng);
                pairconv.scale(gain(PAIRCONV_INIT_GAIN));
                let mut out = Dense::init(k, d, rng);
                out.scale(gain(HEAD_INIT_GAIN));
                Sender::Informed(InformedSender { embed, pairconv, out })
            }
        }
    }

    pub fn arch(&self) -> Arch {
        match self {
            Sender::Agnostic(_) => Arch::Agnostic,
            Sender::Informed(_) => Arch::Informed,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.head().out_dim()
    }

    pub fn embed_layer(&self) -> &Dense<F> {
        match self {
            Sender::Agnostic(p) => &p.embed,
            Sender::Informed(p) => &p.embed,
        }
    }

    pub fn head(&self) -> &Dense<F> {
        match self {
            Sender::Agnostic(p) => &p.out,
            Sender::Informed(p) => &p.out,
        }
    }

    pub fn dims(&self) -> AgentDims {
        let embed = self.embed_layer();
        AgentDims {
            feature_dim: embed.in_dim(),
            embed_dim: embed.out_dim(),
            n_filters: match self {
                Sender::Agnostic(_) => 0,
                Sender::Informed(p) => p.pairconv.n_filters(),
            },
            vocab: Vocabulary(self.vocab_size()),
        }
    }

    /// Game-specific embedding of one image: `sigmoid(embed(x))`.
    pub fn embedding(&self, x: &[F]) -> Result<Vec<F>> {
        Ok(embed(self.embed_layer(), x)?.activation)
    }

    pub fn policy(&self, target: &[F], distractor: &[F], g: &GibbsConfig) -> Result<Policy<SenderCache<F>, F>> {
        match self {
            Sender::Agnostic(p) => p.policy(target, distractor, g),
            Sender::Informed(p) => p.policy(target, distractor, g),
        }
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        target: &[F],
        distractor: &[F],
        g: &GibbsConfig,
        rng: &mut R,
    ) -> Result<SenderAction<F>> {
        self.policy(target, distractor, g)?.sample(rng)
    }

    /// Adds `scale * d log pi(action) / d params` into `grads`.
    pub fn accumulate_log_prob_grad(&self, action: &SenderAction<F>, scale: F, grads: &mut Sender<F>) -> Result<()> {
        self.accumulate_score_grad(&action.policy.cache, &action.score_grad(), scale, grads)
    }

    /// Adds `scale * dH(pi) / d params`, the entropy of the symbol distribution.
    pub fn accumulate_entropy_grad(
        &self,
        policy: &Policy<SenderCache<F>, F>,
        scale: F,
        grads: &mut Sender<F>,
    ) -> Result<()> {
        let up = entropy_score_grad(&policy.probs, policy.beta);
        self.accumulate_score_grad(&policy.cache, &up, scale, grads)
    }

    /// Backpropagates an upstream gradient on the vocabulary scores.
    pub fn accumulate_score_grad(
        &self,
        cache: &SenderCache<F>,
        up: &[F],
        scale: F,
        grads: &mut Sender<F>,
    ) -> Result<()> {
        if up.len() != self.vocab_size() {
            return Err(Error::shape("sender score gradient", self.vocab_size(), up.len()));
        }
        match (self, cache, grads) {
            (Sender::Agnostic(p), SenderCache::Agnostic { target, distractor, head }, Sender::Agnostic(g)) => {
                let mut d_concat = vec![F::zero(); p.out.in_dim()];
                p.out.backward_into(head, up, scale, &mut g.out, Some(&mut d_concat))?;
                let (dt, dd) = d_concat.split_at(p.embed.out_dim());
                embed_backward(&p.embed, target, dt, scale, &mut g.embed)?;
                embed_backward(&p.embed, distractor, dd, scale, &mut g.embed)?;
            }
            (Sender::Informed(p), SenderCache::Informed { target, distractor, conv, head }, Sender::Informed(g)) => {
                let mut d_combined = vec![F::zero(); p.out.in_dim()];
                p.out.backward_into(head, up, scale, &mut g.out, Some(&mut d_combined))?;
                let (dt, dd) = p.pairconv.backward_into(conv, &d_combined, scale, &mut g.pairconv)?;
                embed_backward(&p.embed, target, &dt, scale, &mut g.embed)?;
                embed_backward(&p.embed, distractor, &dd, scale, &mut g.embed)?;
            }
            _ => {
                return Err(Error::Consistency(
                    "sender action, parameters and gradient buffer disagree on architecture".into(),
                ))
            }
        }
        Ok(())
    }

    /// Label scores for a single image through the shared embedding and the
    /// vocabulary head. Only the informed head accepts a single embedding.
    pub fn label_scores(&self, x: &[F]) -> Result<(Vec<F>, EmbedCache<F>, DenseCache<F>)> {
        match self {
            Sender::Informed(p) => {
                let e = embed(&p.embed, x)?;
                let (scores, head) = p.out.forward(&e.activation)?;
                Ok((scores, e, head))
            }
            Sender::Agnostic(_) => Err(Error::config(
                "grounding",
                "supervised labeling needs the informed sender's embed_dim-wide head",
            )),
        }
    }

    /// Cross-entropy `-log softmax(scores)[gold]` of one labeled image and its
    /// gradient, added into `grads` scaled by `scale`.
    pub fn accumulate_label_loss_grad(&self, x: &[F], gold: usize, scale: F, grads: &mut Sender<F>) -> Result<F> {
        let (scores, e, head) = self.label_scores(x)?;
        if gold >= scores.len() {
            return Err(Error::shape("gold symbol bound", scores.len(), gold));
        }
        let probs = softmax(&scores)?;
        let loss = -probs[gold].ln();
        // d loss / d scores = probs - onehot(gold)
        let mut up = probs;
        up[gold] -= F::one();
        match (self, grads) {
            (Sender::Informed(p), Sender::Informed(g)) => {
                let mut d_embed = vec![F::zero(); p.out.in_dim()];
                p.out.backward_into(&head, &up, scale, &mut g.out, Some(&mut d_embed))?;
                embed_backward(&p.embed, &e, &d_embed, scale, &mut g.embed)?;
            }
            _ => return Err(Error::Consistency("gradient buffer architecture mismatch".into())),
        }
        Ok(loss)
    }
}

impl<F: Scalar> AgnosticSender<F> {
    pub fn policy(&self, target: &[F], distractor: &[F], g: &GibbsConfig) -> Result<Policy<SenderCache<F>, F>> {
        let t = embed(&self.embed, target)?;
        let d = embed(&self.embed, distractor)?;
        let concat: Vec<F> = t.activation.iter().chain(&d.activation).copied().collect();
        let (scores, head) = self.out.forward(&concat)?;
        Ok(Policy {
            probs: gibbs(&scores, g)?,
            beta: F::of(g.inverse_temperature()),
            cache: SenderCache::Agnostic { target: t, distractor: d, head },
        })
    }
}

impl<F: Scalar> InformedSender<F> {
    pub fn policy(&self, target: &[F], distractor: &[F], g: &GibbsConfig) -> Result<Policy<SenderCache<F>, F>> {
        let t = embed(&self.embed, target)?;
        let d = embed(&self.embed, distractor)?;
        let (combined, conv) = self.pairconv.forward(&t.activation, &d.activation)?;
        let (scores, head) = self.out.forward(&combined)?;
        Ok(Policy {
            probs: gibbs(&scores, g)?,
            beta: F::of(g.inverse_temperature()),
            cache: SenderCache::Informed { target: t, distractor: d, conv, head },
        })
    }
}

impl<F: Scalar> Receiver<F> {
    pub fn zeros(dims: &AgentDims) -> Self {
        Receiver {
            img_embed: Dense::zeros(dims.embed_dim, dims.feature_dim),
            sym_embed: Dense::zeros(dims.embed_dim, dims.vocab.size()),
        }
    }

    pub fn init<R: Rng + ?Sized>(dims: &AgentDims, rng: &mut R) -> Self {
        Receiver {
            img_embed: Dense::init(dims.embed_dim, dims.feature_dim, rng),
            sym_embed: Dense::init_embedding(dims.embed_dim, dims.vocab.size(), rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.sym_embed.in_dim()
    }

    pub fn policy(&self, left: &[F], right: &[F], symbol: usize, g: &GibbsConfig) -> Result<Policy<ReceiverCache<F>, F>> {
        let v: Vec<F> = self
            .sym_embed
            .apply_one_hot(symbol)?
            .into_iter()
            .map(sigmoid)
            .collect();
        let l = embed(&self.img_embed, left)?;
        let r = embed(&self.img_embed, right)?;
        let dot = |u: &[F]| v.iter().zip(u).fold(F::zero(), |acc, (&a, &b)| acc + a * b);
        let scores = [dot(&l.activation), dot(&r.activation)];
        Ok(Policy {
            probs: gibbs(&scores, g)?,
            beta: F::of(g.inverse_temperature()),
            cache: ReceiverCache {
                left: l,
                right: r,
                symbol,
                symbol_embedding: v,
            },
        })
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        left: &[F],
        right: &[F],
        symbol: usize,
        g: &GibbsConfig,
        rng: &mut R,
    ) -> Result<ReceiverAction<F>> {
        self.policy(left, right, symbol, g)?.sample(rng)
    }

    pub fn accumulate_log_prob_grad(&self, action: &ReceiverAction<F>, scale: F, grads: &mut Receiver<F>) -> Result<()> {
        self.accumulate_score_grad(&action.policy.cache, &action.score_grad(), scale, grads)
    }

    /// Adds `scale * dH(pi) / d params` for the pointing distribution.
    pub fn accumulate_entropy_grad(
        &self,
        policy: &Policy<ReceiverCache<F>, F>,
        scale: F,
        grads: &mut Receiver<F>,
    ) -> Result<()> {
        let up = entropy_score_grad(&policy.probs, policy.beta);
        self.accumulate_score_grad(&policy.cache, &up, scale, grads)
    }

    /// Backpropagates an upstream gradient on the two pointing scores.
    pub fn accumulate_score_grad(
        &self,
        cache: &ReceiverCache<F>,
        up: &[F],
        scale: F,
        grads: &mut Receiver<F>,
    ) -> Result<()> {
        if up.len() != 2 {
            return Err(Error::shape("receiver score gradient", 2, up.len()));
        }
        if cache.symbol >= self.vocab_size() || grads.vocab_size() != self.vocab_size() {
            return Err(Error::Consistency("receiver cache does not match parameters".into()));
        }
        let (gl, gr) = (up[0], up[1]);
        let v = &cache.symbol_embedding;
        let (ul, ur) = (&cache.left.activation, &cache.right.activation);
        if v.len() != ul.len() || v.len() != self.sym_embed.out_dim() {
            return Err(Error::Consistency("receiver embedding width changed".into()));
        }
        let d_left: Vec<F> = v.iter().map(|&vi| gl * vi).collect();
        let d_right: Vec<F> = v.iter().map(|&vi| gr * vi).collect();
        let d_sym_pre: Vec<F> = (0..v.len())
            .map(|i| (gl * ul[i] + gr * ur[i]) * v[i] * (F::one() - v[i]))
            .collect();
        embed_backward(&self.img_embed, &cache.left, &d_left, scale, &mut grads.img_embed)?;
        embed_backward(&self.img_embed, &cache.right, &d_right, scale, &mut grads.img_embed)?;
        self.sym_embed
            .backward_one_hot_into(cache.symbol, &d_sym_pre, scale, &mut grads.sym_embed);
        Ok(())
    }
}

impl<F: Scalar> Parameters<F> for Sender<F> {
    fn tensors(&self) -> Vec<TensorView<'_, F>> {
        match self {
            Sender::Agnostic(p) => {
                let mut v = prefixed("embed", p.embed.tensors());
                v.extend(prefixed("out", p.out.tensors()));
                v
            }
            Sender::Informed(p) => {
                let mut v = prefixed("embed", p.embed.tensors());
                v.extend(prefixed("pairconv", p.pairconv.tensors()));
                v.extend(prefixed("out", p.out.tensors()));
                v
            }
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        match self {
            Sender::Agnostic(p) => {
                let mut v = p.embed.tensors_mut();
                v.extend(p.out.tensors_mut());
                v
            }
            Sender::Informed(p) => {
                let mut v = p.embed.tensors_mut();
                v.extend(p.pairconv.tensors_mut());
                v.extend(p.out.tensors_mut());
                v
            }
        }
    }
}

impl<F: Scalar> Parameters<F> for Receiver<F> {
    fn tensors(&self) -> Vec<TensorView<'_, F>> {
        let mut v = prefixed("img_embed", self.img_embed.tensors());
        v.extend(prefixed("sym_embed", self.sym_embed.tensors()));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut v = self.img_embed.tensors_mut();
        v.extend(self.sym_embed.tensors_mut());
        v
    }
}

pub fn agnostic_sender_forward<F: Scalar, R: Rng + ?Sized>(
    p: &AgnosticSender<F>,
    target: &[F],
    distractor: &[F],
    g: &GibbsConfig,
    rng: &mut R,
) -> Result<SenderAction<F>> {
    p.policy(target, distractor, g)?.sample(rng)
}

pub fn informed_sender_forward<F: Scalar, R: Rng + ?Sized>(
    p: &InformedSender<F>,
    target: &[F],
    distractor: &[F],
    g: &GibbsConfig,
    rng: &mut R,
) -> Result<SenderAction<F>> {
    p.policy(target, distractor, g)?.sample(rng)
}

pub fn receiver_forward<F: Scalar, R: Rng + ?Sized>(
    p: &Receiver<F>,
    left: &[F],
    right: &[F],
    symbol: usize,
    g: &GibbsConfig,
    rng: &mut R,
) -> Result<ReceiverAction<F>> {
    p.act(left, right, symbol, g, rng)
}

pub fn sender_log_prob_grad<F: Scalar>(p: &Sender<F>, action: &SenderAction<F>) -> Result<Sender<F>> {
    let mut grads = p.zeros_like();
    p.accumulate_log_prob_grad(action, F::one(), &mut grads)?;
    Ok(grads)
}

pub fn receiver_log_prob_grad<F: Scalar>(p: &Receiver<F>, action: &ReceiverAction<F>) -> Result<Receiver<F>> {
    let mut grads = p.zeros_like();
    p.accumulate_log_prob_grad(action, F::one(), &mut grads)?;
    Ok(grads)
}

/// Independent sender and receiver initializations; nothing is shared.
pub fn init_agents<F: Scalar, R: Rng + ?Sized>(
    arch: Arch,
    dims: &AgentDims,
    rng: &mut R,
) -> Result<(Sender<F>, Receiver<F>)> {
    dims.validate()?;
    let sender = Sender::init(arch, dims, rng);
    let receiver = Receiver::init(dims, rng);
    Ok((sender, receiver))
}
