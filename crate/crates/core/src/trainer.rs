//! Training: the retrieval loss over public answers, the adversarial privacy
//! loss over private attribute triples, their weighted sum, and the
//! inference-time noise baseline.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::bench::BenchmarkQuery;
use crate::encoders::{EncoderError, Model, ModelConfig, ModelKind, QueryEmbedding};
use crate::kg::{Direction, Triple, VertexId};
use crate::numerics::{Axis, NdArray, NumericsError, Optimizer, Tape, Var};
use crate::query::QueryNode;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("non-finite value at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("loss batch is empty")]
    EmptyBatch,
    #[error("benchmark has no training answers")]
    NoTrainingData,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config line {line}: {msg}")]
    ConfigSyntax { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Encoder(EncoderError::Numerics(e))
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Which projections of a private triple `a(u, x)` the privacy loss covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrivacyDirection {
    /// From the value `x` back to the entity `u` only.
    #[default]
    Reverse,
    /// Reverse plus the forward projection from `u` to `x`.
    Both,
}

impl PrivacyDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyDirection::Reverse => "reverse",
            PrivacyDirection::Both => "both",
        }
    }
}

impl fmt::Display for PrivacyDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PrivacyDirection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "reverse" => Ok(PrivacyDirection::Reverse),
            "both" => Ok(PrivacyDirection::Both),
            _ => Err(format!(
                "unknown privacy direction `{s}` (expected reverse or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }

    pub fn build(self, lr: f64) -> Optimizer {
        match self {
            OptimizerKind::Adam => Optimizer::adam(lr),
            OptimizerKind::Sgd => Optimizer::sgd(lr),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(format!("unknown optimizer `{s}` (expected adam or sgd)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub particles: usize,
    pub alpha: f64,
    /// Radius of the entity-embedding ball; `None` leaves norms free.
    pub max_norm: Option<f64>,
    pub beta: f64,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Sampled negatives per query; 0 means softmax over every vertex.
    pub negatives: usize,
    pub privacy_direction: PrivacyDirection,
    /// Private triples drawn per step; 0 means all of them.
    pub privacy_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Gqe,
            dim: 64,
            particles: 3,
            alpha: 0.02,
            max_norm: Some(4.0),
            beta: 0.0,
            optimizer: OptimizerKind::Adam,
            lr: 0.01,
            epochs: 10,
            batch_size: 128,
            seed: 0,
            negatives: 0,
            privacy_direction: PrivacyDirection::Reverse,
            privacy_batch: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a finite non-negative number");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.dim == 0 || self.particles == 0 {
            return bad("dim and particles must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if let Some(r) = self.max_norm {
            if !(r > 0.0 && r.is_finite()) {
                return bad("max_norm must be positive");
            }
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            kind: self.model,
            dim: self.dim,
            particles: self.particles,
            alpha: self.alpha,
            max_norm: self.max_norm,
            seed: self.seed,
        }
    }
}

/// Standard deviation and seed of the query-embedding perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma: 0.0,
            seed: 0,
        }
    }
}

/// Everything a run reads from a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub noise: NoiseConfig,
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| TrainError::ConfigSyntax { line: i + 1, msg };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            c.set(k.trim(), v.trim()).map_err(err)?;
        }
        c.train.validate()?;
        if !(c.noise.sigma >= 0.0 && c.noise.sigma.is_finite()) {
            return Err(TrainError::InvalidConfig(
                "sigma must be a finite non-negative number".into(),
            ));
        }
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse()
                .map_err(|_| format!("bad value `{v}` for `{key}`"))
        }
        let t = &mut self.train;
        match key {
            "model" => t.model = value.parse()?,
            "dim" => t.dim = num(key, value)?,
            "particles" => t.particles = num(key, value)?,
            "alpha" => t.alpha = num(key, value)?,
            "max_norm" => {
                t.max_norm = match value {
                    "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "beta" => t.beta = num(key, value)?,
            "optimizer" => t.optimizer = value.parse()?,
            "lr" => t.lr = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "negatives" => t.negatives = num(key, value)?,
            "privacy_direction" => t.privacy_direction = value.parse()?,
            "privacy_batch" => t.privacy_batch = num(key, value)?,
            "sigma" => self.noise.sigma = num(key, value)?,
            "noise_seed" => self.noise.seed = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let t = &self.train;
        writeln!(w, "model = {}", t.model)?;
        writeln!(w, "dim = {}", t.dim)?;
        writeln!(w, "particles = {}", t.particles)?;
        writeln!(w, "alpha = {}", t.alpha)?;
        match t.max_norm {
            Some(r) => writeln!(w, "max_norm = {r}")?,
            None => writeln!(w, "max_norm = none")?,
        }
        writeln!(w, "beta = {}", t.beta)?;
        writeln!(w, "optimizer = {}", t.optimizer)?;
        writeln!(w, "lr = {}", t.lr)?;
        writeln!(w, "epochs = {}", t.epochs)?;
        writeln!(w, "batch_size = {}", t.batch_size)?;
        writeln!(w, "seed = {}", t.seed)?;
        writeln!(w, "negatives = {}", t.negatives)?;
        writeln!(w, "privacy_direction = {}", t.privacy_direction)?;
        writeln!(w, "privacy_batch = {}", t.privacy_batch)?;
        writeln!(w, "sigma = {}", self.noise.sigma)?;
        writeln!(w, "noise_seed = {}", self.noise.seed)?;
        Ok(())
    }
}

/// A query paired with one of its answers.
pub type Pair<'a> = (&'a QueryNode, VertexId);

/// Retrieval loss `-(1/N) Σ log p(q, v)` over the `N` pairs of a batch.
/// Pairs sharing a query are encoded once. With `negatives = Some((n, rng))`
/// each query is normalized over its batch answers plus `n` sampled vertices.
pub fn public_loss_on(
    model: &Model,
    t: &mut Tape,
    pairs: &[Pair],
    mut negatives: Option<(usize, &mut ChaCha8Rng)>,
) -> Result<Var> {
    if pairs.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut order: Vec<&QueryNode> = Vec::new();
    let mut groups: HashMap<&QueryNode, Vec<VertexId>> = HashMap::new();
    for &(q, v) in pairs {
        groups
            .entry(q)
            .or_insert_with(|| {
                order.push(q);
                Vec::new()
            })
            .push(v);
    }
    let mut terms = Vec::with_capacity(order.len());
    for q in order {
        let answers = &groups[q];
        let embs = model.encode_on(t, q)?;
        let (scores, picks) = match negatives.as_mut() {
            None => (
                model.scores_on(t, &embs, None)?,
                answers.iter().map(|v| v.index()).collect::<Vec<_>>(),
            ),
            Some((n, rng)) => {
                let (cands, picks) = candidate_set(answers, *n, model.num_vertices(), rng);
                (model.scores_on(t, &embs, Some(&cands))?, picks)
            }
        };
        let ls = t.log_softmax(scores, Axis::Cols)?;
        let chosen = t.select(ls, Axis::Cols, &picks)?;
        terms.push(t.sum_all(chosen)?);
    }
    let total = sum_vars(t, &terms)?;
    Ok(t.scale(total, -1.0 / pairs.len() as f64)?)
}

/// Distinct answers followed by `n` non-answer vertices; returns the
/// candidate list and the position of each answer in it.
fn candidate_set(
    answers: &[VertexId],
    n: usize,
    num_vertices: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut cands: Vec<usize> = Vec::new();
    let mut pos = HashMap::new();
    let picks = answers
        .iter()
        .map(|v| {
            *pos.entry(v.index()).or_insert_with(|| {
                cands.push(v.index());
                cands.len() - 1
            })
        })
        .collect();
    let pool = num_vertices.saturating_sub(cands.len());
    let mut added = 0;
    while added < n.min(pool) {
        let u = rng.random_range(0..num_vertices);
        if let std::collections::hash_map::Entry::Vacant(e) = pos.entry(u) {
            e.insert(cands.len());
            cands.push(u);
            added += 1;
        }
    }
    (cands, picks)
}

fn sum_vars(t: &mut Tape, vs: &[Var]) -> Result<Var> {
    let mut acc = vs[0];
    for &v in &vs[1..] {
        acc = t.add(acc, v)?;
    }
    Ok(acc)
}

/// `log p` of `target` under the one-hop query from `anchor` along `rel`.
fn one_hop_log_prob(
    model: &Model,
    t: &mut Tape,
    anchor: VertexId,
    rel: crate::kg::RelationId,
    dir: Direction,
    target: VertexId,
) -> Result<Var> {
    let a = model.anchor_on(t, anchor)?;
    let q = model.project_on(t, a, rel, dir)?;
    let scores = model.scores_on(t, &[q], None)?;
    let ls = t.log_softmax(scores, Axis::Cols)?;
    Ok(t.select(ls, Axis::Cols, &[target.index()])?)
}

/// Privacy loss `(1/|A|) Σ log p(f_P(e_x, r⁻¹), u)` over private triples
/// `r(u, x)`. With [`PrivacyDirection::Both`] the forward terms
/// `log p(f_P(e_u, r), x)` are averaged in. Empty input gives 0.
pub fn privacy_loss_on(
    model: &Model,
    t: &mut Tape,
    private: &[Triple],
    direction: PrivacyDirection,
) -> Result<Var> {
    if private.is_empty() {
        return Ok(t.constant(NdArray::scalar(0.0))?);
    }
    let mut terms = Vec::with_capacity(private.len() * 2);
    for tr in private {
        terms.push(one_hop_log_prob(
            model,
            t,
            tr.tail,
            tr.rel,
            Direction::Backward,
            tr.head,
        )?);
        if direction == PrivacyDirection::Both {
            terms.push(one_hop_log_prob(
                model,
                t,
                tr.head,
                tr.rel,
                Direction::Forward,
                tr.tail,
            )?);
        }
    }
    let total = sum_vars(t, &terms)?;
    Ok(t.scale(total, 1.0 / terms.len() as f64)?)
}

/// `L_u + β L_p`. With `β = 0` the privacy term is never built, so the
/// result is exactly the public loss.
pub fn total_loss_on(
    model: &Model,
    t: &mut Tape,
    pairs: &[Pair],
    private: &[Triple],
    beta: f64,
    direction: PrivacyDirection,
) -> Result<Var> {
    let lu = public_loss_on(model, t, pairs, None)?;
    if beta == 0.0 {
        return Ok(lu);
    }
    let lp = privacy_loss_on(model, t, private, direction)?;
    let weighted = t.scale(lp, beta)?;
    Ok(t.add(lu, weighted)?)
}

pub fn public_loss(model: &Model, pairs: &[Pair]) -> Result<f64> {
    let mut t = Tape::new(model.store());
    let l = public_loss_on(model, &mut t, pairs, None)?;
    Ok(t.value(l).item())
}

pub fn privacy_loss(model: &Model, private: &[Triple], direction: PrivacyDirection) -> Result<f64> {
    let mut t = Tape::new(model.store());
    let l = privacy_loss_on(model, &mut t, private, direction)?;
    Ok(t.value(l).item())
}

pub fn total_loss(
    model: &Model,
    pairs: &[Pair],
    private: &[Triple],
    beta: f64,
    direction: PrivacyDirection,
) -> Result<f64> {
    let mut t = Tape::new(model.store());
    let l = total_loss_on(model, &mut t, pairs, private, beta, direction)?;
    Ok(t.value(l).item())
}

/// Mean losses over one epoch's batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub public: f64,
    pub privacy: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: Vec<EpochLoss>,
}

/// Writes the trace as `epoch,L_u,L_p,L` CSV.
pub fn write_trace<W: Write>(mut w: W, trace: &[EpochLoss]) -> std::io::Result<()> {
    writeln!(w, "epoch,L_u,L_p,L")?;
    for e in trace {
        writeln!(
            w,
            "{},{:e},{:e},{:e}",
            e.epoch, e.public, e.privacy, e.total
        )?;
    }
    Ok(())
}

/// Every (query, training answer) pair of `queries`.
pub fn training_pairs(queries: &[BenchmarkQuery]) -> Vec<Pair<'_>> {
    queries
        .iter()
        .flat_map(|q| q.train_answers.iter().map(move |&v| (&q.query, v)))
        .collect()
}

fn locate(e: TrainError, epoch: usize, batch: usize) -> TrainError {
    let non_finite = |n: &NumericsError| {
        matches!(
            n,
            NumericsError::NonFinite { .. } | NumericsError::NonFiniteGradient(_)
        )
    };
    match e {
        TrainError::Encoder(EncoderError::Numerics(n)) if non_finite(&n) => TrainError::NonFinite {
            epoch,
            batch,
            detail: n.to_string(),
        },
        other => other,
    }
}

/// Trains `model` on the training queries and private triples with Adam.
/// The privacy term uses a fresh sample of private triples every step; it
/// is still computed (without gradient) when `β = 0` so the trace shows it.
pub fn train(
    model: Model,
    train_queries: &[BenchmarkQuery],
    private: &[Triple],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(model, train_queries, private, cfg, |_, _| Ok(()))
}

/// [`train`] with a callback that sees the model after every epoch.
pub fn train_with<F>(
    mut model: Model,
    train_queries: &[BenchmarkQuery],
    private: &[Triple],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochLoss, &Model) -> Result<()>,
{
    cfg.validate()?;
    let mut pairs = training_pairs(train_queries);
    if pairs.is_empty() {
        return Err(TrainError::NoTrainingData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let opt = cfg.optimizer.build(cfg.lr);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        pairs.shuffle(&mut rng);
        let (mut su, mut sp, mut st) = (0.0, 0.0, 0.0);
        let batches = pairs.chunks(cfg.batch_size).count();
        for (b, batch) in pairs.chunks(cfg.batch_size).enumerate() {
            let priv_batch: Vec<Triple> =
                if cfg.privacy_batch == 0 || cfg.privacy_batch >= private.len() {
                    private.to_vec()
                } else {
                    rand::seq::index::sample(&mut rng, private.len(), cfg.privacy_batch)
                        .into_iter()
                        .map(|i| private[i])
                        .collect()
                };
            let step =
                |rng: &mut ChaCha8Rng| -> Result<(f64, f64, f64, crate::numerics::Gradients)> {
                    let mut t = Tape::new(model.store());
                    let neg = (cfg.negatives > 0).then_some((cfg.negatives, rng));
                    let lu = public_loss_on(&model, &mut t, batch, neg)?;
                    let (lp_val, total) = if cfg.beta == 0.0 {
                        let mut side = Tape::new(model.store());
                        let lp =
                            privacy_loss_on(&model, &mut side, &priv_batch, cfg.privacy_direction)?;
                        (side.value(lp).item(), lu)
                    } else {
                        let lp =
                            privacy_loss_on(&model, &mut t, &priv_batch, cfg.privacy_direction)?;
                        let w = t.scale(lp, cfg.beta)?;
                        (t.value(lp).item(), t.add(lu, w)?)
                    };
                    let grads = t.backward(total)?;
                    Ok((t.value(lu).item(), lp_val, t.value(total).item(), grads))
                };
            let (lu, lp, l, grads) = step(&mut rng).map_err(|e| locate(e, epoch, b + 1))?;
            if !(lu.is_finite() && lp.is_finite() && l.is_finite()) {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b + 1,
                    detail: format!("L_u={lu} L_p={lp} L={l}"),
                });
            }
            model.store_mut().accumulate(&grads);
            model
                .store_mut()
                .step(&opt)
                .map_err(|e| locate(e.into(), epoch, b + 1))?;
            model.enforce_constraints();
            su += lu;
            sp += lp;
            st += l;
        }
        let n = batches as f64;
        let e = EpochLoss {
            epoch,
            public: su / n,
            privacy: sp / n,
            total: st / n,
        };
        on_epoch(&e, &model)?;
        trace.push(e);
    }
    Ok(TrainOutcome { model, trace })
}

/// Adds isotropic Gaussian noise of deviation `sigma` to a query embedding.
/// Boxes are perturbed at the center only.
pub fn perturb<R: Rng>(embs: &[QueryEmbedding], sigma: f64, rng: &mut R) -> Vec<QueryEmbedding> {
    if sigma == 0.0 {
        return embs.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let mut jitter = |a: &NdArray| {
        let mut out = a.clone();
        for x in out.data_mut() {
            *x += normal.sample(rng);
        }
        out
    };
    embs.iter()
        .map(|e| match e {
            QueryEmbedding::Vector(v) => QueryEmbedding::Vector(jitter(v)),
            QueryEmbedding::Box { center, offset } => QueryEmbedding::Box {
                center: jitter(center),
                offset: offset.clone(),
            },
            QueryEmbedding::Particles(p) => QueryEmbedding::Particles(jitter(p)),
        })
        .collect()
}

/// Scores of every vertex after one noise draw for the whole query.
pub fn noisy_scores(
    model: &Model,
    embs: &[QueryEmbedding],
    noise: &NoiseConfig,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    Ok(model.score_all(&perturb(embs, noise.sigma, &mut rng))?)
}

pub fn noisy_score(
    model: &Model,
    embs: &[QueryEmbedding],
    v: VertexId,
    noise: &NoiseConfig,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    Ok(model.score(&perturb(embs, noise.sigma, &mut rng), v)?)
}
