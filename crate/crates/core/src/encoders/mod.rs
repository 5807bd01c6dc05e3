//! Neural query encoders: GQE (vectors), Q2B (boxes) and Q2P (particles).
//!
//! Every encoder embeds anchors from an entity table, applies learned
//! projection and intersection operators bottom-up over the query tree, and
//! scores candidate vertices against the result. Unions are handled by
//! rewriting to disjunctive normal form and taking the best disjunct score.

mod gqe;
mod q2b;
mod q2p;

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kg::{Direction, RelationId, VertexId};
use crate::numerics::{self, Axis, NdArray, NumericsError, ParameterStore, Tape, Var};
use crate::query::{to_dnf, QueryNode};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("{model} model cannot operate on a {got} embedding")]
    Mismatch { model: ModelKind, got: &'static str },
    #[error("intersection needs at least 2 inputs, got {0}")]
    Arity(usize),
    #[error("vertex id {0} is outside the embedding table")]
    UnknownVertex(u32),
    #[error("relation id {0} is outside the embedding table")]
    UnknownRelation(u32),
    #[error("union must be lifted to the top before encoding")]
    Union,
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("vertex {0} is not among the candidates")]
    NotACandidate(u32),
    #[error("model manifest: {0}")]
    Manifest(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gqe,
    Q2b,
    Q2p,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gqe => "gqe",
            ModelKind::Q2b => "q2b",
            ModelKind::Q2p => "q2p",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gqe" => Ok(ModelKind::Gqe),
            "q2b" => Ok(ModelKind::Q2b),
            "q2p" => Ok(ModelKind::Q2p),
            _ => Err(format!("unknown model `{s}` (expected gqe, q2b or q2p)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dim: usize,
    /// Particles per query (Q2P only).
    pub particles: usize,
    /// Weight of the inside-box distance (Q2B only).
    pub alpha: f64,
    /// Entity rows are projected back onto this L2 ball after every update.
    pub max_norm: Option<f64>,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            dim: 64,
            particles: 3,
            alpha: 0.02,
            max_norm: None,
            seed: 0,
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn with_particles(mut self, k: usize) -> Self {
        self.particles = k;
        self
    }

    pub fn with_max_norm(mut self, r: Option<f64>) -> Self {
        self.max_norm = r;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A query embedding detached from any tape.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryEmbedding {
    /// `[1, d]`.
    Vector(NdArray),
    /// Center and non-negative offset, each `[1, d]`.
    Box { center: NdArray, offset: NdArray },
    /// `[k, d]`, one particle per row.
    Particles(NdArray),
}

impl QueryEmbedding {
    pub fn variant(&self) -> &'static str {
        match self {
            QueryEmbedding::Vector(_) => "vector",
            QueryEmbedding::Box { .. } => "box",
            QueryEmbedding::Particles(_) => "particles",
        }
    }
}

/// A query embedding recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmbVar {
    Vector(Var),
    Box { center: Var, offset: Var },
    Particles(Var),
}

impl EmbVar {
    fn variant(&self) -> &'static str {
        match self {
            EmbVar::Vector(_) => "vector",
            EmbVar::Box { .. } => "box",
            EmbVar::Particles(_) => "particles",
        }
    }

    pub fn to_value(&self, t: &Tape) -> QueryEmbedding {
        match *self {
            EmbVar::Vector(v) => QueryEmbedding::Vector(t.value(v).clone()),
            EmbVar::Box { center, offset } => QueryEmbedding::Box {
                center: t.value(center).clone(),
                offset: t.value(offset).clone(),
            },
            EmbVar::Particles(p) => QueryEmbedding::Particles(t.value(p).clone()),
        }
    }

    pub fn from_value(t: &mut Tape, e: &QueryEmbedding) -> Result<EmbVar> {
        Ok(match e {
            QueryEmbedding::Vector(v) => EmbVar::Vector(t.constant(v.clone())?),
            QueryEmbedding::Box { center, offset } => EmbVar::Box {
                center: t.constant(center.clone())?,
                offset: t.constant(offset.clone())?,
            },
            QueryEmbedding::Particles(p) => EmbVar::Particles(t.constant(p.clone())?),
        })
    }
}

/// Encoder parameters plus the configuration that shaped them.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    num_vertices: usize,
    num_relations: usize,
    store: ParameterStore,
}

pub(crate) const ENTITY: &str = "entity";

impl Model {
    /// Initializes a model for a graph with the given vocabulary sizes.
    pub fn new(config: ModelConfig, num_vertices: usize, num_relations: usize) -> Result<Model> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.dim;
        let bound = 1.0 / (d as f64).sqrt();
        let mut store = ParameterStore::new();
        store.add(
            ENTITY,
            NdArray::uniform(&[num_vertices.max(1), d], -bound, bound, &mut rng),
        )?;
        // Forward and backward traversal of a relation get separate rows.
        let rel_rows = 2 * num_relations.max(1);
        match config.kind {
            ModelKind::Gqe => gqe::init(&mut store, d, rel_rows, bound, &mut rng)?,
            ModelKind::Q2b => q2b::init(&mut store, d, rel_rows, bound, &mut rng)?,
            ModelKind::Q2p => {
                q2p::init(&mut store, d, config.particles, rel_rows, bound, &mut rng)?
            }
        }
        Ok(Model {
            config,
            num_vertices,
            num_relations,
            store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    /// Re-establishes parameter constraints after an optimizer step.
    pub fn enforce_constraints(&mut self) {
        if self.config.kind == ModelKind::Q2b {
            q2b::clamp_offsets(&mut self.store);
        }
        if let Some(r) = self.config.max_norm {
            let id = self
                .store
                .id(ENTITY)
                .expect("entity table is always registered");
            let table = self.store.value_mut(id);
            for i in 0..table.rows() {
                let row = table.row_slice_mut(i);
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > r {
                    row.iter_mut().for_each(|x| *x *= r / norm);
                }
            }
        }
    }

    pub(crate) fn relation_row(&self, rel: RelationId, dir: Direction) -> Result<usize> {
        if rel.index() >= self.num_relations {
            return Err(EncoderError::UnknownRelation(rel.0));
        }
        Ok(2 * rel.index() + usize::from(dir == Direction::Backward))
    }

    fn check_vertex(&self, v: VertexId) -> Result<()> {
        if v.index() < self.num_vertices {
            Ok(())
        } else {
            Err(EncoderError::UnknownVertex(v.0))
        }
    }

    fn mismatch(&self, e: &EmbVar) -> EncoderError {
        EncoderError::Mismatch {
            model: self.config.kind,
            got: e.variant(),
        }
    }

    pub fn anchor_on(&self, t: &mut Tape, v: VertexId) -> Result<EmbVar> {
        self.check_vertex(v)?;
        let table = t.param(self.store.id(ENTITY)?);
        let row = t.gather_rows(table, &[v.index()])?;
        match self.config.kind {
            ModelKind::Gqe => Ok(EmbVar::Vector(row)),
            ModelKind::Q2b => {
                let offset = t.constant(NdArray::zeros(&[1, self.config.dim]))?;
                Ok(EmbVar::Box {
                    center: row,
                    offset,
                })
            }
            ModelKind::Q2p => q2p::anchor(self, t, row),
        }
    }

    /// Relation projection `f_P(q, r)`.
    pub fn project_on(
        &self,
        t: &mut Tape,
        q: EmbVar,
        rel: RelationId,
        dir: Direction,
    ) -> Result<EmbVar> {
        let row = self.relation_row(rel, dir)?;
        match (self.config.kind, q) {
            (ModelKind::Gqe, EmbVar::Vector(v)) => gqe::project(self, t, v, row),
            (ModelKind::Q2b, EmbVar::Box { center, offset }) => {
                q2b::project(self, t, center, offset, row)
            }
            (ModelKind::Q2p, EmbVar::Particles(p)) => q2p::project(self, t, p, row),
            _ => Err(self.mismatch(&q)),
        }
    }

    /// Intersection `f_I(q_1, ..., q_n)`.
    pub fn intersect_on(&self, t: &mut Tape, qs: &[EmbVar]) -> Result<EmbVar> {
        if qs.len() < 2 {
            return Err(EncoderError::Arity(qs.len()));
        }
        match self.config.kind {
            ModelKind::Gqe => {
                let vs = qs
                    .iter()
                    .map(|q| match q {
                        EmbVar::Vector(v) => Ok(*v),
                        other => Err(self.mismatch(other)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                gqe::intersect(self, t, &vs)
            }
            ModelKind::Q2b => {
                let bs = qs
                    .iter()
                    .map(|q| match q {
                        EmbVar::Box { center, offset } => Ok((*center, *offset)),
                        other => Err(self.mismatch(other)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                q2b::intersect(self, t, &bs)
            }
            ModelKind::Q2p => {
                let ps = qs
                    .iter()
                    .map(|q| match q {
                        EmbVar::Particles(p) => Ok(*p),
                        other => Err(self.mismatch(other)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                q2p::intersect(self, t, &ps)
            }
        }
    }

    /// Encodes a union-free query.
    pub fn encode_conjunctive_on(&self, t: &mut Tape, q: &QueryNode) -> Result<EmbVar> {
        match q {
            QueryNode::Anchor(v) => self.anchor_on(t, *v),
            QueryNode::Projection { rel, dir, child } => {
                let inner = self.encode_conjunctive_on(t, child)?;
                self.project_on(t, inner, *rel, *dir)
            }
            QueryNode::Intersection(cs) => {
                let parts = cs
                    .iter()
                    .map(|c| self.encode_conjunctive_on(t, c))
                    .collect::<Result<Vec<_>>>()?;
                self.intersect_on(t, &parts)
            }
            QueryNode::Union(_) => Err(EncoderError::Union),
        }
    }

    /// Encodes `q` as one embedding per disjunct of its DNF.
    pub fn encode_on(&self, t: &mut Tape, q: &QueryNode) -> Result<Vec<EmbVar>> {
        to_dnf(q)
            .disjuncts
            .iter()
            .map(|d| self.encode_conjunctive_on(t, d))
            .collect()
    }

    /// Scores of `candidates` (every vertex when `None`) as a `[1, n]` row;
    /// with several disjuncts the best disjunct score wins.
    pub fn scores_on(
        &self,
        t: &mut Tape,
        embs: &[EmbVar],
        candidates: Option<&[usize]>,
    ) -> Result<Var> {
        if embs.is_empty() {
            return Err(EncoderError::Arity(0));
        }
        if let Some(c) = candidates {
            if c.is_empty() {
                return Err(EncoderError::EmptyCandidates);
            }
            if let Some(&bad) = c.iter().find(|&&v| v >= self.num_vertices) {
                return Err(EncoderError::UnknownVertex(bad as u32));
            }
        }
        let table = t.param(self.store.id(ENTITY)?);
        let ents = match candidates {
            Some(c) => t.gather_rows(table, c)?,
            None if self.num_vertices == self.store.value(self.store.id(ENTITY)?).rows() => table,
            None => t.gather_rows(table, &(0..self.num_vertices).collect::<Vec<_>>())?,
        };
        let mut rows = Vec::with_capacity(embs.len());
        for e in embs {
            let row = match (self.config.kind, *e) {
                (ModelKind::Gqe, EmbVar::Vector(q)) => gqe::score(t, q, ents)?,
                (ModelKind::Q2b, EmbVar::Box { center, offset }) => {
                    q2b::score(t, center, offset, ents, self.config.alpha)?
                }
                (ModelKind::Q2p, EmbVar::Particles(p)) => {
                    q2p::score(t, p, ents, self.config.particles)?
                }
                _ => return Err(self.mismatch(e)),
            };
            rows.push(row);
        }
        if rows.len() == 1 {
            return Ok(rows[0]);
        }
        let stacked = t.concat(&rows, Axis::Rows)?;
        Ok(t.reduce_max(stacked, Axis::Rows)?)
    }

    /// Detached embeddings of `q`, one per DNF disjunct.
    pub fn encode(&self, q: &QueryNode) -> Result<Vec<QueryEmbedding>> {
        let mut t = Tape::new(&self.store);
        let embs = self.encode_on(&mut t, q)?;
        Ok(embs.iter().map(|e| e.to_value(&t)).collect())
    }

    /// Applies the projection operator to a detached embedding.
    pub fn project(
        &self,
        q: &QueryEmbedding,
        rel: RelationId,
        dir: Direction,
    ) -> Result<QueryEmbedding> {
        let mut t = Tape::new(&self.store);
        let v = EmbVar::from_value(&mut t, q)?;
        let out = self.project_on(&mut t, v, rel, dir)?;
        Ok(out.to_value(&t))
    }

    /// Applies the intersection operator to detached embeddings.
    pub fn intersect(&self, qs: &[QueryEmbedding]) -> Result<QueryEmbedding> {
        let mut t = Tape::new(&self.store);
        let vs = qs
            .iter()
            .map(|q| EmbVar::from_value(&mut t, q))
            .collect::<Result<Vec<_>>>()?;
        let out = self.intersect_on(&mut t, &vs)?;
        Ok(out.to_value(&t))
    }

    /// Score of every vertex, indexed by vertex id.
    pub fn score_all(&self, embs: &[QueryEmbedding]) -> Result<Vec<f64>> {
        let mut t = Tape::new(&self.store);
        let vs = embs
            .iter()
            .map(|e| EmbVar::from_value(&mut t, e))
            .collect::<Result<Vec<_>>>()?;
        let s = self.scores_on(&mut t, &vs, None)?;
        Ok(t.value(s).data().to_vec())
    }

    pub fn score(&self, embs: &[QueryEmbedding], v: VertexId) -> Result<f64> {
        self.check_vertex(v)?;
        let mut t = Tape::new(&self.store);
        let vs = embs
            .iter()
            .map(|e| EmbVar::from_value(&mut t, e))
            .collect::<Result<Vec<_>>>()?;
        let s = self.scores_on(&mut t, &vs, Some(&[v.index()]))?;
        Ok(t.value(s).item())
    }

    /// Softmax probability of `v` among `candidates`.
    pub fn probability(
        &self,
        embs: &[QueryEmbedding],
        v: VertexId,
        candidates: &[VertexId],
    ) -> Result<f64> {
        if candidates.is_empty() {
            return Err(EncoderError::EmptyCandidates);
        }
        let pos = candidates
            .iter()
            .position(|&c| c == v)
            .ok_or(EncoderError::NotACandidate(v.0))?;
        let idx: Vec<usize> = candidates.iter().map(|c| c.index()).collect();
        let mut t = Tape::new(&self.store);
        let vs = embs
            .iter()
            .map(|e| EmbVar::from_value(&mut t, e))
            .collect::<Result<Vec<_>>>()?;
        let s = self.scores_on(&mut t, &vs, Some(&idx))?;
        let p = t.softmax(s, Axis::Cols)?;
        Ok(t.value(p).data()[pos])
    }

    /// Writes `model.manifest` and `model.params` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut m = std::fs::File::create(dir.join("model.manifest"))?;
        self.write_manifest(&mut m)?;
        let p = std::fs::File::create(dir.join("model.params"))?;
        numerics::write_checkpoint(&self.store, std::io::BufWriter::new(p))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Model> {
        let dir = dir.as_ref();
        let (config, num_vertices, num_relations) =
            read_manifest(std::fs::File::open(dir.join("model.manifest"))?)?;
        let store = numerics::read_checkpoint(std::fs::File::open(dir.join("model.params"))?)?;
        let fresh = Model::new(config.clone(), num_vertices, num_relations)?;
        for id in fresh.store.ids() {
            let name = fresh.store.name(id);
            let loaded = store.id(name)?;
            if store.value(loaded).shape() != fresh.store.value(id).shape() {
                return Err(EncoderError::Manifest(format!(
                    "parameter `{name}` has the wrong shape"
                )));
            }
        }
        if store.len() != fresh.store.len() {
            return Err(EncoderError::Manifest(
                "checkpoint has unexpected parameters".into(),
            ));
        }
        Ok(Model {
            config,
            num_vertices,
            num_relations,
            store,
        })
    }

    pub fn write_manifest<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "kind\t{}", self.config.kind)?;
        writeln!(w, "dim\t{}", self.config.dim)?;
        writeln!(w, "particles\t{}", self.config.particles)?;
        writeln!(w, "alpha\t{:e}", self.config.alpha)?;
        match self.config.max_norm {
            Some(r) => writeln!(w, "max_norm\t{r:e}")?,
            None => writeln!(w, "max_norm\tnone")?,
        }
        writeln!(w, "seed\t{}", self.config.seed)?;
        writeln!(w, "vertices\t{}", self.num_vertices)?;
        writeln!(w, "relations\t{}", self.num_relations)?;
        Ok(())
    }
}

fn read_manifest<R: Read>(r: R) -> Result<(ModelConfig, usize, usize)> {
    let mut fields = std::collections::HashMap::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        if let Some((k, v)) = line.split_once('\t') {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| {
        fields
            .get(k)
            .cloned()
            .ok_or_else(|| EncoderError::Manifest(format!("missing `{k}`")))
    };
    let num = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| EncoderError::Manifest(format!("bad `{k}`")))
    };
    let kind = get("kind")?.parse().map_err(EncoderError::Manifest)?;
    let alpha = get("alpha")?
        .parse()
        .map_err(|_| EncoderError::Manifest("bad `alpha`".into()))?;
    let seed = get("seed")?
        .parse()
        .map_err(|_| EncoderError::Manifest("bad `seed`".into()))?;
    let max_norm = match fields.get("max_norm").map(String::as_str) {
        None | Some("none") => None,
        Some(v) => Some(
            v.parse()
                .map_err(|_| EncoderError::Manifest("bad `max_norm`".into()))?,
        ),
    };
    let config = ModelConfig {
        kind,
        dim: num("dim")?,
        particles: num("particles")?,
        alpha,
        max_norm,
        seed,
    };
    Ok((config, num("vertices")?, num("relations")?))
}
