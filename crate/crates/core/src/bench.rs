//! Benchmark construction: private-edge selection, the cumulative 8:1:1
//! edge split, query sampling with privacy-tagged test answers, statistics
//! and the on-disk query format.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kg::{
    Direction, KgError, KnowledgeGraph, RelationKind, Schema, Triple, VertexId, View, Vocab,
};
use crate::query::{classify_type, parse_query, QueryError, QueryNode, QueryType};
use crate::symbolic::{evaluate, evaluate_tagged, AnswerSet, EvalError, TagMode, TaggedAnswerSet};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(
        "requested {requested} private edges but the graph has only {available} attribute triples"
    )]
    TooManyPrivate { requested: usize, available: usize },
    #[error("private edge {0} is not an attribute triple of the graph")]
    NotAttribute(String),
    #[error("query type `{0}` has no sampling template")]
    NoTemplate(QueryType),
    #[error("sampler gave up on a {qtype} query after {attempts} attempts (graph too sparse for the template)")]
    Sparse { qtype: QueryType, attempts: usize },
    #[error("vertex name `{0}` cannot be written (contains a comma, tab or newline)")]
    UnwritableName(String),
    #[error("{file} line {line}: {msg}")]
    Format {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

/// Samples `n` attribute triples uniformly without replacement.
pub fn sample_private_edges(g: &KnowledgeGraph, n: usize, seed: u64) -> Result<BTreeSet<Triple>> {
    let attrs: Vec<Triple> = g.attribute_triples().copied().collect();
    if n > attrs.len() {
        return Err(BenchError::TooManyPrivate {
            requested: n,
            available: attrs.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, attrs.len(), n)
        .into_iter()
        .map(|i| attrs[i])
        .collect())
}

/// Train, validation and test graphs over a shared vocabulary.
#[derive(Debug, Clone)]
pub struct GraphSplit {
    pub train: KnowledgeGraph,
    pub valid: KnowledgeGraph,
    /// Every edge, with the private ones flagged.
    pub test: KnowledgeGraph,
    pub train_edges: BTreeSet<Triple>,
    pub valid_edges: BTreeSet<Triple>,
    pub test_edges: BTreeSet<Triple>,
    pub private_edges: BTreeSet<Triple>,
}

/// Bucket sizes of an 8:1:1 split of `n` edges.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (n as f64 * 0.8).round() as usize;
    let valid = ((n as f64 * 0.1).round() as usize).min(n - train);
    (train, valid, n - train - valid)
}

/// Holds out `private` and partitions the remaining edges 8:1:1 after a
/// seeded shuffle; graphs are built cumulatively.
pub fn split_edges(
    g: &KnowledgeGraph,
    private: &BTreeSet<Triple>,
    seed: u64,
) -> Result<GraphSplit> {
    let vocab = g.vocab();
    for t in private {
        if !g.contains(t) || vocab.relation_kind(t.rel) != RelationKind::Attribute {
            return Err(BenchError::NotAttribute(vocab.format_triple(t)));
        }
    }
    let mut rest: Vec<Triple> = g
        .triples()
        .iter()
        .filter(|t| !private.contains(t))
        .copied()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    let (n_train, n_valid, _) = split_sizes(rest.len());
    let train_edges: BTreeSet<Triple> = rest[..n_train].iter().copied().collect();
    let valid_edges: BTreeSet<Triple> = rest[n_train..n_train + n_valid].iter().copied().collect();
    let test_edges: BTreeSet<Triple> = rest[n_train + n_valid..].iter().copied().collect();
    GraphSplit::from_edges(
        vocab.clone(),
        train_edges,
        valid_edges,
        test_edges,
        private.clone(),
    )
}

impl GraphSplit {
    pub fn from_edges(
        vocab: Arc<Vocab>,
        train_edges: BTreeSet<Triple>,
        valid_edges: BTreeSet<Triple>,
        test_edges: BTreeSet<Triple>,
        private_edges: BTreeSet<Triple>,
    ) -> Result<GraphSplit> {
        let train =
            KnowledgeGraph::from_parts(vocab.clone(), train_edges.clone(), BTreeSet::new())?;
        let mut cumulative = train_edges.clone();
        cumulative.extend(valid_edges.iter().copied());
        let valid = KnowledgeGraph::from_parts(vocab.clone(), cumulative.clone(), BTreeSet::new())?;
        cumulative.extend(test_edges.iter().copied());
        cumulative.extend(private_edges.iter().copied());
        let test = KnowledgeGraph::from_parts(vocab, cumulative, private_edges.clone())?;
        Ok(GraphSplit {
            train,
            valid,
            test,
            train_edges,
            valid_edges,
            test_edges,
            private_edges,
        })
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        self.test.vocab()
    }

    /// Writes `vertices.tsv`, `schema.tsv` and one triple file per bucket.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let vocab = self.vocab();
        vocab.write_vertices(std::fs::File::create(dir.join("vertices.tsv"))?)?;
        vocab
            .schema()
            .write(std::fs::File::create(dir.join("schema.tsv"))?)?;
        for (name, edges) in self.buckets() {
            let f =
                std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}.tsv")))?);
            self.test.write_triples(f, edges)?;
        }
        Ok(())
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<GraphSplit> {
        let dir = dir.as_ref();
        let schema = Schema::load(dir.join("schema.tsv"))?;
        let vocab = Arc::new(Vocab::from_tables(
            std::fs::File::open(dir.join("vertices.tsv"))?,
            &schema,
        )?);
        let load = |name: &str| -> Result<BTreeSet<Triple>> {
            let g = KnowledgeGraph::parse_with_vocab(
                std::fs::File::open(dir.join(format!("{name}.tsv")))?,
                vocab.clone(),
            )?;
            Ok(g.triples().clone())
        };
        GraphSplit::from_edges(
            vocab.clone(),
            load("train")?,
            load("valid")?,
            load("test")?,
            load("private")?,
        )
    }

    fn buckets(&self) -> [(&'static str, &BTreeSet<Triple>); 4] {
        [
            ("train", &self.train_edges),
            ("valid", &self.valid_edges),
            ("test", &self.test_edges),
            ("private", &self.private_edges),
        ]
    }
}

/// Which graph a query is sampled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Valid, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(SplitName::Train),
            "valid" => Ok(SplitName::Valid),
            "test" => Ok(SplitName::Test),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkQuery {
    pub query: QueryNode,
    pub qtype: QueryType,
    pub train_answers: AnswerSet,
    pub valid_answers: AnswerSet,
    pub test_answers: TaggedAnswerSet,
}

impl BenchmarkQuery {
    /// Answers graded on the public side: test answers not already visible
    /// on the validation graph.
    pub fn public_targets(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.test_answers
            .public
            .iter()
            .copied()
            .filter(|v| !self.valid_answers.contains(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub mode: TagMode,
    /// Attempts per emitted query before giving up.
    pub retries: usize,
    /// Reject queries with more answers than this on their source graph.
    pub max_answers: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mode: TagMode::Relaxed,
            retries: 100,
            max_answers: None,
        }
    }
}

#[derive(Clone, Copy)]
enum Shape {
    Anchor,
    Proj(&'static Shape),
    Inter(&'static [Shape]),
    Union(&'static [Shape]),
}

const P1: Shape = Shape::Proj(&Shape::Anchor);
const P2: Shape = Shape::Proj(&P1);
const I2: [Shape; 2] = [P1, P1];

fn template(qtype: QueryType) -> Option<Shape> {
    Some(match qtype {
        QueryType::P1 => P1,
        QueryType::P2 => P2,
        QueryType::I2 => Shape::Inter(&I2),
        QueryType::I3 => Shape::Inter(&[P1, P1, P1]),
        QueryType::Ip => Shape::Proj(&Shape::Inter(&I2)),
        QueryType::Pi => Shape::Inter(&[P2, P1]),
        QueryType::U2 => Shape::Union(&I2),
        QueryType::Up => Shape::Proj(&Shape::Union(&I2)),
        QueryType::Other => return None,
    })
}

/// `(neighbor, relation, direction)` such that projecting `neighbor` along
/// `relation` in `direction` reaches the indexed vertex.
type InEdges = Vec<Vec<(VertexId, crate::kg::RelationId, Direction)>>;

fn in_edges(g: &KnowledgeGraph) -> InEdges {
    let mut out = vec![Vec::new(); g.num_vertices()];
    for t in g.triples() {
        out[t.tail.index()].push((t.head, t.rel, Direction::Forward));
        out[t.head.index()].push((t.tail, t.rel, Direction::Backward));
    }
    out
}

struct Walker<'a, R> {
    edges: &'a InEdges,
    live: &'a [VertexId],
    rng: &'a mut R,
}

impl<R: Rng> Walker<'_, R> {
    /// Grounds `shape` so that `v` is among its answers.
    fn ground(&mut self, shape: Shape, v: VertexId) -> Option<QueryNode> {
        match shape {
            Shape::Anchor => Some(QueryNode::Anchor(v)),
            Shape::Proj(child) => {
                let &(u, rel, dir) = self.edges[v.index()].choose(self.rng)?;
                Some(QueryNode::project(rel, dir, self.ground(*child, u)?))
            }
            Shape::Inter(parts) => {
                let cs = parts
                    .iter()
                    .map(|s| self.ground(*s, v))
                    .collect::<Option<Vec<_>>>()?;
                distinct(&cs).then_some(QueryNode::Intersection(cs))
            }
            Shape::Union(parts) => {
                // One branch reaches `v`; the others start anywhere.
                let mut cs = Vec::with_capacity(parts.len());
                for (i, s) in parts.iter().enumerate() {
                    let at = if i == 0 {
                        v
                    } else {
                        *self.live.choose(self.rng)?
                    };
                    cs.push(self.ground(*s, at)?);
                }
                distinct(&cs).then_some(QueryNode::Union(cs))
            }
        }
    }
}

fn distinct(cs: &[QueryNode]) -> bool {
    cs.iter().collect::<HashSet<_>>().len() == cs.len()
}

/// Derives an independent stream seed for one (split, type) pair.
pub fn derive_seed(seed: u64, split: SplitName, qtype: QueryType) -> u64 {
    let mut z =
        seed ^ ((split as u64) << 32 | qtype.index() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples `n` distinct queries of `qtype` from the graph of `target` by
/// backward random walks from a uniformly chosen answer vertex.
pub fn sample_queries(
    split: &GraphSplit,
    target: SplitName,
    qtype: QueryType,
    n: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<Vec<BenchmarkQuery>> {
    let shape = template(qtype).ok_or(BenchError::NoTemplate(qtype))?;
    let source = match target {
        SplitName::Train => &split.train,
        SplitName::Valid => &split.valid,
        SplitName::Test => &split.test,
    };
    let edges = in_edges(source);
    let live: Vec<VertexId> = source
        .vocab()
        .vertices()
        .filter(|v| !edges[v.index()].is_empty())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut accepted = None;
        for _ in 0..cfg.retries {
            let Some(&v) = live.choose(&mut rng) else {
                break;
            };
            let mut walker = Walker {
                edges: &edges,
                live: &live,
                rng: &mut rng,
            };
            let Some(q) = walker.ground(shape, v) else {
                continue;
            };
            if classify_type(&q) != qtype || seen.contains(&q) {
                continue;
            }
            if let Some(bq) = label(split, q, qtype, target, cfg)? {
                accepted = Some(bq);
                break;
            }
        }
        let bq = accepted.ok_or(BenchError::Sparse {
            qtype,
            attempts: cfg.retries,
        })?;
        seen.insert(bq.query.clone());
        out.push(bq);
    }
    Ok(out)
}

/// Computes answers on every graph; `None` if the query fails the filter
/// for its split.
fn label(
    split: &GraphSplit,
    q: QueryNode,
    qtype: QueryType,
    target: SplitName,
    cfg: &SamplerConfig,
) -> Result<Option<BenchmarkQuery>> {
    let train_answers = evaluate(&split.train, &q, View::Full)?;
    let valid_answers = evaluate(&split.valid, &q, View::Full)?;
    let test_answers = evaluate_tagged(&split.test, &q, cfg.mode)?;
    let (source_size, keep) = match target {
        SplitName::Train => (train_answers.len(), !train_answers.is_empty()),
        SplitName::Valid => (
            valid_answers.len(),
            valid_answers.len() > train_answers.len(),
        ),
        SplitName::Test => (test_answers.len(), test_answers.len() > valid_answers.len()),
    };
    if !keep || cfg.max_answers.is_some_and(|m| source_size > m) {
        return Ok(None);
    }
    Ok(Some(BenchmarkQuery {
        query: q,
        qtype,
        train_answers,
        valid_answers,
        test_answers,
    }))
}

/// Queries per split, each list grouped by type in template order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Benchmark {
    pub train: Vec<BenchmarkQuery>,
    pub valid: Vec<BenchmarkQuery>,
    pub test: Vec<BenchmarkQuery>,
}

impl Benchmark {
    pub fn split(&self, s: SplitName) -> &[BenchmarkQuery] {
        match s {
            SplitName::Train => &self.train,
            SplitName::Valid => &self.valid,
            SplitName::Test => &self.test,
        }
    }

    fn split_mut(&mut self, s: SplitName) -> &mut Vec<BenchmarkQuery> {
        match s {
            SplitName::Train => &mut self.train,
            SplitName::Valid => &mut self.valid,
            SplitName::Test => &mut self.test,
        }
    }

    /// Samples `per_split[s]` queries of each type in `types` for every split.
    pub fn sample(
        split: &GraphSplit,
        types: &[QueryType],
        per_split: [usize; 3],
        seed: u64,
        cfg: &SamplerConfig,
    ) -> Result<Benchmark> {
        let mut b = Benchmark::default();
        for (s, &n) in SplitName::ALL.iter().zip(&per_split) {
            for &qt in types {
                let qs = sample_queries(split, *s, qt, n, derive_seed(seed, *s, qt), cfg)?;
                b.split_mut(*s).extend(qs);
            }
        }
        Ok(b)
    }

    /// Writes one `{split}-{type}.tsv` file per non-empty (split, type).
    pub fn write(&self, dir: impl AsRef<Path>, vocab: &Vocab) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for s in SplitName::ALL {
            let mut by_type: BTreeMap<QueryType, Vec<&BenchmarkQuery>> = BTreeMap::new();
            for q in self.split(s) {
                by_type.entry(q.qtype).or_default().push(q);
            }
            for (qt, qs) in by_type {
                let f = std::fs::File::create(dir.join(format!("{s}-{qt}.tsv")))?;
                write_queries(std::io::BufWriter::new(f), &qs, vocab)?;
            }
        }
        Ok(())
    }

    /// Reads every `{split}-{type}.tsv` file present in `dir`.
    pub fn read(dir: impl AsRef<Path>, vocab: &Vocab) -> Result<Benchmark> {
        let dir = dir.as_ref();
        let mut b = Benchmark::default();
        for s in SplitName::ALL {
            for qt in QueryType::TEMPLATES {
                let name = format!("{s}-{qt}.tsv");
                let path = dir.join(&name);
                if path.exists() {
                    let qs = read_queries(std::fs::File::open(path)?, vocab, &name)?;
                    b.split_mut(s).extend(qs);
                }
            }
        }
        Ok(b)
    }
}

fn join_names(set: &AnswerSet, vocab: &Vocab) -> Result<String> {
    let mut names = Vec::with_capacity(set.len());
    for &v in set {
        let name = vocab.vertex_name(v);
        if name.contains([',', '\t', '\n', '\r']) {
            return Err(BenchError::UnwritableName(name.to_string()));
        }
        names.push(name);
    }
    Ok(names.join(","))
}

/// Writes `QUERY\tTRAIN\tVALID\tTEST_PUBLIC\tTEST_PRIVATE` lines.
pub fn write_queries<W: Write>(mut w: W, qs: &[&BenchmarkQuery], vocab: &Vocab) -> Result<()> {
    for q in qs {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            q.query.to_sexpr(vocab),
            join_names(&q.train_answers, vocab)?,
            join_names(&q.valid_answers, vocab)?,
            join_names(&q.test_answers.public, vocab)?,
            join_names(&q.test_answers.private, vocab)?,
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_queries<R: Read>(r: R, vocab: &Vocab, file: &str) -> Result<Vec<BenchmarkQuery>> {
    let err = |line: usize, msg: String| BenchError::Format {
        file: file.to_string(),
        line,
        msg,
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(err(
                i + 1,
                format!("expected 5 columns, found {}", cols.len()),
            ));
        }
        let query = parse_query(cols[0], vocab).map_err(|e| err(i + 1, e.to_string()))?;
        let set = |col: &str| -> Result<AnswerSet> {
            col.split(',')
                .filter(|s| !s.is_empty())
                .map(|n| {
                    vocab
                        .vertex_id(n)
                        .ok_or_else(|| err(i + 1, format!("unknown vertex `{n}`")))
                })
                .collect()
        };
        out.push(BenchmarkQuery {
            qtype: classify_type(&query),
            query,
            train_answers: set(cols[1])?,
            valid_answers: set(cols[2])?,
            test_answers: TaggedAnswerSet {
                public: set(cols[3])?,
                private: set(cols[4])?,
            },
        });
    }
    Ok(out)
}

/// Counts for one (split, type) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatCell {
    pub queries: usize,
    pub public: usize,
    pub private: usize,
}

impl std::ops::AddAssign for StatCell {
    fn add_assign(&mut self, o: StatCell) {
        self.queries += o.queries;
        self.public += o.public;
        self.private += o.private;
    }
}

/// Per (split, type) query and answer counts. Train and validation answers
/// are counted as public; test answers by their tag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BenchmarkStats {
    pub cells: BTreeMap<(SplitName, QueryType), StatCell>,
}

pub fn stats(b: &Benchmark) -> BenchmarkStats {
    let mut cells = BTreeMap::new();
    for s in SplitName::ALL {
        for q in b.split(s) {
            let (public, private) = match s {
                SplitName::Train => (q.train_answers.len(), 0),
                SplitName::Valid => (q.valid_answers.len(), 0),
                SplitName::Test => (q.test_answers.public.len(), q.test_answers.private.len()),
            };
            *cells.entry((s, q.qtype)).or_default() += StatCell {
                queries: 1,
                public,
                private,
            };
        }
    }
    BenchmarkStats { cells }
}

impl BenchmarkStats {
    pub fn cell(&self, split: SplitName, qtype: QueryType) -> StatCell {
        self.cells.get(&(split, qtype)).copied().unwrap_or_default()
    }

    pub fn total(&self, split: SplitName) -> StatCell {
        let mut t = StatCell::default();
        for qt in QueryType::TEMPLATES {
            t += self.cell(split, qt);
        }
        t
    }

    /// One row per (split, count) with the eight types and `All` as columns.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "split\tcount")?;
        for qt in QueryType::TEMPLATES {
            write!(w, "\t{qt}")?;
        }
        writeln!(w, "\tAll")?;
        for s in SplitName::ALL {
            for (label, get) in [
                (
                    "queries",
                    (|c: StatCell| c.queries) as fn(StatCell) -> usize,
                ),
                ("public", |c| c.public),
                ("private", |c| c.private),
            ] {
                write!(w, "{s}\t{label}")?;
                for qt in QueryType::TEMPLATES {
                    write!(w, "\t{}", get(self.cell(s, qt)))?;
                }
                writeln!(w, "\t{}", get(self.total(s)))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthetic_graph, toy_graph, SynthConfig};

    #[test]
    fn split_sizes_follow_ratio() {
        assert_eq!(split_sizes(100), (80, 10, 10));
        assert_eq!(split_sizes(0), (0, 0, 0));
        for n in 1..300 {
            let (a, b, c) = split_sizes(n);
            assert_eq!(a + b + c, n);
            assert!((a as f64 - 0.8 * n as f64).abs() <= 1.0);
            assert!((b as f64 - 0.1 * n as f64).abs() <= 1.0);
            assert!((c as f64 - 0.1 * n as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn private_sampling_is_seeded() {
        let g = synthetic_graph(&SynthConfig::default());
        assert!(sample_private_edges(&g, 0, 1).unwrap().is_empty());
        let a = sample_private_edges(&g, 100, 1).unwrap();
        assert_eq!(a, sample_private_edges(&g, 100, 1).unwrap());
        assert_ne!(a, sample_private_edges(&g, 100, 2).unwrap());
        assert!(a
            .iter()
            .all(|t| g.vocab().relation_kind(t.rel) == RelationKind::Attribute));
        let total = g.attribute_triples().count();
        assert!(matches!(
            sample_private_edges(&g, total + 1, 1),
            Err(BenchError::TooManyPrivate { .. })
        ));
    }

    #[test]
    fn split_rejects_relational_private_edge() {
        let g = toy_graph();
        let bad: BTreeSet<Triple> = g
            .triples()
            .iter()
            .filter(|t| g.vocab().relation_kind(t.rel) == RelationKind::Relation)
            .take(1)
            .copied()
            .collect();
        assert!(matches!(
            split_edges(&g, &bad, 0),
            Err(BenchError::NotAttribute(_))
        ));
    }

    #[test]
    fn toy_one_hop_can_expose_toronto() {
        let g = toy_graph();
        let split = split_edges(&g, g.private_triples(), 3).unwrap();
        let cfg = SamplerConfig::default();
        let hinton = g.vocab().vertex_id("Hinton").unwrap();
        let live_in = g.vocab().relation_id("LiveIn").unwrap();
        let toronto = g.vocab().vertex_id("Toronto").unwrap();
        let want = QueryNode::forward(live_in, QueryNode::Anchor(hinton));
        let mut found = false;
        for seed in 0..200 {
            let qs = sample_queries(&split, SplitName::Test, QueryType::P1, 1, seed, &cfg).unwrap();
            if qs[0].query == want {
                assert_eq!(qs[0].test_answers.private, AnswerSet::from([toronto]));
                assert!(qs[0].test_answers.public.is_empty());
                found = true;
                break;
            }
        }
        assert!(found);
        assert!(
            sample_queries(&split, SplitName::Test, QueryType::P1, 0, 0, &cfg)
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn empty_stats_are_zero() {
        let s = stats(&Benchmark::default());
        assert_eq!(s.total(SplitName::Test), StatCell::default());
        let mut buf = Vec::new();
        s.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10);
        assert!(text
            .lines()
            .skip(1)
            .all(|l| l.split('\t').skip(2).all(|c| c == "0")));
    }
}
