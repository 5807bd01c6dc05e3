//! In-memory knowledge graph with a per-triple private/public split.
//!
//! Vertices (entities and attribute values alike) and relations are interned
//! into dense ids. A [`Vocab`] is shared between every graph derived from the
//! same source so ids stay comparable across splits and views.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("relation `{0}` is not declared in the schema")]
    UndeclaredRelation(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertexName(String),
    #[error("unknown relation `{0}`")]
    UnknownRelationName(String),
    #[error("vertex id {0} out of range")]
    UnknownVertex(u32),
    #[error("relation id {0} out of range")]
    UnknownRelation(u32),
    #[error("triple {0} is not in the graph")]
    MissingTriple(String),
    #[error("triple {0} uses an entity relation; only attribute triples can be private")]
    NotAttribute(String),
    #[error("vertex `{0}` is interned twice")]
    DuplicateVertex(String),
}

pub type Result<T> = std::result::Result<T, KgError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl VertexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationKind {
    /// `r(u, v)` between two entities.
    Relation,
    /// `a(u, x)` from an entity to an attribute value.
    Attribute,
}

impl RelationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Relation => "rel",
            RelationKind::Attribute => "attr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rel" => Some(RelationKind::Relation),
            "attr" => Some(RelationKind::Attribute),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

/// Which edges a traversal may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum View {
    Full,
    Public,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: VertexId,
    pub rel: RelationId,
    pub tail: VertexId,
}

impl Triple {
    pub fn new(head: VertexId, rel: RelationId, tail: VertexId) -> Self {
        Triple { head, rel, tail }
    }
}

/// Relation declarations, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schema {
    entries: Vec<(String, RelationKind)>,
    index: HashMap<String, usize>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a relation. Redeclaring a name overwrites its kind.
    pub fn declare(&mut self, name: &str, kind: RelationKind) {
        match self.index.get(name) {
            Some(&i) => self.entries[i].1 = kind,
            None => {
                self.index.insert(name.to_string(), self.entries.len());
                self.entries.push((name.to_string(), kind));
            }
        }
    }

    pub fn kind(&self, name: &str) -> Option<RelationKind> {
        self.index.get(name).map(|&i| self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, RelationKind)> {
        self.entries.iter().map(|(n, k)| (n.as_str(), *k))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `relation\t{rel|attr}` lines; `#` comments and blank lines are skipped.
    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut schema = Schema::new();
        for (lineno, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if skip_line(&line) {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(name), Some(kind), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(KgError::Malformed {
                    line: lineno + 1,
                    msg: "expected `relation<TAB>{rel|attr}`".into(),
                });
            };
            let kind = RelationKind::parse(kind.trim()).ok_or_else(|| KgError::Malformed {
                line: lineno + 1,
                msg: format!("unknown relation kind `{kind}`"),
            })?;
            schema.declare(name, kind);
        }
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(std::fs::File::open(path)?)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (name, kind) in self.iter() {
            writeln!(w, "{name}\t{}", kind.as_str())?;
        }
        Ok(())
    }
}

fn skip_line(line: &str) -> bool {
    line.trim().is_empty() || line.starts_with('#')
}

/// Interned vertex and relation tables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    vertices: Vec<String>,
    vertex_index: HashMap<String, VertexId>,
    relations: Vec<(String, RelationKind)>,
    relation_index: HashMap<String, RelationId>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern_vertex(&mut self, name: &str) -> VertexId {
        if let Some(&id) = self.vertex_index.get(name) {
            return id;
        }
        let id = VertexId(self.vertices.len() as u32);
        self.vertices.push(name.to_string());
        self.vertex_index.insert(name.to_string(), id);
        id
    }

    /// Interns a relation; the kind of an existing relation is left as it was.
    pub fn intern_relation(&mut self, name: &str, kind: RelationKind) -> RelationId {
        if let Some(&id) = self.relation_index.get(name) {
            return id;
        }
        let id = RelationId(self.relations.len() as u32);
        self.relations.push((name.to_string(), kind));
        self.relation_index.insert(name.to_string(), id);
        id
    }

    pub fn vertex_id(&self, name: &str) -> Option<VertexId> {
        self.vertex_index.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    pub fn vertex_name(&self, v: VertexId) -> &str {
        &self.vertices[v.index()]
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        &self.relations[r.index()].0
    }

    pub fn relation_kind(&self, r: RelationId) -> RelationKind {
        self.relations[r.index()].1
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertices.len() as u32).map(VertexId)
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationId> {
        (0..self.relations.len() as u32).map(RelationId)
    }

    pub fn check_vertex(&self, v: VertexId) -> Result<()> {
        if v.index() < self.vertices.len() {
            Ok(())
        } else {
            Err(KgError::UnknownVertex(v.0))
        }
    }

    pub fn check_relation(&self, r: RelationId) -> Result<()> {
        if r.index() < self.relations.len() {
            Ok(())
        } else {
            Err(KgError::UnknownRelation(r.0))
        }
    }

    /// The relation table as a schema, in id order.
    pub fn schema(&self) -> Schema {
        let mut s = Schema::new();
        for (name, kind) in &self.relations {
            s.declare(name, *kind);
        }
        s
    }

    /// Writes `id\tname` lines in id order.
    pub fn write_vertices<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, name) in self.vertices.iter().enumerate() {
            writeln!(w, "{i}\t{name}")?;
        }
        Ok(())
    }

    /// Rebuilds a vocabulary from a vertex table (`id\tname`, ids contiguous
    /// from 0) and a schema whose order fixes the relation ids.
    pub fn from_tables<R: Read>(vertices: R, schema: &Schema) -> Result<Self> {
        let mut vocab = Vocab::new();
        for (lineno, line) in BufReader::new(vertices).lines().enumerate() {
            let line = line?;
            if skip_line(&line) {
                continue;
            }
            let malformed = |msg: &str| KgError::Malformed {
                line: lineno + 1,
                msg: msg.into(),
            };
            let (id, name) = line
                .split_once('\t')
                .ok_or_else(|| malformed("expected `id<TAB>name`"))?;
            let id: usize = id
                .parse()
                .map_err(|_| malformed("vertex id is not an integer"))?;
            if id != vocab.num_vertices() {
                return Err(malformed("vertex ids must be contiguous from 0"));
            }
            if vocab.vertex_id(name).is_some() {
                return Err(KgError::DuplicateVertex(name.to_string()));
            }
            vocab.intern_vertex(name);
        }
        for (name, kind) in schema.iter() {
            vocab.intern_relation(name, kind);
        }
        Ok(vocab)
    }

    pub fn format_triple(&self, t: &Triple) -> String {
        format!(
            "({}, {}, {})",
            self.vertex_name(t.head),
            self.relation_name(t.rel),
            self.vertex_name(t.tail)
        )
    }
}

type Adjacency = HashMap<(VertexId, RelationId), Vec<(VertexId, bool)>>;

/// An immutable knowledge graph.
///
/// `forward` maps `(head, rel)` to sorted `(tail, is_private)` pairs and
/// `backward` maps `(tail, rel)` to sorted `(head, is_private)` pairs.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    vocab: Arc<Vocab>,
    triples: BTreeSet<Triple>,
    private: BTreeSet<Triple>,
    forward: Adjacency,
    backward: Adjacency,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab && self.triples == other.triples && self.private == other.private
    }
}

impl KnowledgeGraph {
    /// Builds a graph over `vocab`. Every id must be in range and every
    /// private triple must be an attribute triple contained in `triples`.
    pub fn from_parts(
        vocab: Arc<Vocab>,
        triples: BTreeSet<Triple>,
        private: BTreeSet<Triple>,
    ) -> Result<Self> {
        for t in &triples {
            vocab.check_vertex(t.head)?;
            vocab.check_vertex(t.tail)?;
            vocab.check_relation(t.rel)?;
        }
        for t in &private {
            if !triples.contains(t) {
                return Err(KgError::MissingTriple(vocab.format_triple(t)));
            }
            if vocab.relation_kind(t.rel) != RelationKind::Attribute {
                return Err(KgError::NotAttribute(vocab.format_triple(t)));
            }
        }
        let mut forward: Adjacency = HashMap::new();
        let mut backward: Adjacency = HashMap::new();
        // BTreeSet iteration is sorted by (head, rel, tail), so forward lists
        // come out sorted; backward lists are sorted afterwards.
        for t in &triples {
            let p = private.contains(t);
            forward
                .entry((t.head, t.rel))
                .or_default()
                .push((t.tail, p));
            backward
                .entry((t.tail, t.rel))
                .or_default()
                .push((t.head, p));
        }
        for list in backward.values_mut() {
            list.sort_unstable();
        }
        Ok(KnowledgeGraph {
            vocab,
            triples,
            private,
            forward,
            backward,
        })
    }

    pub fn empty(vocab: Arc<Vocab>) -> Self {
        Self::from_parts(vocab, BTreeSet::new(), BTreeSet::new()).expect("empty graph is valid")
    }

    /// Parses `head\trelation\ttail` lines, interning names in order of first
    /// appearance. Duplicate lines collapse to one triple.
    pub fn parse<R: Read>(reader: R, schema: &Schema) -> Result<Self> {
        let mut vocab = Vocab::new();
        let raw = parse_triple_lines(reader)?;
        let mut triples = BTreeSet::new();
        for (_, h, r, t) in raw {
            let kind = schema
                .kind(&r)
                .ok_or_else(|| KgError::UndeclaredRelation(r.clone()))?;
            let head = vocab.intern_vertex(&h);
            let rel = vocab.intern_relation(&r, kind);
            let tail = vocab.intern_vertex(&t);
            triples.insert(Triple::new(head, rel, tail));
        }
        Self::from_parts(Arc::new(vocab), triples, BTreeSet::new())
    }

    pub fn load(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        Self::parse(std::fs::File::open(path)?, schema)
    }

    /// Parses a triple file against an existing vocabulary. Unknown names are
    /// an error; nothing is interned.
    pub fn parse_with_vocab<R: Read>(reader: R, vocab: Arc<Vocab>) -> Result<Self> {
        let triples = parse_triples_against(reader, &vocab)?;
        Self::from_parts(vocab, triples, BTreeSet::new())
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn num_vertices(&self) -> usize {
        self.vocab.num_vertices()
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.num_relations()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn private_triples(&self) -> &BTreeSet<Triple> {
        &self.private
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    pub fn is_private(&self, t: &Triple) -> bool {
        self.private.contains(t)
    }

    pub fn attribute_triples(&self) -> impl Iterator<Item = &Triple> + '_ {
        self.triples
            .iter()
            .filter(|t| self.vocab.relation_kind(t.rel) == RelationKind::Attribute)
    }

    /// Returns a graph over the same vocabulary with exactly `triples` private.
    pub fn mark_private<'a, I>(&self, triples: I) -> Result<KnowledgeGraph>
    where
        I: IntoIterator<Item = &'a Triple>,
    {
        let private: BTreeSet<Triple> = triples.into_iter().copied().collect();
        Self::from_parts(self.vocab.clone(), self.triples.clone(), private)
    }

    /// The graph with every private triple removed. The vertex table is kept.
    pub fn public_view(&self) -> KnowledgeGraph {
        let triples = self.triples.difference(&self.private).copied().collect();
        Self::from_parts(self.vocab.clone(), triples, BTreeSet::new())
            .expect("subset of a valid graph is valid")
    }

    /// Neighbors of `v` along `r`, sorted by id.
    pub fn neighbors(
        &self,
        v: VertexId,
        r: RelationId,
        dir: Direction,
        view: View,
    ) -> Result<Vec<VertexId>> {
        self.vocab.check_vertex(v)?;
        self.vocab.check_relation(r)?;
        Ok(self.neighbors_iter(v, r, dir, view).collect())
    }

    /// Unchecked neighbor iteration over the adjacency index.
    pub fn neighbors_iter(
        &self,
        v: VertexId,
        r: RelationId,
        dir: Direction,
        view: View,
    ) -> impl Iterator<Item = VertexId> + '_ {
        self.edges_iter(v, r, dir)
            .filter(move |&(_, private)| view == View::Full || !private)
            .map(|(u, _)| u)
    }

    /// Neighbors paired with the privacy flag of the connecting triple.
    pub fn edges_iter(
        &self,
        v: VertexId,
        r: RelationId,
        dir: Direction,
    ) -> impl Iterator<Item = (VertexId, bool)> + '_ {
        let index = match dir {
            Direction::Forward => &self.forward,
            Direction::Backward => &self.backward,
        };
        index
            .get(&(v, r))
            .map(|l| l.as_slice())
            .unwrap_or(&[])
            .iter()
            .copied()
    }

    /// All `(neighbor, rel, dir, private)` edges incident to `v`.
    pub fn incident(&self, v: VertexId) -> Vec<(VertexId, RelationId, Direction, bool)> {
        let mut out = Vec::new();
        for r in self.vocab.relations() {
            for (u, p) in self.edges_iter(v, r, Direction::Forward) {
                out.push((u, r, Direction::Forward, p));
            }
            for (u, p) in self.edges_iter(v, r, Direction::Backward) {
                out.push((u, r, Direction::Backward, p));
            }
        }
        out
    }

    /// Reconstructs the triple set from the forward index.
    pub fn triples_from_forward_index(&self) -> BTreeSet<Triple> {
        self.forward
            .iter()
            .flat_map(|(&(h, r), tails)| tails.iter().map(move |&(t, _)| Triple::new(h, r, t)))
            .collect()
    }

    /// Reconstructs the triple set from the backward index.
    pub fn triples_from_backward_index(&self) -> BTreeSet<Triple> {
        self.backward
            .iter()
            .flat_map(|(&(t, r), heads)| heads.iter().map(move |&(h, _)| Triple::new(h, r, t)))
            .collect()
    }

    /// Parses a TSV triple file (e.g. a private-edge list) against this graph's vocabulary.
    pub fn parse_triple_set<R: Read>(&self, reader: R) -> Result<BTreeSet<Triple>> {
        parse_triples_against(reader, &self.vocab)
    }

    /// Writes triples in sorted id order as `head\trelation\ttail` lines.
    pub fn write_triples<'a, W, I>(&self, mut w: W, triples: I) -> Result<()>
    where
        W: Write,
        I: IntoIterator<Item = &'a Triple>,
    {
        for t in triples {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.vocab.vertex_name(t.head),
                self.vocab.relation_name(t.rel),
                self.vocab.vertex_name(t.tail)
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "KnowledgeGraph({} vertices, {} relations, {} triples, {} private)",
            self.num_vertices(),
            self.num_relations(),
            self.triples.len(),
            self.private.len()
        )
    }
}

fn parse_triple_lines<R: Read>(reader: R) -> Result<Vec<(usize, String, String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if skip_line(&line) {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(h), Some(r), Some(t), None)
                if !h.is_empty() && !r.is_empty() && !t.is_empty() =>
            {
                out.push((lineno + 1, h.to_string(), r.to_string(), t.to_string()));
            }
            _ => {
                return Err(KgError::Malformed {
                    line: lineno + 1,
                    msg: "expected `head<TAB>relation<TAB>tail`".into(),
                })
            }
        }
    }
    Ok(out)
}

fn parse_triples_against<R: Read>(reader: R, vocab: &Vocab) -> Result<BTreeSet<Triple>> {
    let mut set = BTreeSet::new();
    for (_, h, r, t) in parse_triple_lines(reader)? {
        let head = vocab.vertex_id(&h).ok_or(KgError::UnknownVertexName(h))?;
        let rel = vocab
            .relation_id(&r)
            .ok_or(KgError::UnknownRelationName(r))?;
        let tail = vocab.vertex_id(&t).ok_or(KgError::UnknownVertexName(t))?;
        set.insert(Triple::new(head, rel, tail));
    }
    Ok(set)
}
