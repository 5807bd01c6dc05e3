//! Existential positive queries as operator trees.
//!
//! Textual form is an S-expression:
//!
//! ```text
//! (a NAME)              anchor vertex
//! (p REL EXPR)          forward projection
//! (rp REL EXPR)         backward projection
//! (i EXPR EXPR ...)     intersection, two or more operands
//! (u EXPR EXPR ...)     union, two or more operands
//! ```
//!
//! Names that contain whitespace, parentheses or quotes are written as
//! double-quoted strings with `\"` and `\\` escapes.

use std::fmt;

use thiserror::Error;

use crate::kg::{Direction, RelationId, VertexId, Vocab};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown vertex `{name}` at byte {pos}")]
    UnknownVertex { name: String, pos: usize },
    #[error("unknown relation `{name}` at byte {pos}")]
    UnknownRelation { name: String, pos: usize },
    #[error("`{op}` at byte {pos} needs at least 2 operands, got {got}")]
    Arity { op: String, pos: usize, got: usize },
    #[error("negation at byte {pos} is not supported; queries are existential positive")]
    Negation { pos: usize },
    #[error("unknown query type `{0}`")]
    UnknownType(String),
}

pub type Result<T> = std::result::Result<T, QueryError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryNode {
    Anchor(VertexId),
    Projection {
        rel: RelationId,
        dir: Direction,
        child: Box<QueryNode>,
    },
    Intersection(Vec<QueryNode>),
    Union(Vec<QueryNode>),
}

impl QueryNode {
    pub fn anchor(v: VertexId) -> Self {
        QueryNode::Anchor(v)
    }

    pub fn project(rel: RelationId, dir: Direction, child: QueryNode) -> Self {
        QueryNode::Projection {
            rel,
            dir,
            child: Box::new(child),
        }
    }

    pub fn forward(rel: RelationId, child: QueryNode) -> Self {
        Self::project(rel, Direction::Forward, child)
    }

    pub fn backward(rel: RelationId, child: QueryNode) -> Self {
        Self::project(rel, Direction::Backward, child)
    }

    pub fn depth(&self) -> usize {
        match self {
            QueryNode::Anchor(_) => 1,
            QueryNode::Projection { child, .. } => 1 + child.depth(),
            QueryNode::Intersection(cs) | QueryNode::Union(cs) => {
                1 + cs.iter().map(QueryNode::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn contains_union(&self) -> bool {
        match self {
            QueryNode::Anchor(_) => false,
            QueryNode::Projection { child, .. } => child.contains_union(),
            QueryNode::Intersection(cs) => cs.iter().any(QueryNode::contains_union),
            QueryNode::Union(_) => true,
        }
    }

    pub fn anchors(&self) -> Vec<VertexId> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if let QueryNode::Anchor(v) = n {
                out.push(*v);
            }
        });
        out
    }

    pub fn relations(&self) -> Vec<RelationId> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if let QueryNode::Projection { rel, .. } = n {
                out.push(*rel);
            }
        });
        out
    }

    fn visit<F: FnMut(&QueryNode)>(&self, f: &mut F) {
        f(self);
        match self {
            QueryNode::Anchor(_) => {}
            QueryNode::Projection { child, .. } => child.visit(f),
            QueryNode::Intersection(cs) | QueryNode::Union(cs) => {
                cs.iter().for_each(|c| c.visit(f))
            }
        }
    }

    /// Checks arity and id ranges against `vocab`.
    pub fn validate(&self, vocab: &Vocab) -> std::result::Result<(), crate::kg::KgError> {
        match self {
            QueryNode::Anchor(v) => vocab.check_vertex(*v),
            QueryNode::Projection { rel, child, .. } => {
                vocab.check_relation(*rel)?;
                child.validate(vocab)
            }
            QueryNode::Intersection(cs) | QueryNode::Union(cs) => {
                cs.iter().try_for_each(|c| c.validate(vocab))
            }
        }
    }

    /// Renders the S-expression form with names from `vocab`.
    pub fn display<'a>(&'a self, vocab: &'a Vocab) -> QueryDisplay<'a> {
        QueryDisplay { node: self, vocab }
    }

    pub fn to_sexpr(&self, vocab: &Vocab) -> String {
        self.display(vocab).to_string()
    }
}

pub struct QueryDisplay<'a> {
    node: &'a QueryNode,
    vocab: &'a Vocab,
}

impl fmt::Display for QueryDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, self.node, self.vocab)
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &QueryNode, vocab: &Vocab) -> fmt::Result {
    match node {
        QueryNode::Anchor(v) => {
            f.write_str("(a ")?;
            write_name(f, vocab.vertex_name(*v))?;
            f.write_str(")")
        }
        QueryNode::Projection { rel, dir, child } => {
            f.write_str(match dir {
                Direction::Forward => "(p ",
                Direction::Backward => "(rp ",
            })?;
            write_name(f, vocab.relation_name(*rel))?;
            f.write_str(" ")?;
            write_node(f, child, vocab)?;
            f.write_str(")")
        }
        QueryNode::Intersection(cs) | QueryNode::Union(cs) => {
            f.write_str(if matches!(node, QueryNode::Intersection(_)) {
                "(i"
            } else {
                "(u"
            })?;
            for c in cs {
                f.write_str(" ")?;
                write_node(f, c, vocab)?;
            }
            f.write_str(")")
        }
    }
}

fn needs_quotes(name: &str) -> bool {
    name.is_empty()
        || name
            .chars()
            .any(|c| c.is_whitespace() || c == '(' || c == ')' || c == '"' || c == '\\')
}

fn write_name(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    if !needs_quotes(name) {
        return f.write_str(name);
    }
    f.write_str("\"")?;
    for c in name.chars() {
        if c == '"' || c == '\\' {
            f.write_str("\\")?;
        }
        write!(f, "{c}")?;
    }
    f.write_str("\"")
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                tokens.push((Token::Open, pos));
            }
            ')' => {
                chars.next();
                tokens.push((Token::Close, pos));
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                let mut closed = false;
                while let Some((_, c)) = chars.next() {
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => match chars.next() {
                            Some((_, e)) => s.push(e),
                            None => break,
                        },
                        c => s.push(c),
                    }
                }
                if !closed {
                    return Err(QueryError::Syntax {
                        pos,
                        msg: "unterminated string".into(),
                    });
                }
                tokens.push((Token::Atom(s), pos));
            }
            _ => {
                let mut s = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                tokens.push((Token::Atom(s), pos));
            }
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<(Token, usize)>,
    at: usize,
    end: usize,
    vocab: &'a Vocab,
}

impl Parser<'_> {
    fn pos(&self) -> usize {
        self.tokens.get(self.at).map(|t| t.1).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<(Token, usize)> {
        let t = self.tokens.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn expect_open(&mut self) -> Result<usize> {
        match self.next() {
            Some((Token::Open, pos)) => Ok(pos),
            Some((_, pos)) => Err(QueryError::Syntax {
                pos,
                msg: "expected `(`".into(),
            }),
            None => Err(QueryError::Syntax {
                pos: self.end,
                msg: "unexpected end of input".into(),
            }),
        }
    }

    fn expect_close(&mut self) -> Result<()> {
        match self.next() {
            Some((Token::Close, _)) => Ok(()),
            Some((_, pos)) => Err(QueryError::Syntax {
                pos,
                msg: "expected `)`".into(),
            }),
            None => Err(QueryError::Syntax {
                pos: self.end,
                msg: "missing `)`".into(),
            }),
        }
    }

    fn atom(&mut self, what: &str) -> Result<(String, usize)> {
        match self.next() {
            Some((Token::Atom(s), pos)) => Ok((s, pos)),
            Some((_, pos)) => Err(QueryError::Syntax {
                pos,
                msg: format!("expected {what}"),
            }),
            None => Err(QueryError::Syntax {
                pos: self.end,
                msg: format!("expected {what}"),
            }),
        }
    }

    fn expr(&mut self) -> Result<QueryNode> {
        let open = self.expect_open()?;
        let (op, op_pos) = self.atom("operator")?;
        let node = match op.as_str() {
            "a" => {
                let (name, pos) = self.atom("vertex name")?;
                let v = self
                    .vocab
                    .vertex_id(&name)
                    .ok_or(QueryError::UnknownVertex { name, pos })?;
                QueryNode::Anchor(v)
            }
            "p" | "rp" => {
                let (name, pos) = self.atom("relation name")?;
                let rel = self
                    .vocab
                    .relation_id(&name)
                    .ok_or(QueryError::UnknownRelation { name, pos })?;
                let child = self.expr()?;
                let dir = if op == "p" {
                    Direction::Forward
                } else {
                    Direction::Backward
                };
                QueryNode::project(rel, dir, child)
            }
            "i" | "u" => {
                let mut children = Vec::new();
                while matches!(self.tokens.get(self.at), Some((Token::Open, _))) {
                    children.push(self.expr()?);
                }
                if children.len() < 2 {
                    return Err(QueryError::Arity {
                        op,
                        pos: open,
                        got: children.len(),
                    });
                }
                if op == "i" {
                    QueryNode::Intersection(children)
                } else {
                    QueryNode::Union(children)
                }
            }
            "n" | "not" => return Err(QueryError::Negation { pos: op_pos }),
            other => {
                return Err(QueryError::Syntax {
                    pos: op_pos,
                    msg: format!("unknown operator `{other}`"),
                })
            }
        };
        self.expect_close()?;
        Ok(node)
    }
}

/// Parses one query, resolving names against `vocab`.
pub fn parse_query(text: &str, vocab: &Vocab) -> Result<QueryNode> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens,
        at: 0,
        end: text.len(),
        vocab,
    };
    let node = p.expr()?;
    if p.at < p.tokens.len() {
        return Err(QueryError::Syntax {
            pos: p.pos(),
            msg: "trailing input".into(),
        });
    }
    Ok(node)
}

/// A union of union-free queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnfQuery {
    pub disjuncts: Vec<QueryNode>,
}

/// Lifts every union to the top, distributing projections and
/// intersections over it.
pub fn to_dnf(q: &QueryNode) -> DnfQuery {
    DnfQuery { disjuncts: dnf(q) }
}

fn dnf(q: &QueryNode) -> Vec<QueryNode> {
    match q {
        QueryNode::Anchor(_) => vec![q.clone()],
        QueryNode::Projection { rel, dir, child } => dnf(child)
            .into_iter()
            .map(|c| QueryNode::project(*rel, *dir, c))
            .collect(),
        QueryNode::Union(cs) => cs.iter().flat_map(dnf).collect(),
        QueryNode::Intersection(cs) => {
            let mut combos: Vec<Vec<QueryNode>> = vec![Vec::new()];
            for c in cs {
                let parts = dnf(c);
                combos = combos
                    .into_iter()
                    .flat_map(|prefix| {
                        parts.iter().map(move |p| {
                            let mut v = prefix.clone();
                            v.push(p.clone());
                            v
                        })
                    })
                    .collect();
            }
            combos.into_iter().map(QueryNode::Intersection).collect()
        }
    }
}

/// The eight benchmark query shapes, plus everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryType {
    P1,
    P2,
    I2,
    I3,
    Pi,
    Ip,
    U2,
    Up,
    Other,
}

impl QueryType {
    /// The eight templates in table order.
    pub const TEMPLATES: [QueryType; 8] = [
        QueryType::P1,
        QueryType::P2,
        QueryType::I2,
        QueryType::I3,
        QueryType::Ip,
        QueryType::Pi,
        QueryType::U2,
        QueryType::Up,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryType::P1 => "1p",
            QueryType::P2 => "2p",
            QueryType::I2 => "2i",
            QueryType::I3 => "3i",
            QueryType::Pi => "pi",
            QueryType::Ip => "ip",
            QueryType::U2 => "2u",
            QueryType::Up => "up",
            QueryType::Other => "other",
        }
    }

    pub fn index(self) -> usize {
        match self {
            QueryType::P1 => 0,
            QueryType::P2 => 1,
            QueryType::I2 => 2,
            QueryType::I3 => 3,
            QueryType::Pi => 4,
            QueryType::Ip => 5,
            QueryType::U2 => 6,
            QueryType::Up => 7,
            QueryType::Other => 8,
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for QueryType {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "1p" => QueryType::P1,
            "2p" => QueryType::P2,
            "2i" => QueryType::I2,
            "3i" => QueryType::I3,
            "pi" => QueryType::Pi,
            "ip" => QueryType::Ip,
            "2u" => QueryType::U2,
            "up" => QueryType::Up,
            "other" => QueryType::Other,
            _ => return Err(QueryError::UnknownType(s.to_string())),
        })
    }
}

/// Length of a pure projection chain ending in an anchor, if `q` is one.
fn chain_len(q: &QueryNode) -> Option<usize> {
    match q {
        QueryNode::Anchor(_) => Some(0),
        QueryNode::Projection { child, .. } => chain_len(child).map(|n| n + 1),
        _ => None,
    }
}

/// Classifies `q` by tree shape. Operand order does not matter.
pub fn classify_type(q: &QueryNode) -> QueryType {
    let is_1p = |c: &QueryNode| chain_len(c) == Some(1);
    match q {
        QueryNode::Projection { child, .. } => match chain_len(q) {
            Some(1) => QueryType::P1,
            Some(2) => QueryType::P2,
            Some(_) => QueryType::Other,
            None => match child.as_ref() {
                QueryNode::Intersection(cs) if cs.len() == 2 && cs.iter().all(is_1p) => {
                    QueryType::Ip
                }
                QueryNode::Union(cs) if cs.len() == 2 && cs.iter().all(is_1p) => QueryType::Up,
                _ => QueryType::Other,
            },
        },
        QueryNode::Intersection(cs) => {
            let lens: Option<Vec<usize>> = cs.iter().map(chain_len).collect();
            match lens.as_deref() {
                Some([1, 1]) => QueryType::I2,
                Some([1, 1, 1]) => QueryType::I3,
                Some([1, 2]) | Some([2, 1]) => QueryType::Pi,
                _ => QueryType::Other,
            }
        }
        QueryNode::Union(cs) if cs.len() == 2 && cs.iter().all(is_1p) => QueryType::U2,
        _ => QueryType::Other,
    }
}
