//! Exact set-semantics query evaluation and privacy tagging of answers.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::kg::{Direction, KgError, KnowledgeGraph, Triple, VertexId, View};
use crate::query::QueryNode;

pub type AnswerSet = BTreeSet<VertexId>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Resolve(#[from] KgError),
    #[error("graph has {0} vertices; the brute-force oracle is limited to {ORACLE_MAX_VERTICES}")]
    TooLarge(usize),
}

/// Largest vertex table the enumeration oracle accepts.
pub const ORACLE_MAX_VERTICES: usize = 1000;

/// How a projection over privately derived inputs is tagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TagMode {
    /// An answer is public iff it is derivable without any private triple.
    #[default]
    Relaxed,
    /// Additionally, everything reached from a private input is private.
    Strict,
}

impl TagMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TagMode::Relaxed => "relaxed",
            TagMode::Strict => "strict",
        }
    }
}

impl std::str::FromStr for TagMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relaxed" => Ok(TagMode::Relaxed),
            "strict" => Ok(TagMode::Strict),
            _ => Err(format!("unknown tagging mode `{s}`")),
        }
    }
}

/// Answers split into publicly derivable and privacy-threatening members.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaggedAnswerSet {
    pub public: AnswerSet,
    pub private: AnswerSet,
}

impl TaggedAnswerSet {
    pub fn all(&self) -> AnswerSet {
        self.public.union(&self.private).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.public.len() + self.private.len()
    }

    pub fn is_empty(&self) -> bool {
        self.public.is_empty() && self.private.is_empty()
    }
}

fn project(
    g: &KnowledgeGraph,
    input: &AnswerSet,
    rel: crate::kg::RelationId,
    dir: Direction,
    view: View,
) -> AnswerSet {
    input
        .iter()
        .flat_map(|&v| g.neighbors_iter(v, rel, dir, view))
        .collect()
}

fn intersect_all(sets: impl IntoIterator<Item = AnswerSet>) -> AnswerSet {
    let mut iter = sets.into_iter();
    let first = iter.next().unwrap_or_default();
    iter.fold(first, |acc, s| acc.intersection(&s).copied().collect())
}

/// Bottom-up evaluation. Structurally identical subqueries are computed once.
pub fn evaluate(g: &KnowledgeGraph, q: &QueryNode, view: View) -> Result<AnswerSet, EvalError> {
    q.validate(g.vocab())?;
    let mut memo = HashMap::new();
    Ok(eval_node(g, q, view, &mut memo))
}

fn eval_node<'q>(
    g: &KnowledgeGraph,
    q: &'q QueryNode,
    view: View,
    memo: &mut HashMap<&'q QueryNode, AnswerSet>,
) -> AnswerSet {
    if let Some(hit) = memo.get(q) {
        return hit.clone();
    }
    let out = match q {
        QueryNode::Anchor(v) => AnswerSet::from([*v]),
        QueryNode::Projection { rel, dir, child } => {
            let input = eval_node(g, child, view, memo);
            project(g, &input, *rel, *dir, view)
        }
        QueryNode::Intersection(cs) => {
            let sets: Vec<AnswerSet> = cs.iter().map(|c| eval_node(g, c, view, memo)).collect();
            intersect_all(sets)
        }
        QueryNode::Union(cs) => cs
            .iter()
            .flat_map(|c| eval_node(g, c, view, memo))
            .collect(),
    };
    memo.insert(q, out.clone());
    out
}

/// Evaluates `q` on the full graph and tags each answer public or private.
pub fn evaluate_tagged(
    g: &KnowledgeGraph,
    q: &QueryNode,
    mode: TagMode,
) -> Result<TaggedAnswerSet, EvalError> {
    q.validate(g.vocab())?;
    let mut memo = HashMap::new();
    Ok(tag_node(g, q, mode, &mut memo))
}

fn tag_node<'q>(
    g: &KnowledgeGraph,
    q: &'q QueryNode,
    mode: TagMode,
    memo: &mut HashMap<&'q QueryNode, TaggedAnswerSet>,
) -> TaggedAnswerSet {
    if let Some(hit) = memo.get(q) {
        return hit.clone();
    }
    let out = match q {
        QueryNode::Anchor(v) => TaggedAnswerSet {
            public: AnswerSet::from([*v]),
            private: AnswerSet::new(),
        },
        QueryNode::Projection { rel, dir, child } => {
            let input = tag_node(g, child, mode, memo);
            // Reachable from a public input through a public triple.
            let mut public = project(g, &input.public, *rel, *dir, View::Public);
            let full = project(g, &input.all(), *rel, *dir, View::Full);
            if mode == TagMode::Strict {
                let from_private = project(g, &input.private, *rel, *dir, View::Full);
                public.retain(|v| !from_private.contains(v));
            }
            let private = full.difference(&public).copied().collect();
            TaggedAnswerSet { public, private }
        }
        QueryNode::Intersection(cs) => {
            let tagged: Vec<TaggedAnswerSet> =
                cs.iter().map(|c| tag_node(g, c, mode, memo)).collect();
            let full = intersect_all(tagged.iter().map(TaggedAnswerSet::all));
            let public = intersect_all(tagged.iter().map(|t| t.public.clone()));
            let private = full.difference(&public).copied().collect();
            TaggedAnswerSet { public, private }
        }
        QueryNode::Union(cs) => {
            let tagged: Vec<TaggedAnswerSet> =
                cs.iter().map(|c| tag_node(g, c, mode, memo)).collect();
            let public: AnswerSet = tagged
                .iter()
                .flat_map(|t| t.public.iter().copied())
                .collect();
            let private = tagged
                .iter()
                .flat_map(|t| t.private.iter().copied())
                .filter(|v| !public.contains(v))
                .collect();
            TaggedAnswerSet { public, private }
        }
    };
    memo.insert(q, out.clone());
    out
}

/// Independent checker: for every candidate target, searches for an
/// assignment of the existential variables satisfying every atom of `q`.
///
/// Atoms are checked by membership in a hash set of the graph's triples; the
/// adjacency indices are not used.
pub fn brute_force_oracle(g: &KnowledgeGraph, q: &QueryNode) -> Result<AnswerSet, EvalError> {
    let n = g.num_vertices();
    if n > ORACLE_MAX_VERTICES {
        return Err(EvalError::TooLarge(n));
    }
    q.validate(g.vocab())?;
    let facts: HashSet<Triple> = g.triples().iter().copied().collect();
    let domain: Vec<VertexId> = (0..n as u32).map(VertexId).collect();
    Ok(domain
        .iter()
        .copied()
        .filter(|&target| satisfiable(q, target, &facts, &domain))
        .collect())
}

fn satisfiable(
    q: &QueryNode,
    binding: VertexId,
    facts: &HashSet<Triple>,
    domain: &[VertexId],
) -> bool {
    match q {
        QueryNode::Anchor(v) => *v == binding,
        QueryNode::Projection { rel, dir, child } => domain.iter().any(|&var| {
            let atom = match dir {
                Direction::Forward => Triple::new(var, *rel, binding),
                Direction::Backward => Triple::new(binding, *rel, var),
            };
            facts.contains(&atom) && satisfiable(child, var, facts, domain)
        }),
        QueryNode::Intersection(cs) => cs.iter().all(|c| satisfiable(c, binding, facts, domain)),
        QueryNode::Union(cs) => cs.iter().any(|c| satisfiable(c, binding, facts, domain)),
    }
}
