//! Built-in graphs: the Hinton/Toronto toy example and a seeded synthetic
//! community graph whose attributes are predictable from its structure.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{KnowledgeGraph, RelationKind, Schema, Triple, Vocab};

/// Triples of the toy graph; `LiveIn(Hinton, Toronto)` is the private edge.
pub const TOY_TRIPLES: &str = "\
Hinton\tWorksAt\tUofT
Bengio\tWorksAt\tUdeM
UofT\tLocatedIn\tToronto
UdeM\tLocatedIn\tMontreal
Toronto\tCityOf\tCanada
Montreal\tCityOf\tCanada
Hinton\tLiveIn\tToronto
Bengio\tLiveIn\tMontreal
Hinton\tBornIn\tLondon
London\tCityOf\tUK
";

pub const TOY_SCHEMA: &str = "\
WorksAt\trel
LocatedIn\trel
CityOf\trel
LiveIn\tattr
BornIn\tattr
";

pub const TOY_PRIVATE: &str = "Hinton\tLiveIn\tToronto\n";

pub fn toy_schema() -> Schema {
    Schema::parse(TOY_SCHEMA.as_bytes()).expect("toy schema parses")
}

/// The toy graph with its private edge already marked.
pub fn toy_graph() -> KnowledgeGraph {
    let g = KnowledgeGraph::parse(TOY_TRIPLES.as_bytes(), &toy_schema()).expect("toy graph parses");
    let private = g
        .parse_triple_set(TOY_PRIVATE.as_bytes())
        .expect("toy private edge resolves");
    g.mark_private(&private)
        .expect("toy private edge is an attribute triple")
}

/// Parameters of the synthetic community graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub communities: usize,
    pub entities_per_community: usize,
    pub relation_types: usize,
    pub edges_per_entity: usize,
    /// Probability that a relational edge stays inside the community.
    pub homophily: f64,
    pub attribute_types: usize,
    pub values_per_attribute: usize,
    /// Probability that an entity carries a given attribute.
    pub attribute_density: f64,
    /// Probability that a carried attribute takes the community's value.
    pub attribute_fidelity: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Roughly 300 vertices and 2,000 triples.
    fn default() -> Self {
        SynthConfig {
            communities: 8,
            entities_per_community: 30,
            relation_types: 6,
            edges_per_entity: 7,
            homophily: 0.85,
            attribute_types: 4,
            values_per_attribute: 15,
            attribute_density: 0.5,
            attribute_fidelity: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

const RELATION_NAMES: [&str; 8] = [
    "knows",
    "worksWith",
    "follows",
    "mentors",
    "cites",
    "partnerOf",
    "advises",
    "funds",
];
const ATTRIBUTE_NAMES: [&str; 6] = ["livesIn", "speaks", "worksIn", "hobby", "bornIn", "studied"];

fn relation_name(i: usize) -> String {
    RELATION_NAMES
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("rel{i}"))
}

fn attribute_name(i: usize) -> String {
    ATTRIBUTE_NAMES
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("attr{i}"))
}

/// Builds the synthetic graph. Entities are interned first, then values.
pub fn synthetic_graph(cfg: &SynthConfig) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vocab = Vocab::new();
    let n_entities = cfg.communities * cfg.entities_per_community;
    let entities: Vec<_> = (0..n_entities)
        .map(|i| vocab.intern_vertex(&format!("e{i:03}")))
        .collect();
    let values: Vec<Vec<_>> = (0..cfg.attribute_types)
        .map(|a| {
            (0..cfg.values_per_attribute)
                .map(|j| vocab.intern_vertex(&format!("{}_{j:02}", attribute_name(a))))
                .collect()
        })
        .collect();
    let rels: Vec<_> = (0..cfg.relation_types)
        .map(|r| vocab.intern_relation(&relation_name(r), RelationKind::Relation))
        .collect();
    let attrs: Vec<_> = (0..cfg.attribute_types)
        .map(|a| vocab.intern_relation(&attribute_name(a), RelationKind::Attribute))
        .collect();

    let community = |e: usize| e / cfg.entities_per_community;
    // Each community prefers one value per attribute type.
    let preferred: Vec<Vec<usize>> = (0..cfg.communities)
        .map(|_| {
            (0..cfg.attribute_types)
                .map(|_| rng.random_range(0..cfg.values_per_attribute))
                .collect()
        })
        .collect();

    let mut triples = BTreeSet::new();
    for e in 0..n_entities {
        let c = community(e);
        for _ in 0..cfg.edges_per_entity {
            let target = if rng.random_bool(cfg.homophily) {
                c * cfg.entities_per_community + rng.random_range(0..cfg.entities_per_community)
            } else {
                rng.random_range(0..n_entities)
            };
            if target == e {
                continue;
            }
            // Relation type correlates with the community so relations carry signal.
            let r = if rng.random_bool(0.5) {
                (c + e) % cfg.relation_types
            } else {
                rng.random_range(0..cfg.relation_types)
            };
            triples.insert(Triple::new(entities[e], rels[r], entities[target]));
        }
        for a in 0..cfg.attribute_types {
            if !rng.random_bool(cfg.attribute_density) {
                continue;
            }
            let value = if rng.random_bool(cfg.attribute_fidelity) {
                preferred[c][a]
            } else {
                rng.random_range(0..cfg.values_per_attribute)
            };
            triples.insert(Triple::new(entities[e], attrs[a], values[a][value]));
        }
    }
    KnowledgeGraph::from_parts(Arc::new(vocab), triples, BTreeSet::new())
        .expect("synthetic graph is valid")
}
