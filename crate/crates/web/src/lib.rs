//! Browser demo over the core crate.
//!
//! Three operations, each returning JSON: audit a query on the toy graph,
//! show a small model's answer distribution for a query at a chosen β, and
//! sweep β on a small synthetic graph. The `*_json` functions are plain Rust
//! so they run and test natively; the `#[wasm_bindgen]` wrappers only convert
//! errors.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use pngdb::bench::{sample_private_edges, split_edges, Benchmark, BenchmarkQuery, SamplerConfig};
use pngdb::encoders::Model;
use pngdb::eval::{evaluate_model, AnswerClass, Protection};
use pngdb::kg::{Direction, KnowledgeGraph, Triple, View};
use pngdb::query::{classify_type, parse_query, QueryNode, QueryType};
use pngdb::symbolic::{evaluate, evaluate_tagged, TagMode, TaggedAnswerSet};
use pngdb::synth::{synthetic_graph, toy_graph, SynthConfig};
use pngdb::trainer::{train, TrainConfig};

#[derive(Serialize)]
struct Tagged<'a> {
    vertex: &'a str,
    tag: &'static str,
}

#[derive(Serialize)]
struct Scored<'a> {
    vertex: &'a str,
    probability: f64,
    /// `public`, `private`, or empty for non-answers.
    tag: &'static str,
}

#[derive(Serialize)]
struct TradeoffRow {
    beta: f64,
    public_mrr: f64,
    private_mrr: f64,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn tag_of(t: &TaggedAnswerSet, v: pngdb::kg::VertexId) -> &'static str {
    if t.public.contains(&v) {
        "public"
    } else if t.private.contains(&v) {
        "private"
    } else {
        ""
    }
}

/// Answers of `query` on the toy graph with their tags.
pub fn audit_json(query: &str, mode: &str) -> Result<String, String> {
    let g = toy_graph();
    let mode: TagMode = mode.parse()?;
    let q = parse_query(query, g.vocab()).map_err(err)?;
    let tagged = evaluate_tagged(&g, &q, mode).map_err(err)?;
    let mut rows: Vec<Tagged> = tagged
        .all()
        .into_iter()
        .map(|v| Tagged {
            vertex: g.vocab().vertex_name(v),
            tag: tag_of(&tagged, v),
        })
        .collect();
    rows.sort_by_key(|r| r.vertex);
    serde_json::to_string(&rows).map_err(err)
}

/// Every one-hop question the public toy graph answers, in both directions.
fn toy_training_queries(g: &KnowledgeGraph) -> Vec<BenchmarkQuery> {
    let public = g.public_view();
    let mut out = Vec::new();
    for t in public.triples() {
        for (dir, anchor) in [(Direction::Forward, t.head), (Direction::Backward, t.tail)] {
            let query = QueryNode::project(t.rel, dir, QueryNode::anchor(anchor));
            if out.iter().any(|q: &BenchmarkQuery| q.query == query) {
                continue;
            }
            let train_answers = evaluate(&public, &query, View::Full).expect("ids are valid");
            out.push(BenchmarkQuery {
                qtype: classify_type(&query),
                query,
                train_answers,
                valid_answers: Default::default(),
                test_answers: Default::default(),
            });
        }
    }
    out
}

/// Trains a tiny GQE on the toy graph at `beta` and returns the softmax
/// over every vertex for `query`, highest first.
pub fn distribution_json(
    query: &str,
    beta: f64,
    epochs: usize,
    seed: u64,
) -> Result<String, String> {
    let g = toy_graph();
    let q = parse_query(query, g.vocab()).map_err(err)?;
    let tagged = evaluate_tagged(&g, &q, TagMode::Relaxed).map_err(err)?;
    let cfg = TrainConfig {
        dim: 8,
        epochs,
        batch_size: 8,
        lr: 0.05,
        beta,
        seed,
        ..TrainConfig::default()
    };
    let private: Vec<Triple> = g.private_triples().iter().copied().collect();
    let model = Model::new(cfg.model_config(), g.num_vertices(), g.num_relations()).map_err(err)?;
    let model = train(model, &toy_training_queries(&g), &private, &cfg)
        .map_err(err)?
        .model;
    let embs = model.encode(&q).map_err(err)?;
    let all: Vec<_> = g.vocab().vertices().collect();
    let mut rows = Vec::with_capacity(all.len());
    for &v in &all {
        rows.push(Scored {
            vertex: g.vocab().vertex_name(v),
            probability: model.probability(&embs, v, &all).map_err(err)?,
            tag: tag_of(&tagged, v),
        });
    }
    rows.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    serde_json::to_string(&rows).map_err(err)
}

/// Trains GQE once per β on a ~60-vertex synthetic graph and reports test
/// MRR on public and private answers.
pub fn tradeoff_json(betas: &[f64], epochs: usize, seed: u64) -> Result<String, String> {
    let g = synthetic_graph(&SynthConfig {
        communities: 4,
        entities_per_community: 15,
        attribute_types: 2,
        values_per_attribute: 8,
        ..SynthConfig::default().with_seed(seed)
    });
    let private = sample_private_edges(&g, 20, seed).map_err(err)?;
    let split = split_edges(&g, &private, seed).map_err(err)?;
    let bench = Benchmark::sample(
        &split,
        &[QueryType::P1, QueryType::P2, QueryType::I2],
        [60, 10, 60],
        seed,
        &SamplerConfig {
            max_answers: Some(20),
            ..SamplerConfig::default()
        },
    )
    .map_err(err)?;
    let private: Vec<Triple> = private.into_iter().collect();
    let mut rows = Vec::new();
    for &beta in betas {
        let cfg = TrainConfig {
            dim: 16,
            epochs,
            batch_size: 32,
            beta,
            seed,
            ..TrainConfig::default()
        };
        let model =
            Model::new(cfg.model_config(), g.num_vertices(), g.num_relations()).map_err(err)?;
        let model = train(model, &bench.train, &private, &cfg)
            .map_err(err)?
            .model;
        let report = evaluate_model(&model, &bench.test, Protection::None).map_err(err)?;
        rows.push(TradeoffRow {
            beta,
            public_mrr: report.mrr(AnswerClass::Public),
            private_mrr: report.mrr(AnswerClass::Private),
        });
    }
    serde_json::to_string(&rows).map_err(err)
}

#[wasm_bindgen]
pub fn audit(query: &str, mode: &str) -> Result<String, JsError> {
    audit_json(query, mode).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn distribution(query: &str, beta: f64, epochs: usize, seed: u32) -> Result<String, JsError> {
    distribution_json(query, beta, epochs, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn tradeoff(betas: &[f64], epochs: usize, seed: u32) -> Result<String, JsError> {
    tradeoff_json(betas, epochs, seed.into()).map_err(|e| JsError::new(&e))
}
