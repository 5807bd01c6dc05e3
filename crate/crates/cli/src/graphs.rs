//! Resolving `--graph` and writing graph directories.
//!
//! A graph directory holds `vertices.tsv`, `schema.tsv`, `triples.tsv` and
//! optionally `private.tsv`. A split directory (from `split`) holds
//! `train.tsv`, `valid.tsv`, `test.tsv` and `private.tsv` instead.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use pngdb::bench::GraphSplit;
use pngdb::kg::{KnowledgeGraph, Schema, Vocab};
use pngdb::synth::{synthetic_graph, toy_graph, SynthConfig};

use crate::CliError;

pub const BUILTIN: [&str; 2] = ["toy", "synthetic"];

/// Loads `spec`: a builtin name, a graph or split directory, or a raw
/// triple file read against `schema`.
pub fn load(
    spec: &str,
    schema: Option<&Path>,
    seed: Option<u64>,
) -> Result<KnowledgeGraph, CliError> {
    match spec {
        "toy" => return Ok(toy_graph()),
        "synthetic" => {
            let seed =
                seed.ok_or_else(|| CliError::Input("--graph synthetic needs --seed".into()))?;
            return Ok(synthetic_graph(&SynthConfig::default().with_seed(seed)));
        }
        _ => {}
    }
    let path = Path::new(spec);
    if path.join("train.tsv").is_file() {
        return Ok(GraphSplit::read(path)?.test);
    }
    if path.join("triples.tsv").is_file() {
        let schema = Schema::load(path.join("schema.tsv"))?;
        let vocab = Arc::new(Vocab::from_tables(
            File::open(path.join("vertices.tsv"))?,
            &schema,
        )?);
        let g = KnowledgeGraph::parse_with_vocab(File::open(path.join("triples.tsv"))?, vocab)?;
        let private = path.join("private.tsv");
        if private.is_file() {
            let set = g.parse_triple_set(File::open(private)?)?;
            return Ok(g.mark_private(&set)?);
        }
        return Ok(g);
    }
    if path.is_file() {
        let schema = schema.ok_or_else(|| {
            CliError::Input(format!(
                "{spec} is a triple file; pass --schema to declare its relations"
            ))
        })?;
        return Ok(KnowledgeGraph::load(path, &Schema::load(schema)?)?);
    }
    Err(CliError::Input(format!(
        "--graph {spec}: not a builtin ({}), graph directory, split directory or triple file",
        BUILTIN.join(", ")
    )))
}

pub fn load_split(spec: &str) -> Result<GraphSplit, CliError> {
    if !Path::new(spec).join("train.tsv").is_file() {
        return Err(CliError::Input(format!(
            "{spec} is not a split directory (run `split` first)"
        )));
    }
    Ok(GraphSplit::read(spec)?)
}

pub fn write(g: &KnowledgeGraph, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let vocab = g.vocab();
    vocab.write_vertices(BufWriter::new(File::create(dir.join("vertices.tsv"))?))?;
    vocab
        .schema()
        .write(File::create(dir.join("schema.tsv"))?)?;
    g.write_triples(
        BufWriter::new(File::create(dir.join("triples.tsv"))?),
        g.triples(),
    )?;
    let private = dir.join("private.tsv");
    if g.private_triples().is_empty() {
        if private.exists() {
            std::fs::remove_file(private)?;
        }
    } else {
        g.write_triples(BufWriter::new(File::create(private)?), g.private_triples())?;
    }
    Ok(())
}
