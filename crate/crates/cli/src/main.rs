//! `pngdb` command line: ingest, privatize, split, sample-queries, train,
//! eval, audit and report.
//!
//! Every flag can also come from a `PNGDB_<FLAG>` environment variable
//! (for example `PNGDB_SEED=7`); an explicit flag wins.

mod graphs;
mod manifest;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use pngdb::bench::{
    sample_private_edges, split_edges, stats, BenchError, Benchmark, SamplerConfig,
};
use pngdb::encoders::{EncoderError, Model, ModelKind};
use pngdb::eval::{
    calibrate_noise, evaluate_model, AnswerClass, EvalError, EvalReport, Protection,
};
use pngdb::kg::{KgError, VertexId};
use pngdb::query::{parse_query, QueryError, QueryType};
use pngdb::symbolic::{evaluate_tagged, TagMode};
use pngdb::trainer::{train_with, write_trace, NoiseConfig, RunConfig, TrainError};

use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Symbolic(#[from] pngdb::symbolic::EvalError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Parser)]
#[command(
    name = "pngdb",
    version,
    about = "Knowledge graph pipeline with private attributes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a graph (builtin, directory or triple file) into a graph directory.
    Ingest(IngestArgs),
    /// Mark a seeded sample of attribute triples private.
    Privatize(PrivatizeArgs),
    /// Hold out private edges and split the rest 8:1:1.
    Split(SplitArgs),
    /// Sample benchmark queries from a split directory.
    SampleQueries(SampleArgs),
    /// Train an encoder on the training queries.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test queries.
    Eval(EvalArgs),
    /// Answer one query symbolically and tag each answer.
    Audit(AuditArgs),
    /// Tabulate evaluation runs side by side.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
struct GraphArg {
    /// `toy`, `synthetic`, a graph or split directory, or a triple file.
    #[arg(long, env = "PNGDB_GRAPH")]
    graph: String,
    /// Relation schema for a raw triple file.
    #[arg(long, env = "PNGDB_SCHEMA")]
    schema: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    graph: GraphArg,
    #[arg(long, env = "PNGDB_SEED")]
    seed: u64,
    #[serde(skip)]
    #[arg(long, env = "PNGDB_OUT")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct PrivatizeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    graph: GraphArg,
    #[arg(long, env = "PNGDB_SEED")]
    seed: u64,
    #[arg(long, env = "PNGDB_N_PRIVATE")]
    n_private: usize,
    #[serde(skip)]
    #[arg(long, env = "PNGDB_OUT")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SplitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    graph: GraphArg,
    #[arg(long, env = "PNGDB_SEED")]
    seed: u64,
    #[serde(skip)]
    #[arg(long, env = "PNGDB_OUT")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SampleArgs {
    /// Split directory.
    #[arg(long, env = "PNGDB_GRAPH")]
    graph: String,
    #[arg(long, env = "PNGDB_SEED")]
    seed: u64,
    /// Comma-separated query types, or `all`.
    #[arg(long, env = "PNGDB_QTYPE", default_value = "all")]
    qtype: String,
    /// Queries per type for train, valid and test.
    #[arg(long, env = "PNGDB_COUNTS", value_delimiter = ',', default_values_t = [200, 50, 200])]
    counts: Vec<usize>,
    /// Reject queries with more answers than this; 0 disables the cap.
    #[arg(long, env = "PNGDB_MAX_ANSWERS", default_value_t = 50)]
    max_answers: usize,
    #[arg(long, env = "PNGDB_MODE", value_enum, default_value_t = Mode::Relaxed)]
    mode: Mode,
    #[serde(skip)]
    #[arg(long, env = "PNGDB_OUT")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Split directory.
    #[arg(long, env = "PNGDB_GRAPH")]
    graph: String,
    /// Benchmark directory from `sample-queries`.
    #[arg(long, env = "PNGDB_QUERIES")]
    queries: String,
    #[arg(long, env = "PNGDB_SEED")]
    seed: u64,
    /// `key = value` run config; flags override it.
    #[arg(long, env = "PNGDB_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "PNGDB_MODEL", value_enum)]
    model: Option<Encoder>,
    #[arg(long, env = "PNGDB_BETA")]
    beta: Option<f64>,
    #[arg(long, env = "PNGDB_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "PNGDB_DIM")]
    dim: Option<usize>,
    #[arg(long, env = "PNGDB_LR")]
    lr: Option<f64>,
    #[serde(skip)]
    #[arg(long, env = "PNGDB_OUT")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    /// Benchmark directory from `sample-queries`.
    #[arg(long, env = "PNGDB_QUERIES")]
    queries: String,
    /// Split directory the benchmark was sampled from.
    #[arg(long, env = "PNGDB_GRAPH")]
    graph: String,
    /// Training output directory (or its `model/` subdirectory).
    #[arg(long, env = "PNGDB_CHECKPOINT")]
    checkpoint: String,
    #[arg(long, env = "PNGDB_SEED")]
    seed: u64,
    #[arg(long, env = "PNGDB_PROTECTION", value_enum, default_value_t = ProtectionArg::None)]
    protection: ProtectionArg,
    /// Noise scale; required with `--protection noise` unless `--match-mrr` is given.
    #[arg(long, env = "PNGDB_SIGMA")]
    sigma: Option<f64>,
    /// Calibrate sigma until public MRR is within 5% of this value.
    #[arg(long, env = "PNGDB_MATCH_MRR", conflicts_with = "sigma")]
    match_mrr: Option<f64>,
    #[serde(skip)]
    #[arg(long, env = "PNGDB_OUT")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct AuditArgs {
    #[command(flatten)]
    #[serde(flatten)]
    graph: GraphArg,
    /// S-expression, e.g. `(p LiveIn (a Hinton))`.
    #[arg(long)]
    query: String,
    #[arg(long, env = "PNGDB_MODE", value_enum, default_value_t = Mode::Relaxed)]
    mode: Mode,
    /// Needed only for `--graph synthetic`.
    #[arg(long, env = "PNGDB_SEED")]
    seed: Option<u64>,
    /// Also write `audit.tsv` and a manifest here.
    #[serde(skip)]
    #[arg(long, env = "PNGDB_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    /// `label=eval_dir`, repeatable; the first run is the baseline.
    #[arg(long = "run", required = true)]
    runs: Vec<String>,
    #[serde(skip)]
    #[arg(long, env = "PNGDB_OUT")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Relaxed,
    Strict,
}

impl From<Mode> for TagMode {
    fn from(m: Mode) -> TagMode {
        match m {
            Mode::Relaxed => TagMode::Relaxed,
            Mode::Strict => TagMode::Strict,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Encoder {
    Gqe,
    Q2b,
    Q2p,
}

impl From<Encoder> for ModelKind {
    fn from(e: Encoder) -> ModelKind {
        match e {
            Encoder::Gqe => ModelKind::Gqe,
            Encoder::Q2b => ModelKind::Q2b,
            Encoder::Q2p => ModelKind::Q2p,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ProtectionArg {
    None,
    Noise,
}

fn snapshot<T: Serialize>(args: &T) -> Result<serde_json::Value, CliError> {
    Ok(serde_json::to_value(args)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn ingest(a: &IngestArgs) -> Result<(), CliError> {
    let g = graphs::load(&a.graph.graph, a.graph.schema.as_deref(), Some(a.seed))?;
    graphs::write(&g, &a.out)?;
    let mut m = RunManifest::new("ingest", snapshot(a)?)
        .seed("seed", a.seed)
        .input(&a.graph.graph)?;
    if let Some(s) = &a.graph.schema {
        m = m.input(&s.to_string_lossy())?;
    }
    eprintln!("{g}");
    m.finish(&a.out)
}

fn privatize(a: &PrivatizeArgs) -> Result<(), CliError> {
    let g = graphs::load(&a.graph.graph, a.graph.schema.as_deref(), Some(a.seed))?;
    let private = sample_private_edges(&g, a.n_private, a.seed)?;
    let g = g.mark_private(&private)?;
    graphs::write(&g, &a.out)?;
    eprintln!("{g}");
    RunManifest::new("privatize", snapshot(a)?)
        .seed("seed", a.seed)
        .input(&a.graph.graph)?
        .finish(&a.out)
}

fn split(a: &SplitArgs) -> Result<(), CliError> {
    let g = graphs::load(&a.graph.graph, a.graph.schema.as_deref(), Some(a.seed))?;
    let s = split_edges(&g, g.private_triples(), a.seed)?;
    s.write(&a.out)?;
    eprintln!(
        "train {} / valid {} / test {} / private {}",
        s.train_edges.len(),
        s.valid_edges.len(),
        s.test_edges.len(),
        s.private_edges.len()
    );
    RunManifest::new("split", snapshot(a)?)
        .seed("seed", a.seed)
        .input(&a.graph.graph)?
        .finish(&a.out)
}

fn parse_types(spec: &str) -> Result<Vec<QueryType>, CliError> {
    if spec == "all" {
        return Ok(QueryType::TEMPLATES.to_vec());
    }
    spec.split(',')
        .map(|t| Ok(t.trim().parse::<QueryType>()?))
        .collect()
}

fn sample(a: &SampleArgs) -> Result<(), CliError> {
    let split = graphs::load_split(&a.graph)?;
    let types = parse_types(&a.qtype)?;
    let cfg = SamplerConfig {
        mode: a.mode.into(),
        max_answers: (a.max_answers > 0).then_some(a.max_answers),
        ..SamplerConfig::default()
    };
    let counts = [a.counts[0], a.counts[1], a.counts[2]];
    let b = Benchmark::sample(&split, &types, counts, a.seed, &cfg)?;
    b.write(&a.out, split.vocab())?;
    stats(&b).write_tsv(create(&a.out.join("stats.tsv"))?)?;
    RunManifest::new("sample-queries", snapshot(a)?)
        .seed("seed", a.seed)
        .input(&a.graph)?
        .finish(&a.out)
}

fn train_cmd(a: &TrainArgs) -> Result<(), CliError> {
    let split = graphs::load_split(&a.graph)?;
    let bench = Benchmark::read(&a.queries, split.vocab())?;
    if bench.train.is_empty() {
        return Err(CliError::Input(format!(
            "{} has no training queries",
            a.queries
        )));
    }
    let mut run = match &a.config {
        Some(p) => RunConfig::parse(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    let t = &mut run.train;
    t.seed = a.seed;
    if let Some(m) = a.model {
        t.model = m.into();
    }
    if let Some(b) = a.beta {
        t.beta = b;
    }
    if let Some(e) = a.epochs {
        t.epochs = e;
    }
    if let Some(d) = a.dim {
        t.dim = d;
    }
    if let Some(lr) = a.lr {
        t.lr = lr;
    }
    t.validate()?;
    let cfg = run.train.clone();
    let model = Model::new(
        cfg.model_config(),
        split.vocab().num_vertices(),
        split.vocab().num_relations(),
    )?;
    let private: Vec<_> = split.private_edges.iter().copied().collect();
    let outcome = train_with(model, &bench.train, &private, &cfg, |e, _| {
        eprintln!(
            "epoch {:>3}  L_u {:.4}  L_p {:.4}  L {:.4}",
            e.epoch, e.public, e.privacy, e.total
        );
        Ok(())
    })?;
    fs::create_dir_all(&a.out)?;
    outcome.model.save(a.out.join("model"))?;
    write_trace(create(&a.out.join("trace.csv"))?, &outcome.trace)?;
    run.write(create(&a.out.join("run.conf"))?)?;
    let mut m = RunManifest::new("train", snapshot(a)?)
        .seed("seed", a.seed)
        .input(&a.graph)?
        .input(&a.queries)?;
    if let Some(p) = &a.config {
        m = m.input(&p.to_string_lossy())?;
    }
    m.finish(&a.out)
}

fn write_ranks(path: &Path, r: &EvalReport) -> Result<(), CliError> {
    let mut w = create(path)?;
    writeln!(w, "qtype\tclass\trank")?;
    for ((qt, class), ranks) in &r.ranks {
        for rank in ranks {
            writeln!(w, "{qt}\t{class}\t{rank}")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_ranks(path: &Path) -> Result<EvalReport, CliError> {
    let bad = |line: usize| {
        CliError::Input(format!(
            "{} line {line}: malformed rank row",
            path.display()
        ))
    };
    let mut r = EvalReport::default();
    for (i, line) in BufReader::new(File::open(path)?)
        .lines()
        .enumerate()
        .skip(1)
    {
        let line = line?;
        let cols: Vec<&str> = line.split('\t').collect();
        let [qt, class, rank] = cols[..] else {
            return Err(bad(i + 1));
        };
        let class = match class {
            "public" => AnswerClass::Public,
            "private" => AnswerClass::Private,
            _ => return Err(bad(i + 1)),
        };
        let rank = rank.parse().map_err(|_| bad(i + 1))?;
        r.ranks.entry((qt.parse()?, class)).or_default().push(rank);
    }
    Ok(r)
}

#[derive(Serialize)]
struct EvalSummary {
    sigma: f64,
    public_mrr: f64,
    private_mrr: f64,
}

fn eval_cmd(a: &EvalArgs) -> Result<(), CliError> {
    let split = graphs::load_split(&a.graph)?;
    let bench = Benchmark::read(&a.queries, split.vocab())?;
    let dir = Path::new(&a.checkpoint);
    let model = Model::load(if dir.join("model").is_dir() {
        dir.join("model")
    } else {
        dir.to_path_buf()
    })?;
    let (sigma, report) = match (a.protection, a.sigma, a.match_mrr) {
        (ProtectionArg::None, _, _) => {
            (0.0, evaluate_model(&model, &bench.test, Protection::None)?)
        }
        (ProtectionArg::Noise, Some(sigma), _) => {
            let noise = NoiseConfig {
                sigma,
                seed: a.seed,
            };
            (
                sigma,
                evaluate_model(&model, &bench.test, Protection::Noise(noise))?,
            )
        }
        (ProtectionArg::Noise, None, Some(target)) => {
            let c = calibrate_noise(&model, &bench.test, target, a.seed, 0.05)?;
            (c.sigma, c.report)
        }
        (ProtectionArg::Noise, None, None) => unreachable!("checked in main"),
    };
    fs::create_dir_all(&a.out)?;
    write_ranks(&a.out.join("ranks.tsv"), &report)?;
    report.write_per_type_tsv(create(&a.out.join("per_type.tsv"))?, None)?;
    let summary = EvalSummary {
        sigma,
        public_mrr: report.mrr(AnswerClass::Public),
        private_mrr: report.mrr(AnswerClass::Private),
    };
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    print!("{text}");
    fs::write(a.out.join("summary.json"), text)?;
    RunManifest::new("eval", snapshot(a)?)
        .seed("seed", a.seed)
        .input(&a.graph)?
        .input(&a.queries)?
        .input(&a.checkpoint)?
        .finish(&a.out)
}

fn audit(a: &AuditArgs) -> Result<(), CliError> {
    let g = graphs::load(&a.graph.graph, a.graph.schema.as_deref(), a.seed)?;
    let q = parse_query(&a.query, g.vocab())?;
    let tagged = evaluate_tagged(&g, &q, a.mode.into())?;
    let mut rows: Vec<(VertexId, &str)> = tagged
        .public
        .iter()
        .map(|&v| (v, "public"))
        .chain(tagged.private.iter().map(|&v| (v, "private")))
        .collect();
    rows.sort();
    let mut text = String::new();
    for (v, class) in rows {
        text.push_str(&format!("{}\t{class}\n", g.vocab().vertex_name(v)));
    }
    print!("{text}");
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("audit.tsv"), &text)?;
        let mut m = RunManifest::new("audit", snapshot(a)?).input(&a.graph.graph)?;
        if let Some(seed) = a.seed {
            m = m.seed("seed", seed);
        }
        m.finish(out)?;
    }
    Ok(())
}

fn report(a: &ReportArgs) -> Result<(), CliError> {
    let mut runs = Vec::new();
    for spec in &a.runs {
        let (label, dir) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("--run {spec}: expected label=eval_dir")))?;
        runs.push((
            label.to_string(),
            dir.to_string(),
            read_ranks(&Path::new(dir).join("ranks.tsv"))?,
        ));
    }
    fs::create_dir_all(&a.out)?;
    let rows: Vec<(&str, &EvalReport)> = runs.iter().map(|(l, _, r)| (l.as_str(), r)).collect();
    let mut summary = Vec::new();
    EvalReport::write_summary_tsv(&mut summary, &rows)?;
    print!("{}", String::from_utf8_lossy(&summary));
    fs::write(a.out.join("summary.tsv"), &summary)?;
    let baseline = &runs[0].2;
    let mut seen = BTreeMap::new();
    for (label, _, r) in &runs {
        let n = seen.entry(label.clone()).or_insert(0usize);
        *n += 1;
        let name = if *n == 1 {
            format!("{label}.tsv")
        } else {
            format!("{label}-{n}.tsv")
        };
        r.write_per_type_tsv(create(&a.out.join(name))?, Some(baseline))?;
    }
    let mut m = RunManifest::new("report", snapshot(a)?);
    for (_, dir, _) in &runs {
        m = m.input(dir)?;
    }
    m.finish(&a.out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Privatize(a) => privatize(a),
        Command::Split(a) => split(a),
        Command::SampleQueries(a) => sample(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Audit(a) => audit(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    let usage = |kind, msg: &str| Cli::command().error(kind, msg).exit();
    match &cli.command {
        Command::Eval(a)
            if a.protection == ProtectionArg::Noise
                && a.sigma.is_none()
                && a.match_mrr.is_none() =>
        {
            usage(
                clap::error::ErrorKind::MissingRequiredArgument,
                "--protection noise needs --sigma or --match-mrr",
            )
        }
        Command::SampleQueries(a) if a.counts.len() != 3 => usage(
            clap::error::ErrorKind::WrongNumberOfValues,
            "--counts takes three values: train,valid,test",
        ),
        _ => {}
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
