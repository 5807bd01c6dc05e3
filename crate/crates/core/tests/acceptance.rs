//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line; the process exits nonzero if
//! any criterion fails.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use pngdb::bench::{sample_private_edges, split_edges, Benchmark, GraphSplit, SamplerConfig};
use pngdb::encoders::{Model, ModelConfig, ModelKind};
use pngdb::eval::{calibrate_noise, evaluate_model, metrics, rank, AnswerClass, Protection};
use pngdb::kg::{Direction, KnowledgeGraph, RelationKind, Triple, VertexId, View, Vocab};
use pngdb::numerics::gradcheck::check_gradients_piecewise;
use pngdb::numerics::{NumericsError, Tape, Var};
use pngdb::query::{classify_type, parse_query, QueryNode, QueryType};
use pngdb::symbolic::{brute_force_oracle, evaluate, evaluate_tagged, AnswerSet, TagMode};
use pngdb::synth::{synthetic_graph, toy_graph, SynthConfig};
use pngdb::trainer::{total_loss_on, train, PrivacyDirection, TrainConfig, TrainError};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Criterion 1/2
const RANDOM_GRAPHS: usize = 50;
const RANDOM_QUERIES: usize = 500;
const MAX_VERTICES: usize = 60;
const MAX_RELATIONS: usize = 8;
const SYMBOLIC_BUDGET: Duration = Duration::from_secs(60);

// Criterion 3
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
// Denominator floor for the relative error. At this step, cancellation noise
// in the central difference is about 1e-10 absolute.
const FD_FLOOR: f64 = 1e-5;
// Partials where the step straddles a relu/abs/min kink are skipped; cap how
// many so a systematically broken region cannot hide.
const FD_MAX_SKIPPED: f64 = 0.01;
const FD_SEEDS: u64 = 20;
const FD_BUDGET: Duration = Duration::from_secs(120);

// Criteria 4-6
const DESK_PRIVATE_EDGES: usize = 100;
const DESK_QUERIES: [usize; 3] = [200, 50, 200];
const MAX_PRIVATE_RATIO: f64 = 0.5;
const MIN_PUBLIC_RATIO: f64 = 0.6;
const PROTECTION_BUDGET: Duration = Duration::from_secs(600);
const BETAS: [f64; 5] = [0.01, 0.05, 0.1, 0.5, 1.0];
const MAX_SPEARMAN: f64 = -0.8;
const MIN_LOW_BETA_PUBLIC_RATIO: f64 = 0.9;
const NOISE_TOLERANCE: f64 = 0.05;

// Criterion 7
const SCORE_TABLES: usize = 10_000;

// Criterion 8
const SPLIT_SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("symbolic oracle equivalence", criterion_1),
        ("privacy tagging algebra", criterion_2),
        ("gradient correctness", criterion_3),
        ("adversarial protection", criterion_4),
        ("beta monotonicity", criterion_5),
        ("noise baseline comparison", criterion_6),
        ("metric oracle", criterion_7),
        ("benchmark conservation and determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {} [{verdict}] {name}: {} ({:.1}s)",
            i + 1,
            o.detail,
            t0.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Random symbolic instances

struct Instance {
    graph: KnowledgeGraph,
    queries: Vec<QueryNode>,
}

fn random_graph(rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let n = rng.random_range(10..=MAX_VERTICES);
    let n_rel = rng.random_range(2..=MAX_RELATIONS);
    let mut vocab = Vocab::new();
    let vs: Vec<_> = (0..n)
        .map(|i| vocab.intern_vertex(&format!("v{i}")))
        .collect();
    let rels: Vec<_> = (0..n_rel)
        .map(|r| {
            let kind = if r % 2 == 0 {
                RelationKind::Relation
            } else {
                RelationKind::Attribute
            };
            vocab.intern_relation(&format!("r{r}"), kind)
        })
        .collect();
    let m = rng.random_range(n..=4 * n);
    let mut triples = BTreeSet::new();
    for _ in 0..m {
        triples.insert(Triple::new(
            *vs.choose(rng).unwrap(),
            *rels.choose(rng).unwrap(),
            *vs.choose(rng).unwrap(),
        ));
    }
    let private: BTreeSet<Triple> = triples
        .iter()
        .filter(|t| vocab.relation_kind(t.rel) == RelationKind::Attribute)
        .filter(|_| rng.random_bool(0.3))
        .copied()
        .collect();
    KnowledgeGraph::from_parts(Arc::new(vocab), triples, private).unwrap()
}

fn flip(d: Direction) -> Direction {
    match d {
        Direction::Forward => Direction::Backward,
        Direction::Backward => Direction::Forward,
    }
}

/// A projection chain of `len` hops that reaches `target` when the graph
/// allows it, otherwise a random chain.
fn chain_to(g: &KnowledgeGraph, target: VertexId, len: usize, rng: &mut ChaCha8Rng) -> QueryNode {
    let mut hops = Vec::with_capacity(len);
    let mut at = target;
    for _ in 0..len {
        let edges = g.incident(at);
        match edges.choose(rng) {
            Some(&(u, r, d, _)) => {
                hops.push((r, flip(d)));
                at = u;
            }
            None => {
                let r = pngdb::kg::RelationId(rng.random_range(0..g.num_relations() as u32));
                let d = if rng.random_bool(0.5) {
                    Direction::Forward
                } else {
                    Direction::Backward
                };
                hops.push((r, d));
                at = VertexId(rng.random_range(0..g.num_vertices() as u32));
            }
        }
    }
    let mut q = QueryNode::anchor(at);
    for &(r, d) in hops.iter().rev() {
        q = QueryNode::project(r, d, q);
    }
    q
}

fn random_query(g: &KnowledgeGraph, qt: QueryType, rng: &mut ChaCha8Rng) -> QueryNode {
    let v = |rng: &mut ChaCha8Rng| VertexId(rng.random_range(0..g.num_vertices() as u32));
    let t = v(rng);
    let last_hop = |child: QueryNode, rng: &mut ChaCha8Rng| {
        let r = pngdb::kg::RelationId(rng.random_range(0..g.num_relations() as u32));
        QueryNode::project(r, Direction::Forward, child)
    };
    match qt {
        QueryType::P1 => chain_to(g, t, 1, rng),
        QueryType::P2 => chain_to(g, t, 2, rng),
        QueryType::I2 => {
            QueryNode::Intersection(vec![chain_to(g, t, 1, rng), chain_to(g, t, 1, rng)])
        }
        QueryType::I3 => QueryNode::Intersection(vec![
            chain_to(g, t, 1, rng),
            chain_to(g, t, 1, rng),
            chain_to(g, t, 1, rng),
        ]),
        QueryType::Pi => {
            QueryNode::Intersection(vec![chain_to(g, t, 2, rng), chain_to(g, t, 1, rng)])
        }
        QueryType::Ip => last_hop(
            QueryNode::Intersection(vec![chain_to(g, t, 1, rng), chain_to(g, t, 1, rng)]),
            rng,
        ),
        QueryType::U2 => {
            let other = v(rng);
            QueryNode::Union(vec![chain_to(g, t, 1, rng), chain_to(g, other, 1, rng)])
        }
        QueryType::Up => {
            let other = v(rng);
            last_hop(
                QueryNode::Union(vec![chain_to(g, t, 1, rng), chain_to(g, other, 1, rng)]),
                rng,
            )
        }
        QueryType::Other => unreachable!("only templates are sampled"),
    }
}

fn random_instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let per_graph = RANDOM_QUERIES / RANDOM_GRAPHS;
    let mut k = 0;
    (0..RANDOM_GRAPHS)
        .map(|_| {
            let graph = random_graph(&mut rng);
            let queries = (0..per_graph)
                .map(|_| {
                    let qt = QueryType::TEMPLATES[k % 8];
                    k += 1;
                    random_query(&graph, qt, &mut rng)
                })
                .collect();
            Instance { graph, queries }
        })
        .collect()
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let instances = random_instances();
    let mut types = BTreeSet::new();
    let mut mismatches = 0;
    let mut nonempty = 0;
    let mut total = 0;
    for inst in &instances {
        assert!(inst.graph.num_vertices() <= MAX_VERTICES);
        assert!(inst.graph.num_relations() <= MAX_RELATIONS);
        for q in &inst.queries {
            types.insert(classify_type(q));
            let fast = evaluate(&inst.graph, q, View::Full).unwrap();
            let slow = brute_force_oracle(&inst.graph, q).unwrap();
            if fast != slow {
                mismatches += 1;
            }
            nonempty += usize::from(!fast.is_empty());
            total += 1;
        }
    }
    let elapsed = t0.elapsed();
    let all_types = QueryType::TEMPLATES.iter().all(|t| types.contains(t));
    outcome(
        mismatches == 0 && total == RANDOM_QUERIES && all_types && elapsed < SYMBOLIC_BUDGET,
        format!(
            "{total} queries on {} graphs, {mismatches} mismatches, {nonempty} nonempty, {} types",
            instances.len(),
            types.len()
        ),
    )
}

fn criterion_2() -> Outcome {
    let instances = random_instances();
    let mut violations = 0;
    let mut private_answers = 0;
    for inst in &instances {
        let public_graph = inst.graph.public_view();
        for q in &inst.queries {
            let full = evaluate(&inst.graph, q, View::Full).unwrap();
            for mode in [TagMode::Relaxed, TagMode::Strict] {
                let tagged = evaluate_tagged(&inst.graph, q, mode).unwrap();
                let union: AnswerSet = tagged.public.union(&tagged.private).copied().collect();
                if !tagged.public.is_disjoint(&tagged.private) || union != full {
                    violations += 1;
                }
                if mode == TagMode::Relaxed {
                    private_answers += tagged.private.len();
                    if tagged.public != evaluate(&public_graph, q, View::Full).unwrap() {
                        violations += 1;
                    }
                }
            }
        }
    }
    let toy = toy_graph();
    let q = parse_query("(p LiveIn (a Hinton))", toy.vocab()).unwrap();
    let toronto = toy.vocab().vertex_id("Toronto").unwrap();
    let tagged = evaluate_tagged(&toy, &q, TagMode::Relaxed).unwrap();
    let toy_ok = tagged.private.contains(&toronto) && !tagged.public.contains(&toronto);
    outcome(
        violations == 0 && toy_ok,
        format!(
            "{violations} violations over {} tagged evaluations ({private_answers} private answers); toy Toronto private: {toy_ok}",
            2 * RANDOM_QUERIES
        ),
    )
}

fn numerics(e: TrainError) -> NumericsError {
    match e {
        TrainError::Encoder(pngdb::encoders::EncoderError::Numerics(n)) => n,
        other => panic!("loss construction failed: {other}"),
    }
}

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let g = toy_graph();
    let voc = g.vocab();
    let texts = [
        "(p LiveIn (a Hinton))",
        "(i (p WorksAt (a Hinton)) (p WorksAt (rp LiveIn (a Toronto))))",
        "(p CityOf (i (p LiveIn (a Hinton)) (p LocatedIn (a UofT))))",
        "(u (p CityOf (p LiveIn (a Bengio))) (p BornIn (a Hinton)))",
    ];
    let queries: Vec<QueryNode> = texts.iter().map(|t| parse_query(t, voc).unwrap()).collect();
    let private: Vec<Triple> = g.private_triples().iter().copied().collect();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut checked = 0;
    let mut skipped = 0;
    for kind in [ModelKind::Gqe, ModelKind::Q2b, ModelKind::Q2p] {
        for seed in 0..FD_SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = Model::new(
                ModelConfig::new(kind)
                    .with_dim(3)
                    .with_particles(2)
                    .with_seed(seed),
                g.num_vertices(),
                g.num_relations(),
            )
            .unwrap();
            let pairs: Vec<(&QueryNode, VertexId)> = queries
                .iter()
                .map(|q| (q, VertexId(rng.random_range(0..g.num_vertices() as u32))))
                .collect();
            let beta = [0.01, 0.1, 0.5, 1.0][seed as usize % 4];
            let direction = if seed % 2 == 0 {
                PrivacyDirection::Reverse
            } else {
                PrivacyDirection::Both
            };
            let view = m.clone();
            let ids: Vec<_> = m.store().ids().collect();
            let loss = |t: &mut Tape| -> Result<Var, NumericsError> {
                total_loss_on(&view, t, &pairs, &private, beta, direction).map_err(numerics)
            };
            let report =
                check_gradients_piecewise(m.store_mut(), &ids, FD_STEP, FD_FLOOR, FD_REL_TOL, loss)
                    .unwrap();
            checked += report.checked;
            skipped += report.skipped;
            if report.max_rel_error > worst {
                worst = report.max_rel_error;
                worst_at = format!("{kind} seed {seed} {}", report.worst_param);
            }
        }
    }
    let elapsed = t0.elapsed();
    outcome(
        worst < FD_REL_TOL
            && (skipped as f64) <= FD_MAX_SKIPPED * checked as f64
            && elapsed < FD_BUDGET,
        format!(
            "{checked} partials over 3 encoders x {FD_SEEDS} seeds ({skipped} skipped at kinks), max relative error {worst:.2e} at {worst_at} (tolerance {FD_REL_TOL:e}, step {FD_STEP:e})"
        ),
    )
}

// ---------------------------------------------------------------------------
// Desk-scale training, shared by criteria 4-6

struct DeskRun {
    beta: f64,
    public: f64,
    private: f64,
    model: Model,
}

struct Desk {
    benchmark: Benchmark,
    runs: Vec<DeskRun>,
    elapsed_base_pair: Duration,
}

fn desk_config(beta: f64) -> TrainConfig {
    TrainConfig {
        model: ModelKind::Gqe,
        dim: 32,
        beta,
        lr: 0.01,
        epochs: 10,
        batch_size: 128,
        seed: 0,
        privacy_direction: PrivacyDirection::Reverse,
        privacy_batch: 1,
        max_norm: Some(4.0),
        ..TrainConfig::default()
    }
}

fn desk() -> &'static Desk {
    static DESK: std::sync::OnceLock<Desk> = std::sync::OnceLock::new();
    DESK.get_or_init(|| {
        let t0 = Instant::now();
        let g = synthetic_graph(&SynthConfig::default());
        let private = sample_private_edges(&g, DESK_PRIVATE_EDGES, 1).unwrap();
        let split = split_edges(&g, &private, 1).unwrap();
        let cfg = SamplerConfig {
            max_answers: Some(50),
            ..SamplerConfig::default()
        };
        let benchmark =
            Benchmark::sample(&split, &QueryType::TEMPLATES, DESK_QUERIES, 1, &cfg).unwrap();
        let private: Vec<Triple> = private.into_iter().collect();
        let run = |beta: f64| {
            let tc = desk_config(beta);
            let m = Model::new(tc.model_config(), g.num_vertices(), g.num_relations()).unwrap();
            let model = train(m, &benchmark.train, &private, &tc).unwrap().model;
            let r = evaluate_model(&model, &benchmark.test, Protection::None).unwrap();
            DeskRun {
                beta,
                public: r.mrr(AnswerClass::Public),
                private: r.mrr(AnswerClass::Private),
                model,
            }
        };
        let mut runs = vec![run(0.0), run(0.5)];
        let elapsed_base_pair = t0.elapsed();
        for beta in BETAS {
            if beta != 0.5 {
                runs.push(run(beta));
            }
        }
        runs.sort_by(|a, b| a.beta.total_cmp(&b.beta));
        Desk {
            benchmark,
            runs,
            elapsed_base_pair,
        }
    })
}

fn run_at(d: &Desk, beta: f64) -> &DeskRun {
    d.runs.iter().find(|r| r.beta == beta).unwrap()
}

fn criterion_4() -> Outcome {
    let d = desk();
    let base = run_at(d, 0.0);
    let prot = run_at(d, 0.5);
    let private_ratio = prot.private / base.private;
    let public_ratio = prot.public / base.public;
    outcome(
        private_ratio <= MAX_PRIVATE_RATIO
            && public_ratio >= MIN_PUBLIC_RATIO
            && d.elapsed_base_pair < PROTECTION_BUDGET,
        format!(
            "beta=0 public {:.4} private {:.4}; beta=0.5 public {:.4} ({:.1}%, need >= {:.0}%) private {:.4} ({:.1}%, need <= {:.0}%)",
            base.public,
            base.private,
            prot.public,
            100.0 * public_ratio,
            100.0 * MIN_PUBLIC_RATIO,
            prot.private,
            100.0 * private_ratio,
            100.0 * MAX_PRIVATE_RATIO
        ),
    )
}

/// Ranks with ties sharing their average position.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn criterion_5() -> Outcome {
    let d = desk();
    let private: Vec<f64> = BETAS.iter().map(|&b| run_at(d, b).private).collect();
    let rho = spearman(&BETAS, &private);
    let retention = run_at(d, 0.01).public / run_at(d, 0.0).public;
    let trend: Vec<String> = BETAS
        .iter()
        .zip(&private)
        .map(|(b, p)| format!("{b}:{p:.4}"))
        .collect();
    outcome(
        rho <= MAX_SPEARMAN && retention >= MIN_LOW_BETA_PUBLIC_RATIO,
        format!(
            "private MRR by beta [{}], spearman {rho:.3} (need <= {MAX_SPEARMAN}); public retention at beta=0.01 {:.1}% (need >= {:.0}%)",
            trend.join(" "),
            100.0 * retention,
            100.0 * MIN_LOW_BETA_PUBLIC_RATIO
        ),
    )
}

fn criterion_6() -> Outcome {
    let d = desk();
    let base = run_at(d, 0.0);
    let prot = run_at(d, 0.5);
    let cal = calibrate_noise(
        &base.model,
        &d.benchmark.test,
        prot.public,
        11,
        NOISE_TOLERANCE,
    )
    .unwrap();
    let noisy_public = cal.report.mrr(AnswerClass::Public);
    let noisy_private = cal.report.mrr(AnswerClass::Private);
    let matched = ((noisy_public - prot.public) / prot.public).abs() <= NOISE_TOLERANCE;
    outcome(
        matched && prot.private < noisy_private,
        format!(
            "sigma {:.4} after {} steps: noisy public {noisy_public:.4} vs {:.4}; private noisy {noisy_private:.4} vs adversarial {:.4}",
            cal.sigma, cal.iterations, prot.public, prot.private
        ),
    )
}

// ---------------------------------------------------------------------------

/// Sort-based reference: order candidates by descending score with the
/// target placed after every tie, drop filtered candidates, read position.
fn reference_rank(scores: &[f64], target: usize, filtered: &BTreeSet<usize>) -> usize {
    let mut order: Vec<usize> = (0..scores.len())
        .filter(|i| *i == target || !filtered.contains(i))
        .collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| (a == target).cmp(&(b == target)))
    });
    order.iter().position(|&i| i == target).unwrap() + 1
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    let mut targets = 0;
    for table in 0..SCORE_TABLES {
        let n = rng.random_range(1..=60);
        // Coarse integer scores on half the tables so ties are common.
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if table % 2 == 0 {
                    rng.random_range(0..6) as f64
                } else {
                    rng.random_range(-5.0..5.0)
                }
            })
            .collect();
        let answers: BTreeSet<usize> = (0..n).filter(|_| rng.random_bool(0.2)).collect();
        let evaluated: Vec<usize> = answers
            .iter()
            .copied()
            .filter(|_| rng.random_bool(0.7))
            .collect();
        if evaluated.is_empty() {
            continue;
        }
        let filter: AnswerSet = answers.iter().map(|&i| VertexId(i as u32)).collect();
        let got: Vec<usize> = evaluated
            .iter()
            .map(|&t| rank(&scores, VertexId(t as u32), &filter).unwrap())
            .collect();
        let want: Vec<usize> = evaluated
            .iter()
            .map(|&t| reference_rank(&scores, t, &answers))
            .collect();
        targets += want.len();
        let m = metrics(&got).unwrap();
        let k = want.len() as f64;
        let hit = |c: usize| want.iter().filter(|&&r| r <= c).count() as f64 / k;
        let mrr = want.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / k;
        if got != want || m.mrr != mrr || m.hr1 != hit(1) || m.hr3 != hit(3) || m.hr10 != hit(10) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{SCORE_TABLES} tables, {targets} ranked targets, {mismatches} mismatching tables"),
    )
}

fn files_in(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8() -> Outcome {
    let mut bad_ratio = 0;
    let mut leaked = 0;
    for seed in 0..SPLIT_SEEDS {
        let g = synthetic_graph(&SynthConfig::default().with_seed(seed));
        let private = sample_private_edges(&g, DESK_PRIVATE_EDGES, seed).unwrap();
        let s = split_edges(&g, &private, seed).unwrap();
        let rest = (g.num_triples() - private.len()) as f64;
        for (got, share) in [
            (s.train_edges.len(), 0.8),
            (s.valid_edges.len(), 0.1),
            (s.test_edges.len(), 0.1),
        ] {
            if (got as f64 - share * rest).abs() > 1.0 {
                bad_ratio += 1;
            }
        }
        if s.train_edges.len() + s.valid_edges.len() + s.test_edges.len() + private.len()
            != g.num_triples()
        {
            bad_ratio += 1;
        }
        leaked += private
            .iter()
            .filter(|t| s.train.contains(t) || s.valid.contains(t))
            .count();
    }
    let base = std::env::temp_dir().join(format!("pngdb-acceptance-{}", std::process::id()));
    let write_once = |dir: &std::path::Path| {
        let g = synthetic_graph(&SynthConfig::default());
        let private = sample_private_edges(&g, DESK_PRIVATE_EDGES, 3).unwrap();
        let split = split_edges(&g, &private, 3).unwrap();
        let b = Benchmark::sample(
            &split,
            &QueryType::TEMPLATES,
            [20, 5, 20],
            3,
            &SamplerConfig::default(),
        )
        .unwrap();
        split.write(dir.join("graph")).unwrap();
        b.write(dir.join("queries"), split.vocab()).unwrap();
        let reread = GraphSplit::read(dir.join("graph")).unwrap();
        reread.train_edges == split.train_edges && reread.private_edges == split.private_edges
    };
    let round_trip = write_once(&base.join("a")) && write_once(&base.join("b"));
    let (a, b) = (files_in(&base.join("a")), files_in(&base.join("b")));
    let identical = !a.is_empty() && a == b;
    let _ = std::fs::remove_dir_all(&base);
    outcome(
        bad_ratio == 0 && leaked == 0 && identical && round_trip,
        format!(
            "{SPLIT_SEEDS} seeded splits: {bad_ratio} bucket violations, {leaked} private edges in train/valid; {} files byte-identical across runs: {identical}",
            a.len()
        ),
    )
}
