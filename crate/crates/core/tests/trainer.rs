use std::collections::BTreeSet;
use std::sync::Arc;

use pngdb::bench::{sample_private_edges, split_edges, Benchmark, SamplerConfig};
use pngdb::encoders::{Model, ModelConfig, ModelKind};
use pngdb::eval::{evaluate_model, rank, uniform_expected_mrr, AnswerClass, Protection};
use pngdb::kg::{Direction, KnowledgeGraph, RelationKind, Triple, VertexId, Vocab};
use pngdb::numerics::gradcheck::check_gradients_piecewise;
use pngdb::numerics::{NdArray, Tape};
use pngdb::query::{parse_query, QueryNode, QueryType};
use pngdb::symbolic::AnswerSet;
use pngdb::synth::{synthetic_graph, toy_graph, SynthConfig};
use pngdb::trainer::{
    noisy_score, noisy_scores, privacy_loss, privacy_loss_on, public_loss, public_loss_on,
    total_loss, train, write_trace, NoiseConfig, PrivacyDirection, RunConfig, TrainConfig,
    TrainError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gqe(g: &KnowledgeGraph, seed: u64) -> Model {
    Model::new(
        ModelConfig::new(ModelKind::Gqe).with_dim(4).with_seed(seed),
        g.num_vertices(),
        g.num_relations(),
    )
    .unwrap()
}

/// Every entity at the same point and every relation zero: all scores tie.
fn flatten(m: &mut Model) {
    let store = m.store_mut();
    for name in ["entity", "gqe.relation"] {
        let id = store.id(name).unwrap();
        let shape = store.value(id).shape().to_vec();
        let fill = if name == "entity" { 0.3 } else { 0.0 };
        store.set_value(id, NdArray::full(&shape, fill)).unwrap();
    }
}

#[test]
fn single_certain_pair_has_zero_loss() {
    let mut vocab = Vocab::new();
    let a = vocab.intern_vertex("a");
    let r = vocab.intern_relation("r", RelationKind::Relation);
    let g = KnowledgeGraph::from_parts(
        Arc::new(vocab),
        BTreeSet::from([Triple::new(a, r, a)]),
        BTreeSet::new(),
    )
    .unwrap();
    let q = parse_query("(p r (a a))", g.vocab()).unwrap();
    let m = gqe(&g, 0);
    assert_eq!(public_loss(&m, &[(&q, a)]).unwrap(), 0.0);
}

#[test]
fn uniform_scores_give_log_n() {
    let g = toy_graph();
    let mut m = gqe(&g, 1);
    flatten(&mut m);
    let n = g.num_vertices() as f64;
    let q = parse_query("(p LiveIn (a Hinton))", g.vocab()).unwrap();
    let v = g.vocab().vertex_id("Toronto").unwrap();
    assert!((public_loss(&m, &[(&q, v)]).unwrap() - n.ln()).abs() < 1e-12);
    let private: Vec<Triple> = g.private_triples().iter().copied().collect();
    let lp = privacy_loss(&m, &private, PrivacyDirection::Reverse).unwrap();
    assert!((lp - (1.0 / n).ln()).abs() < 1e-12);
}

#[test]
fn batch_loss_is_mean_of_singletons() {
    let g = toy_graph();
    let m = gqe(&g, 2);
    let voc = g.vocab();
    let q1 = parse_query("(p LiveIn (a Hinton))", voc).unwrap();
    let q2 = parse_query("(i (p WorksAt (a Hinton)) (p BornIn (a Bengio)))", voc).unwrap();
    let v = |s: &str| voc.vertex_id(s).unwrap();
    let pairs: Vec<(&QueryNode, VertexId)> = vec![
        (&q1, v("Toronto")),
        (&q2, v("UofT")),
        (&q1, v("Montreal")),
        (&q2, v("Hinton")),
    ];
    let batch = public_loss(&m, &pairs).unwrap();
    let singles: f64 = pairs
        .iter()
        .map(|p| public_loss(&m, std::slice::from_ref(p)).unwrap())
        .sum::<f64>()
        / pairs.len() as f64;
    assert!((batch - singles).abs() < 1e-12);
    assert!(matches!(public_loss(&m, &[]), Err(TrainError::EmptyBatch)));
}

#[test]
fn total_loss_is_linear_in_beta() {
    let g = toy_graph();
    let m = gqe(&g, 3);
    let q = parse_query("(p WorksAt (a Hinton))", g.vocab()).unwrap();
    let pairs = [(&q, g.vocab().vertex_id("UofT").unwrap())];
    let private: Vec<Triple> = g.private_triples().iter().copied().collect();
    let dir = PrivacyDirection::Both;
    let lu = public_loss(&m, &pairs).unwrap();
    let lp = privacy_loss(&m, &private, dir).unwrap();
    assert_eq!(privacy_loss(&m, &[], dir).unwrap(), 0.0);
    assert_eq!(
        total_loss(&m, &pairs, &private, 0.0, dir)
            .unwrap()
            .to_bits(),
        lu.to_bits()
    );
    assert_eq!(total_loss(&m, &pairs, &[], 1.0, dir).unwrap(), lu);
    for beta in [0.01, 0.05, 0.1, 0.5, 1.0] {
        let l = total_loss(&m, &pairs, &private, beta, dir).unwrap();
        assert!((l - (lu + beta * lp)).abs() < 1e-12, "beta {beta}");
    }
}

#[test]
fn privacy_gradient_opposes_retrieval_gradient() {
    let g = toy_graph();
    let m = gqe(&g, 4);
    let tr = *g.private_triples().iter().next().unwrap();
    let beta = 0.5;
    let entity = m.store().id("entity").unwrap();
    let grad_privacy = {
        let mut t = Tape::new(m.store());
        let l = privacy_loss_on(&m, &mut t, &[tr], PrivacyDirection::Reverse).unwrap();
        let l = t.scale(l, beta).unwrap();
        t.backward(l).unwrap().get(entity).unwrap().clone()
    };
    // The retrieval loss for the same triple asked in the reverse direction.
    let q = QueryNode::project(tr.rel, Direction::Backward, QueryNode::anchor(tr.tail));
    let grad_retrieval = {
        let mut t = Tape::new(m.store());
        let l = public_loss_on(&m, &mut t, &[(&q, tr.head)], None).unwrap();
        t.backward(l).unwrap().get(entity).unwrap().clone()
    };
    let row = tr.head.index();
    let gp = grad_privacy.row_slice(row);
    let gr = grad_retrieval.row_slice(row);
    let dot: f64 = gp.iter().zip(gr).map(|(a, b)| a * b).sum();
    assert!(dot < 0.0);
    for (a, b) in gp.iter().zip(gr) {
        assert!((a + beta * b).abs() < 1e-12);
    }
}

#[test]
fn sampled_negative_loss_passes_finite_differences() {
    let g = toy_graph();
    let q = parse_query("(p CityOf (p LiveIn (a Bengio)))", g.vocab()).unwrap();
    let v = g.vocab().vertex_id("Canada").unwrap();
    for seed in 0..5 {
        let mut m = gqe(&g, seed);
        let view = m.clone();
        let ids: Vec<_> = m.store().ids().collect();
        let report = check_gradients_piecewise(m.store_mut(), &ids, 1e-5, 1e-5, 1e-4, |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            public_loss_on(&view, t, &[(&q, v)], Some((3, &mut rng))).map_err(|e| match e {
                TrainError::Encoder(pngdb::encoders::EncoderError::Numerics(n)) => n,
                other => panic!("{other}"),
            })
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}

struct Desk {
    graph: KnowledgeGraph,
    bench: Benchmark,
    private: Vec<Triple>,
}

fn desk() -> Desk {
    let graph = synthetic_graph(&SynthConfig::default());
    let private = sample_private_edges(&graph, 100, 1).unwrap();
    let split = split_edges(&graph, &private, 1).unwrap();
    let bench = Benchmark::sample(
        &split,
        &QueryType::TEMPLATES,
        [60, 30, 60],
        1,
        &SamplerConfig {
            max_answers: Some(50),
            ..SamplerConfig::default()
        },
    )
    .unwrap();
    Desk {
        graph,
        bench,
        private: private.into_iter().collect(),
    }
}

fn small_config(beta: f64) -> TrainConfig {
    TrainConfig {
        dim: 16,
        epochs: 4,
        beta,
        ..TrainConfig::default()
    }
}

fn fresh(d: &Desk, cfg: &TrainConfig) -> Model {
    Model::new(
        cfg.model_config(),
        d.graph.num_vertices(),
        d.graph.num_relations(),
    )
    .unwrap()
}

#[test]
fn training_is_deterministic_and_learns() {
    let d = desk();
    let cfg = small_config(0.0);
    let before = evaluate_valid(&fresh(&d, &cfg), &d.bench);
    let a = train(fresh(&d, &cfg), &d.bench.train, &d.private, &cfg).unwrap();
    let b = train(fresh(&d, &cfg), &d.bench.train, &d.private, &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.trace.len(), cfg.epochs);
    let after = evaluate_valid(&a.model, &d.bench);
    assert!(after > before, "valid MRR {before} -> {after}");
    let first = &a.trace[0];
    assert_eq!(first.total, first.public);
    let mut csv = Vec::new();
    write_trace(&mut csv, &a.trace).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().next(), Some("epoch,L_u,L_p,L"));
    assert_eq!(csv.lines().count(), cfg.epochs + 1);
}

/// MRR of the answers each validation query gained over training.
fn evaluate_valid(m: &Model, b: &Benchmark) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for q in &b.valid {
        let scores = m.score_all(&m.encode(&q.query).unwrap()).unwrap();
        let filter: AnswerSet = q.valid_answers.clone();
        for &v in q.valid_answers.difference(&q.train_answers) {
            total += 1.0 / rank(&scores, v, &filter).unwrap() as f64;
            n += 1;
        }
    }
    total / n as f64
}

#[test]
fn adversarial_training_lowers_private_probabilities() {
    let d = desk();
    let mean_prob = |m: &Model| {
        let candidates: Vec<VertexId> = d.graph.vocab().vertices().collect();
        d.private
            .iter()
            .map(|t| {
                let q = QueryNode::project(t.rel, Direction::Backward, QueryNode::anchor(t.tail));
                let embs = m.encode(&q).unwrap();
                m.probability(&embs, t.head, &candidates).unwrap()
            })
            .sum::<f64>()
            / d.private.len() as f64
    };
    let plain = train(
        fresh(&d, &small_config(0.0)),
        &d.bench.train,
        &d.private,
        &small_config(0.0),
    )
    .unwrap();
    let protected = train(
        fresh(&d, &small_config(0.5)),
        &d.bench.train,
        &d.private,
        &small_config(0.5),
    )
    .unwrap();
    assert!(mean_prob(&protected.model) < mean_prob(&plain.model));
    let last = protected.trace.last().unwrap();
    assert!((last.total - (last.public + 0.5 * last.privacy)).abs() < 1e-9);
}

#[test]
fn exploding_updates_report_the_batch() {
    let d = desk();
    let cfg = TrainConfig {
        lr: 1e300,
        optimizer: "sgd".parse().unwrap(),
        max_norm: None,
        ..small_config(0.0)
    };
    match train(fresh(&d, &cfg), &d.bench.train, &d.private, &cfg) {
        Err(TrainError::NonFinite { epoch, .. }) => assert_eq!(epoch, 1),
        other => panic!(
            "expected a non-finite error, got {:?}",
            other.map(|o| o.trace)
        ),
    }
}

#[test]
fn zero_noise_is_identity_and_seeds_reproduce() {
    let g = toy_graph();
    let m = gqe(&g, 5);
    let q = parse_query("(p WorksAt (a Hinton))", g.vocab()).unwrap();
    let embs = m.encode(&q).unwrap();
    let clean = m.score_all(&embs).unwrap();
    let off = NoiseConfig {
        sigma: 0.0,
        seed: 9,
    };
    assert_eq!(noisy_scores(&m, &embs, &off).unwrap(), clean);
    let on = NoiseConfig {
        sigma: 0.4,
        seed: 9,
    };
    assert_eq!(
        noisy_scores(&m, &embs, &on).unwrap(),
        noisy_scores(&m, &embs, &on).unwrap()
    );
    let v = VertexId(2);
    assert_eq!(
        noisy_score(&m, &embs, v, &on).unwrap(),
        noisy_scores(&m, &embs, &on).unwrap()[2]
    );
}

#[test]
fn large_noise_flattens_the_rank_distribution() {
    let d = desk();
    let cfg = small_config(0.0);
    let m = train(fresh(&d, &cfg), &d.bench.train, &d.private, &cfg)
        .unwrap()
        .model;
    let q = &d.bench.train[0];
    let embs = m.encode(&q.query).unwrap();
    let clean = m.score_all(&embs).unwrap();
    // The vertex the clean model ranks first.
    let target = VertexId(
        (0..clean.len())
            .max_by(|&a, &b| clean[a].total_cmp(&clean[b]))
            .unwrap() as u32,
    );
    let n = m.num_vertices();
    let empty = AnswerSet::new();
    assert_eq!(rank(&clean, target, &empty).unwrap(), 1);
    let bins = 10;
    let mut hist = vec![0usize; bins];
    let mut rr = 0.0;
    let draws = 1000;
    for seed in 0..draws {
        let noise = NoiseConfig {
            sigma: 1e4,
            seed: seed as u64,
        };
        let r = rank(&noisy_scores(&m, &embs, &noise).unwrap(), target, &empty).unwrap();
        hist[(r - 1) * bins / n] += 1;
        rr += 1.0 / r as f64;
    }
    // Noise moves the query, not each candidate, so ranks follow a random
    // direction: spread over every decile with a reciprocal rank near chance.
    let mrr = rr / draws as f64;
    assert!(hist.iter().all(|&c| c >= 30), "{hist:?}");
    assert!(mrr < 3.0 * uniform_expected_mrr(n), "mrr {mrr}");
}

#[test]
fn run_config_round_trips() {
    let text = "model = q2b\n# comment\ndim = 8\nbeta = 0.5 # inline\nmax_norm = none\noptimizer = sgd\nsigma = 0.25\nprivacy_direction = both\n";
    let c = RunConfig::parse(text).unwrap();
    assert_eq!(c.train.model, ModelKind::Q2b);
    assert_eq!(c.train.dim, 8);
    assert_eq!(c.train.beta, 0.5);
    assert_eq!(c.train.max_norm, None);
    assert_eq!(c.noise.sigma, 0.25);
    assert_eq!(c.train.privacy_direction, PrivacyDirection::Both);
    let mut out = Vec::new();
    c.write(&mut out).unwrap();
    let back = RunConfig::parse(std::str::from_utf8(&out).unwrap()).unwrap();
    assert_eq!(back, c);
    assert!(matches!(
        RunConfig::parse("beta = -1"),
        Err(TrainError::InvalidConfig(_))
    ));
    assert!(matches!(
        RunConfig::parse("dim 8"),
        Err(TrainError::ConfigSyntax { line: 1, .. })
    ));
    assert!(RunConfig::parse("colour = red").is_err());
}

#[test]
fn noise_protection_matches_manual_scoring() {
    let d = desk();
    let cfg = small_config(0.0);
    let m = fresh(&d, &cfg);
    let noise = NoiseConfig {
        sigma: 0.3,
        seed: 4,
    };
    let report = evaluate_model(&m, &d.bench.test, Protection::Noise(noise)).unwrap();
    let again = evaluate_model(&m, &d.bench.test, Protection::Noise(noise)).unwrap();
    assert_eq!(
        report.mrr(AnswerClass::Private),
        again.mrr(AnswerClass::Private)
    );
    assert!(report.all(AnswerClass::Public).unwrap().count > 0);
}
