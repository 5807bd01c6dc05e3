//! Filtered ranking metrics over public generalization answers and private
//! answers, per query type.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::bench::BenchmarkQuery;
use crate::encoders::{EncoderError, Model};
use crate::kg::VertexId;
use crate::query::QueryType;
use crate::symbolic::AnswerSet;
use crate::trainer::{noisy_scores, NoiseConfig, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("no ranks to summarize")]
    Empty,
    #[error("target vertex {0} has no score")]
    TargetMissing(u32),
    #[error("benchmark refers to vertex {vertex} but the model only embeds {embedded}")]
    VocabMismatch { vertex: u32, embedded: usize },
    #[error("noise calibration failed: {0}")]
    Calibration(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Filtered rank with pessimistic ties: one plus the number of other
/// unfiltered vertices scoring at least as high as `target`.
pub fn rank(scores: &[f64], target: VertexId, filter_out: &AnswerSet) -> Result<usize> {
    let t = target.index();
    let s = *scores.get(t).ok_or(EvalError::TargetMissing(target.0))?;
    let better = scores
        .iter()
        .enumerate()
        .filter(|&(u, &su)| u != t && su >= s && !filter_out.contains(&VertexId(u as u32)))
        .count();
    Ok(1 + better)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub hr1: f64,
    pub hr3: f64,
    pub hr10: f64,
    pub mrr: f64,
    pub count: usize,
}

pub fn metrics(ranks: &[usize]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = ranks.len() as f64;
    let hit = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(Metrics {
        hr1: hit(1),
        hr3: hit(3),
        hr10: hit(10),
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        count: ranks.len(),
    })
}

/// Expected MRR when the target is placed uniformly among `n` candidates.
pub fn uniform_expected_mrr(n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (1..=n).map(|r| 1.0 / r as f64).sum::<f64>() / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnswerClass {
    Public,
    Private,
}

impl AnswerClass {
    pub const ALL: [AnswerClass; 2] = [AnswerClass::Public, AnswerClass::Private];

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerClass::Public => "public",
            AnswerClass::Private => "private",
        }
    }
}

impl fmt::Display for AnswerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protection {
    None,
    Noise(NoiseConfig),
}

/// Ranks of every evaluation target, grouped by query type and class.
/// Metrics are pooled over targets; `All` pools every type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub ranks: BTreeMap<(QueryType, AnswerClass), Vec<usize>>,
}

impl EvalReport {
    pub fn cell(&self, qtype: QueryType, class: AnswerClass) -> Option<Metrics> {
        self.ranks
            .get(&(qtype, class))
            .and_then(|r| metrics(r).ok())
    }

    pub fn all(&self, class: AnswerClass) -> Option<Metrics> {
        let pooled: Vec<usize> = self
            .ranks
            .iter()
            .filter(|((_, c), _)| *c == class)
            .flat_map(|(_, r)| r.iter().copied())
            .collect();
        metrics(&pooled).ok()
    }

    /// Pooled MRR of `class`, or 0 when there are no targets.
    pub fn mrr(&self, class: AnswerClass) -> f64 {
        self.all(class).map(|m| m.mrr).unwrap_or(0.0)
    }

    /// One row per labelled report with `All` public then private metrics.
    pub fn write_summary_tsv<W: Write>(
        mut w: W,
        rows: &[(&str, &EvalReport)],
    ) -> std::io::Result<()> {
        write!(w, "method")?;
        for c in AnswerClass::ALL {
            write!(w, "\t{c}_HR@1\t{c}_HR@3\t{c}_HR@10\t{c}_MRR")?;
        }
        writeln!(w)?;
        for (label, r) in rows {
            write!(w, "{label}")?;
            for c in AnswerClass::ALL {
                write!(w, "{}", metric_cols(r.all(c)))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Per-type rows with metrics in percent. With a baseline, each metric
    /// is followed by its ratio to the baseline in percent.
    pub fn write_per_type_tsv<W: Write>(
        &self,
        mut w: W,
        baseline: Option<&EvalReport>,
    ) -> std::io::Result<()> {
        write!(w, "qtype\tclass\tcount\tHR@1\tHR@3\tHR@10\tMRR")?;
        if baseline.is_some() {
            write!(w, "\tHR@1_pct\tHR@3_pct\tHR@10_pct\tMRR_pct")?;
        }
        writeln!(w)?;
        let rows = QueryType::TEMPLATES
            .iter()
            .map(|&qt| (qt.as_str(), Some(qt)))
            .chain(std::iter::once(("All", None)));
        for (label, qt) in rows {
            for c in AnswerClass::ALL {
                let get = |r: &EvalReport| match qt {
                    Some(qt) => r.cell(qt, c),
                    None => r.all(c),
                };
                let m = get(self);
                write!(
                    w,
                    "{label}\t{c}\t{}{}",
                    m.map(|m| m.count).unwrap_or(0),
                    metric_cols(m)
                )?;
                if let Some(b) = baseline {
                    write!(w, "{}", ratio_cols(m, get(b)))?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

fn values(m: Metrics) -> [f64; 4] {
    [m.hr1, m.hr3, m.hr10, m.mrr]
}

fn metric_cols(m: Option<Metrics>) -> String {
    match m {
        Some(m) => values(m)
            .iter()
            .map(|v| format!("\t{:.2}", v * 100.0))
            .collect(),
        None => "\t-".repeat(4),
    }
}

fn ratio_cols(m: Option<Metrics>, base: Option<Metrics>) -> String {
    match (m, base) {
        (Some(m), Some(b)) => values(m)
            .iter()
            .zip(values(b))
            .map(|(v, bv)| {
                if bv > 0.0 {
                    format!("\t{:.1}", 100.0 * v / bv)
                } else {
                    "\t-".to_string()
                }
            })
            .collect(),
        _ => "\t-".repeat(4),
    }
}

/// Scores every test query and ranks its public generalization answers
/// (test public minus validation answers) and its private answers, each
/// filtered against every other known answer of the query.
pub fn evaluate_model(
    model: &Model,
    queries: &[BenchmarkQuery],
    protection: Protection,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for (i, q) in queries.iter().enumerate() {
        let all = q.test_answers.all();
        if let Some(&bad) = all
            .iter()
            .chain(&q.valid_answers)
            .find(|v| v.index() >= model.num_vertices())
        {
            return Err(EvalError::VocabMismatch {
                vertex: bad.0,
                embedded: model.num_vertices(),
            });
        }
        let embs = model.encode(&q.query)?;
        let scores = match protection {
            Protection::None => model.score_all(&embs)?,
            Protection::Noise(n) => noisy_scores(
                model,
                &embs,
                &NoiseConfig {
                    sigma: n.sigma,
                    seed: query_noise_seed(n.seed, i),
                },
            )?,
        };
        let mut filter = all.clone();
        filter.extend(q.valid_answers.iter().copied());
        for (class, targets) in [
            (AnswerClass::Public, q.public_targets().collect::<Vec<_>>()),
            (
                AnswerClass::Private,
                q.test_answers.private.iter().copied().collect(),
            ),
        ] {
            for t in targets {
                let r = rank(&scores, t, &filter)?;
                report.ranks.entry((q.qtype, class)).or_default().push(r);
            }
        }
    }
    Ok(report)
}

/// Noise seed of the `i`-th query so that each query gets its own draw.
pub fn query_noise_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(i as u64)
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub sigma: f64,
    pub report: EvalReport,
    pub iterations: usize,
}

/// Bisects on `σ` until the noisy public MRR is within `tolerance`
/// (relative) of `target_mrr`.
pub fn calibrate_noise(
    model: &Model,
    queries: &[BenchmarkQuery],
    target_mrr: f64,
    seed: u64,
    tolerance: f64,
) -> Result<Calibration> {
    let run = |sigma: f64| {
        evaluate_model(
            model,
            queries,
            Protection::Noise(NoiseConfig { sigma, seed }),
        )
    };
    let close = |m: f64| (m - target_mrr).abs() <= tolerance * target_mrr;
    let clean = run(0.0)?;
    let m0 = clean.mrr(AnswerClass::Public);
    if close(m0) {
        return Ok(Calibration {
            sigma: 0.0,
            report: clean,
            iterations: 0,
        });
    }
    if m0 < target_mrr {
        return Err(EvalError::Calibration(format!(
            "unperturbed public MRR {m0:.4} is already below the target {target_mrr:.4}"
        )));
    }
    let (mut lo, mut hi) = (0.0, 0.01);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let r = run(hi)?;
        let m = r.mrr(AnswerClass::Public);
        if close(m) {
            return Ok(Calibration {
                sigma: hi,
                report: r,
                iterations,
            });
        }
        if m < target_mrr {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if iterations > 40 {
            return Err(EvalError::Calibration(
                "could not bracket the target MRR".into(),
            ));
        }
    }
    for _ in 0..60 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let r = run(mid)?;
        let m = r.mrr(AnswerClass::Public);
        if close(m) {
            return Ok(Calibration {
                sigma: mid,
                report: r,
                iterations,
            });
        }
        if m > target_mrr {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(EvalError::Calibration(format!(
        "no sigma in [{lo}, {hi}] reaches public MRR {target_mrr:.4}"
    )))
}
