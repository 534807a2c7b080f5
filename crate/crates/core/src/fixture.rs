//! Deterministic synthetic bundle: a small encyclopedia, its passages and
//! embeddings, and a replayable trace for each question about it.
//!
//! Each query has a hidden difficulty `d`. Harder queries draft with smaller
//! logit gaps, higher entropy and noisier samples, and are more likely to be
//! answered wrongly without context. Query embeddings sit near the
//! embeddings of the passages about their entity, so retrieval finds them.
//!
//! Floating-point fields are rounded to four decimals so the files stay
//! small and reproduce byte-for-byte.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::gate::StepStats;
use crate::io::{to_jsonl, write_text};
use crate::pipeline::{emit_traces, TraceRecord, TRACE_VERSION};
use crate::retrieval::{chunk_corpus, normalize, Article, ChunkConfig, EmbeddingSet, PassageRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub n_queries: usize,
    pub dim: usize,
    /// Recorded draft length; gates may use any `k` up to this.
    pub k: usize,
    pub n_samples: usize,
    pub vocab: u32,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n_queries: 50,
            dim: 16,
            k: 20,
            n_samples: 3,
            vocab: 40,
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub articles: Vec<Article>,
    pub passages: Vec<PassageRecord>,
    pub embeddings: EmbeddingSet,
    pub traces: Vec<TraceRecord>,
}

/// Chunking used to turn the fixture articles into passages.
pub fn fixture_chunking() -> ChunkConfig {
    ChunkConfig {
        size: 160,
        overlap: 20,
        min: 40,
    }
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ran", "tes", "vo", "dul", "zen", "pa", "rio", "sel", "bor", "qui", "na",
    "ther", "gu",
];

fn r4(x: f64) -> f64 {
    let r = (x * 1e4).round() / 1e4;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn name(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=3);
    let mut s: String = (0..n)
        .map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())])
        .collect();
    s[..1].make_ascii_uppercase();
    s
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn jitter(base: &[f64], scale: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let noisy: Vec<f64> = base
        .iter()
        .map(|b| {
            let z: f64 = StandardNormal.sample(rng);
            b + scale * z
        })
        .collect();
    Ok(normalize(&noisy)?.into_iter().map(r4).collect())
}

/// Generate the bundle. Deterministic for a fixed spec.
pub fn synthetic_bundle(spec: &FixtureSpec) -> Result<Bundle> {
    if spec.n_queries == 0 || spec.dim == 0 || spec.k == 0 || spec.n_samples < 2 || spec.vocab < 2
    {
        return Err(Error::InvalidConfig(format!("degenerate fixture spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Entities with distinct names and answers.
    let mut entities: Vec<(String, String)> = Vec::with_capacity(spec.n_queries);
    let mut used = std::collections::HashSet::new();
    while entities.len() < spec.n_queries {
        let (e, a) = (name(&mut rng), name(&mut rng));
        if e != a && used.insert(e.clone()) && used.insert(a.clone()) {
            entities.push((e, a));
        }
    }

    let articles: Vec<Article> = entities
        .iter()
        .map(|(e, a)| Article {
            title: e.clone(),
            text: format!(
                "{e} is a settlement in the northern valley. The capital of {e} is {a}. \
                 Travellers reach {a} by the river road, and the markets of {e} trade wool, \
                 salt and timber. Records of {e} go back several centuries."
            ),
        })
        .collect();
    let passages = chunk_corpus(&articles, &fixture_chunking(), 0)?;

    let topics: Vec<Vec<f64>> = (0..spec.n_queries)
        .map(|_| unit_gaussian(&mut rng, spec.dim))
        .collect();
    let mut rows = Vec::with_capacity(passages.len());
    for p in &passages {
        let topic = entities
            .iter()
            .position(|(e, _)| *e == p.title)
            .expect("passage title is an entity");
        rows.push(jitter(&topics[topic], 0.15, &mut rng)?);
    }
    let ids: Vec<u64> = passages.iter().map(|p| p.id).collect();
    let embeddings = EmbeddingSet::new(spec.dim, &rows, &ids)?;

    let mut traces = Vec::with_capacity(spec.n_queries);
    for (i, (entity, answer)) in entities.iter().enumerate() {
        let d: f64 = rng.random();
        let gap_dist = Exp::new(1.0 / (0.1 + 3.0 * (1.0 - d))).expect("positive rate");
        let steps: Vec<StepStats> = (0..spec.k)
            .map(|_| StepStats {
                entropy_nats: r4(2.5 * d * rng.random_range(0.5..1.5)),
                gap: r4(gap_dist.sample(&mut rng)),
            })
            .collect();
        let greedy: Vec<u32> = (0..spec.k).map(|_| rng.random_range(0..spec.vocab)).collect();
        let mut samples = vec![greedy.clone()];
        for _ in 1..spec.n_samples {
            samples.push(
                greedy
                    .iter()
                    .map(|&t| {
                        if rng.random_bool(d) {
                            rng.random_range(0..spec.vocab)
                        } else {
                            t
                        }
                    })
                    .collect(),
            );
        }
        let wrong = |rng: &mut ChaCha8Rng| loop {
            let w = name(rng);
            if w != *answer {
                break w;
            }
        };
        let answer_no_ctx = if d < 0.5 { answer.clone() } else { wrong(&mut rng) };
        let answer_with_ctx = match rng.random_range(0..10) {
            0 => wrong(&mut rng),
            1 => format!("the {answer} road"),
            _ => format!("{answer}."),
        };
        let tokens = |s: &str| s.split_whitespace().count() + 1;
        traces.push(TraceRecord {
            version: TRACE_VERSION,
            query_id: format!("q{i:03}"),
            question: format!("What is the capital of {entity}?"),
            gold_answers: vec![answer.clone(), format!("{answer} city")],
            steps,
            samples,
            out_tokens_no_ctx: tokens(&answer_no_ctx),
            out_tokens_with_ctx: tokens(&answer_with_ctx),
            answer_no_ctx,
            answer_with_ctx,
            query_embedding: Some(jitter(&topics[i], 0.3, &mut rng)?),
        });
    }
    Ok(Bundle {
        articles,
        passages,
        embeddings,
        traces,
    })
}

/// Config for replaying the bundle. Paths are relative to the bundle dir.
/// Cost parameters are powers of two so latency sums are exact.
pub const RUN_TOML: &str = r#"seed = 7
policy = "gated"
trace = "trace.jsonl"
output_dir = "out"

[gate]
kind = "margin"
tau = 0.3
k = 20
beta = 1.0

[retrieval]
index = "index.bin"
passages = "passages.jsonl"
top_k = 3
ctx_budget = 96

[cost]
per_token_cost = 0.0009765625
retrieval_overhead = 0.0625
"#;

/// Simulation spec: the two sign-condition populations and a budget check.
pub const SIMULATE_TOML: &str = r#"[[population]]
n = 1000
tau_star = 0.5
a0_base = 0.5
seed = 5
u = { kind = "uniform", lo = 0.0, hi = 1.0 }
delta_low = { kind = "point_mass", value = -0.5 }
delta_high = { kind = "point_mass", value = 0.5 }

[[population]]
n = 100000
tau_star = 0.5
a0_base = 0.5
seed = 11
u = { kind = "uniform", lo = 0.0, hi = 1.0 }
delta_low = { kind = "uniform", lo = -0.3, hi = 0.0 }
delta_high = { kind = "two_point", low = -0.2, high = 0.5, p_high = 0.6 }

[budget]
u = { kind = "uniform", lo = 0.0, hi = 1.0 }
rho = [0.05, 0.1, 0.2, 0.5]
n_calib = 10000
n_eval = 10000
trials = 100
seed = 3
"#;

impl Bundle {
    pub fn trace_jsonl(&self) -> Result<String> {
        emit_traces(&self.traces)
    }

    /// Write every bundle file into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_text(dir.join("corpus.jsonl"), &to_jsonl(&self.articles)?)?;
        write_text(dir.join("passages.jsonl"), &to_jsonl(&self.passages)?)?;
        write_text(dir.join("trace.jsonl"), &self.trace_jsonl()?)?;
        self.embeddings.save(dir.join("embeddings.bin"))?;
        self.embeddings.clone().into_index()?.save(dir.join("index.bin"))?;
        write_text(dir.join("run.toml"), RUN_TOML)?;
        write_text(dir.join("simulate.toml"), SIMULATE_TOML)?;
        Ok(())
    }
}

/// File names produced by [`Bundle::write`].
pub const BUNDLE_FILES: [&str; 7] = [
    "corpus.jsonl",
    "passages.jsonl",
    "trace.jsonl",
    "embeddings.bin",
    "index.bin",
    "run.toml",
    "simulate.toml",
];
